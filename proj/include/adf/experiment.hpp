#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "adf/flow.hpp"
#include "adf/placement.hpp"
#include "adf/rulegen.hpp"

namespace adf {

/// A constraint value as given on the command line: an absolute volume,
/// a percentage of the batch total, or unlimited.
struct Bound {
  enum class Kind { Absolute, Percent, Unlimited } kind = Kind::Unlimited;
  double value = 0.0;

  /// `inf`, `<n>%` or `<n>`.
  static Bound parse(std::string_view text);
  double resolve(double total) const;
  std::string to_string() const;
};

struct RunConfig {
  Objective objective = Objective::MinRules;
  std::optional<Bound> min_coverage;   // D
  std::optional<Bound> max_collateral; // L
  std::optional<std::size_t> rule_budget;  // M
  double window = 1.0;
  /// Rule lifetime in windows.
  double lifetime_windows = 2.0;
  RuleTemplate rule_template;

  /// Throws std::invalid_argument unless exactly the objective's two
  /// constraints are set.
  void validate() const;
  Constraints resolve(double ddos_total, double legit_total) const;
};

struct BatchReport {
  std::size_t batch = 0;
  double window_start = 0.0;
  std::size_t leaves = 0;
  double ddos_total = 0.0;
  double legit_total = 0.0;
  double unfilterable = 0.0;
  double coverage = 0.0;
  double collateral = 0.0;
  std::size_t rules = 0;
  bool feasible = true;
  double solve_seconds = 0.0;
};

struct GeneratedBatch {
  BatchReport report;
  RuleSet rules;
};

/// Batches the trace and solves each batch. Rule ids run on across
/// batches; a rule becomes active when its batch closes and lives for
/// `lifetime_windows` windows.
std::vector<GeneratedBatch> generate_rules(const Trace& trace, const RunConfig& config);

void write_batch_report(std::ostream& out, const std::vector<BatchReport>& rows, VolumeUnit unit);
void write_timing_report(std::ostream& out, const std::vector<BatchReport>& rows);

struct SecondRow {
  long long second = 0;
  std::size_t arrivals = 0;
  std::size_t ddos_arrivals = 0;
  std::size_t filtered = 0;
  std::size_t ddos_filtered = 0;
  std::size_t legit_filtered = 0;
  std::size_t reached = 0;
};

struct SimulationConfig {
  RunConfig run;
  /// No rules at all: the unfiltered baseline.
  bool baseline = false;
  /// Per-node rule limit; unset = unlimited.
  std::optional<std::size_t> node_limit;
  /// Filtering nodes allowed to host rules; unset = every path node.
  std::optional<std::vector<NodeId>> participants;
};

struct PlacementRow {
  std::size_t batch = 0;
  std::size_t rules = 0;
  std::size_t placed = 0;
  double success_rate = 1.0;
};

struct SimulationReport {
  std::vector<SecondRow> seconds;
  std::vector<BatchReport> batches;
  std::vector<PlacementRow> placements;
  /// Rules per node over every placement of the run.
  std::vector<std::pair<std::size_t, double>> distribution;
};

/// Replays the trace batch by batch: rules generated from one batch are
/// placed (capacity shared with still-active rules) and filter the
/// following batches until they expire. Counts are in flows.
SimulationReport simulate(const Trace& trace, const SimulationConfig& config);

void write_seconds_report(std::ostream& out, const std::vector<SecondRow>& rows);
void write_placement_report(std::ostream& out, const std::vector<PlacementRow>& rows);

}  // namespace adf
