#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <map>
#include <span>
#include <stdexcept>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adf/flow.hpp"
#include "adf/ftree.hpp"

namespace adf {

/// Volumes closer than this are treated as equal.
inline constexpr double kVolumeTolerance = 1e-9;
inline constexpr double kUnlimitedVolume = std::numeric_limits<double>::infinity();
inline constexpr std::size_t kUnlimitedRules = std::numeric_limits<std::size_t>::max();

enum class Objective : std::uint8_t { MaxCoverage, MinCollateral, MinRules };

std::string_view to_string(Objective o);
/// Accepts `max-coverage`, `min-collateral`, `min-rules`.
Objective parse_objective(std::string_view token);

/// Minimum DDoS coverage D, maximum collateral damage L, rule budget M.
/// Each objective reads exactly two of them.
struct Constraints {
  double min_coverage = 0.0;
  double max_collateral = kUnlimitedVolume;
  std::size_t rule_budget = kUnlimitedRules;
};

struct Rule {
  std::uint64_t id = 0;
  SourceSpec source;
  Protocol protocol = Protocol::ANY;
  TcpFlags tcp_flags = TcpFlags::ANY;
  SourceSpec destination = SourceSpec::wildcard();
  NodeSet candidates;
  double ddos = 0.0;
  double legit = 0.0;
  std::uint64_t start_time = 0;
  std::uint64_t end_time = 1;
  /// The F-tree node the rule was generated from; null for rules read back
  /// from a rule file.
  FTreeNodePtr node;
};

struct RuleSet {
  std::vector<Rule> rules;
  Objective objective = Objective::MaxCoverage;
  double ddos = 0.0;
  double legit = 0.0;
  /// False when the solver could not meet its constraints; the rules are
  /// then a best effort.
  bool feasible = true;

  std::size_t size() const { return rules.size(); }
};

/// Fields stamped onto every generated rule.
struct RuleTemplate {
  std::uint64_t first_id = 1;
  Protocol protocol = Protocol::ANY;
  TcpFlags tcp_flags = TcpFlags::ANY;
  SourceSpec destination = SourceSpec::wildcard();
  std::uint64_t start_time = 0;
  std::uint64_t end_time = 1;
};

/// Maximizes DDoS coverage subject to collateral <= L and |R| <= M.
RuleSet solve_max_coverage(std::span<const FTreeNodePtr> leaves, double max_collateral,
                           std::size_t rule_budget, const RuleTemplate& tmpl = {});

/// Minimizes collateral subject to coverage >= D and |R| <= M.
RuleSet solve_min_collateral(std::span<const FTreeNodePtr> leaves, double min_coverage,
                             std::size_t rule_budget, const RuleTemplate& tmpl = {});

/// Minimizes |R| subject to coverage >= D and collateral <= L.
RuleSet solve_min_rules(std::span<const FTreeNodePtr> leaves, double min_coverage,
                        double max_collateral, const RuleTemplate& tmpl = {});

/// Dispatches to the solver for `objective`, reading its two constraints.
RuleSet solve(std::span<const FTreeNodePtr> leaves, Objective objective,
              const Constraints& constraints, const RuleTemplate& tmpl = {});

struct Metrics {
  double coverage = 0.0;
  double collateral = 0.0;
  std::size_t count = 0;
  /// DDoS volume from sources whose paths share no filtering node.
  double unfilterable = 0.0;
};

/// rule id -> node the rule is installed at.
using Assignment = std::map<std::uint64_t, NodeId>;

/// Replays `flows` against `rules`. A flow is dropped when a rule matches
/// its source, protocol, flags and destination and the rule sits on the
/// flow's path: at its assigned node when `assignment` is given (unplaced
/// rules are inactive), otherwise at any of its candidate nodes.
Metrics evaluate(const RuleSet& rules, std::span<const FlowRecord> flows,
                 const Assignment* assignment = nullptr);

/// Whether `rule` drops `flow` when installed at `node`.
bool rule_drops(const Rule& rule, const FlowRecord& flow, NodeId node);

/// Index of rules by source for fast matching against many flows.
class RuleIndex {
 public:
  RuleIndex() = default;
  explicit RuleIndex(std::span<const Rule> rules);
  void add(const Rule& rule, std::size_t position);
  /// Positions of all indexed rules whose source covers `source`.
  std::vector<std::size_t> lookup(const SourceSpec& source) const;

 private:
  // Slot 0..32 holds sources of that prefix length keyed by address;
  // slot 33 holds address+port sources keyed by (address << 16 | port).
  std::array<std::unordered_map<std::uint64_t, std::vector<std::size_t>>, 34> levels_;
  std::uint64_t used_levels_ = 0;
};

class RuleFileError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// `id,source,protocol,tcp_flags,destination,candidates,start,end`, one rule
/// per line, candidates `|`-separated.
void write_rules(std::ostream& out, std::span<const Rule> rules);
std::vector<Rule> read_rules(std::istream& in);

}  // namespace adf
