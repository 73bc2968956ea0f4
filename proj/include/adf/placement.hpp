#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "adf/rulegen.hpp"

namespace adf {

struct NodeCapacity {
  NodeId node = 0;
  std::size_t limit = 0;
  std::size_t used = 0;
  bool available = true;

  std::size_t spare() const { return available && used < limit ? limit - used : 0; }
};

struct PlacementResult {
  std::map<std::uint64_t, NodeId> placed;
  std::vector<std::uint64_t> failed;
  double success_rate = 1.0;
  std::map<NodeId, std::size_t> per_node_counts;
};

/// Capacity table for `nodes`, all available with the same limit.
std::vector<NodeCapacity> uniform_capacities(std::span<const NodeId> nodes, std::size_t limit);

/// Assigns rules to candidate nodes, scarcest rules first (fewest
/// candidates, then lowest id). Each rule goes to the eligible candidate
/// with the most spare capacity, ties to the smaller node id. Nodes missing
/// from `capacities` are unavailable. `used` counters are updated in place.
PlacementResult place_rules(std::span<const Rule> rules, std::vector<NodeCapacity>& capacities);

/// CDF of rules per rule-holding node: (rules, fraction of nodes holding at
/// most that many).
std::vector<std::pair<std::size_t, double>> rule_distribution(const PlacementResult& result);

/// `rule_id,node_id` per placed rule and `rule_id,none` per failure, in
/// rule-id order, followed by a `# placed=.. failed=.. success_rate=..` line.
void write_placement(std::ostream& out, const PlacementResult& result);
/// `rules,cumulative_fraction` CSV.
void write_distribution(std::ostream& out,
                        const std::vector<std::pair<std::size_t, double>>& cdf);

}  // namespace adf
