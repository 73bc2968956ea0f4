#include "adf/placement.hpp"

#include <algorithm>
#include <numeric>
#include <ostream>
#include <unordered_map>

namespace adf {

std::vector<NodeCapacity> uniform_capacities(std::span<const NodeId> nodes, std::size_t limit) {
  std::vector<NodeCapacity> caps;
  caps.reserve(nodes.size());
  for (NodeId n : nodes) caps.push_back({n, limit, 0, true});
  return caps;
}

PlacementResult place_rules(std::span<const Rule> rules, std::vector<NodeCapacity>& capacities) {
  std::unordered_map<NodeId, std::size_t> slot;
  slot.reserve(capacities.size());
  for (std::size_t i = 0; i < capacities.size(); ++i) slot.emplace(capacities[i].node, i);

  std::vector<std::size_t> order(rules.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (rules[a].candidates.size() != rules[b].candidates.size()) {
      return rules[a].candidates.size() < rules[b].candidates.size();
    }
    return rules[a].id < rules[b].id;
  });

  PlacementResult result;
  for (std::size_t i : order) {
    const Rule& rule = rules[i];
    NodeCapacity* best = nullptr;
    for (NodeId n : rule.candidates) {
      auto it = slot.find(n);
      if (it == slot.end()) continue;
      NodeCapacity& cap = capacities[it->second];
      if (cap.spare() == 0) continue;
      if (!best || cap.spare() > best->spare()) best = &cap;
    }
    if (best) {
      ++best->used;
      result.placed[rule.id] = best->node;
      ++result.per_node_counts[best->node];
    } else {
      result.failed.push_back(rule.id);
    }
  }
  std::sort(result.failed.begin(), result.failed.end());
  if (!rules.empty()) {
    result.success_rate = static_cast<double>(result.placed.size()) / static_cast<double>(rules.size());
  }
  return result;
}

std::vector<std::pair<std::size_t, double>> rule_distribution(const PlacementResult& result) {
  std::map<std::size_t, std::size_t> histogram;
  std::size_t holders = 0;
  for (const auto& [node, count] : result.per_node_counts) {
    if (count == 0) continue;
    ++histogram[count];
    ++holders;
  }
  std::vector<std::pair<std::size_t, double>> cdf;
  std::size_t seen = 0;
  for (const auto& [count, nodes] : histogram) {
    seen += nodes;
    cdf.emplace_back(count, seen == holders ? 1.0 : static_cast<double>(seen) / holders);
  }
  return cdf;
}

void write_placement(std::ostream& out, const PlacementResult& result) {
  std::vector<std::pair<std::uint64_t, const NodeId*>> rows;
  for (const auto& [id, node] : result.placed) rows.emplace_back(id, &node);
  for (std::uint64_t id : result.failed) rows.emplace_back(id, nullptr);
  std::sort(rows.begin(), rows.end());
  out << "rule_id,node\n";
  for (const auto& [id, node] : rows) {
    out << id << ',';
    if (node) {
      out << *node;
    } else {
      out << "none";
    }
    out << '\n';
  }
  out << "# placed=" << result.placed.size() << " failed=" << result.failed.size()
      << " success_rate=" << result.success_rate << '\n';
}

void write_distribution(std::ostream& out,
                        const std::vector<std::pair<std::size_t, double>>& cdf) {
  out << "rules,cumulative_fraction\n";
  for (const auto& [rules, fraction] : cdf) out << rules << ',' << fraction << '\n';
}

}  // namespace adf
