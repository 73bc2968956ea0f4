#include "frontier.hpp"

#include <algorithm>
#include <limits>

#include "adf/rulegen.hpp"

namespace adf::detail {

bool is_attack_leaf(const FTreeNode& n) { return n.ddos > kVolumeTolerance && n.filterable(); }

Option cheapest_option(std::span<const FTreeNodePtr> members) {
  Option best;
  NodeSet common;
  bool any = false;
  double d = 0.0, l = 0.0;
  for (const auto& m : members) {
    if (!is_attack_leaf(*m)) continue;
    common = any ? intersect(common, m->filters) : m->filters;
    any = true;
    d += m->ddos;
    l += m->legit;
  }
  if (!any) return best;

  double best_cost = std::numeric_limits<double>::infinity();
  for (NodeId n : common) {
    double cost = 0.0;
    bool ok = true;
    for (const auto& m : members) {
      if (is_attack_leaf(*m) || !contains(m->reach, n)) continue;
      if (!contains(m->filters, n)) {
        ok = false;
        break;
      }
      cost += m->legit;
    }
    if (ok && cost < best_cost - kVolumeTolerance) {
      best_cost = cost;
      best.pivot = n;
    }
  }
  if (best_cost == std::numeric_limits<double>::infinity()) return best;

  NodeSet filters = common, blocked;
  for (const auto& m : members) {
    if (is_attack_leaf(*m)) continue;
    if (contains(m->reach, best.pivot)) {
      filters = intersect(filters, m->filters);
    } else {
      blocked = unite(blocked, m->reach);
      best.difference = true;
    }
  }
  best.valid = true;
  best.filters = subtract(filters, blocked);
  best.ddos = d;
  best.legit = l + best_cost;
  return best;
}

Frontier::Frontier(std::span<const FTreeNodePtr> leaves) : leaves_(leaves.begin(), leaves.end()) {
  std::stable_sort(leaves_.begin(), leaves_.end(),
                   [](const FTreeNodePtr& a, const FTreeNodePtr& b) { return a->source < b->source; });
  if (leaves_.empty()) return;

  // Every branching point of the trie is the common prefix of two
  // neighbours in sorted order.
  std::vector<SourceSpec> ranges;
  ranges.reserve(2 * leaves_.size());
  for (std::size_t i = 0; i < leaves_.size(); ++i) {
    ranges.push_back(leaves_[i]->source);
    if (i + 1 < leaves_.size()) {
      ranges.push_back(longest_common_prefix(leaves_[i]->source, leaves_[i + 1]->source));
    }
  }
  std::sort(ranges.begin(), ranges.end());
  ranges.erase(std::unique(ranges.begin(), ranges.end()), ranges.end());

  // Ranges form a laminar family and sorted order is a pre-order walk.
  nodes_.resize(ranges.size());
  std::vector<int> stack;
  std::size_t next_leaf = 0;
  for (int t = 0; t < static_cast<int>(ranges.size()); ++t) {
    TrieNode& node = nodes_[t];
    node.range = ranges[t];
    while (!stack.empty() && !nodes_[stack.back()].range.covers(node.range)) stack.pop_back();
    if (!stack.empty()) {
      node.parent = stack.back();
      node.depth = nodes_[node.parent].depth + 1;
      nodes_[node.parent].children.push_back(t);
    }
    stack.push_back(t);
    if (next_leaf < leaves_.size() && leaves_[next_leaf]->source == node.range) {
      node.own_leaf = static_cast<int>(next_leaf++);
    }
  }

  // Leaf spans, bottom-up (children always have larger indices).
  for (int t = size() - 1; t >= 0; --t) {
    TrieNode& node = nodes_[t];
    node.first = node.own_leaf >= 0 ? node.own_leaf : nodes_[node.children.front()].first;
    node.last = node.children.empty() ? node.own_leaf + 1 : nodes_[node.children.back()].last;
  }

  unit_.resize(nodes_.size());
  option_.resize(nodes_.size());
  members_.assign(nodes_.size(), 0);
  dead_.assign(nodes_.size(), 0);
  for (int t = 0; t < size(); ++t) {
    const TrieNode& node = nodes_[t];
    members_[t] = node.last - node.first;
    if (node.children.empty()) {
      unit_[t] = leaves_[node.own_leaf];
      units_.push_back(t);
    } else {
      candidates_.push_back(t);
      if (!node.range.is_wildcard()) {
        option_[t] = cheapest_option(std::span(leaves_).subspan(node.first, node.last - node.first));
      }
    }
  }
}

namespace {

// Binary merge chain over `members`, left to right.
FTreeNodePtr union_chain(const std::vector<FTreeNodePtr>& members) {
  FTreeNodePtr acc = members.front();
  for (std::size_t i = 1; i < members.size(); ++i) {
    const FTreeNodePtr pair[] = {acc, members[i]};
    acc = union_aggregate(pair);
  }
  return acc;
}

}  // namespace

FTreeNodePtr Frontier::merge(int t) {
  const Option& opt = option_[t];
  const TrieNode& node = nodes_[t];
  std::vector<FTreeNodePtr> keep, exclude;
  for (int i = node.first; i < node.last; ++i) {
    const auto& m = leaves_[i];
    (is_attack_leaf(*m) || contains(m->reach, opt.pivot) ? keep : exclude).push_back(m);
  }
  FTreeNodePtr merged = union_chain(keep);
  if (!exclude.empty()) {
    const FTreeNodePtr kept[] = {merged};
    merged = difference_aggregate(kept, exclude);
  }

  const int delta = 1 - members_[t];
  for (int a = t; a >= 0; a = nodes_[a].parent) members_[a] += delta;
  unit_[t] = merged;
  for (int u = t + 1; u < size() && under(u, t); ++u) {
    dead_[u] = 1;
    unit_[u] = nullptr;
  }
  std::erase_if(units_, [&](int u) { return under(u, t); });
  units_.insert(std::upper_bound(units_.begin(), units_.end(), t), t);
  std::erase_if(candidates_, [&](int c) { return dead_[c] || c == t; });
  return merged;
}

}  // namespace adf::detail
