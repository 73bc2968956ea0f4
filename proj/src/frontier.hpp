#pragma once

// Shared machinery for the greedy solvers: a compressed prefix trie over
// the sorted leaves and the current set of F-tree "leaf" units, which is
// always an antichain of that trie. Aggregating a trie node replaces every
// unit below it with a single unit.

#include <span>
#include <vector>

#include "adf/ftree.hpp"

namespace adf::detail {

/// The cheapest admissible aggregation of the leaves under a trie node.
/// Every filterable attack leaf is kept; each other leaf is kept exactly
/// when its traffic passes `pivot`, so that the rule can sit at `pivot`.
struct Option {
  bool valid = false;
  bool difference = false;
  NodeId pivot = 0;
  NodeSet filters;
  double ddos = 0.0;
  double legit = 0.0;
};

/// Whether a leaf must be kept by every aggregation that contains it.
bool is_attack_leaf(const FTreeNode& n);

/// Cheapest admissible option over `members`.
Option cheapest_option(std::span<const FTreeNodePtr> members);

class Frontier {
 public:
  explicit Frontier(std::span<const FTreeNodePtr> leaves);

  int size() const { return static_cast<int>(nodes_.size()); }
  const SourceSpec& range(int t) const { return nodes_[t].range; }
  int parent(int t) const { return nodes_[t].parent; }
  bool is_unit(int t) const { return unit_[t] != nullptr; }
  const FTreeNodePtr& unit_node(int t) const { return unit_[t]; }
  const Option& option(int t) const { return option_[t]; }
  /// Current units (pending nested leaves included) under `t`.
  int members(int t) const { return members_[t]; }

  /// Whether trie node `inner` lies in the subtree of `outer` (inclusive).
  bool under(int inner, int outer) const {
    return nodes_[outer].first <= nodes_[inner].first && nodes_[inner].last <= nodes_[outer].last &&
           nodes_[inner].depth >= nodes_[outer].depth;
  }

  /// Current units, in trie (source) order.
  const std::vector<int>& units() const { return units_; }
  /// Internal trie nodes above the units that may still be merged.
  const std::vector<int>& candidates() const { return candidates_; }

  /// Aggregates everything under `t` into a single unit using its option,
  /// which must be valid. Returns the new F-tree node.
  FTreeNodePtr merge(int t);

 private:
  struct TrieNode {
    SourceSpec range;
    int own_leaf = -1;
    int parent = -1;
    int depth = 0;
    int first = 0;  // leaf span [first, last)
    int last = 0;
    std::vector<int> children;
  };

  std::vector<FTreeNodePtr> leaves_;
  std::vector<TrieNode> nodes_;
  std::vector<FTreeNodePtr> unit_;
  std::vector<Option> option_;
  std::vector<int> members_;
  std::vector<char> dead_;
  std::vector<int> units_;
  std::vector<int> candidates_;
};

}  // namespace adf::detail
