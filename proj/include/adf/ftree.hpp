#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "adf/source_spec.hpp"

namespace adf {

using NodeId = std::uint32_t;

/// Sorted, duplicate-free set of filtering-node ids. Paths are short, so a
/// flat vector beats any tree or hash set here.
using NodeSet = std::vector<NodeId>;

NodeSet make_node_set(std::vector<NodeId> ids);
NodeSet intersect(const NodeSet& a, const NodeSet& b);
NodeSet unite(const NodeSet& a, const NodeSet& b);
NodeSet subtract(const NodeSet& a, const NodeSet& b);
bool contains(const NodeSet& set, NodeId id);

enum class AggKind : std::uint8_t { Leaf, Union, Difference };

struct FTreeNode;
using FTreeNodePtr = std::shared_ptr<const FTreeNode>;

/// One node of an F-tree. A node maps to a candidate rule: drop traffic
/// from `source` at any node in `filters`, covering `ddos` attack volume at
/// the cost of `legit` collateral volume.
///
/// `reach` is the union of every path node of all traffic under the node
/// (kept and excluded). For a single-path source it equals `filters`; it is
/// what a difference aggregation subtracts, so that a rule placed at a
/// node of the result can never touch an excluded source's traffic even
/// when that source arrives over several paths.
struct FTreeNode {
  SourceSpec source;
  NodeSet filters;
  NodeSet reach;
  double ddos = 0.0;
  double legit = 0.0;
  AggKind kind = AggKind::Leaf;
  std::vector<FTreeNodePtr> children;
  std::vector<FTreeNodePtr> excluded;

  bool filterable() const { return !filters.empty(); }
};

/// Leaf constructor. `reach` defaults to `filters`.
FTreeNodePtr make_leaf(const SourceSpec& source, NodeSet filters, double ddos, double legit,
                       std::optional<NodeSet> reach = std::nullopt);

/// The most specific spec covering every input. Equal address+port inputs
/// keep the port; same address with different ports collapses to the
/// address; anything else becomes the longest covering prefix.
SourceSpec longest_common_prefix(std::span<const SourceSpec> specs);
SourceSpec longest_common_prefix(const SourceSpec& a, const SourceSpec& b);

/// Union aggregation: filter everything under all children.
/// Returns nullptr when the children share no filtering node (the
/// aggregation is inadmissible and the caller must try something else).
FTreeNodePtr union_aggregate(std::span<const FTreeNodePtr> children);

/// Difference aggregation: filter `keep` while leaving `exclude` untouched.
/// Returns nullptr when no filtering node remains.
FTreeNodePtr difference_aggregate(std::span<const FTreeNodePtr> keep,
                                  std::span<const FTreeNodePtr> exclude);

/// Whether a rule on `rule_source` drops traffic from `flow_source`.
bool spec_matches(const SourceSpec& rule_source, const SourceSpec& flow_source);

/// Recomputes every internal node from its children and compares with the
/// stored values. Returns an empty string when consistent, otherwise a
/// description of the first mismatch.
std::string audit(const FTreeNode& node);

/// Indented text rendering, one node per line.
void dump(const FTreeNode& node, std::ostream& out, int indent = 0);
std::string dump(const FTreeNode& node);

std::string format_node_set(const NodeSet& set, char separator = '|');

}  // namespace adf
