#include "adf/ftree.hpp"

#include <algorithm>
#include <bit>
#include <iterator>
#include <ostream>
#include <sstream>

namespace adf {

NodeSet make_node_set(std::vector<NodeId> ids) {
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

NodeSet intersect(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet unite(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  out.reserve(a.size() + b.size());
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

NodeSet subtract(const NodeSet& a, const NodeSet& b) {
  NodeSet out;
  std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

bool contains(const NodeSet& set, NodeId id) {
  return std::binary_search(set.begin(), set.end(), id);
}

FTreeNodePtr make_leaf(const SourceSpec& source, NodeSet filters, double ddos, double legit,
                       std::optional<NodeSet> reach) {
  auto node = std::make_shared<FTreeNode>();
  node->source = source;
  node->reach = reach ? std::move(*reach) : filters;
  node->filters = std::move(filters);
  node->ddos = ddos;
  node->legit = legit;
  node->kind = AggKind::Leaf;
  return node;
}

SourceSpec longest_common_prefix(const SourceSpec& a, const SourceSpec& b) {
  const SourceSpec pair[] = {a, b};
  return longest_common_prefix(pair);
}

SourceSpec longest_common_prefix(std::span<const SourceSpec> specs) {
  const SourceSpec& first = specs.front();
  bool same_port = first.has_port();
  bool same_address = first.prefix_len() == 32;
  int len = first.prefix_len();
  for (const auto& s : specs) {
    same_port = same_port && s.has_port() && s.addr() == first.addr() && s.port() == first.port();
    same_address = same_address && s.prefix_len() == 32 && s.addr() == first.addr();
    len = std::min(len, s.prefix_len());
    if (auto diff = s.addr() ^ first.addr(); diff != 0) {
      len = std::min(len, std::countl_zero(diff));
    }
  }
  if (same_port) return first;
  if (same_address) return SourceSpec::address(first.addr());
  return SourceSpec::prefix(first.addr() & prefix_mask(len), len);
}

namespace {

SourceSpec lcp_of(std::span<const FTreeNodePtr> a, std::span<const FTreeNodePtr> b = {}) {
  std::vector<SourceSpec> specs;
  specs.reserve(a.size() + b.size());
  for (const auto& n : a) specs.push_back(n->source);
  for (const auto& n : b) specs.push_back(n->source);
  return longest_common_prefix(specs);
}

struct Sums {
  NodeSet filters;
  NodeSet reach;
  double ddos = 0.0;
  double legit = 0.0;
};

Sums sum_children(std::span<const FTreeNodePtr> children) {
  Sums s;
  s.filters = children.front()->filters;
  for (const auto& c : children) {
    if (&c != &children.front()) s.filters = intersect(s.filters, c->filters);
    s.reach = unite(s.reach, c->reach);
    s.ddos += c->ddos;
    s.legit += c->legit;
  }
  return s;
}

}  // namespace

FTreeNodePtr union_aggregate(std::span<const FTreeNodePtr> children) {
  if (children.empty()) return nullptr;
  Sums s = sum_children(children);
  if (s.filters.empty()) return nullptr;
  auto node = std::make_shared<FTreeNode>();
  node->source = lcp_of(children);
  node->filters = std::move(s.filters);
  node->reach = std::move(s.reach);
  node->ddos = s.ddos;
  node->legit = s.legit;
  node->kind = AggKind::Union;
  node->children.assign(children.begin(), children.end());
  return node;
}

FTreeNodePtr difference_aggregate(std::span<const FTreeNodePtr> keep,
                                  std::span<const FTreeNodePtr> exclude) {
  if (keep.empty()) return nullptr;
  if (exclude.empty()) return union_aggregate(keep);
  Sums s = sum_children(keep);
  NodeSet blocked;
  for (const auto& e : exclude) blocked = unite(blocked, e->reach);
  NodeSet filters = subtract(s.filters, blocked);
  if (filters.empty()) return nullptr;
  auto node = std::make_shared<FTreeNode>();
  node->source = lcp_of(keep, exclude);
  node->filters = std::move(filters);
  node->reach = unite(s.reach, blocked);
  node->ddos = s.ddos;
  node->legit = s.legit;
  node->kind = AggKind::Difference;
  node->children.assign(keep.begin(), keep.end());
  node->excluded.assign(exclude.begin(), exclude.end());
  return node;
}

bool spec_matches(const SourceSpec& rule_source, const SourceSpec& flow_source) {
  return rule_source.covers(flow_source);
}

std::string audit(const FTreeNode& node) {
  if (node.ddos < 0 || node.legit < 0) return "negative volume at " + node.source.to_string();
  if (node.kind == AggKind::Leaf) return {};
  if (node.children.empty()) return "internal node without children at " + node.source.to_string();
  for (const auto& c : node.children) {
    if (auto err = audit(*c); !err.empty()) return err;
  }
  for (const auto& e : node.excluded) {
    if (auto err = audit(*e); !err.empty()) return err;
  }
  Sums s = sum_children(node.children);
  NodeSet blocked;
  for (const auto& e : node.excluded) blocked = unite(blocked, e->reach);
  NodeSet filters = subtract(s.filters, blocked);
  const std::string at = " at " + node.source.to_string();
  if (node.kind == AggKind::Union && !node.excluded.empty()) return "union with exclusions" + at;
  if (filters != node.filters) return "filter set mismatch" + at;
  if (filters.empty()) return "empty filter set" + at;
  if (unite(s.reach, blocked) != node.reach) return "reach mismatch" + at;
  if (s.ddos != node.ddos) return "ddos volume mismatch" + at;
  if (s.legit != node.legit) return "legit volume mismatch" + at;
  if (lcp_of(node.children, node.excluded) != node.source) return "source mismatch" + at;
  return {};
}

std::string format_node_set(const NodeSet& set, char separator) {
  std::string out;
  for (auto id : set) {
    if (!out.empty()) out += separator;
    out += std::to_string(id);
  }
  return out;
}

void dump(const FTreeNode& node, std::ostream& out, int indent) {
  static constexpr const char* kKinds[] = {"leaf", "union", "difference"};
  out << std::string(static_cast<std::size_t>(indent) * 2, ' ') << kKinds[int(node.kind)] << ' '
      << node.source.to_string() << " F={" << format_node_set(node.filters, ',')
      << "} d=" << node.ddos << " l=" << node.legit << '\n';
  for (const auto& c : node.children) dump(*c, out, indent + 1);
  for (const auto& e : node.excluded) {
    out << std::string(static_cast<std::size_t>(indent + 1) * 2, ' ') << "except:\n";
    dump(*e, out, indent + 2);
  }
}

std::string dump(const FTreeNode& node) {
  std::ostringstream out;
  dump(node, out);
  return out.str();
}

}  // namespace adf
