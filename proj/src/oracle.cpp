#include "adf/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace adf {

namespace {

constexpr double kTol = kVolumeTolerance;

struct Group {
  std::size_t first = 0;  // member span [first, last) in sorted leaf order
  std::size_t last = 0;
  FTreeNodePtr node;
};

FTreeNodePtr union_chain(const std::vector<FTreeNodePtr>& members) {
  FTreeNodePtr acc = members.front();
  for (std::size_t i = 1; i < members.size() && acc; ++i) {
    const FTreeNodePtr pair[] = {acc, members[i]};
    acc = union_aggregate(pair);
  }
  return acc;
}

// Cheapest admissible aggregation of `members`, or null.
FTreeNodePtr cheapest_option(const std::vector<FTreeNodePtr>& members) {
  std::vector<FTreeNodePtr> attack, optional;
  for (const auto& m : members) {
    (m->ddos > kTol && m->filterable() ? attack : optional).push_back(m);
  }
  if (attack.empty()) return nullptr;
  NodeSet common = attack.front()->filters;
  for (const auto& m : attack) common = intersect(common, m->filters);

  // Placing the rule at node n forces every optional member whose traffic
  // touches n into the rule, and that member must then be fully visible
  // at n; all other optional members are excluded.
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<char> best_take;
  for (NodeId n : common) {
    std::vector<char> take(optional.size(), 0);
    double cost = 0.0;
    bool ok = true;
    for (std::size_t i = 0; i < optional.size() && ok; ++i) {
      if (!contains(optional[i]->reach, n)) continue;
      if (!contains(optional[i]->filters, n)) ok = false;
      take[i] = 1;
      cost += optional[i]->legit;
    }
    if (ok && cost < best_cost - kTol) {
      best_cost = cost;
      best_take = std::move(take);
    }
  }
  if (!std::isfinite(best_cost)) return nullptr;

  std::vector<FTreeNodePtr> keep = attack, exclude;
  for (std::size_t i = 0; i < optional.size(); ++i) {
    (best_take[i] ? keep : exclude).push_back(optional[i]);
  }
  std::sort(keep.begin(), keep.end(),
            [](const FTreeNodePtr& a, const FTreeNodePtr& b) { return a->source < b->source; });
  FTreeNodePtr kept = union_chain(keep);
  if (!kept || exclude.empty()) return kept;
  const FTreeNodePtr k[] = {kept};
  return difference_aggregate(k, exclude);
}

struct Best {
  bool found = false;
  double d = 0.0;
  double l = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> groups;
};

class Search {
 public:
  Search(std::size_t n, std::vector<Group> groups, Objective objective, const Constraints& c)
      : n_(n), groups_(std::move(groups)), objective_(objective), c_(c), starting_(n) {
    for (std::size_t g = 0; g < groups_.size(); ++g) starting_[groups_[g].first].push_back(g);
  }

  Best run() {
    dfs(0, 0.0, 0.0);
    return best_;
  }

 private:
  bool feasible(double d, double l, std::size_t count) const {
    switch (objective_) {
      case Objective::MaxCoverage:
        return l <= c_.max_collateral + kTol && count <= c_.rule_budget;
      case Objective::MinCollateral:
        return d >= c_.min_coverage - kTol && count <= c_.rule_budget;
      case Objective::MinRules:
        return d >= c_.min_coverage - kTol && l <= c_.max_collateral + kTol;
    }
    return false;
  }

  // Lexicographic comparison per objective.
  bool better(double d, double l, std::size_t count) const {
    if (!best_.found) return true;
    auto cmp_d = [&](double a, double b) { return a > b + kTol ? 1 : (a < b - kTol ? -1 : 0); };
    auto cmp_l = [&](double a, double b) { return a < b - kTol ? 1 : (a > b + kTol ? -1 : 0); };
    auto cmp_n = [&](std::size_t a, std::size_t b) { return a < b ? 1 : (a > b ? -1 : 0); };
    int keys[3];
    switch (objective_) {
      case Objective::MaxCoverage:
        keys[0] = cmp_d(d, best_.d), keys[1] = cmp_l(l, best_.l), keys[2] = cmp_n(count, best_.count);
        break;
      case Objective::MinCollateral:
        keys[0] = cmp_l(l, best_.l), keys[1] = cmp_n(count, best_.count), keys[2] = cmp_d(d, best_.d);
        break;
      case Objective::MinRules:
        keys[0] = cmp_n(count, best_.count), keys[1] = cmp_l(l, best_.l), keys[2] = cmp_d(d, best_.d);
        break;
    }
    for (int k : keys) {
      if (k != 0) return k > 0;
    }
    return false;
  }

  void dfs(std::size_t pos, double d, double l) {
    const std::size_t count = chosen_.size();
    if (feasible(d, l, count) && better(d, l, count)) {
      best_ = Best{true, d, l, count, chosen_};
    }
    if (pos >= n_) return;
    if (objective_ != Objective::MinRules && count >= c_.rule_budget) return;
    if (objective_ != Objective::MinCollateral && l > c_.max_collateral + kTol) return;
    for (std::size_t start = pos; start < n_; ++start) {
      for (std::size_t g : starting_[start]) {
        const Group& grp = groups_[g];
        chosen_.push_back(g);
        dfs(grp.last, d + grp.node->ddos, l + grp.node->legit);
        chosen_.pop_back();
      }
    }
  }

  std::size_t n_;
  std::vector<Group> groups_;
  Objective objective_;
  Constraints c_;
  std::vector<std::vector<std::size_t>> starting_;
  std::vector<std::size_t> chosen_;
  Best best_;
};

}  // namespace

RuleSet oracle_solve(std::span<const FTreeNodePtr> input, Objective objective,
                     const Constraints& constraints, const RuleTemplate& tmpl) {
  if (input.size() > kOracleMaxLeaves) {
    throw InstanceTooLarge("oracle handles at most " + std::to_string(kOracleMaxLeaves) +
                           " leaves, got " + std::to_string(input.size()));
  }
  std::vector<FTreeNodePtr> leaves(input.begin(), input.end());
  std::stable_sort(leaves.begin(), leaves.end(),
                   [](const FTreeNodePtr& a, const FTreeNodePtr& b) { return a->source < b->source; });

  std::vector<SourceSpec> ranges;
  for (std::size_t i = 0; i < leaves.size(); ++i) {
    ranges.push_back(leaves[i]->source);
    for (std::size_t j = i + 1; j < leaves.size(); ++j) {
      ranges.push_back(longest_common_prefix(leaves[i]->source, leaves[j]->source));
    }
  }
  std::sort(ranges.begin(), ranges.end());
  ranges.erase(std::unique(ranges.begin(), ranges.end()), ranges.end());

  std::vector<Group> groups;
  for (const auto& range : ranges) {
    if (range.is_wildcard()) continue;
    std::vector<FTreeNodePtr> members;
    Group g;
    g.first = leaves.size();
    for (std::size_t i = 0; i < leaves.size(); ++i) {
      if (!range.covers(leaves[i]->source)) continue;
      g.first = std::min(g.first, i);
      g.last = i + 1;
      members.push_back(leaves[i]);
    }
    g.node = cheapest_option(members);
    if (!g.node || g.node->ddos <= kTol) continue;
    groups.push_back(std::move(g));
  }

  Best best = Search(leaves.size(), groups, objective, constraints).run();
  RuleSet set;
  set.objective = objective;
  set.feasible = best.found;
  std::uint64_t id = tmpl.first_id;
  for (std::size_t g : best.groups) {
    const auto& n = groups[g].node;
    Rule r;
    r.id = id++;
    r.source = n->source;
    r.protocol = tmpl.protocol;
    r.tcp_flags = tmpl.tcp_flags;
    r.destination = tmpl.destination;
    r.candidates = n->filters;
    r.ddos = n->ddos;
    r.legit = n->legit;
    r.start_time = tmpl.start_time;
    r.end_time = tmpl.end_time;
    r.node = n;
    set.ddos += n->ddos;
    set.legit += n->legit;
    set.rules.push_back(std::move(r));
  }
  return set;
}

}  // namespace adf
