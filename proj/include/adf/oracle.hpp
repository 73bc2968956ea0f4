#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>

#include "adf/rulegen.hpp"

namespace adf {

inline constexpr std::size_t kOracleMaxLeaves = 14;

class InstanceTooLarge : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Exhaustive solver for small instances. Enumerates every set of disjoint
/// trie ranges over the leaves; each range contributes its cheapest
/// admissible aggregation (all filterable attack members kept, each other
/// member either included or excluded). Returns an optimal rule set with
/// ties broken toward lower collateral and fewer rules.
RuleSet oracle_solve(std::span<const FTreeNodePtr> leaves, Objective objective,
                     const Constraints& constraints, const RuleTemplate& tmpl = {});

}  // namespace adf
