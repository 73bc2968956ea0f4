#include <gtest/gtest.h>

#include <sstream>

#include "adf/oracle.hpp"
#include "adf/rulegen.hpp"
#include "instances.hpp"

namespace adf {
namespace {

SourceSpec S(const char* text) { return SourceSpec::parse(text); }

FlowRecord flow(const char* src, double volume, Label label, std::vector<NodeId> path) {
  FlowRecord f;
  f.source = S(src);
  f.protocol = Protocol::TCP;
  f.tcp_flags = TcpFlags::SYN;
  f.destination = S("192.0.2.1");
  f.volume = volume;
  f.label = label;
  f.path = std::move(path);
  return f;
}

struct Totals {
  double filterable = 0;
  double legit = 0;
};

Totals totals(const std::vector<FTreeNodePtr>& leaves) {
  Totals t;
  for (const auto& l : leaves) {
    if (l->filterable()) t.filterable += l->ddos;
    t.legit += l->legit;
  }
  return t;
}

void expect_disjoint(const RuleSet& rs) {
  for (std::size_t i = 0; i < rs.rules.size(); ++i) {
    for (std::size_t j = i + 1; j < rs.rules.size(); ++j) {
      EXPECT_FALSE(rs.rules[i].source.covers(rs.rules[j].source) || rs.rules[j].source.covers(rs.rules[i].source))
          << rs.rules[i].source.to_string() << " vs " << rs.rules[j].source.to_string();
    }
  }
}

void expect_totals(const RuleSet& rs) {
  double d = 0, l = 0;
  for (const auto& r : rs.rules) {
    d += r.ddos;
    l += r.legit;
    EXPECT_FALSE(r.candidates.empty());
    EXPECT_GT(r.end_time, r.start_time);
  }
  EXPECT_NEAR(rs.ddos, d, 1e-9);
  EXPECT_NEAR(rs.legit, l, 1e-9);
}

std::vector<FTreeNodePtr> pure_ddos_slash30() {
  return build_leaves(std::vector<FlowRecord>{flow("10.0.0.0", 10, Label::DDoS, {5, 9}),
                                              flow("10.0.0.1", 20, Label::DDoS, {6, 9}),
                                              flow("10.0.0.2", 30, Label::DDoS, {7, 9})});
}

TEST(MaxCoverage, AggregatesPureAttackPrefix) {
  const auto leaves = pure_ddos_slash30();
  const RuleSet rs = solve_max_coverage(leaves, 0, 1);
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_DOUBLE_EQ(rs.ddos, 60);
  EXPECT_DOUBLE_EQ(rs.legit, 0);
  EXPECT_GE(rs.rules[0].source.prefix_len(), 30);
  EXPECT_EQ(rs.rules[0].candidates, (NodeSet{9}));
  Constraints c;
  c.max_collateral = 0;
  c.rule_budget = 1;
  EXPECT_DOUBLE_EQ(oracle_solve(leaves, Objective::MaxCoverage, c).ddos, rs.ddos);
}

TEST(MaxCoverage, UnconstrainedCoversAllFilterable) {
  testing::InstanceParams p;
  p.spoof_fraction = 0.1;
  const auto leaves = build_leaves(testing::random_flows(p));
  const RuleSet rs = solve_max_coverage(leaves, kUnlimitedVolume, kUnlimitedRules);
  EXPECT_NEAR(rs.ddos, totals(leaves).filterable, 1e-6);
  expect_disjoint(rs);
  expect_totals(rs);
}

TEST(MaxCoverage, AllLegitGivesEmptySet) {
  testing::InstanceParams p;
  p.ddos_sources = 0;
  const auto leaves = build_leaves(testing::random_flows(p));
  EXPECT_EQ(solve_max_coverage(leaves, kUnlimitedVolume, kUnlimitedRules).size(), 0u);
  EXPECT_EQ(solve_min_rules(leaves, 0, kUnlimitedVolume).size(), 0u);
}

TEST(MaxCoverage, MonotoneInBudgetAndCollateral) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    testing::InstanceParams p;
    p.ddos_sources = 200;
    p.legit_sources = 100;
    p.seed = seed;
    const auto leaves = build_leaves(testing::random_flows(p));
    const double lt = totals(leaves).legit;
    double prev = -1;
    for (std::size_t m : {1, 2, 4, 8, 16, 64, 256}) {
      const double d = solve_max_coverage(leaves, 0.1 * lt, m).ddos;
      EXPECT_GE(d, prev - 1e-9) << "seed " << seed << " M " << m;
      prev = d;
    }
    prev = -1;
    for (double frac : {0.0, 0.01, 0.05, 0.1, 0.3, 1.0}) {
      const double d = solve_max_coverage(leaves, frac * lt, 10).ddos;
      EXPECT_GE(d, prev - 1e-9) << "seed " << seed << " L " << frac;
      prev = d;
    }
  }
}

TEST(MinCollateral, ZeroCollateralWithEnoughRules) {
  testing::InstanceParams p;
  p.block_len = 24;
  const auto leaves = build_leaves(testing::random_flows(p));
  std::size_t pure = 0;
  for (const auto& l : leaves) pure += l->ddos > 0 && l->legit == 0;
  const RuleSet rs = solve_min_collateral(leaves, totals(leaves).filterable, pure);
  EXPECT_TRUE(rs.feasible);
  EXPECT_DOUBLE_EQ(rs.legit, 0);
  EXPECT_NEAR(rs.ddos, totals(leaves).filterable, 1e-6);
  EXPECT_LE(rs.size(), pure);
}

TEST(MinCollateral, ZeroCoverageIsEmpty) {
  const auto leaves = pure_ddos_slash30();
  const RuleSet rs = solve_min_collateral(leaves, 0, 3);
  EXPECT_EQ(rs.size(), 0u);
  EXPECT_DOUBLE_EQ(rs.legit, 0);
  EXPECT_TRUE(rs.feasible);
}

TEST(MinCollateral, MixedPairMatchesOracle) {
  const auto leaves = build_leaves(std::vector<FlowRecord>{flow("10.0.0.1", 70, Label::DDoS, {2, 3}),
                                                           flow("10.0.0.2", 30, Label::Legit, {2, 3})});
  Constraints c;
  c.min_coverage = 70;
  c.rule_budget = 1;
  const RuleSet g = solve_min_collateral(leaves, 70, 1);
  const RuleSet o = oracle_solve(leaves, Objective::MinCollateral, c);
  EXPECT_TRUE(g.feasible);
  EXPECT_DOUBLE_EQ(g.legit, o.legit);
  EXPECT_DOUBLE_EQ(g.legit, 0);
}

TEST(MinCollateral, InfeasibleIsFlagged) {
  const auto leaves = build_leaves(std::vector<FlowRecord>{flow("10.0.0.1", 10, Label::DDoS, {1}),
                                                           flow("20.0.0.1", 10, Label::DDoS, {2})});
  const RuleSet rs = solve_min_collateral(leaves, 20, 1);
  EXPECT_FALSE(rs.feasible);
  EXPECT_LE(rs.size(), 1u);
}

TEST(MinRules, OnePrefixWhenEverythingIsAttack) {
  std::vector<FlowRecord> flows;
  for (int i = 1; i <= 20; ++i) {
    const std::string src = "10.0.0." + std::to_string(i * 7);
    flows.push_back(flow(src.c_str(), i, Label::DDoS, {static_cast<NodeId>(100 + i), 4}));
  }
  const auto leaves = build_leaves(flows);
  const double total = totals(leaves).filterable;
  const RuleSet rs = solve_min_rules(leaves, total, 0);
  ASSERT_EQ(rs.size(), 1u);
  EXPECT_DOUBLE_EQ(rs.ddos, total);
  EXPECT_EQ(rs.rules[0].candidates, (NodeSet{4}));
  EXPECT_EQ(solve_min_rules(leaves, 0, 5).size(), 0u);

  const std::vector<FTreeNodePtr> few(leaves.begin(), leaves.begin() + 10);
  Constraints c;
  c.min_coverage = totals(few).filterable;
  c.max_collateral = 0;
  EXPECT_EQ(oracle_solve(few, Objective::MinRules, c).size(), 1u);
}

TEST(MinRules, RuleCountFallsAsConstraintsLoosen) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    testing::InstanceParams p;
    p.ddos_sources = 200;
    p.legit_sources = 100;
    p.seed = seed;
    const auto leaves = build_leaves(testing::random_flows(p));
    const Totals t = totals(leaves);
    std::size_t prev = kUnlimitedRules;
    for (double frac : {0.0, 0.02, 0.1, 0.3, 1.0}) {
      const RuleSet rs = solve_min_rules(leaves, 0.9 * t.filterable, frac * t.legit);
      ASSERT_TRUE(rs.feasible);
      EXPECT_LE(rs.size(), prev) << "seed " << seed << " L " << frac;
      prev = rs.size();
    }
    prev = kUnlimitedRules;
    for (double frac : {1.0, 0.8, 0.5, 0.2, 0.0}) {
      const RuleSet rs = solve_min_rules(leaves, frac * t.filterable, 0.05 * t.legit);
      ASSERT_TRUE(rs.feasible);
      EXPECT_LE(rs.size(), prev) << "seed " << seed << " D " << frac;
      prev = rs.size();
    }
  }
}

TEST(Solvers, FeasibleOutputsHonourConstraints) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    testing::InstanceParams p;
    p.ddos_sources = 300;
    p.legit_sources = 150;
    p.seed = seed;
    p.spoof_fraction = seed % 2 ? 0.1 : 0.0;
    const auto flows = testing::random_flows(p);
    const auto leaves = build_leaves(flows);
    const Totals t = totals(leaves);
    Constraints c;
    c.min_coverage = 0.7 * t.filterable;
    c.max_collateral = 0.1 * t.legit;
    c.rule_budget = 20;
    for (Objective o : {Objective::MaxCoverage, Objective::MinCollateral, Objective::MinRules}) {
      const RuleSet rs = solve(leaves, o, c);
      expect_disjoint(rs);
      expect_totals(rs);
      const Metrics m = evaluate(rs, flows);
      EXPECT_NEAR(m.coverage, rs.ddos, 1e-6);
      EXPECT_NEAR(m.collateral, rs.legit, 1e-6);
      if (!rs.feasible) continue;
      if (o != Objective::MinRules) {
        EXPECT_LE(rs.size(), c.rule_budget);
      }
      if (o != Objective::MinCollateral) {
        EXPECT_LE(m.collateral, c.max_collateral + 1e-9);
      }
      if (o != Objective::MaxCoverage) {
        EXPECT_GE(m.coverage, c.min_coverage - 1e-9);
      }
    }
  }
}

TEST(Solvers, Deterministic) {
  testing::InstanceParams p;
  p.ddos_sources = 300;
  p.legit_sources = 150;
  p.spoof_fraction = 0.1;
  const auto leaves = build_leaves(testing::random_flows(p));
  const Totals t = totals(leaves);
  Constraints c{0.8 * t.filterable, 0.1 * t.legit, 15};
  for (Objective o : {Objective::MaxCoverage, Objective::MinCollateral, Objective::MinRules}) {
    std::ostringstream a, b;
    write_rules(a, solve(leaves, o, c).rules);
    write_rules(b, solve(leaves, o, c).rules);
    EXPECT_EQ(a.str(), b.str());
  }
}

TEST(Solvers, TemplateFieldsAreApplied) {
  RuleTemplate t;
  t.first_id = 40;
  t.protocol = Protocol::TCP;
  t.tcp_flags = TcpFlags::SYN;
  t.destination = S("192.0.2.0/24");
  t.start_time = 100;
  t.end_time = 160;
  const auto leaves = build_leaves(std::vector<FlowRecord>{flow("10.0.0.1", 10, Label::DDoS, {1}),
                                                           flow("20.0.0.1", 10, Label::DDoS, {2})});
  const RuleSet rs = solve_min_rules(leaves, 20, 0, t);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs.rules[0].id, 40u);
  EXPECT_EQ(rs.rules[1].id, 41u);
  for (const auto& r : rs.rules) {
    EXPECT_EQ(r.protocol, Protocol::TCP);
    EXPECT_EQ(r.destination, S("192.0.2.0/24"));
    EXPECT_EQ(r.start_time, 100u);
    EXPECT_EQ(r.end_time, 160u);
  }
}

TEST(Oracle, DisjointPairNeedsTwoRules) {
  const auto leaves = build_leaves(std::vector<FlowRecord>{flow("10.0.0.1", 10, Label::DDoS, {1}),
                                                           flow("10.0.0.2", 10, Label::DDoS, {2})});
  Constraints c;
  c.min_coverage = 20;
  c.max_collateral = 0;
  EXPECT_EQ(oracle_solve(leaves, Objective::MinRules, c).size(), 2u);
}

TEST(Oracle, RejectsLargeInstances) {
  std::vector<FlowRecord> flows;
  for (int i = 1; i <= 15; ++i) {
    const std::string src = "10.0.0." + std::to_string(i);
    flows.push_back(flow(src.c_str(), 1, Label::DDoS, {1}));
  }
  EXPECT_THROW(oracle_solve(build_leaves(flows), Objective::MinRules, Constraints{}), InstanceTooLarge);
}

TEST(Oracle, BoundsGreedy) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    testing::InstanceParams p;
    p.ddos_sources = 6;
    p.legit_sources = 3;
    p.depth = 2;
    p.fanout = 2;
    p.block_len = 28;
    p.seed = seed;
    const auto leaves = build_leaves(testing::random_flows(p));
    const Totals t = totals(leaves);
    Constraints c{0.6 * t.filterable, 0.3 * t.legit, 2};
    const RuleSet g1 = solve(leaves, Objective::MaxCoverage, c);
    const RuleSet o1 = oracle_solve(leaves, Objective::MaxCoverage, c);
    EXPECT_GE(o1.ddos, g1.ddos - 1e-9);
    const RuleSet g2 = solve(leaves, Objective::MinCollateral, c);
    const RuleSet o2 = oracle_solve(leaves, Objective::MinCollateral, c);
    if (g2.feasible) {
      EXPECT_LE(o2.legit, g2.legit + 1e-9);
    }
    if (o2.feasible) {
      EXPECT_TRUE(g2.feasible);
    }
    const RuleSet g3 = solve(leaves, Objective::MinRules, c);
    const RuleSet o3 = oracle_solve(leaves, Objective::MinRules, c);
    if (g3.feasible) {
      EXPECT_LE(o3.size(), g3.size());
    }
    if (o3.feasible) {
      EXPECT_TRUE(g3.feasible);
    }
  }
}

TEST(Evaluate, EmptyRuleSet) {
  const std::vector<FlowRecord> flows{flow("10.0.0.1", 10, Label::DDoS, {1})};
  const Metrics m = evaluate(RuleSet{}, flows);
  EXPECT_EQ(m.coverage, 0);
  EXPECT_EQ(m.collateral, 0);
  EXPECT_EQ(m.count, 0u);
}

Rule make_rule(std::uint64_t id, const char* src, NodeSet candidates) {
  Rule r;
  r.id = id;
  r.source = S(src);
  r.candidates = std::move(candidates);
  return r;
}

TEST(Evaluate, WorkedExampleAtNodeThree) {
  const std::vector<FlowRecord> flows{flow("10.0.0.128", 20, Label::DDoS, {5, 3, 2, 1}),
                                      flow("10.0.0.1:2222", 40, Label::DDoS, {4, 3, 2, 1}),
                                      flow("10.0.0.1:3333", 25, Label::Legit, {6, 2, 1})};
  RuleSet rs;
  rs.rules.push_back(make_rule(1, "10.0.0.0/24", {3}));
  const Assignment at3{{1, 3}};
  const Metrics m = evaluate(rs, flows, &at3);
  EXPECT_DOUBLE_EQ(m.coverage, 60);
  EXPECT_DOUBLE_EQ(m.collateral, 0);
  EXPECT_EQ(m.count, 1u);
  EXPECT_TRUE(rule_drops(rs.rules[0], flows[0], 3));
  EXPECT_TRUE(rule_drops(rs.rules[0], flows[1], 3));
  EXPECT_FALSE(rule_drops(rs.rules[0], flows[2], 3));

  const Assignment at2{{1, 2}};
  EXPECT_DOUBLE_EQ(evaluate(rs, flows, &at2).collateral, 25);
  const Assignment none;
  EXPECT_DOUBLE_EQ(evaluate(rs, flows, &none).coverage, 0);
}

TEST(Evaluate, RuleMatchingNothing) {
  const std::vector<FlowRecord> flows{flow("10.0.0.1", 10, Label::DDoS, {1})};
  RuleSet rs;
  rs.rules.push_back(make_rule(1, "172.16.0.0/12", {1}));
  const Metrics m = evaluate(rs, flows);
  EXPECT_EQ(m.coverage, 0);
  EXPECT_EQ(m.collateral, 0);
  EXPECT_EQ(m.count, 1u);
}

TEST(Evaluate, CountsEachFlowOnceAndChecksHeaderFields) {
  const std::vector<FlowRecord> flows{flow("10.0.0.1", 10, Label::DDoS, {1})};
  RuleSet rs;
  rs.rules.push_back(make_rule(1, "10.0.0.0/24", {1}));
  rs.rules.push_back(make_rule(2, "10.0.0.1", {1}));
  EXPECT_DOUBLE_EQ(evaluate(rs, flows).coverage, 10);
  rs.rules.resize(1);
  rs.rules[0].protocol = Protocol::UDP;
  EXPECT_DOUBLE_EQ(evaluate(rs, flows).coverage, 0);
  rs.rules[0].protocol = Protocol::TCP;
  rs.rules[0].tcp_flags = TcpFlags::ACK;
  EXPECT_DOUBLE_EQ(evaluate(rs, flows).coverage, 0);
  rs.rules[0].tcp_flags = TcpFlags::SYN;
  rs.rules[0].destination = S("198.51.100.0/24");
  EXPECT_DOUBLE_EQ(evaluate(rs, flows).coverage, 0);
}

TEST(Evaluate, ReportsUnfilterableVolume) {
  const std::vector<FlowRecord> flows{flow("10.0.0.1", 10, Label::DDoS, {1}), flow("10.0.0.1", 5, Label::DDoS, {2}),
                                      flow("10.0.0.2", 7, Label::DDoS, {1})};
  EXPECT_DOUBLE_EQ(evaluate(RuleSet{}, flows).unfilterable, 15);
}

TEST(RuleIndex, FindsCoveringRules) {
  const std::vector<Rule> rules{make_rule(1, "10.0.0.0/8", {1}), make_rule(2, "10.0.0.1:80", {1}),
                                make_rule(3, "10.0.0.1", {1}), make_rule(4, "11.0.0.0/8", {1})};
  const RuleIndex index(rules);
  auto hits = index.lookup(S("10.0.0.1:80"));
  std::sort(hits.begin(), hits.end());
  EXPECT_EQ(hits, (std::vector<std::size_t>{0, 1, 2}));
  hits = index.lookup(S("10.0.0.1:81"));
  std::sort(hits.begin(), hits.end());
  EXPECT_EQ(hits, (std::vector<std::size_t>{0, 2}));
  EXPECT_TRUE(index.lookup(S("12.0.0.1")).empty());
}

TEST(RuleFile, RoundTrip) {
  std::vector<Rule> rules{make_rule(7, "10.0.0.0/24", {3}), make_rule(8, "10.0.0.1:2222", {1, 2})};
  rules[0].protocol = Protocol::TCP;
  rules[0].tcp_flags = TcpFlags::SYN;
  rules[0].destination = S("192.0.2.1");
  rules[0].start_time = 5;
  rules[0].end_time = 9;
  std::stringstream buf;
  write_rules(buf, rules);
  EXPECT_EQ(buf.str().substr(0, buf.str().find('\n')), "7,10.0.0.0/24,TCP,SYN,192.0.2.1,3,5,9");
  const auto back = read_rules(buf);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].source, rules[0].source);
  EXPECT_EQ(back[1].candidates, (NodeSet{1, 2}));
  EXPECT_EQ(back[0].end_time, 9u);
}

TEST(RuleFile, RejectsBadLines) {
  for (const char* text : {"1,10.0.0.0/24,TCP,SYN,0.0.0.0/0,3,5,5\n", "1,10.0.0.0/24,TCP,SYN,0.0.0.0/0,,0,1\n",
                           "x,10.0.0.0/24,TCP,SYN,0.0.0.0/0,3,0,1\n", "1,10.0.0.0/24,TCP\n"}) {
    std::istringstream in(text);
    EXPECT_THROW(read_rules(in), RuleFileError) << text;
  }
}

}  // namespace
}  // namespace adf
