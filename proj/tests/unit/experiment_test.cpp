#include <gtest/gtest.h>

#include <sstream>

#include "adf/experiment.hpp"
#include "adf/topology.hpp"

namespace adf {
namespace {

const Topology& topo() {
  static const Topology t = [] {
    SyntheticParams p;
    p.tier_sizes = {5, 60, 400};
    p.seed = 8;
    return generate_topology(p);
  }();
  return t;
}

Trace attack(int duration, int ramp, double spoof = 0.0) {
  AttackConfig c;
  c.ddos_sources = 300;
  c.legit_sources = 100;
  c.duration = duration;
  c.ramp = ramp;
  c.spoof_fraction = spoof;
  c.seed = 3;
  return generate_attack(topo(), c);
}

TEST(Bound, Parse) {
  EXPECT_EQ(Bound::parse("10").kind, Bound::Kind::Absolute);
  EXPECT_DOUBLE_EQ(Bound::parse("10").resolve(500), 10);
  EXPECT_DOUBLE_EQ(Bound::parse("20%").resolve(500), 100);
  EXPECT_EQ(Bound::parse("inf").resolve(5), kUnlimitedVolume);
  EXPECT_EQ(Bound::parse("12.5%").to_string(), "12.5%");
  for (const char* bad : {"", "%", "-1", "abc", "5%%", "nan"}) EXPECT_THROW(Bound::parse(bad), std::invalid_argument) << bad;
}

TEST(RunConfig, RequiresExactlyTheRelevantConstraints) {
  RunConfig c;
  c.objective = Objective::MinRules;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.min_coverage = Bound::parse("100%");
  c.max_collateral = Bound::parse("0");
  EXPECT_NO_THROW(c.validate());
  c.rule_budget = 5;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.objective = Objective::MinCollateral;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c.max_collateral.reset();
  EXPECT_NO_THROW(c.validate());
  c.objective = Objective::MaxCoverage;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  try {
    RunConfig m;
    m.objective = Objective::MaxCoverage;
    m.max_collateral = Bound::parse("0");
    m.validate();
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("--rule-budget"), std::string::npos);
  }
}

TEST(GenerateRules, UnconstrainedMaxCoverageTakesAllFilterable) {
  RunConfig c;
  c.objective = Objective::MaxCoverage;
  c.max_collateral = Bound::parse("inf");
  c.rule_budget = kUnlimitedRules;
  for (const auto& b : generate_rules(attack(3, 0, 0.2), c)) {
    EXPECT_NEAR(b.report.coverage, b.report.ddos_total - b.report.unfilterable, 1e-6);
  }
}

TEST(GenerateRules, ZeroCoverageNeedsNoRules) {
  RunConfig c;
  c.objective = Objective::MinRules;
  c.min_coverage = Bound::parse("0");
  c.max_collateral = Bound::parse("10%");
  for (const auto& b : generate_rules(attack(3, 0), c)) EXPECT_EQ(b.report.rules, 0u);
}

TEST(GenerateRules, IdsAndLifetimes) {
  RunConfig c;
  c.objective = Objective::MinRules;
  c.min_coverage = Bound::parse("100%");
  c.max_collateral = Bound::parse("0");
  const auto batches = generate_rules(attack(3, 0), c);
  ASSERT_EQ(batches.size(), 3u);
  std::uint64_t next = 1;
  for (const auto& b : batches) {
    EXPECT_TRUE(b.report.feasible);
    EXPECT_DOUBLE_EQ(b.report.collateral, 0);
    for (const auto& r : b.rules.rules) {
      EXPECT_EQ(r.id, next++);
      EXPECT_EQ(r.start_time, static_cast<std::uint64_t>(b.report.window_start + 1));
      EXPECT_EQ(r.end_time, r.start_time + 2);
    }
  }
  std::ostringstream out;
  write_batch_report(out, {batches[0].report}, VolumeUnit::Packets);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')),
            "batch,window_start_s,leaves,ddos_total_packets,legit_total_packets,unfilterable_packets,"
            "coverage_packets,collateral_packets,rules,feasible");
}

TEST(Simulate, BaselineFiltersNothing) {
  SimulationConfig c;
  c.baseline = true;
  const SimulationReport r = simulate(attack(5, 0), c);
  ASSERT_EQ(r.seconds.size(), 5u);
  for (const auto& s : r.seconds) {
    EXPECT_EQ(s.filtered, 0u);
    EXPECT_EQ(s.reached, s.arrivals);
  }
  EXPECT_TRUE(r.batches.empty());
}

TEST(Simulate, MinRulesFiltersEverythingAfterWarmUp) {
  SimulationConfig c;
  c.run.objective = Objective::MinRules;
  c.run.min_coverage = Bound::parse("100%");
  c.run.max_collateral = Bound::parse("0");
  const SimulationReport r = simulate(attack(12, 4), c);
  ASSERT_EQ(r.seconds.size(), 12u);
  for (const auto& s : r.seconds) {
    EXPECT_EQ(s.arrivals, s.filtered + s.reached);
    EXPECT_EQ(s.filtered, s.ddos_filtered + s.legit_filtered);
    EXPECT_EQ(s.legit_filtered, 0u);
    if (s.second >= 5) {
      EXPECT_EQ(s.ddos_filtered, s.ddos_arrivals) << "second " << s.second;
    }
  }
  EXPECT_EQ(r.seconds.front().filtered, 0u);
  ASSERT_FALSE(r.placements.empty());
  for (const auto& p : r.placements) EXPECT_DOUBLE_EQ(p.success_rate, 1.0);
  ASSERT_FALSE(r.distribution.empty());
  EXPECT_DOUBLE_EQ(r.distribution.back().second, 1.0);
}

TEST(Simulate, NodeLimitAndParticipantsConstrainPlacement) {
  SimulationConfig c;
  c.run.objective = Objective::MinRules;
  c.run.min_coverage = Bound::parse("100%");
  c.run.max_collateral = Bound::parse("0");
  c.node_limit = 1;
  c.participants = std::vector<NodeId>{topo().victim()};
  const SimulationReport r = simulate(attack(4, 0), c);
  for (const auto& p : r.placements) EXPECT_LE(p.placed, 1u);
  for (const auto& [rules, frac] : r.distribution) EXPECT_LE(rules, 4u);
}

TEST(Simulate, MaxCoverageSteadyStateBand) {
  const Topology full = [] {
    SyntheticParams p;
    p.seed = 3;
    return generate_topology(p);
  }();
  AttackConfig a;
  a.ddos_sources = 1000;
  a.legit_sources = 500;
  a.duration = 30;
  a.ramp = 10;
  a.bot_ases = 150;
  a.seed = 5;
  const Trace trace = generate_attack(full, a);
  SimulationConfig c;
  c.run.objective = Objective::MaxCoverage;
  c.run.max_collateral = Bound::parse("0");
  c.run.rule_budget = 22;
  const SimulationReport r = simulate(trace, c);
  std::size_t arrivals = 0, filtered = 0;
  for (const auto& s : r.seconds) {
    if (s.second < 15) continue;
    arrivals += s.ddos_arrivals;
    filtered += s.ddos_filtered;
  }
  const double frac = static_cast<double>(filtered) / static_cast<double>(arrivals);
  EXPECT_GE(frac, 0.5);
  EXPECT_LE(frac, 0.8);
}

}  // namespace
}  // namespace adf
