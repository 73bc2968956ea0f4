#include "adf/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace adf {

Bound Bound::parse(std::string_view text) {
  if (text == "inf" || text == "unlimited") return {Kind::Unlimited, 0.0};
  Bound b{Kind::Absolute, 0.0};
  if (!text.empty() && text.back() == '%') {
    b.kind = Kind::Percent;
    text.remove_suffix(1);
  }
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), b.value);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !(b.value >= 0) ||
      !std::isfinite(b.value)) {
    throw std::invalid_argument("invalid bound '" + std::string(text) + "' (expected <n>, <n>% or inf)");
  }
  return b;
}

double Bound::resolve(double total) const {
  switch (kind) {
    case Kind::Absolute:
      return value;
    case Kind::Percent:
      return value / 100.0 * total;
    case Kind::Unlimited:
      return kUnlimitedVolume;
  }
  return value;
}

std::string Bound::to_string() const {
  std::ostringstream out;
  if (kind == Kind::Unlimited) return "inf";
  out << value;
  if (kind == Kind::Percent) out << '%';
  return out.str();
}

void RunConfig::validate() const {
  auto need = [](bool present, const char* flag, Objective o) {
    if (!present) {
      throw std::invalid_argument(std::string(to_string(o)) + " needs " + flag);
    }
  };
  auto forbid = [](bool present, const char* flag, Objective o) {
    if (present) {
      throw std::invalid_argument(std::string(flag) + " is not a constraint of " + std::string(to_string(o)));
    }
  };
  switch (objective) {
    case Objective::MaxCoverage:
      need(max_collateral.has_value(), "--max-collateral (L)", objective);
      need(rule_budget.has_value(), "--rule-budget (M)", objective);
      forbid(min_coverage.has_value(), "--min-coverage", objective);
      break;
    case Objective::MinCollateral:
      need(min_coverage.has_value(), "--min-coverage (D)", objective);
      need(rule_budget.has_value(), "--rule-budget (M)", objective);
      forbid(max_collateral.has_value(), "--max-collateral", objective);
      break;
    case Objective::MinRules:
      need(min_coverage.has_value(), "--min-coverage (D)", objective);
      need(max_collateral.has_value(), "--max-collateral (L)", objective);
      forbid(rule_budget.has_value(), "--rule-budget", objective);
      break;
  }
  if (rule_budget && *rule_budget < 1) throw std::invalid_argument("--rule-budget must be >= 1");
  if (!(window > 0)) throw std::invalid_argument("--window must be positive");
  if (!(lifetime_windows > 0)) throw std::invalid_argument("rule lifetime must be positive");
}

Constraints RunConfig::resolve(double ddos_total, double legit_total) const {
  Constraints c;
  if (min_coverage) c.min_coverage = min_coverage->resolve(ddos_total);
  if (max_collateral) c.max_collateral = max_collateral->resolve(legit_total);
  if (rule_budget) c.rule_budget = *rule_budget;
  return c;
}

namespace {

std::uint64_t to_seconds(double t) { return t <= 0 ? 0 : static_cast<std::uint64_t>(std::ceil(t - 1e-9)); }

}  // namespace

std::vector<GeneratedBatch> generate_rules(const Trace& trace, const RunConfig& config) {
  config.validate();
  std::vector<GeneratedBatch> out;
  std::uint64_t next_id = config.rule_template.first_id;
  const auto batches = batch_flows(trace.flows, config.window);
  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Batch& batch = batches[i];
    const auto leaves = build_leaves(batch);
    BatchReport rep;
    rep.batch = i;
    rep.window_start = batch.window_start;
    rep.leaves = leaves.size();
    for (const auto& l : leaves) {
      rep.ddos_total += l->ddos;
      rep.legit_total += l->legit;
      if (!l->filterable()) rep.unfilterable += l->ddos;
    }
    RuleTemplate tmpl = config.rule_template;
    tmpl.first_id = next_id;
    tmpl.start_time = to_seconds(batch.window_start + config.window);
    tmpl.end_time = tmpl.start_time + std::max<std::uint64_t>(1, to_seconds(config.lifetime_windows * config.window));

    const auto t0 = std::chrono::steady_clock::now();
    RuleSet rules = solve(leaves, config.objective,
                          config.resolve(rep.ddos_total - rep.unfilterable, rep.legit_total), tmpl);
    rep.solve_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const Metrics m = evaluate(rules, batch.flows);
    rep.coverage = m.coverage;
    rep.collateral = m.collateral;
    rep.rules = rules.size();
    rep.feasible = rules.feasible;
    next_id += rules.size();
    out.push_back({rep, std::move(rules)});
  }
  return out;
}

void write_batch_report(std::ostream& out, const std::vector<BatchReport>& rows, VolumeUnit unit) {
  const auto u = to_string(unit);
  out << "batch,window_start_s,leaves,ddos_total_" << u << ",legit_total_" << u << ",unfilterable_" << u
      << ",coverage_" << u << ",collateral_" << u << ",rules,feasible\n";
  for (const auto& r : rows) {
    out << r.batch << ',' << r.window_start << ',' << r.leaves << ',' << r.ddos_total << ',' << r.legit_total
        << ',' << r.unfilterable << ',' << r.coverage << ',' << r.collateral << ',' << r.rules << ','
        << (r.feasible ? 1 : 0) << '\n';
  }
}

void write_timing_report(std::ostream& out, const std::vector<BatchReport>& rows) {
  out << "batch,leaves,solve_ms\n";
  for (const auto& r : rows) out << r.batch << ',' << r.leaves << ',' << r.solve_seconds * 1e3 << '\n';
}

SimulationReport simulate(const Trace& trace, const SimulationConfig& config) {
  if (!config.baseline) config.run.validate();
  SimulationReport report;
  const auto batches = batch_flows(trace.flows, config.run.window);

  struct Active {
    Rule rule;
    NodeId node;
  };
  std::vector<Active> active;
  std::map<long long, SecondRow> seconds;
  std::map<NodeId, std::size_t> total_counts;
  std::uint64_t next_id = config.run.rule_template.first_id;
  const std::size_t limit = config.node_limit.value_or(std::numeric_limits<std::size_t>::max());

  for (std::size_t i = 0; i < batches.size(); ++i) {
    const Batch& batch = batches[i];
    std::erase_if(active, [&](const Active& a) { return static_cast<double>(a.rule.end_time) <= batch.window_start; });

    RuleSet live;
    for (const auto& a : active) live.rules.push_back(a.rule);
    const RuleIndex index(live.rules);
    for (const auto& f : batch.flows) {
      const auto sec = static_cast<long long>(std::floor(f.timestamp));
      SecondRow& row = seconds[sec];
      row.second = sec;
      ++row.arrivals;
      if (f.is_ddos()) ++row.ddos_arrivals;
      bool dropped = false;
      for (std::size_t pos : index.lookup(f.source)) {
        const Active& a = active[pos];
        if (f.timestamp < static_cast<double>(a.rule.start_time) || f.timestamp >= static_cast<double>(a.rule.end_time)) {
          continue;
        }
        if (rule_drops(a.rule, f, a.node)) {
          dropped = true;
          break;
        }
      }
      if (dropped) {
        ++row.filtered;
        ++(f.is_ddos() ? row.ddos_filtered : row.legit_filtered);
      } else {
        ++row.reached;
      }
    }

    if (config.baseline) continue;
    RunConfig run = config.run;
    run.rule_template.first_id = next_id;
    Trace one{trace.unit, batch.flows};
    auto generated = generate_rules(one, run);
    for (auto& g : generated) {
      g.report.batch = i;
      report.batches.push_back(g.report);
      next_id += g.rules.size();

      std::vector<Rule> rules = g.rules.rules;
      if (config.participants) {
        for (auto& r : rules) r.candidates = intersect(r.candidates, *config.participants);
      }
      // Capacity left after the rules still alive when these start.
      std::map<NodeId, std::size_t> used;
      const std::uint64_t start = rules.empty() ? 0 : rules.front().start_time;
      for (const auto& a : active) {
        if (a.rule.end_time > start) ++used[a.node];
      }
      std::vector<NodeId> nodes;
      for (const auto& r : rules) nodes.insert(nodes.end(), r.candidates.begin(), r.candidates.end());
      nodes = make_node_set(std::move(nodes));
      auto caps = uniform_capacities(nodes, limit);
      for (auto& c : caps) {
        auto it = used.find(c.node);
        if (it != used.end()) c.used = std::min(c.limit, it->second);
      }
      const PlacementResult placed = place_rules(rules, caps);
      report.placements.push_back({i, rules.size(), placed.placed.size(), placed.success_rate});
      for (const auto& [node, count] : placed.per_node_counts) total_counts[node] += count;
      for (const auto& r : rules) {
        auto it = placed.placed.find(r.id);
        if (it != placed.placed.end()) active.push_back({r, it->second});
      }
    }
  }

  for (auto& [sec, row] : seconds) report.seconds.push_back(row);
  PlacementResult all;
  all.per_node_counts = std::move(total_counts);
  report.distribution = rule_distribution(all);
  return report;
}

void write_seconds_report(std::ostream& out, const std::vector<SecondRow>& rows) {
  out << "second,arrivals_flows,ddos_arrivals_flows,filtered_flows,ddos_filtered_flows,legit_filtered_flows,"
         "reached_flows\n";
  for (const auto& r : rows) {
    out << r.second << ',' << r.arrivals << ',' << r.ddos_arrivals << ',' << r.filtered << ',' << r.ddos_filtered
        << ',' << r.legit_filtered << ',' << r.reached << '\n';
  }
}

void write_placement_report(std::ostream& out, const std::vector<PlacementRow>& rows) {
  out << "batch,rules,placed,success_rate\n";
  for (const auto& r : rows) out << r.batch << ',' << r.rules << ',' << r.placed << ',' << r.success_rate << '\n';
}

}  // namespace adf
