#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "adf/experiment.hpp"
#include "adf/oracle.hpp"
#include "adf/placement.hpp"
#include "adf/protocol.hpp"
#include "adf/rulegen.hpp"
#include "adf/topology.hpp"

namespace py = pybind11;

namespace adf {
namespace {

Constraints make_constraints(double min_coverage, double max_collateral, std::optional<std::size_t> rule_budget) {
  Constraints c;
  c.min_coverage = min_coverage;
  c.max_collateral = max_collateral;
  c.rule_budget = rule_budget.value_or(kUnlimitedRules);
  return c;
}

Trace read_trace(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_trace(in);
}

py::bytes encode_rule(const Rule& rule) {
  const auto bytes = encode(to_submission(rule));
  return py::bytes(reinterpret_cast<const char*>(bytes.data()), bytes.size());
}

py::dict decode_message(const py::bytes& data) {
  const std::string raw = data;
  const std::vector<std::uint8_t> bytes(raw.begin(), raw.end());
  const Message msg = decode(bytes);
  py::dict out;
  if (const auto* s = std::get_if<RuleSubmission>(&msg)) {
    out["type"] = "submission";
    out["version"] = s->version;
    out["rule_id"] = s->rule_id;
    out["source"] = s->source.to_string();
    out["protocol"] = std::string(to_string(s->protocol));
    out["tcp_flags"] = std::string(to_string(s->tcp_flags));
    out["destination"] = s->destination.to_string();
    out["start_time"] = s->start_time;
    out["end_time"] = s->end_time;
  } else {
    const auto& a = std::get<RuleAck>(msg);
    out["type"] = "ack";
    out["version"] = a.version;
    out["rule_id"] = a.rule_id;
    out["code"] = static_cast<int>(a.code);
  }
  return out;
}

PlacementResult place(const std::vector<Rule>& rules, const std::vector<NodeId>& participants, std::size_t limit) {
  std::vector<Rule> kept = rules;
  for (auto& rule : kept) rule.candidates = intersect(rule.candidates, make_node_set(participants));
  auto caps = uniform_capacities(participants, limit);
  return place_rules(kept, caps);
}

}  // namespace
}  // namespace adf

PYBIND11_MODULE(_core, m) {
  using namespace adf;

  py::register_exception<TraceError>(m, "TraceError", PyExc_ValueError);
  py::register_exception<SpecError>(m, "SpecError", PyExc_ValueError);
  py::register_exception<DecodeError>(m, "DecodeError", PyExc_ValueError);
  py::register_exception<InstanceTooLarge>(m, "InstanceTooLarge", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<Trace>(m, "Trace")
      .def_property_readonly("unit", [](const Trace& t) { return std::string(to_string(t.unit)); })
      .def("__len__", [](const Trace& t) { return t.flows.size(); })
      .def("to_text", [](const Trace& t) {
        std::ostringstream out;
        write_trace(out, t);
        return out.str();
      });

  py::class_<Rule>(m, "Rule")
      .def_readonly("id", &Rule::id)
      .def_property_readonly("source", [](const Rule& r) { return r.source.to_string(); })
      .def_readonly("candidates", &Rule::candidates)
      .def_readonly("ddos", &Rule::ddos)
      .def_readonly("legit", &Rule::legit)
      .def_readonly("start_time", &Rule::start_time)
      .def_readonly("end_time", &Rule::end_time)
      .def("__repr__", [](const Rule& r) {
        return "Rule(" + std::to_string(r.id) + ", " + r.source.to_string() + ", F=" + format_node_set(r.candidates) +
               ")";
      });

  py::class_<RuleSet>(m, "RuleSet")
      .def_readonly("rules", &RuleSet::rules)
      .def_readonly("ddos", &RuleSet::ddos)
      .def_readonly("legit", &RuleSet::legit)
      .def_readonly("feasible", &RuleSet::feasible)
      .def_property_readonly("objective", [](const RuleSet& r) { return std::string(to_string(r.objective)); })
      .def("__len__", &RuleSet::size);

  py::class_<Topology>(m, "Topology")
      .def_property_readonly("node_count", &Topology::node_count)
      .def_property_readonly("edge_count", &Topology::edge_count)
      .def_property_readonly("victim", &Topology::victim)
      .def("tier_size", &Topology::tier_size)
      .def("path", [](const Topology& t, AsId src) { return compute_path(t, src, t.victim()); });

  py::class_<PlacementResult>(m, "PlacementResult")
      .def_readonly("placed", &PlacementResult::placed)
      .def_readonly("failed", &PlacementResult::failed)
      .def_readonly("success_rate", &PlacementResult::success_rate)
      .def_readonly("per_node_counts", &PlacementResult::per_node_counts)
      .def("distribution", [](const PlacementResult& r) { return rule_distribution(r); });

  m.def("parse_trace", [](const std::string& text) { return parse_trace_string(text); }, py::arg("text"));
  m.def("read_trace", &read_trace, py::arg("path"));

  m.def(
      "solve",
      [](const Trace& trace, const std::string& objective, double min_coverage, double max_collateral,
         std::optional<std::size_t> rule_budget) {
        const auto leaves = build_leaves(trace.flows);
        return solve(leaves, parse_objective(objective), make_constraints(min_coverage, max_collateral, rule_budget));
      },
      py::arg("trace"), py::arg("objective"), py::arg("min_coverage") = 0.0,
      py::arg("max_collateral") = kUnlimitedVolume, py::arg("rule_budget") = std::nullopt);
  m.def(
      "oracle_solve",
      [](const Trace& trace, const std::string& objective, double min_coverage, double max_collateral,
         std::optional<std::size_t> rule_budget) {
        const auto leaves = build_leaves(trace.flows);
        return oracle_solve(leaves, parse_objective(objective),
                            make_constraints(min_coverage, max_collateral, rule_budget));
      },
      py::arg("trace"), py::arg("objective"), py::arg("min_coverage") = 0.0,
      py::arg("max_collateral") = kUnlimitedVolume, py::arg("rule_budget") = std::nullopt);
  m.def(
      "evaluate",
      [](const RuleSet& rules, const Trace& trace) {
        const Metrics mt = evaluate(rules, trace.flows);
        py::dict out;
        out["coverage"] = mt.coverage;
        out["collateral"] = mt.collateral;
        out["count"] = mt.count;
        out["unfilterable"] = mt.unfilterable;
        return out;
      },
      py::arg("rules"), py::arg("trace"));

  m.def("encode_rule", &encode_rule, py::arg("rule"));
  m.def("decode_message", &decode_message, py::arg("data"));

  m.def(
      "generate_topology",
      [](std::uint64_t seed, std::array<std::size_t, 3> tiers) {
        SyntheticParams p;
        p.seed = seed;
        p.tier_sizes = tiers;
        return generate_topology(p);
      },
      py::arg("seed") = 1, py::arg("tiers") = std::array<std::size_t, 3>{89, 8442, 47052});
  m.def("profile_names", [] {
    std::vector<std::string> names;
    for (const auto& p : standard_profiles()) names.push_back(p.name);
    return names;
  });
  m.def(
      "participants",
      [](const Topology& topo, const std::string& profile, std::uint64_t seed) {
        return apply_profile(topo, find_profile(profile, seed));
      },
      py::arg("topology"), py::arg("profile"), py::arg("seed") = 1);
  m.def(
      "generate_attack",
      [](const Topology& topo, const std::string& config) {
        return generate_attack(topo, parse_attack_config_string(config));
      },
      py::arg("topology"), py::arg("config") = "");
  m.def("place", &place, py::arg("rules"), py::arg("participants"), py::arg("limit"));
}
