#include "cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <atomic>
#include <chrono>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "adf/experiment.hpp"
#include "adf/placement.hpp"
#include "adf/protocol.hpp"
#include "adf/rulegen.hpp"
#include "adf/topology.hpp"

namespace adf::cli {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr const char* kVersion = "0.1.0";

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open '" + path + "'");
  return in;
}

std::ofstream open_output(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write '" + path.string() + "'");
  return out;
}

void write_manifest(const fs::path& dir, const std::string& command, json config) {
  json manifest;
  manifest["tool"] = "adf";
  manifest["version"] = kVersion;
  manifest["command"] = command;
  manifest["config"] = std::move(config);
  auto out = open_output(dir / "manifest.json");
  out << manifest.dump(2) << '\n';
}

Topology read_topology(const std::string& path, std::ostream& err) {
  auto in = open_input(path);
  LoadedTopology loaded = load_topology(in);
  for (const auto& w : loaded.warnings) err << "warning: " << w << '\n';
  return std::move(loaded.topology);
}

Trace read_trace(const std::string& path) {
  auto in = open_input(path);
  return parse_trace(in);
}

std::size_t parse_limit(const std::string& text) {
  if (text == "inf" || text == "unlimited") return kUnlimitedRules;
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos != text.size() || text.empty() || text.front() == '-') {
    throw UsageError("invalid limit '" + text + "' (expected a count or inf)");
  }
  return static_cast<std::size_t>(v);
}

struct ProblemOptions {
  std::string problem = "min-rules";
  std::string min_coverage;
  std::string max_collateral;
  std::string rule_budget;
  double window = 1.0;
  double lifetime = 2.0;
  std::string destination;

  void attach(CLI::App* cmd, bool required) {
    auto* p = cmd->add_option("--problem", problem, "max-coverage, min-collateral or min-rules")
                  ->check(CLI::IsMember({"max-coverage", "min-collateral", "min-rules"}));
    if (required) p->required();
    cmd->add_option("--min-coverage,-D", min_coverage, "D: DDoS volume, <n>% of filterable DDoS, or inf");
    cmd->add_option("--max-collateral,-L", max_collateral, "L: legit volume, <n>% of legit, or inf");
    cmd->add_option("--rule-budget,-M", rule_budget, "M: rule count or inf");
    cmd->add_option("--window", window, "batch window in seconds")->capture_default_str();
    cmd->add_option("--lifetime", lifetime, "rule lifetime in batch windows")->capture_default_str();
    cmd->add_option("--destination", destination, "destination prefix written into every rule");
  }

  RunConfig config() const {
    RunConfig c;
    c.objective = parse_objective(problem);
    if (!min_coverage.empty()) c.min_coverage = Bound::parse(min_coverage);
    if (!max_collateral.empty()) c.max_collateral = Bound::parse(max_collateral);
    if (!rule_budget.empty()) c.rule_budget = parse_limit(rule_budget);
    c.window = window;
    c.lifetime_windows = lifetime;
    if (!destination.empty()) c.rule_template.destination = SourceSpec::parse(destination);
    c.validate();
    return c;
  }

  json echo() const {
    json j;
    j["problem"] = problem;
    j["min_coverage"] = min_coverage.empty() ? json(nullptr) : json(min_coverage);
    j["max_collateral"] = max_collateral.empty() ? json(nullptr) : json(max_collateral);
    j["rule_budget"] = rule_budget.empty() ? json(nullptr) : json(rule_budget);
    j["window_s"] = window;
    j["lifetime_windows"] = lifetime;
    if (!destination.empty()) j["destination"] = destination;
    return j;
  }
};

struct ProfileOptions {
  std::string topology;
  std::string profile;
  std::uint64_t profile_seed = 1;

  void attach(CLI::App* cmd) {
    cmd->add_option("--topology", topology, "topology file used to resolve --profile");
    cmd->add_option("--profile", profile, "participation profile restricting rule holders");
    cmd->add_option("--profile-seed", profile_seed, "seed for profile sampling")->capture_default_str();
  }

  std::optional<std::vector<NodeId>> participants(std::ostream& err) const {
    if (profile.empty()) return std::nullopt;
    if (topology.empty()) throw UsageError("--profile needs --topology");
    const Topology topo = read_topology(topology, err);
    return apply_profile(topo, find_profile(profile, profile_seed));
  }

  json echo() const {
    json j;
    j["topology"] = topology.empty() ? json(nullptr) : json(topology);
    j["profile"] = profile.empty() ? json(nullptr) : json(profile);
    j["profile_seed"] = profile_seed;
    return j;
  }
};

struct GenerateArgs {
  std::string trace;
  std::string out_dir = ".";
  ProblemOptions problem;
};

int cmd_generate(const GenerateArgs& a, std::ostream& out) {
  const RunConfig config = a.problem.config();
  const Trace trace = read_trace(a.trace);
  const auto batches = generate_rules(trace, config);

  const fs::path dir = a.out_dir;
  std::vector<BatchReport> rows;
  {
    auto rules_out = open_output(dir / "rules.txt");
    for (const auto& b : batches) {
      write_rules(rules_out, b.rules.rules);
      rows.push_back(b.report);
    }
  }
  {
    auto report = open_output(dir / "batches.csv");
    write_batch_report(report, rows, trace.unit);
  }
  {
    auto timing = open_output(dir / "timing.csv");
    write_timing_report(timing, rows);
  }
  json cfg;
  cfg["trace"] = a.trace;
  cfg["run"] = a.problem.echo();
  write_manifest(dir, "generate", cfg);

  std::size_t rules = 0;
  for (const auto& r : rows) rules += r.rules;
  out << "batches=" << rows.size() << " rules=" << rules << " out=" << dir.string() << '\n';
  return 0;
}

struct PlaceArgs {
  std::string rules;
  std::string limit = "inf";
  std::string out_dir = ".";
  ProfileOptions profile;
};

int cmd_place(const PlaceArgs& a, std::ostream& out, std::ostream& err) {
  auto in = open_input(a.rules);
  std::vector<Rule> rules = read_rules(in);
  const std::size_t limit = parse_limit(a.limit);
  if (auto participants = a.profile.participants(err)) {
    for (auto& r : rules) r.candidates = intersect(r.candidates, *participants);
  }
  std::vector<NodeId> nodes;
  for (const auto& r : rules) nodes.insert(nodes.end(), r.candidates.begin(), r.candidates.end());
  nodes = make_node_set(std::move(nodes));
  auto caps = uniform_capacities(nodes, limit);
  const PlacementResult result = place_rules(rules, caps);

  const fs::path dir = a.out_dir;
  {
    auto p = open_output(dir / "placement.csv");
    write_placement(p, result);
  }
  {
    auto d = open_output(dir / "distribution.csv");
    write_distribution(d, rule_distribution(result));
  }
  json cfg;
  cfg["rules"] = a.rules;
  cfg["node_limit"] = a.limit;
  cfg["participants"] = a.profile.echo();
  write_manifest(dir, "place", cfg);
  out << "placed=" << result.placed.size() << " failed=" << result.failed.size()
      << " success_rate=" << result.success_rate << '\n';
  return 0;
}

struct SimulateArgs {
  std::string trace;
  bool baseline = false;
  std::string node_limit = "inf";
  std::string out_dir = ".";
  ProblemOptions problem;
  ProfileOptions profile;
};

int cmd_simulate(const SimulateArgs& a, std::ostream& out, std::ostream& err) {
  SimulationConfig config;
  config.baseline = a.baseline;
  if (a.baseline) {
    config.run.window = a.problem.window;
  } else {
    config.run = a.problem.config();
  }
  const std::size_t limit = parse_limit(a.node_limit);
  if (limit != kUnlimitedRules) config.node_limit = limit;
  config.participants = a.profile.participants(err);
  const Trace trace = read_trace(a.trace);
  const SimulationReport report = simulate(trace, config);

  const fs::path dir = a.out_dir;
  {
    auto s = open_output(dir / "seconds.csv");
    write_seconds_report(s, report.seconds);
  }
  {
    auto b = open_output(dir / "batches.csv");
    write_batch_report(b, report.batches, trace.unit);
  }
  {
    auto p = open_output(dir / "placement.csv");
    write_placement_report(p, report.placements);
  }
  {
    auto d = open_output(dir / "distribution.csv");
    write_distribution(d, report.distribution);
  }
  json cfg;
  cfg["trace"] = a.trace;
  cfg["baseline"] = a.baseline;
  cfg["run"] = a.problem.echo();
  cfg["node_limit"] = a.node_limit;
  cfg["participants"] = a.profile.echo();
  write_manifest(dir, "simulate", cfg);

  std::size_t arrivals = 0, filtered = 0, legit = 0;
  for (const auto& s : report.seconds) {
    arrivals += s.arrivals;
    filtered += s.filtered;
    legit += s.legit_filtered;
  }
  out << "seconds=" << report.seconds.size() << " arrivals=" << arrivals << " filtered=" << filtered
      << " legit_filtered=" << legit << '\n';
  return 0;
}

struct GenTopologyArgs {
  std::uint64_t seed = 1;
  std::vector<std::size_t> tiers{89, 8442, 47052};
  int max_providers = 2;
  double peering = 0.3;
  std::string out_path;
};

int cmd_gen_topology(const GenTopologyArgs& a, std::ostream& out) {
  if (a.tiers.size() != 3) throw UsageError("--tiers needs three sizes");
  SyntheticParams p;
  p.seed = a.seed;
  p.tier_sizes = {a.tiers[0], a.tiers[1], a.tiers[2]};
  p.max_providers = a.max_providers;
  p.tier2_peering = a.peering;
  const Topology topo = generate_topology(p);
  auto f = open_output(a.out_path);
  save_topology(f, topo);
  out << "nodes=" << topo.node_count() << " edges=" << topo.edge_count() << " victim=" << topo.victim() << '\n';
  return 0;
}

struct GenAttackArgs {
  std::string topology;
  std::string config;
  std::string out_path;
  AttackConfig attack;
  std::string volume;
};

int cmd_gen_attack(GenAttackArgs a, const CLI::App& cmd, std::ostream& out, std::ostream& err) {
  AttackConfig c;
  if (!a.config.empty()) {
    auto in = open_input(a.config);
    c = parse_attack_config(in);
  }
  auto given = [&](const char* name) { return cmd.get_option(name)->count() > 0; };
  if (given("--ddos")) c.ddos_sources = a.attack.ddos_sources;
  if (given("--legit")) c.legit_sources = a.attack.legit_sources;
  if (given("--duration")) c.duration = a.attack.duration;
  if (given("--spoof")) c.spoof_fraction = a.attack.spoof_fraction;
  if (given("--seed")) c.seed = a.attack.seed;
  if (given("--bot-ases")) c.bot_ases = a.attack.bot_ases;
  if (given("--zipf")) c.zipf = a.attack.zipf;
  if (given("--ramp")) c.ramp = a.attack.ramp;
  if (given("--port-granularity")) c.port_granularity = a.attack.port_granularity;
  if (given("--profile")) c.profile = a.attack.profile;
  if (given("--profile-seed")) c.profile_seed = a.attack.profile_seed;
  if (given("--volume")) c.volume = VolumeModel::parse(a.volume);
  if (!c.profile.empty()) find_profile(c.profile);

  const Topology topo = read_topology(a.topology, err);
  const Trace trace = generate_attack(topo, c);
  auto f = open_output(a.out_path);
  write_trace(f, trace);
  out << "flows=" << trace.flows.size() << '\n';
  return 0;
}

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct ServeArgs {
  std::uint16_t port = 0;
  std::size_t capacity = 1000;
  std::string bind = "127.0.0.1";
  double duration = 0.0;
  std::string export_acl;
};

int cmd_serve_node(const ServeArgs& a, std::ostream& out) {
  g_stop = false;
  struct sigaction sa {};
  sa.sa_handler = on_signal;
  sigemptyset(&sa.sa_mask);
  struct sigaction old_int {}, old_term {};
  sigaction(SIGINT, &sa, &old_int);
  sigaction(SIGTERM, &sa, &old_term);

  RuleTable table(a.capacity);
  NodeServer server(table, a.port, a.bind);
  out << "listening " << a.bind << ':' << server.port() << " capacity=" << a.capacity << std::endl;

  const auto deadline = std::chrono::steady_clock::now() + std::chrono::duration<double>(a.duration);
  while (!g_stop && (a.duration <= 0 || std::chrono::steady_clock::now() < deadline)) {
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
  server.stop();
  server.wait();
  sigaction(SIGINT, &old_int, nullptr);
  sigaction(SIGTERM, &old_term, nullptr);

  if (!a.export_acl.empty()) {
    auto f = open_output(a.export_acl);
    table.export_acl(f, unix_now());
  }
  out << "stopped rules=" << table.size() << std::endl;
  return 0;
}

struct Endpoint {
  NodeId node = 0;
  std::string host;
  std::uint16_t port = 0;
};

Endpoint parse_endpoint(const std::string& text) {
  const auto eq = text.find('=');
  const auto colon = text.rfind(':');
  if (eq == std::string::npos || colon == std::string::npos || colon < eq) {
    throw UsageError("invalid --node '" + text + "' (expected id=host:port)");
  }
  Endpoint e;
  try {
    e.node = static_cast<NodeId>(std::stoul(text.substr(0, eq)));
    const unsigned long port = std::stoul(text.substr(colon + 1));
    if (port == 0 || port > 65535) throw std::out_of_range("port");
    e.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw UsageError("invalid --node '" + text + "' (expected id=host:port)");
  }
  e.host = text.substr(eq + 1, colon - eq - 1);
  return e;
}

std::map<std::uint64_t, NodeId> read_placement(const std::string& path) {
  auto in = open_input(path);
  std::map<std::uint64_t, NodeId> placed;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line.front() == '#' || line.rfind("rule_id", 0) == 0) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw UsageError(path + ": line " + std::to_string(line_no) + ": expected id,node");
    const std::string node = line.substr(comma + 1);
    if (node == "none") continue;
    try {
      placed[std::stoull(line.substr(0, comma))] = static_cast<NodeId>(std::stoul(node));
    } catch (const std::exception&) {
      throw UsageError(path + ": line " + std::to_string(line_no) + ": expected id,node");
    }
  }
  return placed;
}

struct SubmitArgs {
  std::string rules;
  std::string placement;
  std::vector<std::string> nodes;
  bool absolute_times = false;
  double timeout = 5.0;
  int retries = 1;
  std::string out_path;
};

int cmd_submit(const SubmitArgs& a, std::ostream& out) {
  auto in = open_input(a.rules);
  const std::vector<Rule> rules = read_rules(in);
  std::map<std::uint64_t, NodeId> placed;
  if (!a.placement.empty()) placed = read_placement(a.placement);

  std::map<NodeId, std::unique_ptr<TcpEndpoint>> endpoints;
  for (const auto& text : a.nodes) {
    const Endpoint e = parse_endpoint(text);
    endpoints[e.node] = std::make_unique<TcpEndpoint>(
        e.node, e.host, e.port,
        std::chrono::milliseconds(static_cast<long long>(a.timeout * 1000)), a.retries);
  }

  const std::uint64_t offset = a.absolute_times ? 0 : unix_now();
  std::ostringstream report;
  report << "rule_id,node,code,result,attempts,error\n";
  std::size_t accepted = 0, failed = 0;
  for (const Rule& rule : rules) {
    std::vector<NodeEndpoint*> order;
    auto add = [&](NodeId n) {
      auto it = endpoints.find(n);
      if (it == endpoints.end()) return;
      for (auto* e : order) {
        if (e == it->second.get()) return;
      }
      order.push_back(it->second.get());
    };
    if (auto it = placed.find(rule.id); it != placed.end()) add(it->second);
    for (NodeId n : rule.candidates) add(n);

    RuleSubmission msg = to_submission(rule);
    msg.start_time += offset;
    msg.end_time += offset;
    try {
      if (order.empty()) throw AllFailed(rule.id, {});
      const Accepted ok = subscriber_submit(msg, order);
      ++accepted;
      report << rule.id << ',' << ok.node << ',' << static_cast<int>(ok.ack.code) << ',' << to_string(ok.ack.code)
             << ',' << ok.attempts.size() + 1 << ",\n";
    } catch (const AllFailed& e) {
      ++failed;
      std::string why = e.outcomes().empty() ? "no reachable candidate endpoint" : "";
      for (const auto& o : e.outcomes()) {
        if (!why.empty()) why += "; ";
        why += std::to_string(o.node) + ": " + (o.code ? std::string(to_string(*o.code)) : o.error);
      }
      for (char& ch : why) {
        if (ch == ',' || ch == '\n') ch = ' ';
      }
      std::string last;
      if (!e.outcomes().empty() && e.outcomes().back().code) {
        last = std::to_string(static_cast<int>(*e.outcomes().back().code));
      }
      report << rule.id << ",," << last << ",all-failed,"
             << e.outcomes().size() << ',' << why << '\n';
    }
  }
  if (a.out_path.empty()) {
    out << report.str();
  } else {
    auto f = open_output(a.out_path);
    f << report.str();
    out << "accepted=" << accepted << " failed=" << failed << '\n';
  }
  return 0;
}

}  // namespace

int run(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Adaptive distributed filtering: rule generation, placement and simulation"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenerateArgs gen;
  auto* c_gen = app.add_subcommand("generate", "generate rules for every batch of a trace");
  c_gen->add_option("--trace", gen.trace, "flow trace file")->required()->check(CLI::ExistingFile);
  c_gen->add_option("--out-dir", gen.out_dir, "output directory")->capture_default_str();
  gen.problem.attach(c_gen, true);

  PlaceArgs place;
  auto* c_place = app.add_subcommand("place", "assign rules to filtering nodes");
  c_place->add_option("--rules", place.rules, "rule file")->required()->check(CLI::ExistingFile);
  c_place->add_option("--limit", place.limit, "per-node rule limit or inf")->capture_default_str();
  c_place->add_option("--out-dir", place.out_dir, "output directory")->capture_default_str();
  place.profile.attach(c_place);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "replay a trace against rules generated from earlier batches");
  c_sim->add_option("--trace", sim.trace, "flow trace file")->required()->check(CLI::ExistingFile);
  c_sim->add_flag("--baseline", sim.baseline, "no filtering");
  c_sim->add_option("--node-limit", sim.node_limit, "per-node rule limit or inf")->capture_default_str();
  c_sim->add_option("--out-dir", sim.out_dir, "output directory")->capture_default_str();
  sim.problem.attach(c_sim, false);
  sim.profile.attach(c_sim);

  GenTopologyArgs topo;
  auto* c_topo = app.add_subcommand("gen-topology", "generate a synthetic three-tier AS topology");
  c_topo->add_option("--seed", topo.seed, "random seed")->capture_default_str();
  c_topo->add_option("--tiers", topo.tiers, "tier sizes")->delimiter(',')->expected(3);
  c_topo->add_option("--max-providers", topo.max_providers, "providers per AS drawn from [1, n]")
      ->capture_default_str();
  c_topo->add_option("--peering", topo.peering, "tier-2 peering probability")->capture_default_str();
  c_topo->add_option("--out", topo.out_path, "topology file")->required();

  GenAttackArgs atk;
  auto* c_atk = app.add_subcommand("gen-attack", "generate a labelled attack trace over a topology");
  c_atk->add_option("--topology", atk.topology, "topology file")->required()->check(CLI::ExistingFile);
  c_atk->add_option("--config", atk.config, "attack config file")->check(CLI::ExistingFile);
  c_atk->add_option("--out", atk.out_path, "trace file")->required();
  c_atk->add_option("--ddos", atk.attack.ddos_sources, "DDoS sources");
  c_atk->add_option("--legit", atk.attack.legit_sources, "legitimate sources");
  c_atk->add_option("--duration", atk.attack.duration, "seconds");
  c_atk->add_option("--spoof", atk.attack.spoof_fraction, "fraction of bots spoofing legit addresses");
  c_atk->add_option("--seed", atk.attack.seed, "random seed");
  c_atk->add_option("--bot-ases", atk.attack.bot_ases, "infected ASes, 0 for one random AS per bot");
  c_atk->add_option("--zipf", atk.attack.zipf, "bot skew over infected ASes");
  c_atk->add_option("--ramp", atk.attack.ramp, "bots join over [0, ramp) seconds");
  c_atk->add_flag("--port-granularity", atk.attack.port_granularity, "bots carry source ports");
  c_atk->add_option("--volume", atk.volume, "const:v, uniform:lo:hi or pareto:shape:scale");
  c_atk->add_option("--profile", atk.attack.profile, "participation profile restricting paths");
  c_atk->add_option("--profile-seed", atk.attack.profile_seed, "seed for profile sampling");

  ServeArgs serve;
  auto* c_serve = app.add_subcommand("serve-node", "run a filtering node");
  c_serve->add_option("--port", serve.port, "TCP port, 0 picks a free one")->capture_default_str();
  c_serve->add_option("--capacity", serve.capacity, "rule table capacity")->capture_default_str();
  c_serve->add_option("--bind", serve.bind, "bind address")->capture_default_str();
  c_serve->add_option("--duration", serve.duration, "stop after this many seconds, 0 waits for SIGINT");
  c_serve->add_option("--export-acl", serve.export_acl, "write the active rule table here on exit");

  SubmitArgs sub;
  auto* c_sub = app.add_subcommand("submit", "submit rules to filtering nodes and report acks");
  c_sub->add_option("--rules", sub.rules, "rule file")->required()->check(CLI::ExistingFile);
  c_sub->add_option("--placement", sub.placement, "placement file; assigned node is tried first")
      ->check(CLI::ExistingFile);
  c_sub->add_option("--node", sub.nodes, "node endpoint id=host:port (repeatable)")->required();
  c_sub->add_flag("--absolute-times", sub.absolute_times, "rule times are unix seconds, not offsets from now");
  c_sub->add_option("--timeout", sub.timeout, "per-attempt timeout in seconds")->capture_default_str();
  c_sub->add_option("--retries", sub.retries, "retries per node")->capture_default_str();
  c_sub->add_option("--out", sub.out_path, "ack report, default stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err);
  }

  try {
    if (*c_gen) return cmd_generate(gen, out);
    if (*c_place) return cmd_place(place, out, err);
    if (*c_sim) return cmd_simulate(sim, out, err);
    if (*c_topo) return cmd_gen_topology(topo, out);
    if (*c_atk) return cmd_gen_attack(atk, *c_atk, out, err);
    if (*c_serve) return cmd_serve_node(serve, out);
    if (*c_sub) return cmd_submit(sub, out);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}

}  // namespace adf::cli
