#include "adf/topology.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <deque>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <unordered_set>

namespace adf {

// ---- graph ----

void Topology::add_node(AsId id, int tier) {
  if (id == 0) throw TopologyError("AS id 0 is reserved");
  if (tier < 1 || tier > 3) throw TopologyError("tier must be 1, 2 or 3");
  auto [it, fresh] = index_.try_emplace(id, static_cast<std::uint32_t>(ids_.size()));
  if (fresh) {
    ids_.push_back(id);
    tier_.push_back(static_cast<std::uint8_t>(tier));
    adj_.emplace_back();
  } else {
    tier_[it->second] = static_cast<std::uint8_t>(tier);
  }
}

std::size_t Topology::at(AsId id) const {
  auto it = index_.find(id);
  if (it == index_.end()) throw TopologyError("unknown AS " + std::to_string(id));
  return it->second;
}

bool Topology::add_edge(AsId a, AsId b) {
  const auto ia = static_cast<std::uint32_t>(at(a));
  const auto ib = static_cast<std::uint32_t>(at(b));
  if (ia == ib) return false;
  auto& la = adj_[ia];
  auto pos = std::lower_bound(la.begin(), la.end(), ib);
  if (pos != la.end() && *pos == ib) return false;
  la.insert(pos, ib);
  auto& lb = adj_[ib];
  lb.insert(std::lower_bound(lb.begin(), lb.end(), ia), ia);
  ++edges_;
  return true;
}

void Topology::set_victim(AsId id) {
  at(id);
  victim_ = id;
}

std::size_t Topology::tier_size(int tier) const {
  return static_cast<std::size_t>(std::count(tier_.begin(), tier_.end(), tier));
}

std::vector<AsId> Topology::sorted_ids() const {
  std::vector<AsId> out = ids_;
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<AsId> Topology::neighbors(AsId id) const {
  std::vector<AsId> out;
  for (auto i : adj_[at(id)]) out.push_back(ids_[i]);
  std::sort(out.begin(), out.end());
  return out;
}

// ---- file format ----

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto pos = s.find(sep);
    auto part = s.substr(0, pos);
    while (!part.empty() && (part.front() == ' ' || part.front() == '\t')) part.remove_prefix(1);
    while (!part.empty() && (part.back() == ' ' || part.back() == '\t' || part.back() == '\r')) {
      part.remove_suffix(1);
    }
    out.push_back(part);
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

template <typename T>
T parse_value(std::string_view text, std::string_view what) {
  T v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

}  // namespace

LoadedTopology load_topology(std::istream& in) {
  LoadedTopology out;
  Topology& topo = out.topology;
  std::vector<std::pair<AsId, AsId>> edges;
  std::optional<AsId> victim;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto f = split(line, ',');
    try {
      if (f[0] == "node" && f.size() == 3) {
        topo.add_node(parse_value<AsId>(f[1], "AS id"), parse_value<int>(f[2], "tier"));
      } else if (f[0] == "edge" && f.size() == 3) {
        edges.emplace_back(parse_value<AsId>(f[1], "AS id"), parse_value<AsId>(f[2], "AS id"));
      } else if (f[0] == "victim" && f.size() == 2) {
        victim = parse_value<AsId>(f[1], "AS id");
      } else {
        throw std::invalid_argument("expected node,<as>,<tier> / edge,<a>,<b> / victim,<as>");
      }
    } catch (const std::exception& e) {
      throw TopologyError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  for (auto [a, b] : edges) {
    if (!topo.has_node(a) || !topo.has_node(b)) {
      throw TopologyError("edge " + std::to_string(a) + "-" + std::to_string(b) +
                          " references an undeclared node");
    }
    topo.add_edge(a, b);
  }
  if (victim) {
    if (!topo.has_node(*victim)) throw TopologyError("victim AS " + std::to_string(*victim) + " is not a node");
    topo.set_victim(*victim);
    Routes routes(topo, *victim);
    for (AsId id : topo.sorted_ids()) {
      if (!routes.reachable(id)) out.warnings.push_back("AS " + std::to_string(id) + " cannot reach the victim");
    }
  }
  return out;
}

void save_topology(std::ostream& out, const Topology& topo) {
  const auto ids = topo.sorted_ids();
  for (AsId id : ids) out << "node," << id << ',' << topo.tier(id) << '\n';
  for (AsId id : ids) {
    for (AsId n : topo.neighbors(id)) {
      if (id < n) out << "edge," << id << ',' << n << '\n';
    }
  }
  if (topo.victim() != 0) out << "victim," << topo.victim() << '\n';
}

// ---- synthetic generator ----

namespace {

// Urn for preferential attachment: each node appears once per unit weight.
class Urn {
 public:
  void add(std::uint32_t node, int weight = 1) { balls_.insert(balls_.end(), weight, node); }
  std::uint32_t draw(std::mt19937_64& rng) const {
    return balls_[std::uniform_int_distribution<std::size_t>(0, balls_.size() - 1)(rng)];
  }
  bool empty() const { return balls_.empty(); }

 private:
  std::vector<std::uint32_t> balls_;
};

}  // namespace

Topology generate_topology(const SyntheticParams& p) {
  std::mt19937_64 rng(p.seed);
  const std::size_t total = p.tier_sizes[0] + p.tier_sizes[1] + p.tier_sizes[2];
  if (p.tier_sizes[0] == 0 || p.tier_sizes[1] == 0 || p.tier_sizes[2] == 0) {
    throw TopologyError("every tier needs at least one AS");
  }
  std::vector<AsId> ids(total);
  std::iota(ids.begin(), ids.end(), 1);
  std::shuffle(ids.begin(), ids.end(), rng);

  Topology topo;
  std::size_t next = 0;
  std::array<std::vector<AsId>, 3> tiers;
  for (int t = 0; t < 3; ++t) {
    for (std::size_t i = 0; i < p.tier_sizes[t]; ++i) {
      tiers[t].push_back(ids[next++]);
      topo.add_node(tiers[t].back(), t + 1);
    }
  }

  for (std::size_t i = 0; i < tiers[0].size(); ++i) {
    for (std::size_t j = i + 1; j < tiers[0].size(); ++j) topo.add_edge(tiers[0][i], tiers[0][j]);
  }

  std::uniform_int_distribution<int> providers(1, std::max(1, p.max_providers));
  std::bernoulli_distribution peers(p.tier2_peering);

  Urn tier1;
  for (std::size_t i = 0; i < tiers[0].size(); ++i) tier1.add(static_cast<std::uint32_t>(i));
  Urn tier2;
  for (std::size_t i = 0; i < tiers[1].size(); ++i) {
    const AsId self = tiers[1][i];
    const int k = providers(rng);
    for (int j = 0; j < k; ++j) {
      const auto up = tier1.draw(rng);
      if (topo.add_edge(self, tiers[0][up])) tier1.add(up);
    }
    if (i > 0 && peers(rng) && !tier2.empty()) {
      const auto other = tier2.draw(rng);
      if (topo.add_edge(self, tiers[1][other])) tier2.add(other);
    }
    tier2.add(static_cast<std::uint32_t>(i));
  }
  for (const AsId self : tiers[2]) {
    const int k = providers(rng);
    for (int j = 0; j < k; ++j) {
      const auto up = tier2.draw(rng);
      if (topo.add_edge(self, tiers[1][up])) tier2.add(up);
    }
  }
  topo.set_victim(tiers[2][std::uniform_int_distribution<std::size_t>(0, tiers[2].size() - 1)(rng)]);
  return topo;
}

// ---- profiles ----

std::vector<FilterProfile> standard_profiles(std::uint64_t seed) {
  return {
      {"full-participation", {1.0, 1.0, 1.0}, seed},
      {"tier-1-only", {1.0, 0.0, 0.0}, seed},
      {"top-centered", {1.0, 0.5, 0.0}, seed},
      {"middle-centered", {0.0, 0.8, 0.2}, seed},
      {"bottom-centered", {0.0, 0.2, 0.8}, seed},
      {"victim-only", {0.0, 0.0, 0.0}, seed},
  };
}

FilterProfile find_profile(std::string_view name, std::uint64_t seed) {
  for (auto& p : standard_profiles(seed)) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown profile '" + std::string(name) + "'");
}

std::vector<AsId> apply_profile(const Topology& topo, const FilterProfile& profile) {
  for (double r : profile.rates) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("profile rates must lie in [0, 1]");
  }
  if (profile.rates[0] == 0.0 && profile.rates[1] == 0.0 && profile.rates[2] == 0.0) {
    if (topo.victim() == 0) throw TopologyError("topology has no victim");
    return {topo.victim()};
  }
  std::mt19937_64 rng(profile.seed);
  std::array<std::vector<AsId>, 3> tiers;
  for (AsId id : topo.sorted_ids()) tiers[topo.tier(id) - 1].push_back(id);
  std::vector<AsId> out;
  for (int t = 0; t < 3; ++t) {
    auto& members = tiers[t];
    const auto take = static_cast<std::size_t>(std::floor(profile.rates[t] * members.size() + 1e-9));
    std::shuffle(members.begin(), members.end(), rng);
    out.insert(out.end(), members.begin(), members.begin() + std::min(take, members.size()));
  }
  std::sort(out.begin(), out.end());
  return out;
}

// ---- routing ----

Routes::Routes(const Topology& topo, AsId destination)
    : topo_(topo), destination_(destination), dist_(topo.node_count(), -1) {
  const std::size_t root = topo.at(destination);
  std::deque<std::size_t> queue{root};
  dist_[root] = 0;
  while (!queue.empty()) {
    const std::size_t u = queue.front();
    queue.pop_front();
    for (auto v : topo.adjacency(u)) {
      if (dist_[v] < 0) {
        dist_[v] = dist_[u] + 1;
        queue.push_back(v);
      }
    }
  }
}

bool Routes::reachable(AsId src) const { return dist_[topo_.at(src)] >= 0; }
int Routes::distance(AsId src) const { return dist_[topo_.at(src)]; }

std::vector<AsId> Routes::path(AsId src) const {
  std::size_t u = topo_.at(src);
  if (dist_[u] < 0) {
    throw NoPath("no path from AS " + std::to_string(src) + " to AS " + std::to_string(destination_));
  }
  std::vector<AsId> out{src};
  while (dist_[u] > 0) {
    std::size_t next = u;
    AsId next_id = 0;
    for (auto v : topo_.adjacency(u)) {
      if (dist_[v] == dist_[u] - 1 && (next == u || topo_.id_at(v) < next_id)) {
        next = v;
        next_id = topo_.id_at(v);
      }
    }
    u = next;
    out.push_back(next_id);
  }
  return out;
}

std::vector<AsId> compute_path(const Topology& topo, AsId src, AsId victim) {
  return Routes(topo, victim).path(src);
}

namespace {

class AddressPlan {
 public:
  explicit AddressPlan(const Topology& topo) : sorted_(topo.sorted_ids()) {}
  std::uint32_t block(AsId id) const {
    auto it = std::lower_bound(sorted_.begin(), sorted_.end(), id);
    if (it == sorted_.end() || *it != id) throw TopologyError("unknown AS " + std::to_string(id));
    const auto index = static_cast<std::uint64_t>(it - sorted_.begin());
    const std::uint64_t addr = (std::uint64_t{1} << 24) + (index << (32 - kAsBlockLen));
    if (addr > 0xFFFFFFFFull) throw TopologyError("address space exhausted");
    return static_cast<std::uint32_t>(addr);
  }

 private:
  std::vector<AsId> sorted_;
};

}  // namespace

std::uint32_t as_block(const Topology& topo, AsId id) { return AddressPlan(topo).block(id); }

// ---- volume model ----

VolumeModel VolumeModel::parse(std::string_view text) {
  auto f = split(text, ':');
  VolumeModel m;
  try {
    if (f[0] == "const" && f.size() == 2) {
      m.kind = Kind::Constant;
      m.a = m.b = parse_value<double>(f[1], "volume");
    } else if (f[0] == "uniform" && f.size() == 3) {
      m.kind = Kind::Uniform;
      m.a = parse_value<double>(f[1], "low");
      m.b = parse_value<double>(f[2], "high");
      if (m.b < m.a) throw std::invalid_argument("uniform high < low");
    } else if (f[0] == "pareto" && f.size() == 3) {
      m.kind = Kind::Pareto;
      m.a = parse_value<double>(f[1], "shape");
      m.b = parse_value<double>(f[2], "scale");
      if (m.a <= 0 || m.b <= 0) throw std::invalid_argument("pareto parameters must be positive");
    } else {
      throw std::invalid_argument("expected const:<v>, uniform:<lo>:<hi> or pareto:<shape>:<scale>");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError("volume '" + std::string(text) + "': " + e.what());
  }
  if (m.a < 0) throw ConfigError("volume '" + std::string(text) + "': negative");
  return m;
}

std::string VolumeModel::to_string() const {
  std::ostringstream out;
  switch (kind) {
    case Kind::Constant:
      out << "const:" << a;
      break;
    case Kind::Uniform:
      out << "uniform:" << a << ':' << b;
      break;
    case Kind::Pareto:
      out << "pareto:" << a << ':' << b;
      break;
  }
  return out.str();
}

namespace {

double draw_volume(const VolumeModel& m, std::mt19937_64& rng) {
  double v = m.a;
  switch (m.kind) {
    case VolumeModel::Kind::Constant:
      break;
    case VolumeModel::Kind::Uniform:
      v = std::uniform_real_distribution<double>(m.a, std::nextafter(m.b, m.b + 1))(rng);
      break;
    case VolumeModel::Kind::Pareto: {
      const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
      v = m.b * std::pow(1.0 - u, -1.0 / m.a);
      break;
    }
  }
  return std::max(1.0, std::floor(v));
}

}  // namespace

// ---- attack config ----

AttackConfig parse_attack_config(std::istream& in) {
  AttackConfig c;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    auto parts = split(raw, '=');
    if (parts.size() == 1 && (parts[0].empty() || parts[0].front() == '#')) continue;
    if (!parts[0].empty() && parts[0].front() == '#') continue;
    if (parts.size() != 2) throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    const auto key = parts[0];
    const auto value = parts[1];
    try {
      if (key == "ddos_sources") {
        c.ddos_sources = parse_value<int>(value, key);
      } else if (key == "legit_sources") {
        c.legit_sources = parse_value<int>(value, key);
      } else if (key == "duration") {
        c.duration = parse_value<int>(value, key);
      } else if (key == "volume") {
        c.volume = VolumeModel::parse(value);
      } else if (key == "spoof_fraction") {
        c.spoof_fraction = parse_value<double>(value, key);
      } else if (key == "seed") {
        c.seed = parse_value<std::uint64_t>(value, key);
      } else if (key == "bot_ases") {
        c.bot_ases = parse_value<int>(value, key);
      } else if (key == "zipf") {
        c.zipf = parse_value<double>(value, key);
      } else if (key == "ramp") {
        c.ramp = parse_value<int>(value, key);
      } else if (key == "port_granularity") {
        if (value != "true" && value != "false") throw std::invalid_argument("expected true or false");
        c.port_granularity = value == "true";
      } else if (key == "profile") {
        c.profile = std::string(value);
        if (!c.profile.empty()) find_profile(c.profile);
      } else if (key == "profile_seed") {
        c.profile_seed = parse_value<std::uint64_t>(value, key);
      } else {
        throw std::invalid_argument("unknown key '" + std::string(key) + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (c.ddos_sources < 0 || c.legit_sources < 0) throw ConfigError("source counts must be >= 0");
  if (c.duration < 1) throw ConfigError("duration must be >= 1");
  if (c.ramp < 0 || c.bot_ases < 0) throw ConfigError("ramp and bot_ases must be >= 0");
  if (!(c.spoof_fraction >= 0 && c.spoof_fraction <= 1)) throw ConfigError("spoof_fraction must lie in [0, 1]");
  return c;
}

AttackConfig parse_attack_config_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_attack_config(in);
}

void write_attack_config(std::ostream& out, const AttackConfig& c) {
  out << "ddos_sources=" << c.ddos_sources << '\n'
      << "legit_sources=" << c.legit_sources << '\n'
      << "duration=" << c.duration << '\n'
      << "volume=" << c.volume.to_string() << '\n'
      << "spoof_fraction=" << c.spoof_fraction << '\n'
      << "seed=" << c.seed << '\n'
      << "bot_ases=" << c.bot_ases << '\n'
      << "zipf=" << c.zipf << '\n'
      << "ramp=" << c.ramp << '\n'
      << "port_granularity=" << (c.port_granularity ? "true" : "false") << '\n';
  if (!c.profile.empty()) out << "profile=" << c.profile << "\nprofile_seed=" << c.profile_seed << '\n';
}

// ---- attack generator ----

Trace generate_attack(const Topology& topo, const AttackConfig& c,
                      const std::vector<AsId>* participants) {
  const AsId victim = topo.victim();
  if (victim == 0) throw TopologyError("topology has no victim");
  std::mt19937_64 rng(c.seed);
  const AddressPlan plan(topo);
  const Routes routes(topo, victim);

  std::vector<AsId> profile_members;
  if (!participants && !c.profile.empty()) {
    profile_members = apply_profile(topo, find_profile(c.profile, c.profile_seed));
    participants = &profile_members;
  }
  std::unordered_set<AsId> allowed;
  if (participants) allowed.insert(participants->begin(), participants->end());

  std::vector<AsId> homes;
  for (AsId id : topo.sorted_ids()) {
    if (id != victim && routes.reachable(id)) homes.push_back(id);
  }
  if (homes.empty()) throw TopologyError("no AS can reach the victim");
  auto random_home = [&] { return homes[std::uniform_int_distribution<std::size_t>(0, homes.size() - 1)(rng)]; };

  std::vector<AsId> infected;
  std::discrete_distribution<std::size_t> bot_home;
  if (c.bot_ases > 0) {
    std::vector<AsId> pool = homes;
    std::shuffle(pool.begin(), pool.end(), rng);
    pool.resize(std::min<std::size_t>(pool.size(), static_cast<std::size_t>(c.bot_ases)));
    infected = std::move(pool);
    std::vector<double> weights;
    for (std::size_t k = 0; k < infected.size(); ++k) weights.push_back(1.0 / std::pow(k + 1.0, c.zipf));
    bot_home = std::discrete_distribution<std::size_t>(weights.begin(), weights.end());
  }

  std::unordered_set<std::uint32_t> used;
  auto fresh_address = [&](AsId home) {
    const std::uint32_t base = plan.block(home);
    const std::uint32_t span = (std::uint32_t{1} << (32 - kAsBlockLen)) - 2;
    for (int attempt = 0; attempt < 64; ++attempt) {
      const std::uint32_t addr = base + 1 + std::uniform_int_distribution<std::uint32_t>(0, span - 1)(rng);
      if (used.insert(addr).second) return addr;
    }
    throw TopologyError("address block of AS " + std::to_string(home) + " is full");
  };
  auto filter_path = [&](AsId home) {
    std::vector<NodeId> path;
    for (AsId a : routes.path(home)) {
      if (!participants || a == victim || allowed.contains(a)) path.push_back(a);
    }
    return path;
  };

  struct Source {
    SourceSpec spec;
    Label label;
    std::vector<NodeId> path;
    double volume;
    int start;
    double offset;
  };
  std::vector<Source> sources;
  std::vector<std::uint32_t> legit_addrs;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < c.legit_sources; ++i) {
    const AsId home = random_home();
    const std::uint32_t addr = fresh_address(home);
    legit_addrs.push_back(addr);
    sources.push_back({SourceSpec::address(addr), Label::Legit, filter_path(home), draw_volume(c.volume, rng), 0,
                       unit(rng)});
  }
  std::bernoulli_distribution spoof(c.spoof_fraction);
  std::uniform_int_distribution<int> port(1024, 65535);
  for (int i = 0; i < c.ddos_sources; ++i) {
    const AsId home = infected.empty() ? random_home() : infected[bot_home(rng)];
    const bool spoofed = spoof(rng) && !legit_addrs.empty();
    const std::uint32_t addr =
        spoofed ? legit_addrs[std::uniform_int_distribution<std::size_t>(0, legit_addrs.size() - 1)(rng)]
                : fresh_address(home);
    SourceSpec spec = c.port_granularity ? SourceSpec::address_port(addr, static_cast<std::uint16_t>(port(rng)))
                                         : SourceSpec::address(addr);
    const int start = c.ramp > 0 ? std::uniform_int_distribution<int>(0, c.ramp - 1)(rng) : 0;
    sources.push_back({spec, Label::DDoS, filter_path(home), draw_volume(c.volume, rng), start, unit(rng)});
  }

  const SourceSpec destination = SourceSpec::address(plan.block(victim) + 1);
  Trace trace;
  trace.unit = VolumeUnit::Packets;
  for (int t = 0; t < c.duration; ++t) {
    for (const auto& s : sources) {
      if (t < s.start) continue;
      FlowRecord f;
      f.timestamp = t + s.offset;
      f.source = s.spec;
      f.protocol = Protocol::TCP;
      f.tcp_flags = s.label == Label::DDoS ? TcpFlags::SYN : TcpFlags::ACK;
      f.destination = destination;
      f.volume = s.volume;
      f.label = s.label;
      f.path = s.path;
      trace.flows.push_back(std::move(f));
    }
  }
  std::stable_sort(trace.flows.begin(), trace.flows.end(),
                   [](const FlowRecord& a, const FlowRecord& b) { return a.timestamp < b.timestamp; });
  return trace;
}

}  // namespace adf
