#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adf/flow.hpp"

namespace adf {

using AsId = NodeId;

class TopologyError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NoPath : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Undirected AS graph with tiers 1..3. AS id 0 is reserved for "none".
class Topology {
 public:
  /// Adds (or re-tiers) a node.
  void add_node(AsId id, int tier);
  /// Adds an undirected edge; both ends must exist. Duplicates and self
  /// loops are ignored. Returns whether an edge was added.
  bool add_edge(AsId a, AsId b);
  void set_victim(AsId id);

  bool has_node(AsId id) const { return index_.contains(id); }
  std::size_t node_count() const { return ids_.size(); }
  std::size_t edge_count() const { return edges_; }
  int tier(AsId id) const { return tier_[at(id)]; }
  std::size_t tier_size(int tier) const;
  AsId victim() const { return victim_; }
  /// AS ids in insertion order.
  const std::vector<AsId>& ids() const { return ids_; }
  /// AS ids in ascending order.
  std::vector<AsId> sorted_ids() const;
  std::vector<AsId> neighbors(AsId id) const;

  // Dense-index view used by routing.
  std::size_t at(AsId id) const;
  const std::vector<std::uint32_t>& adjacency(std::size_t index) const { return adj_[index]; }
  AsId id_at(std::size_t index) const { return ids_[index]; }

 private:
  std::vector<AsId> ids_;
  std::vector<std::uint8_t> tier_;
  std::vector<std::vector<std::uint32_t>> adj_;
  std::unordered_map<AsId, std::uint32_t> index_;
  std::size_t edges_ = 0;
  AsId victim_ = 0;
};

struct LoadedTopology {
  Topology topology;
  /// Nodes that cannot reach the victim, one message each.
  std::vector<std::string> warnings;
};

/// Reads `node,<as>,<tier>`, `edge,<a>,<b>` and an optional `victim,<as>`
/// line. `#` comments and blank lines are skipped.
LoadedTopology load_topology(std::istream& in);
void save_topology(std::ostream& out, const Topology& topo);

struct SyntheticParams {
  std::array<std::size_t, 3> tier_sizes{89, 8442, 47052};
  /// Providers per tier-2 / tier-3 AS are drawn from [1, max].
  int max_providers = 2;
  /// Chance that a tier-2 AS also peers with another tier-2 AS.
  double tier2_peering = 0.3;
  std::uint64_t seed = 1;
};

/// Three-tier hierarchy: a tier-1 clique, tier-2 ASes attached to tier-1
/// providers (plus sparse peering), tier-3 ASes attached to tier-2
/// providers, all by preferential attachment. Ids 1..N are shuffled across
/// tiers. The victim is a random tier-3 AS.
Topology generate_topology(const SyntheticParams& params);

struct FilterProfile {
  std::string name;
  std::array<double, 3> rates{};
  std::uint64_t seed = 1;
};

/// The six participation profiles: full-participation, tier-1-only,
/// top-centered, middle-centered, bottom-centered, victim-only.
std::vector<FilterProfile> standard_profiles(std::uint64_t seed = 1);
FilterProfile find_profile(std::string_view name, std::uint64_t seed = 1);

/// Participating ASes (sorted): floor(rate * tier size) uniformly chosen
/// ASes per tier, or just the victim when every rate is zero.
std::vector<AsId> apply_profile(const Topology& topo, const FilterProfile& profile);

/// Hop-count shortest paths toward one destination. From each AS the next
/// hop is the smallest-id neighbor one step closer.
class Routes {
 public:
  Routes(const Topology& topo, AsId destination);
  bool reachable(AsId src) const;
  /// Path from `src` to the destination, both included.
  std::vector<AsId> path(AsId src) const;
  int distance(AsId src) const;

 private:
  const Topology& topo_;
  AsId destination_;
  std::vector<int> dist_;
};

std::vector<AsId> compute_path(const Topology& topo, AsId src, AsId victim);

/// First address of the /20 block owned by an AS (blocks follow ascending
/// AS id order starting at 1.0.0.0).
std::uint32_t as_block(const Topology& topo, AsId id);
inline constexpr int kAsBlockLen = 20;

struct VolumeModel {
  enum class Kind { Constant, Uniform, Pareto } kind = Kind::Constant;
  double a = 1.0;  // constant value, uniform low, or pareto shape
  double b = 1.0;  // uniform high or pareto scale

  /// `const:<v>`, `uniform:<lo>:<hi>`, `pareto:<shape>:<scale>`.
  static VolumeModel parse(std::string_view text);
  std::string to_string() const;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct AttackConfig {
  int ddos_sources = 1000;
  int legit_sources = 500;
  int duration = 1;
  VolumeModel volume{VolumeModel::Kind::Uniform, 1, 100};
  double spoof_fraction = 0.0;
  std::uint64_t seed = 1;
  /// Infected ASes; 0 homes every bot in its own random AS.
  int bot_ases = 0;
  /// Skew of bots over infected ASes (Zipf exponent).
  double zipf = 1.0;
  /// Bots join uniformly over [0, ramp) seconds.
  int ramp = 0;
  /// DDoS sources carry a source port.
  bool port_granularity = false;
  /// Participation profile restricting path nodes; empty = every AS.
  std::string profile;
  std::uint64_t profile_seed = 1;
};

/// key=value lines; unknown keys are errors.
AttackConfig parse_attack_config(std::istream& in);
AttackConfig parse_attack_config_string(std::string_view text);
void write_attack_config(std::ostream& out, const AttackConfig& config);

/// Per-second flows from persistent legit sources and joining bots. Each
/// flow's path is its AS path to the victim restricted to `participants`
/// (all ASes when null).
Trace generate_attack(const Topology& topo, const AttackConfig& config,
                      const std::vector<AsId>* participants = nullptr);

}  // namespace adf
