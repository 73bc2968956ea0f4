#include "adf/rulegen.hpp"

#include <algorithm>
#include <charconv>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>

#include "frontier.hpp"

namespace adf {

using detail::Frontier;
using detail::Option;

std::string_view to_string(Objective o) {
  switch (o) {
    case Objective::MaxCoverage:
      return "max-coverage";
    case Objective::MinCollateral:
      return "min-collateral";
    case Objective::MinRules:
      return "min-rules";
  }
  return "?";
}

Objective parse_objective(std::string_view token) {
  if (token == "max-coverage") return Objective::MaxCoverage;
  if (token == "min-collateral") return Objective::MinCollateral;
  if (token == "min-rules") return Objective::MinRules;
  throw std::invalid_argument("unknown objective '" + std::string(token) +
                              "' (expected max-coverage, min-collateral or min-rules)");
}

namespace {

constexpr double kTol = kVolumeTolerance;

void check_volume(double v, const char* what) {
  if (!(v >= 0)) throw std::invalid_argument(std::string(what) + " must be >= 0");
}

void check_budget(std::size_t m) {
  if (m < 1) throw std::invalid_argument("rule budget must be >= 1");
}

// Ordering key of a candidate rule: d desc, l asc, source asc.
struct Key {
  double d;
  double l;
  SourceSpec source;

  static Key of(const FTreeNode& n) { return {n.ddos, n.legit, n.source}; }
  bool operator<(const Key& o) const {
    if (d != o.d) return d > o.d;
    if (l != o.l) return l < o.l;
    return source < o.source;
  }
};

bool selectable(const FTreeNode& n) {
  return n.ddos > kTol && n.filterable() && !n.source.is_wildcard();
}

RuleSet make_rule_set(const std::vector<FTreeNodePtr>& picked, Objective objective, bool feasible,
                      const RuleTemplate& tmpl) {
  RuleSet set;
  set.objective = objective;
  set.feasible = feasible;
  std::uint64_t id = tmpl.first_id;
  for (const auto& n : picked) {
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

// Units eligible for selection, sorted by Key.
class Ordered {
 public:
  Ordered(const Frontier& fr, double max_legit) : fr_(fr), max_legit_(max_legit) {
    for (int u : fr.units()) {
      if (eligible(u)) items_.push_back(u);
    }
    std::sort(items_.begin(), items_.end(), [&](int a, int b) { return key(a) < key(b); });
  }

  Key key(int u) const { return Key::of(*fr_.unit_node(u)); }
  const FTreeNode& node(int u) const { return *fr_.unit_node(u); }
  const FTreeNodePtr& node_ptr(int u) const { return fr_.unit_node(u); }
  const std::vector<int>& items() const { return items_; }

  // Call after fr.merge(t).
  void merged(int t) {
    std::erase_if(items_, [&](int u) { return fr_.under(u, t); });
    if (eligible(t)) {
      Key k = key(t);
      auto pos = std::lower_bound(items_.begin(), items_.end(), k,
                                  [&](int u, const Key& kk) { return key(u) < kk; });
      items_.insert(pos, t);
    }
  }

 private:
  bool eligible(int u) const {
    const auto& n = *fr_.unit_node(u);
    return selectable(n) && n.legit <= max_legit_ + kTol;
  }

  const Frontier& fr_;
  double max_legit_;
  std::vector<int> items_;
};

struct Totals {
  double d = 0.0;
  double l = 0.0;
  std::size_t count = 0;
};

// Greedy walk over the ordered units with trie node `skip` removed and the
// hypothetical unit `extra` inserted at its ordered position: take each
// item that still fits the collateral budget until `budget` items are taken
// or (when `target` is set) the coverage target is met.
template <typename Visit>
Totals greedy_walk(const Ordered& ord, const Frontier& fr, int skip, const Key* extra,
                   std::size_t budget, double max_legit, double target, Visit&& visit) {
  Totals t;
  double remaining = max_legit;
  bool inserted = extra == nullptr;
  auto done = [&] { return t.count >= budget || t.d >= target - kTol; };
  auto offer = [&](double d, double l, int u) {
    if (l <= remaining + kTol) {
      t.d += d;
      t.l += l;
      remaining -= l;
      ++t.count;
      visit(u);
    }
  };
  for (int u : ord.items()) {
    if (done()) break;
    if (!inserted && *extra < ord.key(u)) {
      offer(extra->d, extra->l, -1);
      inserted = true;
      if (done()) break;
    }
    if (skip >= 0 && fr.under(u, skip)) continue;
    const auto& n = ord.node(u);
    offer(n.ddos, n.legit, u);
  }
  if (!inserted && !done()) offer(extra->d, extra->l, -1);
  return t;
}

Totals greedy_walk(const Ordered& ord, const Frontier& fr, int skip, const Key* extra,
                   std::size_t budget, double max_legit, double target) {
  return greedy_walk(ord, fr, skip, extra, budget, max_legit, target, [](int) {});
}

constexpr double kNoTarget = kUnlimitedVolume;

std::vector<FTreeNodePtr> walk_selection(const Ordered& ord, const Frontier& fr,
                                         std::size_t budget, double max_legit, double target) {
  std::vector<FTreeNodePtr> picked;
  greedy_walk(ord, fr, -1, nullptr, budget, max_legit, target,
              [&](int u) { picked.push_back(fr.unit_node(u)); });
  return picked;
}

}  // namespace

// Maximum coverage. Each round evaluates every mergeable trie node by the
// coverage of the best-M selection the merge would produce, and applies
// the best strictly improving merge.
RuleSet solve_max_coverage(std::span<const FTreeNodePtr> leaves, double max_collateral,
                           std::size_t rule_budget, const RuleTemplate& tmpl) {
  check_volume(max_collateral, "max collateral");
  check_budget(rule_budget);
  const double L = max_collateral;
  const std::size_t M = rule_budget;
  Frontier fr(leaves);
  Ordered ord(fr, L);

  std::vector<int> sel_count(static_cast<std::size_t>(fr.size()), 0);
  std::vector<double> sel_d(sel_count.size(), 0.0), sel_l(sel_count.size(), 0.0);
  std::vector<int> touched;

  while (true) {
    // Current selection and where the walk stopped.
    const auto& items = ord.items();
    Totals cur;
    double remaining = L;
    bool skipped = false;
    std::size_t last = 0;
    std::vector<int> chosen;
    for (std::size_t i = 0; i < items.size() && cur.count < M; ++i) {
      const auto& n = ord.node(items[i]);
      last = i;
      if (n.legit <= remaining + kTol) {
        cur.d += n.ddos;
        cur.l += n.legit;
        remaining -= n.legit;
        ++cur.count;
        chosen.push_back(items[i]);
      } else {
        skipped = true;
      }
    }
    const bool full = cur.count >= M;

    for (int a : touched) {
      sel_count[a] = 0;
      sel_d[a] = sel_l[a] = 0.0;
    }
    touched.clear();
    for (int u : chosen) {
      const auto& n = ord.node(u);
      for (int a = fr.parent(u); a >= 0; a = fr.parent(a)) {
        if (sel_count[a] == 0) touched.push_back(a);
        ++sel_count[a];
        sel_d[a] += n.ddos;
        sel_l[a] += n.legit;
      }
    }

    int best = -1;
    double best_gain = kTol;
    double best_l = 0.0;
    for (int t : fr.candidates()) {
      const Option& opt = fr.option(t);
      if (!opt.valid || opt.ddos <= kTol || opt.legit > L + kTol) continue;
      const Key nk{opt.ddos, opt.legit, fr.range(t)};
      if (sel_count[t] == 0 && full && !(nk < ord.key(items[last]))) continue;

      Totals next;
      bool exact = false;
      if (!skipped) {
        // No item was skipped, so the selection is the plain top-M prefix
        // and the merge only shifts that prefix.
        const int k = sel_count[t];
        next.d = cur.d - sel_d[t];
        next.l = cur.l - sel_l[t];
        if (items.size() <= M) {
          next.d += opt.ddos;
          next.l += opt.legit;
        } else {
          int found = 0;
          std::size_t last_ext = 0;
          for (std::size_t i = M; i < items.size() && found < k; ++i) {
            if (fr.under(items[i], t)) continue;
            next.d += ord.node(items[i]).ddos;
            next.l += ord.node(items[i]).legit;
            ++found;
            last_ext = i;
          }
          if (found < k) {
            next.d += opt.ddos;
            next.l += opt.legit;
          } else {
            const int boundary = k > 0 ? items[last_ext] : items[M - 1];
            if (nk < ord.key(boundary)) {
              next.d += opt.ddos - ord.node(boundary).ddos;
              next.l += opt.legit - ord.node(boundary).legit;
            }
          }
        }
        exact = next.l <= L + kTol;
      }
      if (!exact) next = greedy_walk(ord, fr, t, &nk, M, L, kNoTarget);

      const double gain = next.d - cur.d;
      bool better = gain > best_gain + kTol ||
                    (best >= 0 && gain >= best_gain - kTol &&
                     (next.l < best_l - kTol ||
                      (next.l <= best_l + kTol && fr.range(t) < fr.range(best))));
      if (best < 0 && gain > kTol) better = true;
      if (better) {
        best = t;
        best_gain = gain;
        best_l = next.l;
      }
    }
    if (best < 0) break;
    fr.merge(best);
    ord.merged(best);
  }

  return make_rule_set(walk_selection(ord, fr, M, L, kNoTarget), Objective::MaxCoverage, true,
                       tmpl);
}

namespace {

double top_d(const Ordered& ord, std::size_t budget) {
  double sum = 0.0;
  const auto& items = ord.items();
  for (std::size_t i = 0; i < items.size() && i < budget; ++i) sum += ord.node(items[i]).ddos;
  return sum;
}

// Cheapest-first choice of at most `budget` units reaching `target`. A unit
// is taken only if the target stays reachable with the slots left.
std::vector<FTreeNodePtr> min_collateral_selection(const Ordered& ord, std::size_t budget,
                                                   double target) {
  std::vector<const FTreeNode*> by_d;
  for (int u : ord.items()) by_d.push_back(&ord.node(u));
  std::vector<std::size_t> by_l(by_d.size());
  std::iota(by_l.begin(), by_l.end(), 0);
  std::stable_sort(by_l.begin(), by_l.end(), [&](std::size_t a, std::size_t b) {
    if (by_d[a]->legit != by_d[b]->legit) return by_d[a]->legit < by_d[b]->legit;
    return a < b;
  });

  std::vector<char> taken(by_d.size(), 0);
  double rest_total = 0.0;
  for (auto* n : by_d) rest_total += n->ddos;
  std::size_t rest_count = by_d.size();

  // Best coverage reachable from `slots` untaken units other than `skip`.
  auto reachable = [&](std::size_t slots, std::size_t skip) {
    if (slots + 1 >= rest_count) return rest_total - by_d[skip]->ddos;
    double sum = 0.0;
    for (std::size_t i = 0, used = 0; i < by_d.size() && used < slots; ++i) {
      if (taken[i] || i == skip) continue;
      sum += by_d[i]->ddos;
      ++used;
    }
    return sum;
  };

  std::vector<FTreeNodePtr> picked;
  std::vector<std::size_t> chosen;
  double got = 0.0;
  while (got < target - kTol && chosen.size() < budget) {
    const std::size_t slots = budget - chosen.size() - 1;
    std::size_t pick = by_d.size();
    for (std::size_t i : by_l) {
      if (taken[i]) continue;
      if (got + by_d[i]->ddos + reachable(slots, i) >= target - kTol) {
        pick = i;
        break;
      }
    }
    if (pick == by_d.size()) break;
    taken[pick] = 1;
    chosen.push_back(pick);
    got += by_d[pick]->ddos;
    rest_total -= by_d[pick]->ddos;
    --rest_count;
  }
  std::sort(chosen.begin(), chosen.end());
  for (std::size_t i : chosen) picked.push_back(ord.node_ptr(ord.items()[i]));
  return picked;
}

}  // namespace

// Minimum collateral. Merges the cheapest admissible trie node until M
// units can reach D.
RuleSet solve_min_collateral(std::span<const FTreeNodePtr> leaves, double min_coverage,
                             std::size_t rule_budget, const RuleTemplate& tmpl) {
  check_volume(min_coverage, "min coverage");
  check_budget(rule_budget);
  const double D = min_coverage;
  const std::size_t M = rule_budget;
  if (D <= kTol) return make_rule_set({}, Objective::MinCollateral, true, tmpl);

  Frontier fr(leaves);
  Ordered ord(fr, kUnlimitedVolume);
  // Zero-collateral merges never hurt a selection, so apply them all first.
  while (true) {
    int best = -1;
    for (int t : fr.candidates()) {
      const Option& opt = fr.option(t);
      if (!opt.valid || opt.ddos <= kTol || opt.legit > kTol) continue;
      if (best < 0 || fr.members(t) > fr.members(best) ||
          (fr.members(t) == fr.members(best) && fr.range(t) < fr.range(best))) {
        best = t;
      }
    }
    if (best < 0) break;
    fr.merge(best);
    ord.merged(best);
  }
  while (top_d(ord, M) < D - kTol) {
    int best = -1;
    for (int t : fr.candidates()) {
      const Option& opt = fr.option(t);
      if (!opt.valid || opt.ddos <= kTol) continue;
      if (best < 0) {
        best = t;
        continue;
      }
      const Option& b = fr.option(best);
      if (opt.legit < b.legit - kTol ||
          (opt.legit <= b.legit + kTol &&
           (opt.ddos > b.ddos + kTol ||
            (opt.ddos >= b.ddos - kTol && fr.range(t) < fr.range(best))))) {
        best = t;
      }
    }
    if (best < 0) break;
    fr.merge(best);
    ord.merged(best);
  }

  if (top_d(ord, M) < D - kTol) {
    // Best effort: the M largest units.
    std::vector<FTreeNodePtr> picked;
    for (std::size_t i = 0; i < ord.items().size() && i < M; ++i) {
      picked.push_back(ord.node_ptr(ord.items()[i]));
    }
    return make_rule_set(picked, Objective::MinCollateral, false, tmpl);
  }
  return make_rule_set(min_collateral_selection(ord, M, D), Objective::MinCollateral, true, tmpl);
}

// Minimum rule count. Merges the admissible trie node grouping the most
// units within the collateral budget, as long as the coverage target stays
// reachable.
RuleSet solve_min_rules(std::span<const FTreeNodePtr> leaves, double min_coverage,
                        double max_collateral, const RuleTemplate& tmpl) {
  check_volume(min_coverage, "min coverage");
  check_volume(max_collateral, "max collateral");
  const double D = min_coverage;
  const double L = max_collateral;
  if (D <= kTol) return make_rule_set({}, Objective::MinRules, true, tmpl);

  Frontier fr(leaves);
  Ordered ord(fr, L);
  std::vector<char> rejected(static_cast<std::size_t>(fr.size()), 0);
  auto reaches = [&](const Totals& t) { return t.d >= D - kTol; };
  bool feasible = reaches(greedy_walk(ord, fr, -1, nullptr, kUnlimitedRules, L, D));

  // Phase 0 applies zero-collateral merges, largest first. Phase 1 admits
  // merges with collateral, cheapest first, when they keep D reachable
  // without adding rules.
  for (int phase = 0; phase < 2; ++phase) {
    const double cap = phase == 0 ? 0.0 : L;
    std::fill(rejected.begin(), rejected.end(), 0);
    while (true) {
      int best = -1;
      for (int t : fr.candidates()) {
        const Option& opt = fr.option(t);
        if (rejected[t] || !opt.valid || opt.ddos <= kTol || opt.legit > cap + kTol) continue;
        if (best < 0) {
          best = t;
          continue;
        }
        const int mt = fr.members(t), mb = fr.members(best);
        const Option& b = fr.option(best);
        const bool cheaper = opt.legit < b.legit - kTol, same = opt.legit <= b.legit + kTol;
        const bool better = phase == 0 ? (mt > mb || (mt == mb && (cheaper || (same && fr.range(t) < fr.range(best)))))
                                       : (cheaper || (same && (mt > mb || (mt == mb && fr.range(t) < fr.range(best)))));
        if (better) best = t;
      }
      if (best < 0) break;
      if (feasible) {
        const Option& opt = fr.option(best);
        const Key nk{opt.ddos, opt.legit, fr.range(best)};
        const Totals after = greedy_walk(ord, fr, best, &nk, kUnlimitedRules, L, D);
        bool ok = reaches(after);
        if (ok && phase == 1 && opt.legit > kTol) {
          ok = after.count <= greedy_walk(ord, fr, -1, nullptr, kUnlimitedRules, L, D).count;
        }
        if (!ok) {
          rejected[best] = 1;
          continue;
        }
      }
      fr.merge(best);
      ord.merged(best);
      for (int a = fr.parent(best); a >= 0; a = fr.parent(a)) rejected[a] = 0;
      if (!feasible) feasible = reaches(greedy_walk(ord, fr, -1, nullptr, kUnlimitedRules, L, D));
    }
  }

  auto picked = walk_selection(ord, fr, kUnlimitedRules, L, D);
  double got = 0.0;
  for (const auto& n : picked) got += n->ddos;
  return make_rule_set(picked, Objective::MinRules, got >= D - kTol, tmpl);
}

RuleSet solve(std::span<const FTreeNodePtr> leaves, Objective objective,
              const Constraints& c, const RuleTemplate& tmpl) {
  switch (objective) {
    case Objective::MaxCoverage:
      return solve_max_coverage(leaves, c.max_collateral, c.rule_budget, tmpl);
    case Objective::MinCollateral:
      return solve_min_collateral(leaves, c.min_coverage, c.rule_budget, tmpl);
    case Objective::MinRules:
      return solve_min_rules(leaves, c.min_coverage, c.max_collateral, tmpl);
  }
  throw std::invalid_argument("unknown objective");
}

// ---- evaluation ----

namespace {

constexpr int kPortLevel = 33;

std::uint64_t port_key(const SourceSpec& s) {
  return (static_cast<std::uint64_t>(s.addr()) << 16) | s.port();
}

}  // namespace

RuleIndex::RuleIndex(std::span<const Rule> rules) {
  for (std::size_t i = 0; i < rules.size(); ++i) add(rules[i], i);
}

void RuleIndex::add(const Rule& rule, std::size_t position) {
  const SourceSpec& s = rule.source;
  const int level = s.has_port() ? kPortLevel : s.prefix_len();
  const std::uint64_t key = s.has_port() ? port_key(s) : s.addr();
  levels_[level][key].push_back(position);
  used_levels_ |= std::uint64_t{1} << level;
}

std::vector<std::size_t> RuleIndex::lookup(const SourceSpec& source) const {
  std::vector<std::size_t> out;
  for (int level = 0; level <= source.prefix_len(); ++level) {
    if (!(used_levels_ >> level & 1)) continue;
    auto it = levels_[level].find(source.addr() & prefix_mask(level));
    if (it != levels_[level].end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  if (source.has_port() && (used_levels_ >> kPortLevel & 1)) {
    auto it = levels_[kPortLevel].find(port_key(source));
    if (it != levels_[kPortLevel].end()) out.insert(out.end(), it->second.begin(), it->second.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool rule_drops(const Rule& rule, const FlowRecord& flow, NodeId node) {
  return spec_matches(rule.source, flow.source) && matches(rule.protocol, flow.protocol) &&
         matches(rule.tcp_flags, flow.tcp_flags) && rule.destination.covers(flow.destination) &&
         std::find(flow.path.begin(), flow.path.end(), node) != flow.path.end();
}

Metrics evaluate(const RuleSet& rules, std::span<const FlowRecord> flows,
                 const Assignment* assignment) {
  Metrics m;
  m.count = rules.size();
  RuleIndex index(rules.rules);

  struct Seen {
    NodeSet filters;
    double ddos = 0.0;
  };
  std::map<SourceSpec, Seen> ddos_sources;

  for (const auto& f : flows) {
    if (f.is_ddos()) {
      NodeSet path = make_node_set(f.path);
      auto [it, fresh] = ddos_sources.try_emplace(f.source);
      it->second.filters = fresh ? std::move(path) : intersect(it->second.filters, path);
      it->second.ddos += f.volume;
    }
    bool dropped = false;
    for (std::size_t pos : index.lookup(f.source)) {
      const Rule& r = rules.rules[pos];
      if (assignment) {
        auto it = assignment->find(r.id);
        dropped = it != assignment->end() && rule_drops(r, f, it->second);
      } else {
        for (NodeId n : r.candidates) {
          if (rule_drops(r, f, n)) {
            dropped = true;
            break;
          }
        }
      }
      if (dropped) break;
    }
    if (dropped) (f.is_ddos() ? m.coverage : m.collateral) += f.volume;
  }
  for (const auto& [source, seen] : ddos_sources) {
    if (seen.filters.empty()) m.unfilterable += seen.ddos;
  }
  return m;
}

// ---- rule files ----

namespace {

template <typename Int>
Int parse_int(std::string_view text, const char* what) {
  Int v{};
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size()) {
    throw std::invalid_argument(std::string("invalid ") + what + " '" + std::string(text) + "'");
  }
  return v;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto pos = s.find(sep);
    out.push_back(s.substr(0, pos));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

}  // namespace

void write_rules(std::ostream& out, std::span<const Rule> rules) {
  for (const auto& r : rules) {
    out << r.id << ',' << r.source.to_string() << ',' << to_string(r.protocol) << ','
        << to_string(r.tcp_flags) << ',' << r.destination.to_string() << ','
        << format_node_set(r.candidates) << ',' << r.start_time << ',' << r.end_time << '\n';
  }
}

std::vector<Rule> read_rules(std::istream& in) {
  std::vector<Rule> rules;
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    if (line.empty() || line.front() == '#') continue;
    auto fields = split(line, ',');
    try {
      if (fields.size() != 8) {
        throw std::invalid_argument("expected 8 fields, got " + std::to_string(fields.size()));
      }
      Rule r;
      r.id = parse_int<std::uint64_t>(fields[0], "rule id");
      r.source = SourceSpec::parse(fields[1]);
      r.protocol = parse_protocol(fields[2]);
      r.tcp_flags = parse_tcp_flags(fields[3]);
      r.destination = SourceSpec::parse(fields[4]);
      std::vector<NodeId> ids;
      for (auto tok : split(fields[5], '|')) ids.push_back(parse_int<NodeId>(tok, "node id"));
      r.candidates = make_node_set(std::move(ids));
      r.start_time = parse_int<std::uint64_t>(fields[6], "start time");
      r.end_time = parse_int<std::uint64_t>(fields[7], "end time");
      if (r.end_time <= r.start_time) throw std::invalid_argument("end time must follow start time");
      rules.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw RuleFileError("line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return rules;
}

}  // namespace adf
