#include "adf/flow.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace adf {

namespace {

constexpr std::array<std::string_view, 5> kProtocols = {"TCP", "UDP", "ICMP", "IPSEC", "ANY"};
constexpr std::array<std::string_view, 6> kFlags = {"SYN", "SYNACK", "ACK", "FIN", "RST", "ANY"};
constexpr std::array<std::string_view, 3> kUnits = {"bytes", "packets", "connections"};

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::toupper(static_cast<unsigned char>(x)) ==
                  std::toupper(static_cast<unsigned char>(y));
         });
}

template <typename Enum, std::size_t N>
Enum lookup(const std::array<std::string_view, N>& names, std::string_view token,
            std::string_view what) {
  for (std::size_t i = 0; i < N; ++i) {
    if (iequals(names[i], token)) return static_cast<Enum>(i);
  }
  throw std::invalid_argument("unknown " + std::string(what) + " '" + std::string(token) + "'");
}

double parse_number(std::string_view text, std::string_view what) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (text.empty() || ec != std::errc{} || ptr != text.data() + text.size() || !std::isfinite(v)) {
    throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(text) + "'");
  }
  return v;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  while (true) {
    auto pos = s.find(sep);
    out.push_back(trim(s.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    s.remove_prefix(pos + 1);
  }
  return out;
}

}  // namespace

std::string_view to_string(Protocol p) { return kProtocols[static_cast<std::size_t>(p)]; }
std::string_view to_string(TcpFlags f) { return kFlags[static_cast<std::size_t>(f)]; }
std::string_view to_string(Label l) { return l == Label::DDoS ? "ddos" : "legit"; }
std::string_view to_string(VolumeUnit u) { return kUnits[static_cast<std::size_t>(u)]; }

Protocol parse_protocol(std::string_view token) {
  if (iequals(token, "AH") || iequals(token, "ESP")) return Protocol::IPSEC;
  return lookup<Protocol>(kProtocols, token, "protocol");
}

TcpFlags parse_tcp_flags(std::string_view token) {
  if (iequals(token, "SYN-ACK")) return TcpFlags::SYNACK;
  return lookup<TcpFlags>(kFlags, token, "tcp flags");
}

Label parse_label(std::string_view token) {
  if (iequals(token, "ddos")) return Label::DDoS;
  if (iequals(token, "legit")) return Label::Legit;
  throw std::invalid_argument("unknown label '" + std::string(token) + "'");
}

VolumeUnit parse_volume_unit(std::string_view token) {
  return lookup<VolumeUnit>(kUnits, token, "volume unit");
}

FlowRecord parse_flow_line(std::string_view line, std::size_t line_no) {
  auto fields = split(line, ',');
  if (fields.size() != 8) {
    throw TraceError(line_no, "expected 8 fields, got " + std::to_string(fields.size()));
  }
  try {
    FlowRecord f;
    f.timestamp = parse_number(fields[0], "timestamp");
    f.source = SourceSpec::parse(fields[1]);
    f.protocol = parse_protocol(fields[2]);
    f.tcp_flags = parse_tcp_flags(fields[3]);
    f.destination = SourceSpec::parse(fields[4]);
    f.volume = parse_number(fields[5], "volume");
    if (f.volume < 0) throw std::invalid_argument("negative volume");
    f.label = parse_label(fields[6]);
    if (fields[7].empty()) throw std::invalid_argument("empty path");
    for (auto hop : split(fields[7], '|')) {
      NodeId id = 0;
      auto [ptr, ec] = std::from_chars(hop.data(), hop.data() + hop.size(), id);
      if (hop.empty() || ec != std::errc{} || ptr != hop.data() + hop.size()) {
        throw std::invalid_argument("invalid path node '" + std::string(hop) + "'");
      }
      f.path.push_back(id);
    }
    return f;
  } catch (const TraceError&) {
    throw;
  } catch (const std::exception& e) {
    throw TraceError(line_no, e.what());
  }
}

Trace parse_trace(std::istream& in) {
  Trace trace;
  std::string raw;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, raw)) {
    ++line_no;
    auto line = trim(raw);
    if (!header_seen) {
      constexpr std::string_view kHeader = "#unit=";
      if (!line.starts_with(kHeader)) throw TraceError(line_no, "missing '#unit=' header");
      try {
        trace.unit = parse_volume_unit(line.substr(kHeader.size()));
      } catch (const std::exception& e) {
        throw TraceError(line_no, e.what());
      }
      header_seen = true;
      continue;
    }
    if (line.empty() || line.front() == '#') continue;
    trace.flows.push_back(parse_flow_line(line, line_no));
  }
  if (!header_seen) throw TraceError(0, "empty trace: missing '#unit=' header");
  return trace;
}

Trace parse_trace_string(std::string_view text) {
  std::istringstream in{std::string(text)};
  return parse_trace(in);
}

std::string format_flow_line(const FlowRecord& f) {
  std::ostringstream out;
  out.precision(17);
  out << f.timestamp << ',' << f.source.to_string() << ',' << to_string(f.protocol) << ','
      << to_string(f.tcp_flags) << ',' << f.destination.to_string() << ',' << f.volume << ','
      << to_string(f.label) << ',';
  for (std::size_t i = 0; i < f.path.size(); ++i) out << (i ? "|" : "") << f.path[i];
  return out.str();
}

void write_trace(std::ostream& out, const Trace& trace) {
  out << "#unit=" << to_string(trace.unit) << '\n';
  out << "# timestamp,source,protocol,tcp_flags,destination,volume,label,path\n";
  for (const auto& f : trace.flows) out << format_flow_line(f) << '\n';
}

std::vector<Batch> batch_flows(const std::vector<FlowRecord>& flows, double window_len) {
  if (!(window_len > 0)) throw std::invalid_argument("window length must be positive");
  std::map<long long, Batch> by_window;
  for (const auto& f : flows) {
    auto key = static_cast<long long>(std::floor(f.timestamp / window_len));
    auto [it, inserted] = by_window.try_emplace(key);
    if (inserted) {
      it->second.window_start = static_cast<double>(key) * window_len;
      it->second.window_len = window_len;
    }
    it->second.flows.push_back(f);
  }
  std::vector<Batch> out;
  out.reserve(by_window.size());
  for (auto& [key, batch] : by_window) out.push_back(std::move(batch));
  return out;
}

std::vector<FTreeNodePtr> build_leaves(const std::vector<FlowRecord>& flows) {
  struct Acc {
    NodeSet filters;
    NodeSet reach;
    double ddos = 0.0;
    double legit = 0.0;
    bool first = true;
  };
  std::map<SourceSpec, Acc> by_source;
  for (const auto& f : flows) {
    if (f.source.is_wildcard()) continue;
    NodeSet path = make_node_set(f.path);
    Acc& acc = by_source[f.source];
    acc.filters = acc.first ? path : intersect(acc.filters, path);
    acc.reach = unite(acc.reach, path);
    acc.first = false;
    (f.is_ddos() ? acc.ddos : acc.legit) += f.volume;
  }
  std::vector<FTreeNodePtr> leaves;
  leaves.reserve(by_source.size());
  for (auto& [source, acc] : by_source) {
    leaves.push_back(make_leaf(source, std::move(acc.filters), acc.ddos, acc.legit,
                               std::move(acc.reach)));
  }
  return leaves;
}

std::vector<FTreeNodePtr> build_leaves(const Batch& batch) { return build_leaves(batch.flows); }

}  // namespace adf
