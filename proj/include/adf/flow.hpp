#pragma once

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "adf/ftree.hpp"
#include "adf/source_spec.hpp"

namespace adf {

enum class Protocol : std::uint8_t { TCP = 0, UDP = 1, ICMP = 2, IPSEC = 3, ANY = 4 };
enum class TcpFlags : std::uint8_t { SYN = 0, SYNACK = 1, ACK = 2, FIN = 3, RST = 4, ANY = 5 };
enum class Label : std::uint8_t { DDoS, Legit };
enum class VolumeUnit : std::uint8_t { Bytes, Packets, Connections };

std::string_view to_string(Protocol p);
std::string_view to_string(TcpFlags f);
std::string_view to_string(Label l);
std::string_view to_string(VolumeUnit u);
Protocol parse_protocol(std::string_view token);
TcpFlags parse_tcp_flags(std::string_view token);
Label parse_label(std::string_view token);
VolumeUnit parse_volume_unit(std::string_view token);

/// Rule-side field matching with ANY as wildcard on the rule side.
inline bool matches(Protocol rule, Protocol pkt) { return rule == Protocol::ANY || rule == pkt; }
inline bool matches(TcpFlags rule, TcpFlags pkt) { return rule == TcpFlags::ANY || rule == pkt; }

/// One labeled flow together with the filtering nodes on its path,
/// ordered from the source side to the victim side.
struct FlowRecord {
  double timestamp = 0.0;
  SourceSpec source;
  Protocol protocol = Protocol::ANY;
  TcpFlags tcp_flags = TcpFlags::ANY;
  SourceSpec destination;
  double volume = 0.0;
  Label label = Label::Legit;
  std::vector<NodeId> path;

  bool is_ddos() const { return label == Label::DDoS; }
};

struct Trace {
  VolumeUnit unit = VolumeUnit::Packets;
  std::vector<FlowRecord> flows;
};

/// All flows whose timestamp falls in [window_start, window_start + window_len).
struct Batch {
  double window_start = 0.0;
  double window_len = 1.0;
  std::vector<FlowRecord> flows;
};

class TraceError : public std::runtime_error {
 public:
  TraceError(std::size_t line, const std::string& what)
      : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Reads the line-oriented trace format. Line 1 must be `#unit=<unit>`;
/// later `#` lines and blank lines are ignored.
Trace parse_trace(std::istream& in);
Trace parse_trace_string(std::string_view text);
FlowRecord parse_flow_line(std::string_view line, std::size_t line_no = 0);

void write_trace(std::ostream& out, const Trace& trace);
std::string format_flow_line(const FlowRecord& flow);

/// Partitions flows into fixed windows by floor(timestamp / window_len).
/// Batches come out in time order; flow order within a batch is preserved.
std::vector<Batch> batch_flows(const std::vector<FlowRecord>& flows, double window_len);

/// One F-tree leaf per distinct source in the batch, sorted by source.
///
/// The leaf's filter set is the intersection of the paths of all flows from
/// the source: only those nodes see all of its traffic. Wildcard-source
/// flows are left out; they are handled by protocol-level rules.
std::vector<FTreeNodePtr> build_leaves(const Batch& batch);
std::vector<FTreeNodePtr> build_leaves(const std::vector<FlowRecord>& flows);

}  // namespace adf
