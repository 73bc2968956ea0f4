#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "adf/rulegen.hpp"

namespace adf {

inline constexpr std::uint8_t kProtocolVersion = 1;
inline constexpr std::size_t kSubmissionSize = 44;
inline constexpr std::size_t kAckSize = 11;
inline constexpr std::size_t kFramePrefix = 4;
inline constexpr std::size_t kMaxFrame = 1024;

enum class MsgType : std::uint8_t { Submission = 1, Ack = 2 };

enum class AckCode : std::uint8_t {
  Ok = 0,
  Verification = 1,
  Timing = 2,
  OutOfRuleSpace = 3,
  Internal = 4,
  Other = 5,
};
std::string_view to_string(AckCode code);

struct RuleSubmission {
  std::uint8_t version = kProtocolVersion;
  std::uint64_t rule_id = 0;
  SourceSpec source;
  Protocol protocol = Protocol::ANY;
  TcpFlags tcp_flags = TcpFlags::ANY;
  SourceSpec destination = SourceSpec::wildcard();
  std::uint64_t start_time = 0;
  std::uint64_t end_time = 0;

  friend bool operator==(const RuleSubmission&, const RuleSubmission&) = default;
};

struct RuleAck {
  std::uint8_t version = kProtocolVersion;
  std::uint64_t rule_id = 0;
  AckCode code = AckCode::Ok;

  friend bool operator==(const RuleAck&, const RuleAck&) = default;
};

using Message = std::variant<RuleSubmission, RuleAck>;

class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class TruncatedMessage : public DecodeError {
 public:
  using DecodeError::DecodeError;
};

/// Big-endian fixed layout: version | type | rule id | payload.
std::vector<std::uint8_t> encode(const RuleSubmission& msg);
std::vector<std::uint8_t> encode(const RuleAck& msg);
std::vector<std::uint8_t> encode(const Message& msg);
/// Source and destination specs are decoded without validation so that a
/// node can answer malformed rules with a verification error.
Message decode(std::span<const std::uint8_t> bytes);

/// 4-byte big-endian length followed by the message.
std::vector<std::uint8_t> frame(std::span<const std::uint8_t> message);

RuleSubmission to_submission(const Rule& rule);

struct Packet {
  SourceSpec source;
  Protocol protocol = Protocol::TCP;
  TcpFlags tcp_flags = TcpFlags::ANY;
  SourceSpec destination;
};

enum class Verdict { Pass, Drop };

/// A filtering node's installed rules. Safe for concurrent use: writes are
/// serialized, packet lookups share a read lock.
class RuleTable {
 public:
  using Verifier = std::function<bool(const RuleSubmission&)>;

  explicit RuleTable(std::size_t capacity, Verifier verifier = {});

  std::size_t capacity() const { return capacity_; }
  std::size_t size() const;
  RuleAck handle(const RuleSubmission& msg, std::uint64_t now);
  Verdict filter(const Packet& pkt, std::uint64_t now) const;
  /// Installed rules still active at `now`, one per line:
  /// `deny <proto> src <S> dst <D> flags <F> id <id> until <end>`.
  void export_acl(std::ostream& out, std::uint64_t now) const;
  std::vector<RuleSubmission> entries() const;

 private:
  std::size_t capacity_;
  Verifier verifier_;
  mutable std::shared_mutex mutex_;
  std::map<std::uint64_t, RuleSubmission> entries_;
};

/// Installs `msg` or explains why not: 2 timing, 3 table full (after
/// dropping expired entries), 1 malformed or rejected by the verifier.
inline RuleAck node_handle(RuleTable& table, const RuleSubmission& msg, std::uint64_t now) {
  return table.handle(msg, now);
}
inline Verdict filter_packet(const RuleTable& table, const Packet& pkt, std::uint64_t now) {
  return table.filter(pkt, now);
}

std::uint64_t unix_now();

class TransportError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A filtering node reachable by a subscriber.
class NodeEndpoint {
 public:
  virtual ~NodeEndpoint() = default;
  virtual NodeId node() const = 0;
  /// Throws TransportError when the node cannot be reached.
  virtual RuleAck submit(const RuleSubmission& msg) = 0;
};

/// In-process node, for tests and simulation.
class LocalEndpoint : public NodeEndpoint {
 public:
  LocalEndpoint(NodeId node, RuleTable& table, std::function<std::uint64_t()> clock = unix_now)
      : node_(node), table_(table), clock_(std::move(clock)) {}
  NodeId node() const override { return node_; }
  RuleAck submit(const RuleSubmission& msg) override { return table_.handle(msg, clock_()); }

 private:
  NodeId node_;
  RuleTable& table_;
  std::function<std::uint64_t()> clock_;
};

/// Length-prefixed messages over one persistent TCP connection. A request
/// that times out or fails is retried once on a fresh connection.
class TcpEndpoint : public NodeEndpoint {
 public:
  TcpEndpoint(NodeId node, std::string host, std::uint16_t port,
              std::chrono::milliseconds timeout = std::chrono::seconds(5), int retries = 1);
  ~TcpEndpoint() override;
  TcpEndpoint(const TcpEndpoint&) = delete;
  TcpEndpoint& operator=(const TcpEndpoint&) = delete;

  NodeId node() const override { return node_; }
  RuleAck submit(const RuleSubmission& msg) override;

 private:
  RuleAck exchange(const std::vector<std::uint8_t>& request);
  void connect();
  void close();

  NodeId node_;
  std::string host_;
  std::uint16_t port_;
  std::chrono::milliseconds timeout_;
  int retries_;
  int fd_ = -1;
};

/// Serves a RuleTable over TCP, one thread per connection.
class NodeServer {
 public:
  NodeServer(RuleTable& table, std::uint16_t port, std::string bind_address = "127.0.0.1",
             std::function<std::uint64_t()> clock = unix_now);
  ~NodeServer();
  NodeServer(const NodeServer&) = delete;
  NodeServer& operator=(const NodeServer&) = delete;

  /// Actual listening port (useful when constructed with port 0).
  std::uint16_t port() const { return port_; }
  void stop();
  /// Blocks until stop() is called from another thread or a signal.
  void wait();

 private:
  void accept_loop();
  void serve(int fd);

  RuleTable& table_;
  std::function<std::uint64_t()> clock_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> running_{true};
  std::thread acceptor_;
  std::mutex workers_mutex_;
  std::vector<std::thread> workers_;
  std::vector<int> client_fds_;
};

struct SubmitOutcome {
  NodeId node = 0;
  std::optional<AckCode> code;
  std::string error;
};

class AllFailed : public std::runtime_error {
 public:
  AllFailed(std::uint64_t rule_id, std::vector<SubmitOutcome> outcomes);
  const std::vector<SubmitOutcome>& outcomes() const { return outcomes_; }

 private:
  std::vector<SubmitOutcome> outcomes_;
};

struct Accepted {
  NodeId node = 0;
  RuleAck ack;
  /// Nodes contacted before success, with their outcomes.
  std::vector<SubmitOutcome> attempts;
};

/// Tries the endpoints in order and stops at the first code-0 ack.
Accepted subscriber_submit(const RuleSubmission& msg, std::span<NodeEndpoint* const> candidates);

}  // namespace adf
