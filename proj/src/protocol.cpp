#include "adf/protocol.hpp"

#include <arpa/inet.h>
#include <fcntl.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <ostream>

namespace adf {

std::string_view to_string(AckCode code) {
  switch (code) {
    case AckCode::Ok:
      return "ok";
    case AckCode::Verification:
      return "verification-error";
    case AckCode::Timing:
      return "timing-error";
    case AckCode::OutOfRuleSpace:
      return "out-of-rule-space";
    case AckCode::Internal:
      return "internal-error";
    case AckCode::Other:
      return "other";
  }
  return "unknown";
}

// ---- codec ----

namespace {

class Writer {
 public:
  explicit Writer(std::size_t size) { out_.reserve(size); }
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { put(v, 2); }
  void u32(std::uint32_t v) { put(v, 4); }
  void u64(std::uint64_t v) { put(v, 8); }
  void spec(const SourceSpec& s) {
    u8(static_cast<std::uint8_t>(s.kind()));
    u32(s.addr());
    u8(static_cast<std::uint8_t>(s.prefix_len()));
    u16(s.port());
  }
  std::vector<std::uint8_t> take() { return std::move(out_); }

 private:
  void put(std::uint64_t v, int bytes) {
    for (int i = bytes - 1; i >= 0; --i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  std::vector<std::uint8_t> out_;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}
  std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
  std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
  std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
  std::uint64_t u64() { return get(8); }
  SourceSpec spec() {
    const std::uint8_t kind = u8();
    const std::uint32_t addr = u32();
    const std::uint8_t plen = u8();
    const std::uint16_t port = u16();
    if (kind > static_cast<std::uint8_t>(SourceKind::AddressPort)) {
      throw DecodeError("unknown source kind " + std::to_string(kind));
    }
    return SourceSpec::unchecked(static_cast<SourceKind>(kind), addr, plen, port);
  }
  std::size_t remaining() const { return in_.size() - pos_; }

 private:
  std::uint64_t get(int bytes) {
    if (remaining() < static_cast<std::size_t>(bytes)) {
      throw TruncatedMessage("message truncated at byte " + std::to_string(pos_));
    }
    std::uint64_t v = 0;
    for (int i = 0; i < bytes; ++i) v = (v << 8) | in_[pos_++];
    return v;
  }
  std::span<const std::uint8_t> in_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> encode(const RuleSubmission& m) {
  Writer w(kSubmissionSize);
  w.u8(m.version);
  w.u8(static_cast<std::uint8_t>(MsgType::Submission));
  w.u64(m.rule_id);
  w.spec(m.source);
  w.u8(static_cast<std::uint8_t>(m.protocol));
  w.u8(static_cast<std::uint8_t>(m.tcp_flags));
  w.spec(m.destination);
  w.u64(m.start_time);
  w.u64(m.end_time);
  return w.take();
}

std::vector<std::uint8_t> encode(const RuleAck& m) {
  Writer w(kAckSize);
  w.u8(m.version);
  w.u8(static_cast<std::uint8_t>(MsgType::Ack));
  w.u64(m.rule_id);
  w.u8(static_cast<std::uint8_t>(m.code));
  return w.take();
}

std::vector<std::uint8_t> encode(const Message& m) {
  return std::visit([](const auto& msg) { return encode(msg); }, m);
}

Message decode(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  const std::uint8_t version = r.u8();
  const std::uint8_t type = r.u8();
  Message out;
  if (type == static_cast<std::uint8_t>(MsgType::Submission)) {
    RuleSubmission m;
    m.version = version;
    m.rule_id = r.u64();
    m.source = r.spec();
    const std::uint8_t proto = r.u8();
    const std::uint8_t flags = r.u8();
    if (proto > static_cast<std::uint8_t>(Protocol::ANY)) throw DecodeError("unknown protocol " + std::to_string(proto));
    if (flags > static_cast<std::uint8_t>(TcpFlags::ANY)) throw DecodeError("unknown tcp flags " + std::to_string(flags));
    m.protocol = static_cast<Protocol>(proto);
    m.tcp_flags = static_cast<TcpFlags>(flags);
    m.destination = r.spec();
    m.start_time = r.u64();
    m.end_time = r.u64();
    out = m;
  } else if (type == static_cast<std::uint8_t>(MsgType::Ack)) {
    RuleAck m;
    m.version = version;
    m.rule_id = r.u64();
    const std::uint8_t code = r.u8();
    if (code > static_cast<std::uint8_t>(AckCode::Other)) throw DecodeError("unknown error code " + std::to_string(code));
    m.code = static_cast<AckCode>(code);
    out = m;
  } else {
    throw DecodeError("unknown message type " + std::to_string(type));
  }
  if (r.remaining() != 0) throw DecodeError(std::to_string(r.remaining()) + " trailing bytes");
  return out;
}

std::vector<std::uint8_t> frame(std::span<const std::uint8_t> message) {
  std::vector<std::uint8_t> out;
  out.reserve(kFramePrefix + message.size());
  const auto n = static_cast<std::uint32_t>(message.size());
  for (int i = 3; i >= 0; --i) out.push_back(static_cast<std::uint8_t>(n >> (8 * i)));
  out.insert(out.end(), message.begin(), message.end());
  return out;
}

RuleSubmission to_submission(const Rule& rule) {
  RuleSubmission m;
  m.rule_id = rule.id;
  m.source = rule.source;
  m.protocol = rule.protocol;
  m.tcp_flags = rule.tcp_flags;
  m.destination = rule.destination;
  m.start_time = rule.start_time;
  m.end_time = rule.end_time;
  return m;
}

// ---- rule table ----

namespace {

bool active(const RuleSubmission& r, std::uint64_t now) { return r.start_time <= now && now < r.end_time; }

}  // namespace

RuleTable::RuleTable(std::size_t capacity, Verifier verifier)
    : capacity_(capacity), verifier_(std::move(verifier)) {}

std::size_t RuleTable::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

RuleAck RuleTable::handle(const RuleSubmission& msg, std::uint64_t now) {
  RuleAck ack{kProtocolVersion, msg.rule_id, AckCode::Ok};
  if (msg.version != kProtocolVersion) {
    ack.code = AckCode::Other;
    return ack;
  }
  if (msg.end_time <= now || msg.end_time <= msg.start_time) {
    ack.code = AckCode::Timing;
    return ack;
  }
  std::unique_lock lock(mutex_);
  std::erase_if(entries_, [&](const auto& e) { return e.second.end_time <= now; });
  if (!entries_.contains(msg.rule_id) && entries_.size() >= capacity_) {
    ack.code = AckCode::OutOfRuleSpace;
    return ack;
  }
  if (!msg.source.well_formed() || !msg.destination.well_formed() || (verifier_ && !verifier_(msg))) {
    ack.code = AckCode::Verification;
    return ack;
  }
  entries_[msg.rule_id] = msg;
  return ack;
}

Verdict RuleTable::filter(const Packet& pkt, std::uint64_t now) const {
  std::shared_lock lock(mutex_);
  for (const auto& [id, r] : entries_) {
    if (active(r, now) && r.source.covers(pkt.source) && matches(r.protocol, pkt.protocol) &&
        matches(r.tcp_flags, pkt.tcp_flags) && r.destination.covers(pkt.destination)) {
      return Verdict::Drop;
    }
  }
  return Verdict::Pass;
}

void RuleTable::export_acl(std::ostream& out, std::uint64_t now) const {
  std::shared_lock lock(mutex_);
  for (const auto& [id, r] : entries_) {
    if (r.end_time <= now) continue;
    out << "deny " << to_string(r.protocol) << " src " << r.source.to_string() << " dst "
        << r.destination.to_string() << " flags " << to_string(r.tcp_flags) << " id " << id
        << " until " << r.end_time << '\n';
  }
}

std::vector<RuleSubmission> RuleTable::entries() const {
  std::shared_lock lock(mutex_);
  std::vector<RuleSubmission> out;
  for (const auto& [id, r] : entries_) out.push_back(r);
  return out;
}

std::uint64_t unix_now() {
  return static_cast<std::uint64_t>(
      std::chrono::duration_cast<std::chrono::seconds>(std::chrono::system_clock::now().time_since_epoch()).count());
}

// ---- socket helpers ----

namespace {

using Clock = std::chrono::steady_clock;

std::string errno_text(const char* what) { return std::string(what) + ": " + std::strerror(errno); }

// Waits for `events` on fd until the deadline. Returns false on timeout.
bool wait_for(int fd, short events, Clock::time_point deadline) {
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return false;
    pollfd p{fd, events, 0};
    const int rc = ::poll(&p, 1, static_cast<int>(left));
    if (rc > 0) return true;
    if (rc == 0) return false;
    if (errno != EINTR) throw TransportError(errno_text("poll"));
  }
}

void send_all(int fd, std::span<const std::uint8_t> data, Clock::time_point deadline) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    if (!wait_for(fd, POLLOUT, deadline)) throw TransportError("send timed out");
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(errno_text("send"));
    }
    sent += static_cast<std::size_t>(n);
  }
}

// Returns false on clean EOF before the first byte.
bool recv_all(int fd, std::uint8_t* buf, std::size_t len, std::optional<Clock::time_point> deadline) {
  std::size_t got = 0;
  while (got < len) {
    if (deadline && !wait_for(fd, POLLIN, *deadline)) throw TransportError("receive timed out");
    const ssize_t n = ::recv(fd, buf + got, len - got, 0);
    if (n == 0) {
      if (got == 0) return false;
      throw TransportError("connection closed mid-message");
    }
    if (n < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      throw TransportError(errno_text("recv"));
    }
    got += static_cast<std::size_t>(n);
  }
  return true;
}

std::optional<std::vector<std::uint8_t>> recv_frame(int fd, std::optional<Clock::time_point> deadline) {
  std::uint8_t prefix[kFramePrefix];
  if (!recv_all(fd, prefix, kFramePrefix, deadline)) return std::nullopt;
  std::uint32_t len = 0;
  for (auto b : prefix) len = (len << 8) | b;
  if (len > kMaxFrame) throw TransportError("frame of " + std::to_string(len) + " bytes exceeds limit");
  std::vector<std::uint8_t> body(len);
  if (len > 0 && !recv_all(fd, body.data(), len, deadline)) throw TransportError("connection closed mid-frame");
  return body;
}

}  // namespace

// ---- client ----

TcpEndpoint::TcpEndpoint(NodeId node, std::string host, std::uint16_t port, std::chrono::milliseconds timeout,
                         int retries)
    : node_(node), host_(std::move(host)), port_(port), timeout_(timeout), retries_(retries) {}

TcpEndpoint::~TcpEndpoint() { close(); }

void TcpEndpoint::close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void TcpEndpoint::connect() {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(port_);
  if (int rc = ::getaddrinfo(host_.c_str(), port.c_str(), &hints, &res); rc != 0) {
    throw TransportError("resolve " + host_ + ": " + ::gai_strerror(rc));
  }
  std::unique_ptr<addrinfo, decltype(&::freeaddrinfo)> guard(res, ::freeaddrinfo);
  const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) throw TransportError(errno_text("socket"));
  ::fcntl(fd, F_SETFL, ::fcntl(fd, F_GETFL) | O_NONBLOCK);
  if (::connect(fd, res->ai_addr, res->ai_addrlen) != 0 && errno != EINPROGRESS) {
    const auto msg = errno_text("connect");
    ::close(fd);
    throw TransportError(msg);
  }
  const auto deadline = Clock::now() + timeout_;
  if (!wait_for(fd, POLLOUT, deadline)) {
    ::close(fd);
    throw TransportError("connect timed out");
  }
  int err = 0;
  socklen_t len = sizeof err;
  ::getsockopt(fd, SOL_SOCKET, SO_ERROR, &err, &len);
  if (err != 0) {
    ::close(fd);
    throw TransportError(std::string("connect: ") + std::strerror(err));
  }
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  fd_ = fd;
}

RuleAck TcpEndpoint::exchange(const std::vector<std::uint8_t>& request) {
  if (fd_ < 0) connect();
  const auto deadline = Clock::now() + timeout_;
  send_all(fd_, request, deadline);
  auto reply = recv_frame(fd_, deadline);
  if (!reply) throw TransportError("connection closed by node");
  auto msg = decode(*reply);
  if (!std::holds_alternative<RuleAck>(msg)) throw TransportError("node replied with a non-ack message");
  return std::get<RuleAck>(msg);
}

RuleAck TcpEndpoint::submit(const RuleSubmission& msg) {
  const auto request = frame(encode(msg));
  for (int attempt = 0;; ++attempt) {
    try {
      RuleAck ack = exchange(request);
      if (ack.rule_id != msg.rule_id) throw TransportError("ack for unexpected rule id");
      return ack;
    } catch (const std::exception& e) {
      close();
      if (attempt >= retries_) {
        throw TransportError("node " + std::to_string(node_) + " at " + host_ + ":" + std::to_string(port_) +
                             ": " + e.what());
      }
    }
  }
}

// ---- server ----

NodeServer::NodeServer(RuleTable& table, std::uint16_t port, std::string bind_address,
                       std::function<std::uint64_t()> clock)
    : table_(table), clock_(std::move(clock)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw TransportError(errno_text("socket"));
  int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1) {
    ::close(listen_fd_);
    throw TransportError("invalid bind address " + bind_address);
  }
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0 || ::listen(listen_fd_, 64) != 0) {
    const auto msg = errno_text("bind");
    ::close(listen_fd_);
    throw TransportError(msg);
  }
  socklen_t len = sizeof addr;
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
  acceptor_ = std::thread([this] { accept_loop(); });
}

NodeServer::~NodeServer() { stop(); }

void NodeServer::accept_loop() {
  while (running_) {
    pollfd p{listen_fd_, POLLIN, 0};
    if (::poll(&p, 1, 100) <= 0) continue;
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(workers_mutex_);
    if (!running_) {
      ::close(fd);
      break;
    }
    client_fds_.push_back(fd);
    workers_.emplace_back([this, fd] { serve(fd); });
  }
}

void NodeServer::serve(int fd) {
  try {
    while (running_) {
      auto request = recv_frame(fd, std::nullopt);
      if (!request) break;
      RuleAck ack{kProtocolVersion, 0, AckCode::Other};
      try {
        auto msg = decode(*request);
        if (auto* sub = std::get_if<RuleSubmission>(&msg)) {
          ack = table_.handle(*sub, clock_());
        }
      } catch (const DecodeError&) {
        if (request->size() >= 10) {
          for (int i = 2; i < 10; ++i) ack.rule_id = (ack.rule_id << 8) | (*request)[i];
        }
      } catch (const std::exception&) {
        ack.code = AckCode::Internal;
      }
      send_all(fd, frame(encode(ack)), Clock::now() + std::chrono::seconds(5));
    }
  } catch (const std::exception&) {
    // Connection-level failure: drop this client only.
  }
  std::lock_guard lock(workers_mutex_);
  std::erase(client_fds_, fd);
  ::close(fd);
}

void NodeServer::stop() {
  if (!running_.exchange(false)) return;
  if (acceptor_.joinable()) acceptor_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(workers_mutex_);
    for (int fd : client_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) t.join();
  ::close(listen_fd_);
}

void NodeServer::wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

// ---- subscriber ----

AllFailed::AllFailed(std::uint64_t rule_id, std::vector<SubmitOutcome> outcomes)
    : std::runtime_error("rule " + std::to_string(rule_id) + " rejected by all " +
                         std::to_string(outcomes.size()) + " candidate nodes"),
      outcomes_(std::move(outcomes)) {}

Accepted subscriber_submit(const RuleSubmission& msg, std::span<NodeEndpoint* const> candidates) {
  if (candidates.empty()) throw std::invalid_argument("no candidate nodes");
  std::vector<SubmitOutcome> outcomes;
  for (NodeEndpoint* ep : candidates) {
    SubmitOutcome o{ep->node(), std::nullopt, {}};
    try {
      RuleAck ack = ep->submit(msg);
      o.code = ack.code;
      if (ack.code == AckCode::Ok) return Accepted{ep->node(), ack, std::move(outcomes)};
    } catch (const TransportError& e) {
      o.error = e.what();
    }
    outcomes.push_back(std::move(o));
  }
  throw AllFailed(msg.rule_id, std::move(outcomes));
}

}  // namespace adf
