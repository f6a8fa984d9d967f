#include "ews/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cstring>
#include <deque>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

namespace ews::transport {

namespace {

using Clock = std::chrono::steady_clock;

addrinfo* resolve(const Endpoint& ep, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port = std::to_string(ep.port);
  const char* host = ep.host.empty() ? nullptr : ep.host.c_str();
  if (int rc = ::getaddrinfo(host, port.c_str(), &hints, &res); rc != 0) {
    throw Error("cannot resolve " + ep.host + ":" + port + ": " + ::gai_strerror(rc));
  }
  return res;
}

std::string errno_text() { return std::strerror(errno); }

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  Endpoint ep;
  std::string port = text;
  if (const auto colon = text.rfind(':'); colon != std::string::npos) {
    if (colon > 0) ep.host = text.substr(0, colon);
    port = text.substr(colon + 1);
  }
  try {
    std::size_t used = 0;
    const int value = std::stoi(port, &used);
    if (used != port.size() || value < 0 || value > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(value);
  } catch (const std::exception&) {
    throw ConfigError("bad address '" + text + "', expected host:port");
  }
  return ep;
}

FrameSocket::~FrameSocket() { close(); }

FrameSocket::FrameSocket(FrameSocket&& other) noexcept
    : fd_(std::exchange(other.fd_, -1)), buffer_(std::move(other.buffer_)), corrupt_(other.corrupt_) {}

FrameSocket& FrameSocket::operator=(FrameSocket&& other) noexcept {
  if (this != &other) {
    close();
    fd_ = std::exchange(other.fd_, -1);
    buffer_ = std::move(other.buffer_);
    corrupt_ = other.corrupt_;
  }
  return *this;
}

void FrameSocket::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

FrameSocket FrameSocket::connect(const Endpoint& ep) {
  addrinfo* res = resolve(ep, false);
  int fd = -1;
  for (auto* ai = res; ai != nullptr; ai = ai->ai_next) {
    fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
    if (fd < 0) continue;
    if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) break;
    ::close(fd);
    fd = -1;
  }
  ::freeaddrinfo(res);
  if (fd < 0) throw LinkClosed("connect to " + ep.host + ":" + std::to_string(ep.port) + " failed");
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return FrameSocket(fd);
}

void FrameSocket::send(const wire::Bytes& frame) {
  if (fd_ < 0) throw LinkClosed("socket closed");
  std::size_t sent = 0;
  while (sent < frame.size()) {
    const auto n = ::send(fd_, frame.data() + sent, frame.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      throw LinkClosed("send failed: " + errno_text());
    }
    sent += static_cast<std::size_t>(n);
  }
}

std::optional<wire::Frame> FrameSocket::extract() {
  while (!buffer_.empty()) {
    // Resynchronise on the magic bytes.
    static constexpr std::uint8_t kMagic[] = {wire::kMagic0, wire::kMagic1};
    auto start = std::search(buffer_.begin(), buffer_.end(), std::begin(kMagic), std::end(kMagic));
    if (start != buffer_.begin()) {
      const bool keep_last = start == buffer_.end() && buffer_.back() == wire::kMagic0;
      buffer_.erase(buffer_.begin(), keep_last ? buffer_.end() - 1 : start);
      ++corrupt_;
      continue;
    }
    if (buffer_.size() < wire::kHeaderSize) return std::nullopt;
    const std::size_t size = wire::frame_size_from_header(buffer_);
    if (buffer_.size() < size) return std::nullopt;
    try {
      auto frame = wire::decode_frame(wire::ByteView(buffer_.data(), size));
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(size));
      return frame;
    } catch (const wire::FrameError&) {
      ++corrupt_;
      buffer_.erase(buffer_.begin());
    }
  }
  return std::nullopt;
}

std::optional<wire::Frame> FrameSocket::receive(std::chrono::milliseconds timeout) {
  if (auto f = extract()) return f;
  if (fd_ < 0) throw LinkClosed("socket closed");
  const auto deadline = Clock::now() + timeout;
  while (true) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now());
    pollfd pfd{fd_, POLLIN, 0};
    const int rc = ::poll(&pfd, 1, static_cast<int>(std::max<long long>(left.count(), 0)));
    if (rc < 0) {
      if (errno == EINTR) continue;
      throw LinkClosed("poll failed: " + errno_text());
    }
    if (rc == 0) return std::nullopt;
    std::uint8_t chunk[4096];
    const auto n = ::recv(fd_, chunk, sizeof chunk, 0);
    if (n == 0) throw LinkClosed("peer closed the connection");
    if (n < 0) {
      if (errno == EINTR) continue;
      throw LinkClosed("recv failed: " + errno_text());
    }
    buffer_.insert(buffer_.end(), chunk, chunk + n);
    if (auto f = extract()) return f;
  }
}

Listener::Listener(const Endpoint& ep) {
  addrinfo* res = resolve(ep, true);
  fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd_ < 0) {
    ::freeaddrinfo(res);
    throw Error("socket: " + errno_text());
  }
  int one = 1;
  ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd_, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd_, 16) != 0) {
    const std::string why = errno_text();
    ::freeaddrinfo(res);
    ::close(fd_);
    throw Error("cannot listen on " + ep.host + ":" + std::to_string(ep.port) + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof addr;
  ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  port_ = ntohs(addr.sin_port);
}

Listener::~Listener() {
  if (fd_ >= 0) ::close(fd_);
}

std::optional<FrameSocket> Listener::accept(std::chrono::milliseconds timeout) {
  pollfd pfd{fd_, POLLIN, 0};
  const int rc = ::poll(&pfd, 1, static_cast<int>(timeout.count()));
  if (rc <= 0) return std::nullopt;
  const int fd = ::accept(fd_, nullptr, nullptr);
  if (fd < 0) return std::nullopt;
  int one = 1;
  ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
  return FrameSocket(fd);
}

namespace {

struct SharedServer {
  std::mutex mu;
  session::ServerMachine machine;
  BaseStation* station = nullptr;
  Timestamp clock = 0;
  ServerStats stats;
};

void serve_connection(FrameSocket sock, SharedServer& shared, const std::atomic<bool>& stop) {
  std::optional<NodeId> node;
  std::uint32_t my_session = 0;

  auto step = [&](const session::ServerEvent& e) {
    std::lock_guard lock(shared.mu);
    auto result = session::server_step(std::move(shared.machine), e, shared.clock * 1000);
    shared.machine = std::move(result.machine);
    for (const auto& a : result.actions) {
      if (const auto* fwd = std::get_if<session::ForwardToIngest>(&a)) {
        shared.clock = std::max(shared.clock, static_cast<Timestamp>(fwd->payload.timestamp));
        shared.station->on_batch(fwd->node_id, fwd->payload, shared.clock);
        ++shared.stats.batches;
      } else if (const auto* send = std::get_if<session::SendFrame>(&a)) {
        if (const auto* ack = std::get_if<wire::ConnAckPayload>(&send->packet)) my_session = ack->session_id;
        sock.send(wire::encode_packet(send->packet));
      } else if (const auto* log = std::get_if<session::LogLine>(&a)) {
        if (log->severity == session::LogLine::Severity::Warning) {
          ++shared.stats.violations;
          spdlog::warn("server: {}", log->text);
        }
      }
    }
  };

  try {
    while (!stop.load()) {
      auto frame = sock.receive(std::chrono::milliseconds(100));
      if (!frame) continue;
      wire::Packet packet;
      try {
        packet = wire::from_frame(*frame);
      } catch (const wire::PayloadError& ex) {
        spdlog::warn("server: bad payload: {}", ex.what());
        continue;
      }
      if (const auto* a = std::get_if<wire::SendIpPayload>(&packet)) {
        node = a->node_id;
        step(session::AnnounceReceived{a->node_id, a->ip});
      } else if (const auto* r = std::get_if<wire::ReqConnPayload>(&packet)) {
        node = r->node_id;
        step(session::ReqConnReceived{r->node_id, r->nonce});
      } else if (auto* d = std::get_if<wire::SendDataPayload>(&packet)) {
        step(session::SendDataReceived{std::move(*d)});
      } else if (!std::holds_alternative<wire::HeartbeatPayload>(packet)) {
        std::lock_guard lock(shared.mu);
        ++shared.stats.violations;
        spdlog::warn("server: unexpected {} from client", wire::message_name(frame->type));
      }
    }
  } catch (const LinkClosed& ex) {
    spdlog::info("server: connection closed: {}", ex.what());
  }
  if (node) {
    std::lock_guard lock(shared.mu);
    // Only tear down the session this connection owns; the node may already
    // be back on a newer connection.
    if (my_session != 0 && shared.machine.session(*node).session_id == my_session) {
      shared.machine =
          session::server_step(std::move(shared.machine), session::ServerLinkDown{*node}, 0).machine;
    }
  }
}

}  // namespace

ServerStats serve(Listener& listener, BaseStation& station, const std::atomic<bool>& stop,
                  wire::Ipv4 server_ip) {
  SharedServer shared;
  shared.station = &station;
  shared.machine.server_ip = server_ip;
  shared.machine.next_session_id =
      static_cast<std::uint32_t>(std::chrono::system_clock::now().time_since_epoch().count() & 0x7FFFFFFF) | 1u;
  shared.clock = station.repository().latest_timestamp().value_or(0);
  std::vector<std::thread> workers;
  while (!stop.load()) {
    auto sock = listener.accept(std::chrono::milliseconds(100));
    if (!sock) continue;
    {
      std::lock_guard lock(shared.mu);
      ++shared.stats.connections;
    }
    workers.emplace_back(serve_connection, std::move(*sock), std::ref(shared), std::cref(stop));
  }
  for (auto& t : workers) t.join();
  return shared.stats;
}

NodeRunStats run_node(const nodesim::Scenario& scenario, const NodeRunOptions& options,
                      const std::atomic<bool>& stop) {
  if (options.speedup <= 0.0) throw ConfigError("node speedup must be positive");
  nodesim::NodeSimulator sim(scenario, options.protocol.node_id, options.start);
  session::NodeSession node;
  node.cfg = options.protocol;
  NodeRunStats stats;
  std::optional<FrameSocket> sock;
  std::deque<session::NodeEvent> pending;
  std::optional<Millis> timer_at = options.start * 1000;
  const auto t0 = Clock::now();

  auto sim_now = [&] {
    const auto wall = std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
    return options.start * 1000 + static_cast<Millis>(wall * options.speedup);
  };

  auto drop_link = [&] {
    if (sock) {
      sock.reset();
      pending.emplace_back(session::LinkDown{});
    }
  };

  auto transmit = [&](const session::SendFrame& f) {
    if (f.channel == session::Channel::Modem) {
      // Emulated ISP: the address arrives straight away.
      const NodeId id = node.cfg.node_id;
      pending.emplace_back(session::IpAssigned{wire::Ipv4::from_octets(
          10, 64, static_cast<std::uint8_t>(id >> 8), static_cast<std::uint8_t>(id))});
      return;
    }
    try {
      if (!sock) {
        sock = FrameSocket::connect(options.server);
        ++stats.connects;
      }
      sock->send(wire::encode_packet(f.packet));
    } catch (const LinkClosed& ex) {
      spdlog::debug("node: {}", ex.what());
      if (sock) {
        drop_link();
      } else if (f.channel == session::Channel::Data) {
        pending.emplace_back(session::LinkDown{});
      }
    }
  };

  auto feed = [&](const session::NodeEvent& e) {
    auto step = session::node_step(std::move(node), e, sim_now());
    node = std::move(step.session);
    for (const auto& a : step.actions) {
      if (const auto* f = std::get_if<session::SendFrame>(&a)) transmit(*f);
      else if (const auto* t = std::get_if<session::SetTimer>(&a)) timer_at = t->at;
    }
  };

  while (!stop.load()) {
    while (!pending.empty()) {
      auto e = std::move(pending.front());
      pending.pop_front();
      if (std::holds_alternative<session::DataAckReceived>(e)) ++stats.acked_batches;
      feed(e);
    }
    if (options.exit_when_done && sim.finished() && node.queue.empty() &&
        node.state.phase == session::NodePhase::Streaming) {
      stats.all_acked = true;
      break;
    }
    const Millis now = sim_now();
    if (timer_at && now >= *timer_at) {
      timer_at.reset();
      feed(session::TimerFired{});
      continue;
    }
    if (auto due = sim.next_due(); due && now >= *due * 1000) {
      auto readings = sim.emit_readings(now / 1000);
      stats.readings += readings.size();
      feed(session::ReadingsAvailable{std::move(readings)});
      continue;
    }

    Millis next = now + 1000;
    if (timer_at) next = std::min(next, *timer_at);
    if (auto due = sim.next_due()) next = std::min(next, *due * 1000);
    const auto wait = std::chrono::milliseconds(
        std::clamp<Millis>(static_cast<Millis>(static_cast<double>(next - now) / options.speedup), 0, 50));
    if (!sock) {
      std::this_thread::sleep_for(wait);
      continue;
    }
    try {
      if (auto frame = sock->receive(wait)) {
        const auto packet = wire::from_frame(*frame);
        if (const auto* ip = std::get_if<wire::ServerIpPayload>(&packet)) {
          pending.emplace_back(session::ServerIpReceived{ip->ip});
        } else if (const auto* ack = std::get_if<wire::ConnAckPayload>(&packet)) {
          pending.emplace_back(session::ConnAckReceived{ack->session_id, ack->nonce});
        } else if (const auto* dack = std::get_if<wire::DataAckPayload>(&packet)) {
          pending.emplace_back(session::DataAckReceived{dack->seq, dack->session_id});
        }
      }
    } catch (const LinkClosed& ex) {
      spdlog::debug("node: {}", ex.what());
      drop_link();
    } catch (const wire::PayloadError& ex) {
      spdlog::warn("node: bad payload: {}", ex.what());
    }
  }
  stats.recoveries = node.recoveries;
  return stats;
}

}  // namespace ews::transport
