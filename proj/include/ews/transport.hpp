#pragma once

// Stream-socket transport: the same frames the simulator carries, over TCP.
// The out-of-band control messages (SENDIP / SERVERIP) travel on the same
// connection; the modem's address assignment is emulated inside the node.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ews/nodesim.hpp"
#include "ews/session.hpp"
#include "ews/station.hpp"
#include "ews/wire.hpp"

namespace ews::transport {

class LinkClosed : public Error {
 public:
  using Error::Error;
};

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};

// "host:port", ":port" or "port".
Endpoint parse_endpoint(const std::string& text);

// Owns a connected socket and reassembles frames from the byte stream.
class FrameSocket {
 public:
  explicit FrameSocket(int fd) : fd_(fd) {}
  ~FrameSocket();
  FrameSocket(FrameSocket&& other) noexcept;
  FrameSocket& operator=(FrameSocket&& other) noexcept;
  FrameSocket(const FrameSocket&) = delete;
  FrameSocket& operator=(const FrameSocket&) = delete;

  static FrameSocket connect(const Endpoint& ep);

  void send(const wire::Bytes& frame);
  // Waits up to `timeout` for one complete frame. Frames that fail to decode
  // are skipped after resynchronising on the magic bytes. Throws LinkClosed
  // when the peer goes away.
  std::optional<wire::Frame> receive(std::chrono::milliseconds timeout);

  bool valid() const noexcept { return fd_ >= 0; }
  void close();
  std::size_t corrupt_frames() const noexcept { return corrupt_; }

 private:
  std::optional<wire::Frame> extract();

  int fd_ = -1;
  wire::Bytes buffer_;
  std::size_t corrupt_ = 0;
};

class Listener {
 public:
  explicit Listener(const Endpoint& ep);
  ~Listener();
  Listener(const Listener&) = delete;
  Listener& operator=(const Listener&) = delete;

  std::uint16_t port() const noexcept { return port_; }
  // nullopt on timeout.
  std::optional<FrameSocket> accept(std::chrono::milliseconds timeout);

 private:
  int fd_ = -1;
  std::uint16_t port_ = 0;
};

struct ServerStats {
  std::size_t connections = 0;
  std::size_t batches = 0;
  std::size_t violations = 0;
};

// Serves nodes until `stop` becomes true. One thread per connection; the
// session registry and the station are shared under a mutex. The alert
// engine is clocked by the newest batch timestamp seen.
ServerStats serve(Listener& listener, BaseStation& station, const std::atomic<bool>& stop,
                  wire::Ipv4 server_ip = wire::Ipv4::from_octets(10, 0, 0, 1));

struct NodeRunOptions {
  Endpoint server;
  session::NodeConfig protocol;
  Timestamp start = 0;
  double speedup = 1.0;
  // Stop once everything generated has been acknowledged.
  bool exit_when_done = true;
};

struct NodeRunStats {
  std::size_t readings = 0;
  std::size_t acked_batches = 0;
  std::size_t connects = 0;
  std::uint64_t recoveries = 0;
  bool all_acked = false;
};

// Runs one node against a TCP server until the scenario is delivered or
// `stop` becomes true. Simulated time runs at `speedup` times wall time.
NodeRunStats run_node(const nodesim::Scenario& scenario, const NodeRunOptions& options,
                      const std::atomic<bool>& stop);

}  // namespace ews::transport
