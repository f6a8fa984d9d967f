#pragma once

// Node-side and server-side protocol state machines.
//
// Both machines are pure: a step consumes a state value and an event and
// returns the next state plus a list of actions for the transport to carry
// out. Nothing here touches a socket or a clock.

#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "ews/domain.hpp"
#include "ews/wire.hpp"

namespace ews::session {

// Reconnect delay after the given failed attempt: min(2^(attempt-1) s, 60 s).
Millis backoff_delay(int attempt);

enum class Channel : std::uint8_t {
  Modem,    // node <-> ISP emulation (address assignment)
  Control,  // out-of-band text message path, lossless
  Data,     // lossy data link
};

std::string_view channel_name(Channel c);

struct SendFrame {
  Channel channel = Channel::Data;
  wire::Packet packet;
};

struct SetTimer {
  Millis at = 0;
};

struct LogLine {
  enum class Severity { Info, Warning } severity = Severity::Info;
  std::string text;
};

struct ForwardToIngest {
  NodeId node_id = 0;
  wire::SendDataPayload payload;
};

using Action = std::variant<SendFrame, SetTimer, LogLine, ForwardToIngest>;

std::string describe(const Action& a);

// ---------------------------------------------------------------------------
// Node side

enum class NodePhase : std::uint8_t {
  Boot,
  AcquiringIp,
  AnnouncingIp,
  AwaitingServerIp,
  Connecting,
  Streaming,
  Backoff,
};

std::string_view phase_name(NodePhase p);

struct NodeState {
  NodePhase phase = NodePhase::Boot;
  // Failed connection attempts since the last successful ConnAck.
  int attempt = 0;
  // Only meaningful in Backoff.
  Millis resume_at = 0;

  friend bool operator==(const NodeState&, const NodeState&) = default;
};

struct NodeConfig {
  NodeId node_id = 1;
  Millis retry_interval_ms = 5000;
  Millis connect_timeout_ms = 10000;
  Millis ack_timeout_ms = 3000;
  std::size_t window = 32;
  // Consecutive ack-timer expiries without any DataAck before the link is
  // declared dead.
  int max_silent_rounds = 5;
};

struct PendingBatch {
  wire::SendDataPayload payload;
  std::optional<Millis> last_sent;
};

struct NodeSession {
  NodeConfig cfg;
  NodeState state;
  wire::Ipv4 own_ip;
  wire::Ipv4 server_ip;
  std::uint32_t session_id = 0;
  std::uint32_t nonce = 0;
  std::deque<PendingBatch> queue;
  bool acked_since_timer = false;
  int silent_rounds = 0;
  std::uint64_t recoveries = 0;
};

struct IpAssigned {
  wire::Ipv4 ip;
};
struct ServerIpReceived {
  wire::Ipv4 ip;
};
struct ConnAckReceived {
  std::uint32_t session_id = 0;
  std::uint32_t nonce = 0;
};
struct DataAckReceived {
  Seq seq = 0;
  std::uint32_t session_id = 0;
};
struct LinkDown {};
struct TimerFired {};
struct ReadingsAvailable {
  std::vector<RawReading> batch;
};

using NodeEvent = std::variant<IpAssigned, ServerIpReceived, ConnAckReceived, DataAckReceived,
                               LinkDown, TimerFired, ReadingsAvailable>;

std::string describe(const NodeEvent& e);

struct NodeStep {
  NodeSession session;
  std::vector<Action> actions;
};

NodeStep node_step(NodeSession s, const NodeEvent& e, Millis now);

// Splits readings into SENDDATA batches: runs of equal timestamp and
// consecutive seq, at most 255 readings each.
std::vector<wire::SendDataPayload> make_batches(std::span<const RawReading> readings);

// ---------------------------------------------------------------------------
// Server side

enum class ServerPhase : std::uint8_t { AwaitingAnnounce, KnownClient, Connected };

std::string_view phase_name(ServerPhase p);

struct ServerSessionState {
  ServerPhase phase = ServerPhase::AwaitingAnnounce;
  wire::Ipv4 ip;
  std::uint32_t session_id = 0;

  friend bool operator==(const ServerSessionState&, const ServerSessionState&) = default;
};

struct ServerMachine {
  wire::Ipv4 server_ip;
  std::map<NodeId, ServerSessionState> sessions;
  // Client list: node -> last announced address.
  std::map<NodeId, wire::Ipv4> registry;
  // Live session id -> node.
  std::map<std::uint32_t, NodeId> live;
  std::uint32_t next_session_id = 1;

  ServerSessionState session(NodeId node) const;
};

struct AnnounceReceived {
  NodeId node_id = 0;
  wire::Ipv4 ip;
};
struct ReqConnReceived {
  NodeId node_id = 0;
  std::uint32_t nonce = 0;
};
struct SendDataReceived {
  wire::SendDataPayload payload;
};
struct ServerLinkDown {
  NodeId node_id = 0;
};

using ServerEvent = std::variant<AnnounceReceived, ReqConnReceived, SendDataReceived, ServerLinkDown>;

std::string describe(const ServerEvent& e);

struct ServerStep {
  ServerMachine machine;
  std::vector<Action> actions;
};

ServerStep server_step(ServerMachine m, const ServerEvent& e, Millis now);

// `ts,side,node_id,state,event,action`
std::string trace_line(Millis ts, std::string_view side, NodeId node, std::string_view state,
                       std::string_view event, std::string_view action);

}  // namespace ews::session
