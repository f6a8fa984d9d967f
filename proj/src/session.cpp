#include "ews/session.hpp"

#include <algorithm>
#include <sstream>

namespace ews::session {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

LogLine warn(std::string text) { return LogLine{LogLine::Severity::Warning, std::move(text)}; }
LogLine info(std::string text) { return LogLine{LogLine::Severity::Info, std::move(text)}; }

void ignore_event(NodeStep& out, const NodeEvent& e) {
  out.actions.emplace_back(warn("ignoring " + describe(e) + " in " +
                                std::string(phase_name(out.session.state.phase))));
}

void send_reqconn(NodeStep& out, Millis now) {
  auto& s = out.session;
  ++s.nonce;
  out.actions.emplace_back(SendFrame{Channel::Data, wire::ReqConnPayload{s.cfg.node_id, s.nonce}});
  out.actions.emplace_back(SetTimer{now + s.cfg.connect_timeout_ms});
}

void enter_backoff(NodeStep& out, Millis now, std::string_view why) {
  auto& s = out.session;
  const int attempt = s.state.attempt + 1;
  s.state = NodeState{NodePhase::Backoff, attempt, now + backoff_delay(attempt)};
  s.acked_since_timer = false;
  s.silent_rounds = 0;
  out.actions.emplace_back(info(std::string(why) + ", backoff attempt " + std::to_string(attempt)));
  out.actions.emplace_back(SetTimer{s.state.resume_at});
}

// Sends every batch in the window that is unsent or whose ack is overdue, then
// arms the timer for the earliest outstanding ack deadline.
void pump(NodeStep& out, Millis now) {
  auto& s = out.session;
  const std::size_t limit = std::min(s.cfg.window, s.queue.size());
  std::optional<Millis> next_deadline;
  for (std::size_t i = 0; i < limit; ++i) {
    auto& pending = s.queue[i];
    if (!pending.last_sent || now - *pending.last_sent >= s.cfg.ack_timeout_ms) {
      pending.payload.session_id = s.session_id;
      pending.last_sent = now;
      out.actions.emplace_back(SendFrame{Channel::Data, pending.payload});
    }
    const Millis deadline = *pending.last_sent + s.cfg.ack_timeout_ms;
    next_deadline = next_deadline ? std::min(*next_deadline, deadline) : deadline;
  }
  if (next_deadline) out.actions.emplace_back(SetTimer{*next_deadline});
}

void enqueue(NodeSession& s, std::span<const RawReading> readings) {
  for (auto& payload : make_batches(readings)) {
    s.queue.push_back(PendingBatch{std::move(payload), std::nullopt});
  }
}

std::string ip_event(std::string_view name, const wire::Ipv4& ip) {
  return std::string(name) + "(" + ip.to_string() + ")";
}

}  // namespace

Millis backoff_delay(int attempt) {
  if (attempt < 1) throw InvalidInput("backoff attempt must be >= 1");
  constexpr Millis kCap = 60'000;
  if (attempt > 7) return kCap;  // 2^6 s already exceeds the cap
  return std::min<Millis>(Millis{1000} << (attempt - 1), kCap);
}

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::Modem: return "modem";
    case Channel::Control: return "control";
    case Channel::Data: return "data";
  }
  return "?";
}

std::string_view phase_name(NodePhase p) {
  switch (p) {
    case NodePhase::Boot: return "Boot";
    case NodePhase::AcquiringIp: return "AcquiringIp";
    case NodePhase::AnnouncingIp: return "AnnouncingIp";
    case NodePhase::AwaitingServerIp: return "AwaitingServerIp";
    case NodePhase::Connecting: return "Connecting";
    case NodePhase::Streaming: return "Streaming";
    case NodePhase::Backoff: return "Backoff";
  }
  return "?";
}

std::string_view phase_name(ServerPhase p) {
  switch (p) {
    case ServerPhase::AwaitingAnnounce: return "AwaitingAnnounce";
    case ServerPhase::KnownClient: return "KnownClient";
    case ServerPhase::Connected: return "Connected";
  }
  return "?";
}

std::string describe(const Action& a) {
  return std::visit(
      Overloaded{
          [](const SendFrame& f) {
            std::string out = "send " + std::string(wire::message_name(wire::packet_type(f.packet))) +
                              "@" + std::string(channel_name(f.channel));
            if (const auto* d = std::get_if<wire::SendDataPayload>(&f.packet)) {
              out += " seq=" + std::to_string(d->seq);
            } else if (const auto* ack = std::get_if<wire::DataAckPayload>(&f.packet)) {
              out += " seq=" + std::to_string(ack->seq);
            }
            return out;
          },
          [](const SetTimer& t) { return "timer " + std::to_string(t.at); },
          [](const LogLine& l) {
            return std::string(l.severity == LogLine::Severity::Warning ? "warn " : "log ") + l.text;
          },
          [](const ForwardToIngest& f) {
            return "ingest node=" + std::to_string(f.node_id) + " seq=" + std::to_string(f.payload.seq);
          },
      },
      a);
}

std::string describe(const NodeEvent& e) {
  return std::visit(
      Overloaded{
          [](const IpAssigned& v) { return ip_event("IpAssigned", v.ip); },
          [](const ServerIpReceived& v) { return ip_event("ServerIpReceived", v.ip); },
          [](const ConnAckReceived& v) {
            return "ConnAckReceived(" + std::to_string(v.session_id) + ")";
          },
          [](const DataAckReceived& v) { return "DataAckReceived(" + std::to_string(v.seq) + ")"; },
          [](const LinkDown&) { return std::string("LinkDown"); },
          [](const TimerFired&) { return std::string("TimerFired"); },
          [](const ReadingsAvailable& v) {
            return "ReadingsAvailable(" + std::to_string(v.batch.size()) + ")";
          },
      },
      e);
}

std::string describe(const ServerEvent& e) {
  return std::visit(
      Overloaded{
          [](const AnnounceReceived& v) { return ip_event("AnnounceReceived", v.ip); },
          [](const ReqConnReceived& v) { return "ReqConnReceived(" + std::to_string(v.nonce) + ")"; },
          [](const SendDataReceived& v) {
            return "SendDataReceived(" + std::to_string(v.payload.seq) + ")";
          },
          [](const ServerLinkDown&) { return std::string("LinkDown"); },
      },
      e);
}

std::vector<wire::SendDataPayload> make_batches(std::span<const RawReading> readings) {
  std::vector<wire::SendDataPayload> out;
  for (std::size_t i = 0; i < readings.size(); ++i) {
    const auto& r = readings[i];
    const bool extend = !out.empty() &&
                        out.back().timestamp == static_cast<std::uint64_t>(r.timestamp) &&
                        out.back().readings.size() < wire::kMaxReadingsPerBatch &&
                        out.back().seq + out.back().readings.size() == r.seq &&
                        readings[i - 1].node_id == r.node_id;
    if (!extend) {
      wire::SendDataPayload p;
      p.seq = r.seq;
      p.timestamp = static_cast<std::uint64_t>(r.timestamp);
      out.push_back(std::move(p));
    }
    out.back().readings.push_back({r.sensor, r.raw});
  }
  return out;
}

NodeStep node_step(NodeSession s, const NodeEvent& e, Millis now) {
  NodeStep out{std::move(s), {}};
  auto& ses = out.session;
  const NodePhase phase = ses.state.phase;

  if (const auto* ready = std::get_if<ReadingsAvailable>(&e)) {
    enqueue(ses, ready->batch);
    if (phase == NodePhase::Streaming) pump(out, now);
    return out;
  }

  switch (phase) {
    case NodePhase::Boot:
      if (std::holds_alternative<TimerFired>(e)) {
        ses.state = NodeState{NodePhase::AcquiringIp};
        out.actions.emplace_back(SendFrame{Channel::Modem, wire::ReqIpPayload{ses.cfg.node_id}});
        out.actions.emplace_back(SetTimer{now + ses.cfg.retry_interval_ms});
      } else {
        ignore_event(out, e);
      }
      break;

    case NodePhase::AcquiringIp:
      if (const auto* assigned = std::get_if<IpAssigned>(&e)) {
        ses.own_ip = assigned->ip;
        ses.state = NodeState{NodePhase::AnnouncingIp};
        out.actions.emplace_back(SetTimer{now});
      } else if (std::holds_alternative<TimerFired>(e)) {
        out.actions.emplace_back(SendFrame{Channel::Modem, wire::ReqIpPayload{ses.cfg.node_id}});
        out.actions.emplace_back(SetTimer{now + ses.cfg.retry_interval_ms});
      } else {
        ignore_event(out, e);
      }
      break;

    case NodePhase::AnnouncingIp:
      if (std::holds_alternative<TimerFired>(e)) {
        ses.state = NodeState{NodePhase::AwaitingServerIp};
        out.actions.emplace_back(
            SendFrame{Channel::Control, wire::SendIpPayload{ses.cfg.node_id, ses.own_ip}});
        out.actions.emplace_back(SetTimer{now + ses.cfg.retry_interval_ms});
      } else {
        ignore_event(out, e);
      }
      break;

    case NodePhase::AwaitingServerIp:
      if (const auto* server = std::get_if<ServerIpReceived>(&e)) {
        ses.server_ip = server->ip;
        ses.state = NodeState{NodePhase::Connecting};
        send_reqconn(out, now);
      } else if (std::holds_alternative<TimerFired>(e)) {
        out.actions.emplace_back(
            SendFrame{Channel::Control, wire::SendIpPayload{ses.cfg.node_id, ses.own_ip}});
        out.actions.emplace_back(SetTimer{now + ses.cfg.retry_interval_ms});
      } else {
        ignore_event(out, e);
      }
      break;

    case NodePhase::Connecting:
      if (const auto* ack = std::get_if<ConnAckReceived>(&e)) {
        if (ack->nonce != ses.nonce) {
          out.actions.emplace_back(warn("stale ConnAck nonce " + std::to_string(ack->nonce)));
          break;
        }
        if (ses.state.attempt > 0) ++ses.recoveries;
        ses.session_id = ack->session_id;
        ses.state = NodeState{NodePhase::Streaming};
        ses.acked_since_timer = false;
        ses.silent_rounds = 0;
        for (auto& pending : ses.queue) pending.last_sent.reset();
        pump(out, now);
      } else if (std::holds_alternative<TimerFired>(e)) {
        enter_backoff(out, now, "connect timeout");
      } else if (std::holds_alternative<LinkDown>(e)) {
        enter_backoff(out, now, "link down while connecting");
      } else if (const auto* server = std::get_if<ServerIpReceived>(&e)) {
        ses.server_ip = server->ip;
      } else {
        ignore_event(out, e);
      }
      break;

    case NodePhase::Streaming:
      if (const auto* ack = std::get_if<DataAckReceived>(&e)) {
        auto it = std::find_if(ses.queue.begin(), ses.queue.end(),
                               [&](const PendingBatch& p) { return p.payload.seq == ack->seq; });
        if (it != ses.queue.end()) ses.queue.erase(it);
        ses.acked_since_timer = true;
        ses.silent_rounds = 0;
        pump(out, now);
      } else if (std::holds_alternative<LinkDown>(e)) {
        // A failure while streaming counts as the first failed attempt.
        ses.state.attempt = 0;
        enter_backoff(out, now, "link down while streaming");
      } else if (std::holds_alternative<TimerFired>(e)) {
        const bool in_flight = std::any_of(ses.queue.begin(), ses.queue.end(),
                                           [](const PendingBatch& p) { return p.last_sent.has_value(); });
        if (in_flight && !ses.acked_since_timer) {
          ++ses.silent_rounds;
        } else {
          ses.silent_rounds = 0;
        }
        ses.acked_since_timer = false;
        if (ses.silent_rounds >= ses.cfg.max_silent_rounds) {
          ses.state.attempt = 0;
          enter_backoff(out, now, "no acks for " + std::to_string(ses.silent_rounds) + " rounds");
        } else {
          pump(out, now);
        }
      } else if (const auto* server = std::get_if<ServerIpReceived>(&e)) {
        ses.server_ip = server->ip;
      } else {
        ignore_event(out, e);
      }
      break;

    case NodePhase::Backoff:
      if (std::holds_alternative<TimerFired>(e)) {
        if (now < ses.state.resume_at) {
          out.actions.emplace_back(SetTimer{ses.state.resume_at});
          break;
        }
        ses.state.phase = NodePhase::Connecting;
        send_reqconn(out, now);
      } else if (const auto* server = std::get_if<ServerIpReceived>(&e)) {
        ses.server_ip = server->ip;
      } else if (std::holds_alternative<LinkDown>(e)) {
        // already down
      } else {
        ignore_event(out, e);
      }
      break;
  }
  return out;
}

ServerSessionState ServerMachine::session(NodeId node) const {
  auto it = sessions.find(node);
  return it == sessions.end() ? ServerSessionState{} : it->second;
}

ServerStep server_step(ServerMachine m, const ServerEvent& e, Millis now) {
  (void)now;
  ServerStep out{std::move(m), {}};
  auto& sm = out.machine;

  auto retire = [&](ServerSessionState& st) {
    if (st.phase == ServerPhase::Connected) {
      sm.live.erase(st.session_id);
      st.session_id = 0;
    }
  };

  std::visit(
      Overloaded{
          [&](const AnnounceReceived& a) {
            sm.registry[a.node_id] = a.ip;
            auto& st = sm.sessions[a.node_id];
            st.ip = a.ip;
            if (st.phase == ServerPhase::AwaitingAnnounce) st.phase = ServerPhase::KnownClient;
            out.actions.emplace_back(SendFrame{Channel::Control, wire::ServerIpPayload{sm.server_ip}});
          },
          [&](const ReqConnReceived& r) {
            auto& st = sm.sessions[r.node_id];
            if (st.phase == ServerPhase::AwaitingAnnounce) {
              // A restarted server has an empty client list; the connection
              // request itself proves reachability.
              out.actions.emplace_back(
                  warn("REQCONN from unregistered node " + std::to_string(r.node_id)));
            }
            retire(st);
            std::uint32_t id = sm.next_session_id++;
            while (id == 0 || sm.live.contains(id)) id = sm.next_session_id++;
            st.phase = ServerPhase::Connected;
            st.session_id = id;
            sm.live[id] = r.node_id;
            out.actions.emplace_back(SendFrame{Channel::Data, wire::ConnAckPayload{id, r.nonce}});
          },
          [&](const SendDataReceived& d) {
            auto it = sm.live.find(d.payload.session_id);
            if (it == sm.live.end()) {
              out.actions.emplace_back(warn("protocol violation: SENDDATA for unknown session " +
                                            std::to_string(d.payload.session_id)));
              return;
            }
            const NodeId node = it->second;
            // Forward before acknowledging: an acked batch is always stored.
            out.actions.emplace_back(ForwardToIngest{node, d.payload});
            out.actions.emplace_back(
                SendFrame{Channel::Data, wire::DataAckPayload{d.payload.session_id, d.payload.seq}});
          },
          [&](const ServerLinkDown& l) {
            auto found = sm.sessions.find(l.node_id);
            if (found == sm.sessions.end()) return;
            auto& st = found->second;
            if (st.phase == ServerPhase::Connected) {
              retire(st);
              st.phase = ServerPhase::KnownClient;
            }
          },
      },
      e);
  return out;
}

std::string trace_line(Millis ts, std::string_view side, NodeId node, std::string_view state,
                       std::string_view event, std::string_view action) {
  std::ostringstream os;
  auto field = [&](std::string_view v) {
    if (v.find_first_of(",\"\n") == std::string_view::npos) {
      os << v;
      return;
    }
    os << '"';
    for (char c : v) {
      if (c == '"') os << '"';
      os << (c == '\n' ? ' ' : c);
    }
    os << '"';
  };
  os << ts << ',';
  field(side);
  os << ',' << node << ',';
  field(state);
  os << ',';
  field(event);
  os << ',';
  field(action);
  return os.str();
}

}  // namespace ews::session
