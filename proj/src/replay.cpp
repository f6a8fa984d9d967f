#include "ews/replay.hpp"

#include <chrono>
#include <iostream>
#include <memory>
#include <queue>
#include <thread>

#include <spdlog/spdlog.h>

#include "ews/report.hpp"

namespace ews::replay {

namespace {

using session::Channel;

struct NodeTimer {
  std::uint64_t generation = 0;
};
struct DataToServer {
  wire::Bytes bytes;
  std::uint64_t link_epoch = 0;
  std::uint64_t server_epoch = 0;
};
struct DataToNode {
  wire::Bytes bytes;
  std::uint64_t link_epoch = 0;
};
struct ControlToServer {
  wire::Bytes bytes;
  std::uint64_t server_epoch = 0;
};
struct ControlToNode {
  wire::Bytes bytes;
};
struct ModemToNode {
  wire::Bytes bytes;
};
struct ReadingsDue {};
struct ForcedDisconnect {};
struct ServerRestart {};
struct NodeLinkDown {
  std::uint64_t link_epoch = 0;
};

using Payload = std::variant<NodeTimer, DataToServer, DataToNode, ControlToServer, ControlToNode,
                             ModemToNode, ReadingsDue, ForcedDisconnect, ServerRestart, NodeLinkDown>;

struct SimEvent {
  Millis at = 0;
  std::uint64_t order = 0;
  Payload payload;
};

struct Later {
  bool operator()(const SimEvent& a, const SimEvent& b) const {
    return a.at != b.at ? a.at > b.at : a.order > b.order;
  }
};

std::string join_actions(const std::vector<session::Action>& actions) {
  std::string out;
  for (const auto& a : actions) {
    if (!out.empty()) out += ';';
    out += session::describe(a);
  }
  return out;
}

class Simulation {
 public:
  Simulation(const nodesim::Scenario& scenario, NodeId node_id, const ReplayOptions& opt)
      : opt_(opt),
        sim_(scenario, node_id, opt.start),
        uplink_(opt.link),
        downlink_(with_seed(opt.link, opt.link.rng_seed ^ 0x9E3779B97F4A7C15ULL)) {
    summary_.scenario = scenario.name;
    node_.cfg = opt.protocol;
    node_.cfg.node_id = node_id;
    if (opt.server_restart_at && !opt.store_dir) {
      throw ConfigError("server restart needs a store directory");
    }
    start_server();
  }

  ReplaySummary run() {
    const Millis t0 = opt_.start * 1000;
    schedule(t0, NodeTimer{++timer_generation_});
    if (auto due = sim_.next_due()) schedule(*due * 1000, ReadingsDue{});
    for (Millis offset : opt_.forced_disconnects) schedule(t0 + offset, ForcedDisconnect{});
    if (opt_.server_restart_at) schedule(t0 + *opt_.server_restart_at, ServerRestart{});

    const auto wall_start = std::chrono::steady_clock::now();
    std::optional<Millis> generation_done;
    while (!queue_.empty()) {
      SimEvent ev = queue_.top();
      queue_.pop();
      now_ = ev.at;
      if (generation_done && now_ > *generation_done + opt_.drain_limit_ms) break;
      pace(wall_start, now_ - t0);
      std::visit([&](auto& p) { handle(p); }, ev.payload);
      if (sim_.finished()) {
        if (!generation_done) generation_done = now_;
        if (node_.queue.empty()) {
          summary_.all_acked = true;
          break;
        }
      }
    }

    collect_timeline();
    summary_.readings_generated = sim_.emitted();
    summary_.readings_stored = station_->repository().size();
    summary_.frames_dropped = uplink_.dropped() + downlink_.dropped();
    summary_.link_severs = uplink_.severed() + downlink_.severed();
    summary_.reconnects = node_.recoveries;
    summary_.sim_duration_ms = now_ - t0;
    const auto analysis =
        report::analyze_store(station_->repository(), settings().analysis, settings().thresholds.prediction_horizon);
    summary_.rain_events = analysis.events.size();
    return summary_;
  }

 private:
  static session::LinkConfig with_seed(session::LinkConfig cfg, std::uint64_t seed) {
    cfg.rng_seed = seed;
    return cfg;
  }

  const StationSettings& settings() const { return opt_.station; }

  void pace(std::chrono::steady_clock::time_point wall_start, Millis sim_elapsed) const {
    if (opt_.speedup <= 0.0) return;
    const auto target = wall_start + std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                                         std::chrono::duration<double, std::milli>(
                                             static_cast<double>(sim_elapsed) / opt_.speedup));
    std::this_thread::sleep_until(target);
  }

  void schedule(Millis at, Payload p) { queue_.push(SimEvent{at, ++order_, std::move(p)}); }

  void start_server() {
    std::ostream& console = opt_.console ? *opt_.console : null_stream();
    auto sinks = opt_.sinks;
    if (!opt_.console) sinks.console = false;
    station_ = std::make_unique<BaseStation>(settings(), opt_.store_dir,
                                             make_dispatcher(sinks, opt_.store_dir, console));
    server_ = session::ServerMachine{};
    server_.server_ip = wire::Ipv4::from_octets(10, 0, 0, 1);
    server_.next_session_id = static_cast<std::uint32_t>(summary_.server_restarts * 100000 + 1);
  }

  static std::ostream& null_stream() {
    static std::ostream sink(nullptr);
    return sink;
  }

  void collect_timeline() {
    if (summary_.alert_timeline.empty()) {
      summary_.alert_timeline.push_back({opt_.start, AlertLevel::Green, alert::Mode::Multi,
                                         alert::Source::Current});
    }
    for (const auto& n : station_->timeline()) {
      summary_.alert_timeline.push_back({n.ts, n.level, n.mode, n.source});
      ++summary_.notifications;
    }
    summary_.rejected_batches += station_->rejected_batches();
  }

  // ---- node side --------------------------------------------------------

  void node_event(const session::NodeEvent& e) {
    const auto before = node_.state;
    auto step = session::node_step(std::move(node_), e, now_);
    node_ = std::move(step.session);
    if (opt_.trace) {
      *opt_.trace << session::trace_line(now_, "node", node_.cfg.node_id,
                                         session::phase_name(node_.state.phase), session::describe(e),
                                         join_actions(step.actions))
                  << '\n';
    }
    if (before.phase != session::NodePhase::Connecting &&
        node_.state.phase == session::NodePhase::Connecting) {
      // (Re)dialling brings the data link back up.
      link_up_ = true;
      ++link_epoch_;
    }
    for (auto& action : step.actions) node_action(action);
  }

  void node_action(const session::Action& a) {
    if (const auto* send = std::get_if<session::SendFrame>(&a)) {
      auto bytes = wire::encode_packet(send->packet);
      ++summary_.frames_sent;
      switch (send->channel) {
        case Channel::Modem:
          isp_reply(send->packet);
          break;
        case Channel::Control:
          schedule(now_ + opt_.control_latency_ms, ControlToServer{std::move(bytes), server_epoch_});
          break;
        case Channel::Data:
          send_up(std::move(bytes));
          break;
      }
    } else if (const auto* timer = std::get_if<session::SetTimer>(&a)) {
      schedule(std::max(timer->at, now_), NodeTimer{++timer_generation_});
    } else if (const auto* log = std::get_if<session::LogLine>(&a)) {
      if (log->severity == session::LogLine::Severity::Warning) spdlog::debug("node: {}", log->text);
    }
  }

  void isp_reply(const wire::Packet& p) {
    if (!std::holds_alternative<wire::ReqIpPayload>(p)) return;
    const NodeId id = node_.cfg.node_id;
    const auto ip = wire::Ipv4::from_octets(10, 64, static_cast<std::uint8_t>(id >> 8),
                                            static_cast<std::uint8_t>(id));
    schedule(now_ + opt_.control_latency_ms, ModemToNode{wire::encode_packet(wire::IpAssignPayload{ip})});
  }

  void send_up(wire::Bytes bytes) {
    if (!link_up_) return;
    const auto outcome = uplink_.deliver(bytes, now_);
    if (const auto* d = std::get_if<session::Delivered>(&outcome)) {
      schedule(d->at, DataToServer{std::move(bytes), link_epoch_, server_epoch_});
    } else if (std::holds_alternative<session::LinkSevered>(outcome)) {
      sever();
    }
  }

  void send_down(wire::Bytes bytes) {
    if (!link_up_) return;
    const auto outcome = downlink_.deliver(bytes, now_);
    if (const auto* d = std::get_if<session::Delivered>(&outcome)) {
      schedule(d->at, DataToNode{std::move(bytes), link_epoch_});
    } else if (std::holds_alternative<session::LinkSevered>(outcome)) {
      sever();
    }
  }

  void sever() {
    if (!link_up_) return;
    link_up_ = false;
    const auto epoch = link_epoch_++;
    schedule(now_, NodeLinkDown{epoch});
    server_event(session::ServerLinkDown{node_.cfg.node_id});
  }

  void handle(NodeTimer& t) {
    if (t.generation != timer_generation_) return;
    node_event(session::TimerFired{});
  }

  void handle(NodeLinkDown&) { node_event(session::LinkDown{}); }

  void handle(ModemToNode& m) {
    const auto p = wire::decode_packet(m.bytes);
    if (const auto* ip = std::get_if<wire::IpAssignPayload>(&p)) node_event(session::IpAssigned{ip->ip});
  }

  void handle(ControlToNode& m) {
    const auto p = wire::decode_packet(m.bytes);
    if (const auto* ip = std::get_if<wire::ServerIpPayload>(&p)) {
      node_event(session::ServerIpReceived{ip->ip});
    }
  }

  void handle(DataToNode& m) {
    if (m.link_epoch != link_epoch_ || !link_up_) return;
    wire::Packet p;
    try {
      p = wire::decode_packet(m.bytes);
    } catch (const Error& ex) {
      spdlog::warn("node dropped corrupt frame: {}", ex.what());
      return;
    }
    if (const auto* ack = std::get_if<wire::ConnAckPayload>(&p)) {
      node_event(session::ConnAckReceived{ack->session_id, ack->nonce});
    } else if (const auto* dack = std::get_if<wire::DataAckPayload>(&p)) {
      node_event(session::DataAckReceived{dack->seq, dack->session_id});
    }
  }

  void handle(ReadingsDue&) {
    auto readings = sim_.emit_readings(now_ / 1000);
    summary_.batches_generated += session::make_batches(readings).size();
    node_event(session::ReadingsAvailable{std::move(readings)});
    if (auto due = sim_.next_due()) schedule(std::max(*due * 1000, now_), ReadingsDue{});
  }

  void handle(ForcedDisconnect&) {
    if (!link_up_) return;
    ++summary_.forced_disconnects;
    sever();
  }

  void handle(ServerRestart&) {
    collect_timeline();
    if (opt_.before_restart) opt_.before_restart(station_->repository());
    station_.reset();
    ++summary_.server_restarts;
    ++server_epoch_;
    if (link_up_) {
      link_up_ = false;
      schedule(now_, NodeLinkDown{link_epoch_++});
    }
    start_server();
  }

  // ---- server side ------------------------------------------------------

  void server_event(const session::ServerEvent& e) {
    auto step = session::server_step(std::move(server_), e, now_);
    server_ = std::move(step.machine);
    if (opt_.trace) {
      const NodeId node = node_.cfg.node_id;
      *opt_.trace << session::trace_line(now_, "server", node,
                                         session::phase_name(server_.session(node).phase),
                                         session::describe(e), join_actions(step.actions))
                  << '\n';
    }
    for (const auto& a : step.actions) {
      if (const auto* fwd = std::get_if<session::ForwardToIngest>(&a)) {
        station_->on_batch(fwd->node_id, fwd->payload, now_ / 1000);
      } else if (const auto* send = std::get_if<session::SendFrame>(&a)) {
        auto bytes = wire::encode_packet(send->packet);
        ++summary_.frames_sent;
        if (send->channel == Channel::Control) {
          schedule(now_ + opt_.control_latency_ms, ControlToNode{std::move(bytes)});
        } else {
          send_down(std::move(bytes));
        }
      } else if (const auto* log = std::get_if<session::LogLine>(&a)) {
        if (log->severity == session::LogLine::Severity::Warning) spdlog::debug("server: {}", log->text);
      }
    }
  }

  void handle(ControlToServer& m) {
    if (m.server_epoch != server_epoch_) return;
    const auto p = wire::decode_packet(m.bytes);
    if (const auto* a = std::get_if<wire::SendIpPayload>(&p)) {
      server_event(session::AnnounceReceived{a->node_id, a->ip});
    }
  }

  void handle(DataToServer& m) {
    if (m.link_epoch != link_epoch_ || m.server_epoch != server_epoch_ || !link_up_) return;
    wire::Packet p;
    try {
      p = wire::decode_packet(m.bytes);
    } catch (const Error& ex) {
      spdlog::warn("server dropped corrupt frame: {}", ex.what());
      return;
    }
    if (const auto* rc = std::get_if<wire::ReqConnPayload>(&p)) {
      server_event(session::ReqConnReceived{rc->node_id, rc->nonce});
    } else if (auto* data = std::get_if<wire::SendDataPayload>(&p)) {
      server_event(session::SendDataReceived{std::move(*data)});
    }
  }

  const ReplayOptions& opt_;
  nodesim::NodeSimulator sim_;
  session::SimulatedLink uplink_;
  session::SimulatedLink downlink_;
  session::NodeSession node_;
  session::ServerMachine server_;
  std::unique_ptr<BaseStation> station_;
  std::priority_queue<SimEvent, std::vector<SimEvent>, Later> queue_;
  std::uint64_t order_ = 0;
  std::uint64_t timer_generation_ = 0;
  std::uint64_t link_epoch_ = 0;
  std::uint64_t server_epoch_ = 0;
  bool link_up_ = false;
  Millis now_ = 0;
  ReplaySummary summary_;
};

}  // namespace

void print_summary(std::ostream& out, const ReplaySummary& s) {
  out << "scenario            " << s.scenario << '\n'
      << "readings generated  " << s.readings_generated << '\n'
      << "readings stored     " << s.readings_stored << '\n'
      << "batches generated   " << s.batches_generated << '\n'
      << "frames sent         " << s.frames_sent << '\n'
      << "frames dropped      " << s.frames_dropped << '\n'
      << "link severs         " << s.link_severs << '\n'
      << "forced disconnects  " << s.forced_disconnects << '\n'
      << "reconnects          " << s.reconnects << '\n'
      << "server restarts     " << s.server_restarts << '\n'
      << "rejected batches    " << s.rejected_batches << '\n'
      << "rain events         " << s.rain_events << '\n'
      << "all acked           " << (s.all_acked ? "yes" : "no") << '\n'
      << "simulated seconds   " << s.sim_duration_ms / 1000 << '\n'
      << "alert timeline:\n";
  for (const auto& e : s.alert_timeline) {
    out << "  " << e.ts << ' ' << level_name(e.level) << ' ' << alert::mode_name(e.mode) << '/'
        << alert::source_name(e.source) << '\n';
  }
}

ReplaySummary run_replay(const nodesim::Scenario& scenario, NodeId node_id, const ReplayOptions& options) {
  Simulation sim(scenario, node_id, options);
  return sim.run();
}

ReplayOptions options_from_config(const Config& config) {
  ReplayOptions o;
  o.station = StationSettings{config.thresholds, config.analysis, config.calibration};
  o.link = config.link;
  o.protocol = config.protocol;
  o.sinks = config.sinks;
  o.store_dir = config.store_dir;
  o.start = config.scenario_start;
  return o;
}

}  // namespace ews::replay
