#include <gtest/gtest.h>

#include <functional>
#include <queue>
#include <set>

#include "ews/link.hpp"
#include "ews/session.hpp"

using namespace ews;
using namespace ews::session;

namespace {

template <class T>
std::vector<T> actions_of(const std::vector<Action>& actions) {
  std::vector<T> out;
  for (const auto& a : actions) {
    if (const auto* x = std::get_if<T>(&a)) out.push_back(*x);
  }
  return out;
}

std::vector<wire::Packet> sent(const std::vector<Action>& actions) {
  std::vector<wire::Packet> out;
  for (const auto& f : actions_of<SendFrame>(actions)) out.push_back(f.packet);
  return out;
}

std::vector<RawReading> readings(std::size_t n, Seq first = 1, Timestamp t0 = 1000) {
  std::vector<RawReading> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({1, static_cast<Seq>(first + i), t0 + static_cast<Timestamp>(i), SensorKind::Piezometer,
                   static_cast<std::int32_t>(i)});
  }
  return out;
}

// Drives a node to Streaming and returns it with the session id it got.
NodeSession streaming_node() {
  NodeSession s;
  s = node_step(s, TimerFired{}, 0).session;
  s = node_step(s, IpAssigned{wire::Ipv4::from_octets(10, 64, 0, 1)}, 10).session;
  s = node_step(s, TimerFired{}, 10).session;
  s = node_step(s, ServerIpReceived{wire::Ipv4::from_octets(10, 0, 0, 1)}, 20).session;
  s = node_step(s, ConnAckReceived{55, s.nonce}, 30).session;
  return s;
}

}  // namespace

TEST(Backoff, Examples) {
  EXPECT_EQ(backoff_delay(1), 1000);
  EXPECT_EQ(backoff_delay(2), 2000);
  EXPECT_EQ(backoff_delay(4), 8000);
  EXPECT_EQ(backoff_delay(7), 60000);
  EXPECT_EQ(backoff_delay(10), 60000);
  EXPECT_EQ(backoff_delay(1000), 60000);
  EXPECT_THROW(backoff_delay(0), Error);
}

TEST(NodeStep, BootTimerRequestsIp) {
  const auto step = node_step(NodeSession{}, TimerFired{}, 0);
  EXPECT_EQ(step.session.state.phase, NodePhase::AcquiringIp);
  const auto frames = actions_of<SendFrame>(step.actions);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].channel, Channel::Modem);
  EXPECT_TRUE(std::holds_alternative<wire::ReqIpPayload>(frames[0].packet));
}

TEST(NodeStep, HandshakeSequence) {
  NodeSession s;
  s = node_step(s, TimerFired{}, 0).session;
  auto step = node_step(s, IpAssigned{wire::Ipv4::from_octets(10, 64, 0, 1)}, 100);
  EXPECT_EQ(step.session.state.phase, NodePhase::AnnouncingIp);
  step = node_step(step.session, TimerFired{}, 100);
  EXPECT_EQ(step.session.state.phase, NodePhase::AwaitingServerIp);
  auto frames = actions_of<SendFrame>(step.actions);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].channel, Channel::Control);
  EXPECT_EQ(std::get<wire::SendIpPayload>(frames[0].packet).ip, wire::Ipv4::from_octets(10, 64, 0, 1));

  step = node_step(step.session, ServerIpReceived{wire::Ipv4::from_octets(10, 0, 0, 1)}, 200);
  EXPECT_EQ(step.session.state.phase, NodePhase::Connecting);
  const auto req = std::get<wire::ReqConnPayload>(sent(step.actions).at(0));

  // A stale nonce is ignored.
  auto stale = node_step(step.session, ConnAckReceived{9, req.nonce + 1}, 250);
  EXPECT_EQ(stale.session.state.phase, NodePhase::Connecting);
  EXPECT_FALSE(actions_of<LogLine>(stale.actions).empty());

  step = node_step(step.session, ConnAckReceived{9, req.nonce}, 300);
  EXPECT_EQ(step.session.state.phase, NodePhase::Streaming);
  EXPECT_EQ(step.session.session_id, 9u);
}

TEST(NodeStep, StreamingLinkDownBacksOff) {
  const auto s = streaming_node();
  const auto step = node_step(s, LinkDown{}, 5000);
  EXPECT_EQ(step.session.state.phase, NodePhase::Backoff);
  EXPECT_EQ(step.session.state.attempt, 1);
  EXPECT_EQ(step.session.state.resume_at, 5000 + backoff_delay(1));
  const auto timers = actions_of<SetTimer>(step.actions);
  ASSERT_EQ(timers.size(), 1u);
  EXPECT_EQ(timers[0].at, 6000);
}

TEST(NodeStep, BackoffGrowsAndRecovers) {
  auto s = node_step(streaming_node(), LinkDown{}, 0).session;
  s = node_step(s, TimerFired{}, s.state.resume_at).session;
  EXPECT_EQ(s.state.phase, NodePhase::Connecting);
  s = node_step(s, TimerFired{}, 100000).session;  // connect timeout
  EXPECT_EQ(s.state.phase, NodePhase::Backoff);
  EXPECT_EQ(s.state.attempt, 2);
  EXPECT_EQ(s.state.resume_at, 100000 + backoff_delay(2));
  // Early timer is ignored.
  EXPECT_EQ(node_step(s, TimerFired{}, 100001).session.state.phase, NodePhase::Backoff);
  s = node_step(s, TimerFired{}, s.state.resume_at).session;
  ASSERT_EQ(s.state.phase, NodePhase::Connecting);
  s = node_step(s, ConnAckReceived{77, s.nonce}, 200000).session;
  EXPECT_EQ(s.state.phase, NodePhase::Streaming);
  EXPECT_EQ(s.state.attempt, 0);
  EXPECT_EQ(s.recoveries, 1u);
}

TEST(NodeStep, DataAckRemovesBatch) {
  auto step = node_step(streaming_node(), ReadingsAvailable{readings(3)}, 1000);
  ASSERT_EQ(step.session.queue.size(), 3u);
  const auto data = sent(step.actions);
  ASSERT_EQ(data.size(), 3u);
  const auto first = std::get<wire::SendDataPayload>(data[0]);
  EXPECT_EQ(first.session_id, 55u);
  EXPECT_EQ(first.seq, 1u);

  step = node_step(step.session, DataAckReceived{2, 55}, 1100);
  EXPECT_EQ(step.session.state.phase, NodePhase::Streaming);
  ASSERT_EQ(step.session.queue.size(), 2u);
  EXPECT_EQ(step.session.queue[0].payload.seq, 1u);
  EXPECT_EQ(step.session.queue[1].payload.seq, 3u);

  // An ack from an earlier session still proves the batch was stored.
  EXPECT_EQ(node_step(step.session, DataAckReceived{1, 54}, 1200).session.queue.size(), 1u);
  EXPECT_EQ(node_step(step.session, DataAckReceived{99, 55}, 1200).session.queue.size(), 2u);
}

TEST(NodeStep, ReadingsQueueBeforeStreaming) {
  const auto step = node_step(NodeSession{}, ReadingsAvailable{readings(4)}, 0);
  EXPECT_EQ(step.session.queue.size(), 4u);
  EXPECT_TRUE(sent(step.actions).empty());
}

TEST(NodeStep, IllegalEventIsLoggedNotFatal) {
  const auto step = node_step(NodeSession{}, ConnAckReceived{1, 1}, 0);
  EXPECT_EQ(step.session.state.phase, NodePhase::Boot);
  EXPECT_FALSE(actions_of<LogLine>(step.actions).empty());
}

TEST(NodeStep, RetransmitsUnackedAfterTimeout) {
  auto s = node_step(streaming_node(), ReadingsAvailable{readings(1)}, 1000).session;
  const auto retry = node_step(s, TimerFired{}, 1000 + s.cfg.ack_timeout_ms);
  EXPECT_EQ(sent(retry.actions).size(), 1u);
  EXPECT_EQ(retry.session.state.phase, NodePhase::Streaming);
}

TEST(NodeStep, SilentLinkEventuallyBacksOff) {
  auto s = node_step(streaming_node(), ReadingsAvailable{readings(1)}, 1000).session;
  Millis now = 1000;
  for (int i = 0; i < s.cfg.max_silent_rounds + 1 && s.state.phase == NodePhase::Streaming; ++i) {
    now += s.cfg.ack_timeout_ms;
    s = node_step(s, TimerFired{}, now).session;
  }
  EXPECT_EQ(s.state.phase, NodePhase::Backoff);
  EXPECT_EQ(s.queue.size(), 1u);
}

TEST(NodeStep, WindowLimitsInFlight) {
  NodeSession s = streaming_node();
  const auto step = node_step(s, ReadingsAvailable{readings(100)}, 1000);
  EXPECT_EQ(sent(step.actions).size(), s.cfg.window);
}

TEST(NodeStep, PureFunction) {
  const auto s = streaming_node();
  const auto a = node_step(s, ReadingsAvailable{readings(5)}, 1000);
  const auto b = node_step(s, ReadingsAvailable{readings(5)}, 1000);
  ASSERT_EQ(a.actions.size(), b.actions.size());
  for (std::size_t i = 0; i < a.actions.size(); ++i) EXPECT_EQ(describe(a.actions[i]), describe(b.actions[i]));
  EXPECT_EQ(a.session.state, b.session.state);
}

TEST(MakeBatches, SplitsOnTimestampAndSeq) {
  std::vector<RawReading> r = {
      {1, 1, 100, SensorKind::RainGauge, 1}, {1, 2, 100, SensorKind::Piezometer, 2},
      {1, 3, 200, SensorKind::RainGauge, 3}, {1, 5, 200, SensorKind::Piezometer, 4}};
  const auto b = make_batches(r);
  ASSERT_EQ(b.size(), 3u);
  EXPECT_EQ(b[0].readings.size(), 2u);
  EXPECT_EQ(b[1].seq, 3u);
  EXPECT_EQ(b[2].seq, 5u);
  std::vector<RawReading> many;
  for (Seq i = 0; i < 600; ++i) many.push_back({1, i + 1, 100, SensorKind::Tiltmeter, 0});
  const auto big = make_batches(many);
  ASSERT_EQ(big.size(), 3u);
  EXPECT_EQ(big[0].readings.size(), 255u);
  EXPECT_EQ(big[1].seq, 256u);
  EXPECT_EQ(big[2].readings.size(), 90u);
}

TEST(ServerStep, AnnounceRepliesServerIp) {
  ServerMachine m;
  m.server_ip = wire::Ipv4::from_octets(10, 0, 0, 1);
  const auto step = server_step(m, AnnounceReceived{7, wire::Ipv4::from_octets(1, 2, 3, 4)}, 0);
  EXPECT_EQ(step.machine.session(7).phase, ServerPhase::KnownClient);
  EXPECT_EQ(step.machine.registry.at(7), wire::Ipv4::from_octets(1, 2, 3, 4));
  const auto frames = actions_of<SendFrame>(step.actions);
  ASSERT_EQ(frames.size(), 1u);
  EXPECT_EQ(frames[0].channel, Channel::Control);
  EXPECT_EQ(std::get<wire::ServerIpPayload>(frames[0].packet).ip, m.server_ip);

  const auto again = server_step(step.machine, AnnounceReceived{7, wire::Ipv4::from_octets(5, 6, 7, 8)}, 1);
  EXPECT_EQ(again.machine.registry.at(7), wire::Ipv4::from_octets(5, 6, 7, 8));
  EXPECT_EQ(again.machine.registry.size(), 1u);
}

TEST(ServerStep, ConnectDataAndLinkDown) {
  ServerMachine m;
  m = server_step(m, AnnounceReceived{7, {}}, 0).machine;
  auto step = server_step(m, ReqConnReceived{7, 1234}, 0);
  EXPECT_EQ(step.machine.session(7).phase, ServerPhase::Connected);
  const auto ack = std::get<wire::ConnAckPayload>(sent(step.actions).at(0));
  EXPECT_EQ(ack.nonce, 1234u);
  const auto sid = ack.session_id;

  wire::SendDataPayload p{sid, 5, 1000, {{SensorKind::RainGauge, 3}}};
  step = server_step(step.machine, SendDataReceived{p}, 0);
  ASSERT_EQ(step.actions.size(), 2u);
  const auto fwd = actions_of<ForwardToIngest>(step.actions);
  ASSERT_EQ(fwd.size(), 1u);
  EXPECT_EQ(fwd[0].node_id, 7);
  const auto dack = std::get<wire::DataAckPayload>(sent(step.actions).at(0));
  EXPECT_EQ(dack.seq, 5u);
  EXPECT_EQ(dack.session_id, sid);
  EXPECT_EQ(step.machine.session(7).phase, ServerPhase::Connected);

  step = server_step(step.machine, ServerLinkDown{7}, 0);
  EXPECT_EQ(step.machine.session(7).phase, ServerPhase::KnownClient);
  EXPECT_TRUE(step.actions.empty());
}

TEST(ServerStep, UnknownSessionIsViolation) {
  const auto step = server_step(ServerMachine{}, SendDataReceived{{999, 1, 0, {}}}, 0);
  EXPECT_TRUE(sent(step.actions).empty());
  EXPECT_TRUE(actions_of<ForwardToIngest>(step.actions).empty());
  EXPECT_FALSE(actions_of<LogLine>(step.actions).empty());
}

TEST(ServerStep, SessionIdsUniqueAmongLive) {
  ServerMachine m;
  std::set<std::uint32_t> ids;
  for (NodeId n = 1; n <= 50; ++n) {
    m = server_step(m, AnnounceReceived{n, {}}, 0).machine;
    for (int k = 0; k < 3; ++k) m = server_step(m, ReqConnReceived{n, 1}, 0).machine;
  }
  for (const auto& [node, st] : m.sessions) {
    EXPECT_EQ(st.phase, ServerPhase::Connected);
    EXPECT_TRUE(ids.insert(st.session_id).second);
  }
  EXPECT_EQ(m.live.size(), 50u);
}

TEST(Link, DegenerateConfigs) {
  SimulatedLink clean({0.0, 0.0, 50, 115200, 1});
  SimulatedLink lossy({1.0, 0.0, 50, 115200, 1});
  const auto frame = wire::encode_packet(wire::HeartbeatPayload{});
  for (int i = 0; i < 1000; ++i) {
    EXPECT_TRUE(std::holds_alternative<Delivered>(clean.deliver(frame, i * 1000)));
    EXPECT_TRUE(std::holds_alternative<Dropped>(lossy.deliver(frame, i * 1000)));
  }
  EXPECT_EQ(clean.delivered(), 1000u);
  EXPECT_EQ(lossy.dropped(), 1000u);
}

TEST(Link, LatencyAndBandwidthQueueing) {
  SimulatedLink link({0.0, 0.0, 100, 8000, 1});  // 1 byte per ms
  const wire::Bytes frame(50, 0);
  EXPECT_EQ(std::get<Delivered>(link.deliver(frame, 0)).at, 150);
  EXPECT_EQ(std::get<Delivered>(link.deliver(frame, 0)).at, 200);
  EXPECT_EQ(std::get<Delivered>(link.deliver(frame, 1000)).at, 1150);
}

TEST(Link, DeterministicForSeed) {
  auto run = [](std::uint64_t seed) {
    SimulatedLink link({0.3, 0.05, 10, 115200, seed});
    std::vector<int> trace;
    for (int i = 0; i < 2000; ++i) trace.push_back(static_cast<int>(link.deliver(wire::Bytes(20), i).index()));
    return trace;
  };
  EXPECT_EQ(run(5), run(5));
  EXPECT_NE(run(5), run(6));
}

TEST(Link, ValidateRejectsBadProbabilities) {
  EXPECT_THROW((LinkConfig{1.5, 0, 0, 1, 0}.validate()), ConfigError);
  EXPECT_THROW((LinkConfig{0, -0.1, 0, 1, 0}.validate()), ConfigError);
  EXPECT_NO_THROW((LinkConfig{0.2, 0.01, 0, 115200, 0}.validate()));
}

namespace {

// Minimal two-machine harness over SimulatedLink in both directions.
struct Harness {
  struct Item {
    Millis at;
    std::uint64_t order;
    std::function<void()> run;
    bool operator>(const Item& o) const { return std::tie(at, order) > std::tie(o.at, o.order); }
  };

  explicit Harness(LinkConfig cfg) : up(cfg), down([&] { cfg.rng_seed ^= 0x9E3779B97F4A7C15ull; return cfg; }()) {}

  void at(Millis t, std::function<void()> f) { q.push({t, order++, std::move(f)}); }

  void node_event(const NodeEvent& e) {
    const auto phase_before = node.state.phase;
    auto step = node_step(std::move(node), e, now);
    node = std::move(step.session);
    for (const auto& a : step.actions) {
      if (const auto* f = std::get_if<SendFrame>(&a)) {
        if (std::holds_alternative<wire::SendDataPayload>(f->packet)) {
          EXPECT_TRUE(phase_before == NodePhase::Streaming || node.state.phase == NodePhase::Streaming);
        }
        send_from_node(*f);
      } else if (const auto* t = std::get_if<SetTimer>(&a)) {
        const auto gen = ++timer_gen;
        at(t->at, [this, gen] { if (gen == timer_gen) node_event(TimerFired{}); });
      }
    }
  }

  void server_event(const ServerEvent& e) {
    auto step = server_step(std::move(server), e, now);
    server = std::move(step.machine);
    for (const auto& a : step.actions) {
      if (const auto* fwd = std::get_if<ForwardToIngest>(&a)) {
        received.insert(fwd->payload.seq);
      } else if (const auto* f = std::get_if<SendFrame>(&a)) {
        if (const auto* ack = std::get_if<wire::DataAckPayload>(&f->packet)) {
          EXPECT_TRUE(received.count(ack->seq));
        }
        send_from_server(*f);
      }
    }
  }

  void sever() {
    ++severs;
    ++link_epoch;
    at(now, [this] { node_event(LinkDown{}); });
    at(now, [this] { server_event(ServerLinkDown{1}); });
  }

  void send_from_node(const SendFrame& f) {
    if (f.channel == Channel::Modem) {
      at(now + 100, [this] { node_event(IpAssigned{wire::Ipv4::from_octets(10, 64, 0, 1)}); });
      return;
    }
    const auto bytes = wire::encode_packet(f.packet);
    if (f.channel == Channel::Control) {
      at(now + 100, [this, bytes] { deliver_to_server(bytes); });
      return;
    }
    const auto outcome = up.deliver(bytes, now);
    if (const auto* d = std::get_if<Delivered>(&outcome)) {
      const auto epoch = link_epoch;
      at(d->at, [this, bytes, epoch] { if (epoch == link_epoch) deliver_to_server(bytes); });
    } else if (std::holds_alternative<LinkSevered>(outcome)) {
      sever();
    }
  }

  void send_from_server(const SendFrame& f) {
    const auto bytes = wire::encode_packet(f.packet);
    if (f.channel == Channel::Control) {
      at(now + 100, [this, bytes] { deliver_to_node(bytes); });
      return;
    }
    const auto outcome = down.deliver(bytes, now);
    if (const auto* d = std::get_if<Delivered>(&outcome)) {
      const auto epoch = link_epoch;
      at(d->at, [this, bytes, epoch] { if (epoch == link_epoch) deliver_to_node(bytes); });
    } else if (std::holds_alternative<LinkSevered>(outcome)) {
      sever();
    }
  }

  void deliver_to_server(const wire::Bytes& b) {
    const auto p = wire::decode_packet(b);
    if (const auto* a = std::get_if<wire::SendIpPayload>(&p)) server_event(AnnounceReceived{a->node_id, a->ip});
    else if (const auto* r = std::get_if<wire::ReqConnPayload>(&p)) server_event(ReqConnReceived{r->node_id, r->nonce});
    else if (const auto* d = std::get_if<wire::SendDataPayload>(&p)) server_event(SendDataReceived{*d});
  }

  void deliver_to_node(const wire::Bytes& b) {
    const auto p = wire::decode_packet(b);
    if (const auto* s = std::get_if<wire::ServerIpPayload>(&p)) node_event(ServerIpReceived{s->ip});
    else if (const auto* c = std::get_if<wire::ConnAckPayload>(&p)) node_event(ConnAckReceived{c->session_id, c->nonce});
    else if (const auto* d = std::get_if<wire::DataAckPayload>(&p)) node_event(DataAckReceived{d->seq, d->session_id});
  }

  // Runs until the queue drains or `limit` simulated ms pass.
  void run(Millis limit) {
    while (!q.empty() && now <= limit) {
      auto item = q.top();
      q.pop();
      now = item.at;
      item.run();
      if (node.queue.empty() && node.state.phase == NodePhase::Streaming && generated_all) break;
    }
  }

  SimulatedLink up;
  SimulatedLink down;
  NodeSession node;
  ServerMachine server;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  std::uint64_t order = 0;
  std::uint64_t timer_gen = 0;
  std::uint64_t link_epoch = 0;
  std::size_t severs = 0;
  Millis now = 0;
  bool generated_all = false;
  std::set<Seq> received;
};

}  // namespace

TEST(Liveness, TenThousandBatchesUnderTwentyPercentDrop) {
  Harness h({0.2, 0.0, 20, 115200, 42});
  h.at(0, [&] { h.node_event(TimerFired{}); });
  h.at(1, [&] {
    h.node_event(ReadingsAvailable{readings(10000)});
    h.generated_all = true;
  });
  h.run(24LL * 3600 * 1000);
  EXPECT_TRUE(h.node.queue.empty());
  EXPECT_EQ(h.received.size(), 10000u);
  EXPECT_GT(h.up.dropped(), 0u);
}

TEST(Liveness, RecoversFromSevers) {
  Harness h({0.1, 0.002, 20, 115200, 3});
  h.at(0, [&] { h.node_event(TimerFired{}); });
  h.at(1, [&] {
    h.node_event(ReadingsAvailable{readings(3000)});
    h.generated_all = true;
  });
  h.run(24LL * 3600 * 1000);
  EXPECT_TRUE(h.node.queue.empty());
  EXPECT_EQ(h.received.size(), 3000u);
  EXPECT_GT(h.severs, 0u);
  EXPECT_GT(h.node.recoveries, 0u);
}

TEST(Trace, LineFormat) {
  EXPECT_EQ(trace_line(1500, "node", 7, "Streaming", "TimerFired", "SendData"),
            "1500,node,7,Streaming,TimerFired,SendData");
}
