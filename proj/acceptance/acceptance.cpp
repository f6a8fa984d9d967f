// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <spdlog/spdlog.h>
#include <unistd.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "ews/alert.hpp"
#include "ews/analytics.hpp"
#include "ews/replay.hpp"
#include "ews/wire.hpp"

using namespace ews;

namespace {

struct Check {
  std::ostringstream detail;
  bool ok = true;
  void require(bool cond, const std::string& what) {
    if (!cond && ok) detail << what;
    ok = ok && cond;
  }
};

bool run(int id, const char* title, double limit_s, const std::function<void(Check&)>& body) {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    body(c);
  } catch (const std::exception& e) {
    c.require(false, std::string("exception: ") + e.what());
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (secs >= limit_s) {
    c.require(false, "took " + std::to_string(secs) + " s, limit " + std::to_string(limit_s) + " s");
  }
  std::printf("[%s] %d %s (%.3f s, limit %.0f s)%s%s\n", c.ok ? "PASS" : "FAIL", id, title, secs, limit_s,
              c.ok ? "" : ": ", c.detail.str().c_str());
  std::fflush(stdout);
  return c.ok;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("ews_accept_" + std::to_string(::getpid()) + "_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// Bit-serial CRC-16/CCITT-FALSE.
std::uint16_t crc_oracle(const std::vector<std::uint8_t>& data) {
  std::uint16_t reg = 0xFFFF;
  for (std::uint8_t byte : data) {
    for (int bit = 7; bit >= 0; --bit) {
      const bool top = (reg & 0x8000) != 0;
      reg = static_cast<std::uint16_t>(reg << 1);
      if ((((byte >> bit) & 1) != 0) != top) reg ^= 0x1021;
    }
  }
  return reg;
}

void caine(Check& c) {
  using Big = boost::multiprecision::cpp_bin_float_50;
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const double d = 0.2 + (499.0 - 0.2) * i / 999.0;
    const double want = static_cast<double>(Big("14.82") * boost::multiprecision::pow(Big(d), Big("-0.39")));
    worst = std::max(worst, std::fabs(analytics::caine_threshold(d) - want) / want);
  }
  c.require(worst < 1e-9, "max relative error " + std::to_string(worst));
  c.require(analytics::caine_threshold(1.0) == 14.82, "D=1 is not 14.82");
  for (double bad : {0.1, 0.167, 500.0, 600.0, -1.0}) {
    bool threw = false;
    try {
      analytics::caine_threshold(bad);
    } catch (const analytics::DomainError&) {
      threw = true;
    }
    c.require(threw, "no domain error at D=" + std::to_string(bad));
  }
}

void ladder(Check& c) {
  using L = AlertLevel;
  // rain, pore, displacement, inclination bits -> level, from the warning bullets
  const L table[16] = {L::Green, L::Yellow, L::Green, L::Orange, L::Green, L::Yellow, L::Green, L::Red,
                       L::Green, L::Yellow, L::Green, L::Red,    L::Green, L::Yellow, L::Green, L::Red};
  auto set = [](unsigned b) { return alert::ExceedanceSet{(b & 1) != 0, (b & 2) != 0, (b & 4) != 0, (b & 8) != 0}; };
  for (unsigned b = 0; b < 16; ++b) {
    c.require(alert::multi_level(set(b)) == table[b], "truth table row " + std::to_string(b));
  }
  int pairs = 0;
  for (unsigned a = 0; a < 16; ++a) {
    for (unsigned b = 0; b < 16; ++b) {
      if ((a & b) != a) continue;
      ++pairs;
      c.require(alert::multi_level(set(a)) <= alert::multi_level(set(b)), "monotonicity");
    }
  }
  c.require(pairs == 81, "comparable pair count");
}

void four_way(Check& c) {
  std::mt19937_64 rng(2010);
  std::uniform_real_distribution<double> u(0, 100);
  auto maybe = [&]() -> std::optional<double> { if (rng() % 5 == 0) return std::nullopt; return u(rng); };
  auto series = [&] { std::vector<double> v(rng() % 5); for (auto& x : v) x = u(rng); return v; };
  const alert::Thresholds th{10, 50, 25, 5, 3, 1800};
  for (int i = 0; i < 1000; ++i) {
    alert::Snapshot s;
    s.current = {maybe(), maybe(), maybe(), maybe(), maybe()};
    if (rng() % 3 == 0) s.active_events.push_back({0, 3600, u(rng), 0.2 + u(rng), u(rng), 1});
    const auto d = alert::evaluate(s, {series(), series(), series(), series(), series()}, th, i);
    std::set<std::pair<alert::Mode, alert::Source>> seen;
    for (const auto& x : d) seen.insert({x.mode, x.source});
    c.require(d.size() == 4 && seen.size() == 4, "snapshot " + std::to_string(i) + " lacks a (mode, source) pair");
  }
}

void exactly_once(Check& c) {
  nodesim::Scenario s{"ten-thousand", {}, 0};
  for (int t = 0; t < 2000; ++t) {
    for (auto k : kAllSensors) s.steps.push_back({t * 60, k, t});
  }
  nodesim::finalize(s);
  replay::ReplayOptions opt;
  opt.station.thresholds = {10, 50, 25, 5, 3, 1800};
  for (auto k : kAllSensors) opt.station.calibration.set({k, 1.0, 0.0});
  opt.link = {0.2, 0.0, 200, 115200, 20100401};
  opt.sinks = {false, false, false, std::nullopt};
  opt.forced_disconnects = {10LL * 3600 * 1000, 20LL * 3600 * 1000, 30LL * 3600 * 1000};
  const auto dir = scratch("exactly_once");
  opt.store_dir = dir;
  const auto r = replay::run_replay(s, 1, opt);
  const ingest::Repository repo(dir);
  std::set<std::pair<NodeId, Seq>> keys;
  for (const auto& rec : repo.all()) keys.insert({rec.node_id, rec.seq});
  std::filesystem::remove_all(dir);
  c.require(r.readings_generated == 10000, "generated " + std::to_string(r.readings_generated));
  c.require(repo.size() == 10000, "stored " + std::to_string(repo.size()));
  c.require(keys.size() == 10000 && keys.begin()->second == 1 && keys.rbegin()->second == 10000,
            "stored keys are not exactly seq 1..10000");
  c.require(r.frames_dropped > 0, "no frames dropped");
  c.require(r.forced_disconnects == 3, "forced disconnects " + std::to_string(r.forced_disconnects));
  c.require(r.reconnects >= 1, "no Backoff->Connecting->Streaming recovery");
}

void codec(Check& c) {
  std::mt19937_64 rng(5);
  for (int i = 0; i < 10000; ++i) {
    wire::SendDataPayload p{static_cast<std::uint32_t>(rng()), static_cast<Seq>(rng()), rng(), {}};
    for (std::size_t k = rng() % 256; k > 0; --k) p.readings.push_back({kAllSensors[rng() % 5], static_cast<std::int32_t>(rng())});
    const wire::Packet packets[] = {p, wire::ReqConnPayload{static_cast<NodeId>(rng()), static_cast<std::uint32_t>(rng())},
                                    wire::DataAckPayload{static_cast<std::uint32_t>(rng()), static_cast<Seq>(rng())}};
    const auto& pk = packets[rng() % 3];
    if (wire::decode_packet(wire::encode_packet(pk)) != pk) {
      c.require(false, "round trip mismatch at " + std::to_string(i));
      break;
    }
  }
  const auto ref = wire::encode_packet(wire::SendDataPayload{7, 42, 1270080000, {{SensorKind::RainGauge, 60}, {SensorKind::Piezometer, 512}}});
  std::size_t accepted = 0;
  for (std::size_t bit = 0; bit < ref.size() * 8; ++bit) {
    auto b = ref;
    b[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
    try {
      wire::decode_frame(b);
      ++accepted;
    } catch (const wire::FrameError&) {
    }
  }
  c.require(accepted == 0, std::to_string(accepted) + " corrupted frames accepted");
  const std::string check = "123456789";
  const auto oracle = crc_oracle(std::vector<std::uint8_t>(check.begin(), check.end()));
  c.require(wire::crc16(check) == oracle, "CRC check value differs from the oracle");
}

void ar_recovery(Check& c) {
  std::mt19937_64 rng(200);
  std::uniform_real_distribution<double> init(-10, 10);
  std::vector<double> x = {init(rng), init(rng)};
  while (x.size() < 200) x.push_back(0.6 * x[x.size() - 1] - 0.2 * x[x.size() - 2] + 1.0);
  const auto m = analytics::ar_fit(x, 2);
  c.require(std::fabs(m.coefficients[0] - 0.6) < 1e-6, "phi1 " + std::to_string(m.coefficients[0]));
  c.require(std::fabs(m.coefficients[1] + 0.2) < 1e-6, "phi2 " + std::to_string(m.coefficients[1]));
  c.require(std::fabs(m.intercept - 1.0) < 1e-6, "intercept " + std::to_string(m.intercept));
  auto cont = x;
  for (int i = 0; i < 5; ++i) cont.push_back(0.6 * cont[cont.size() - 1] - 0.2 * cont[cont.size() - 2] + 1.0);
  const auto f = analytics::ar_forecast(m, x, 5);
  for (int i = 0; i < 5; ++i) c.require(std::fabs(f[i] - cont[200 + i]) < 1e-6, "forecast step " + std::to_string(i + 1));
  const std::vector<double> flat(40, 5.0);
  for (double v : analytics::ar_forecast(analytics::ar_fit(flat, 2), flat, 5)) c.require(v == 5.0, "constant forecast drifted");
}

std::size_t count_lines(const std::filesystem::path& p, const std::string& prefix = "") {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) n += l.rfind(prefix, 0) == 0;
  return n;
}

void storm(Check& c) {
  const std::filesystem::path fixtures = EWS_FIXTURES_DIR;
  const auto cfg = load_config(fixtures / "storm.conf");
  auto opt = replay::options_from_config(cfg);
  const auto dir = scratch("storm");
  opt.store_dir = dir;
  opt.speedup = 200000.0;
  std::ostringstream console;
  opt.console = &console;
  const auto r = replay::run_replay(nodesim::load_scenario(fixtures / "seven_day_rain.csv"), 1, opt);
  std::vector<AlertLevel> levels;
  std::string seq;
  for (const auto& e : r.alert_timeline) {
    levels.push_back(e.level);
    seq += std::string(seq.empty() ? "" : ">") + std::string(level_name(e.level));
  }
  c.require(levels == std::vector<AlertLevel>{AlertLevel::Green, AlertLevel::Yellow, AlertLevel::Orange, AlertLevel::Red},
            "timeline " + seq);
  for (std::size_t i = 1; i < r.alert_timeline.size(); ++i) {
    if (r.alert_timeline[i].level < r.alert_timeline[i - 1].level) {
      c.require(r.alert_timeline[i].ts - r.alert_timeline[i - 1].ts >= cfg.thresholds.hold_period_s,
                "de-escalated before the hold period");
    }
  }
  const std::size_t escalations = levels.empty() ? 0 : levels.size() - 1;
  std::istringstream con(console.str());
  std::size_t console_lines = 0;
  for (std::string l; std::getline(con, l);) console_lines += l.rfind("[ALERT", 0) == 0;
  c.require(count_lines(dir / alert::kAlertsFile) == escalations, "file sink count");
  c.require(count_lines(dir / alert::kSmsOutboxFile) == escalations, "sms sink count");
  c.require(console_lines == escalations, "console sink count");
  c.require(r.all_acked && r.readings_stored == r.readings_generated, "storm readings not all stored");
  std::filesystem::remove_all(dir);
}

void durability(Check& c) {
  nodesim::Scenario s{"restart", {}, 0};
  for (int t = 0; t < 600; ++t) {
    for (auto k : kAllSensors) s.steps.push_back({t * 60, k, t});
  }
  nodesim::finalize(s);
  replay::ReplayOptions opt;
  opt.station.thresholds = {10, 50, 25, 5, 3, 1800};
  for (auto k : kAllSensors) opt.station.calibration.set({k, 1.0, 0.0});
  opt.link = {0.2, 0.0, 200, 115200, 77};
  opt.sinks = {false, true, false, std::nullopt};
  const auto dir = scratch("durability");
  opt.store_dir = dir;
  opt.server_restart_at = 4LL * 3600 * 1000;
  std::vector<CalibratedReading> pre_kill;
  std::vector<CalibratedReading> on_disk_at_kill;
  opt.before_restart = [&](const ingest::Repository& repo) {
    pre_kill = repo.query_range(0, std::numeric_limits<Timestamp>::max());
    on_disk_at_kill = ingest::Repository(dir).query_range(0, std::numeric_limits<Timestamp>::max());
  };
  const auto r = replay::run_replay(s, 1, opt);
  const ingest::Repository after(dir);
  const auto final_rows = after.query_range(0, std::numeric_limits<Timestamp>::max());
  std::filesystem::remove_all(dir);

  c.require(r.server_restarts == 1, "server was not restarted");
  c.require(!pre_kill.empty() && pre_kill.size() < final_rows.size(), "restart did not fall mid-run");
  c.require(on_disk_at_kill == pre_kill, "store on disk at kill differs from what was acked");
  // final = pre-kill + post-restart ingest, with nothing lost or altered
  std::set<std::pair<NodeId, Seq>> pre_keys;
  for (const auto& rec : pre_kill) pre_keys.insert({rec.node_id, rec.seq});
  std::size_t kept = 0;
  for (const auto& rec : final_rows) {
    if (pre_keys.count({rec.node_id, rec.seq})) ++kept;
  }
  c.require(kept == pre_kill.size(), "pre-kill records missing after restart");
  std::vector<CalibratedReading> merged = pre_kill;
  for (const auto& rec : final_rows) {
    if (!pre_keys.count({rec.node_id, rec.seq})) merged.push_back(rec);
  }
  std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) {
    return std::tie(a.timestamp, a.node_id, a.seq) < std::tie(b.timestamp, b.node_id, b.seq);
  });
  c.require(merged == final_rows, "post-restart query differs from pre-kill store plus new ingest");
  c.require(r.all_acked && final_rows.size() == 3000, "stored " + std::to_string(final_rows.size()) + " of 3000");
}

}  // namespace

int main() {
  spdlog::set_level(spdlog::level::err);
  bool all = true;
  all &= run(1, "Caine curve fidelity", 1, caine);
  all &= run(2, "Alert ladder conformance", 1, ladder);
  all &= run(3, "Four-way alarm matrix", 5, four_way);
  all &= run(4, "Protocol end-to-end exactly-once-in-store", 60, exactly_once);
  all &= run(5, "Codec robustness", 10, codec);
  all &= run(6, "AR predictor recovery", 5, ar_recovery);
  all &= run(7, "Storm escalation reproduction", 30, storm);
  all &= run(8, "Durability across server restart", 60, durability);
  std::printf("%s\n", all ? "ALL PASS" : "SOME CRITERIA FAILED");
  return all ? 0 : 1;
}
