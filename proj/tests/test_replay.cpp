#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ews/replay.hpp"
#include "ews/report.hpp"

using namespace ews;

namespace {

struct TempDir {
  TempDir() {
    static int counter = 0;
    path = std::filesystem::temp_directory_path() /
           ("ews_replay_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path);
  }
  ~TempDir() { std::filesystem::remove_all(path); }
  std::filesystem::path path;
};

std::size_t line_count(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string l; std::getline(in, l);) ++n;
  return n;
}

Config storm_config() { return load_config(std::filesystem::path(EWS_FIXTURES_DIR) / "storm.conf"); }

nodesim::Scenario storm() { return nodesim::load_scenario(std::filesystem::path(EWS_FIXTURES_DIR) / "seven_day_rain.csv"); }

nodesim::Scenario flat(std::size_t timestamps, std::int64_t step_s = 60) {
  nodesim::Scenario s;
  s.name = "flat";
  for (std::size_t i = 0; i < timestamps; ++i) {
    for (auto k : kAllSensors) s.steps.push_back({static_cast<std::int64_t>(i) * step_s, k, 1});
  }
  nodesim::finalize(s);
  return s;
}

std::string summary_text(const replay::ReplaySummary& s) {
  std::ostringstream out;
  replay::print_summary(out, s);
  return out.str();
}

}  // namespace

TEST(Replay, EmptyScenarioIsAllGreen) {
  auto opt = replay::options_from_config(storm_config());
  const auto s = replay::run_replay(nodesim::Scenario{"empty", {}, 0}, 1, opt);
  EXPECT_EQ(s.readings_generated, 0u);
  EXPECT_EQ(s.readings_stored, 0u);
  ASSERT_EQ(s.alert_timeline.size(), 1u);
  EXPECT_EQ(s.alert_timeline[0].level, AlertLevel::Green);
  EXPECT_TRUE(s.all_acked);
}

TEST(Replay, DeterministicForSeed) {
  auto opt = replay::options_from_config(storm_config());
  opt.link.drop_probability = 0.2;
  opt.link.disconnect_probability_per_frame = 0.01;
  const auto a = replay::run_replay(flat(300), 1, opt);
  const auto b = replay::run_replay(flat(300), 1, opt);
  EXPECT_EQ(summary_text(a), summary_text(b));
  opt.link.rng_seed += 1;
  EXPECT_NE(summary_text(a), summary_text(replay::run_replay(flat(300), 1, opt)));
}

TEST(Replay, TraceLinesHaveSixFields) {
  auto opt = replay::options_from_config(storm_config());
  std::ostringstream trace;
  opt.trace = &trace;
  replay::run_replay(flat(5), 3, opt);
  std::istringstream in(trace.str());
  std::size_t n = 0;
  bool saw_node = false, saw_server = false;
  for (std::string l; std::getline(in, l); ++n) {
    int fields = 1;
    bool quoted = false;
    for (char c : l) {
      if (c == '"') quoted = !quoted;
      else if (c == ',' && !quoted) ++fields;
    }
    EXPECT_EQ(fields, 6) << l;
    saw_node |= l.find(",node,3,") != std::string::npos;
    saw_server |= l.find(",server,3,") != std::string::npos;
  }
  EXPECT_GT(n, 10u);
  EXPECT_TRUE(saw_node);
  EXPECT_TRUE(saw_server);
}

TEST(Replay, ExactlyOnceUnderLossAndDisconnects) {
  auto opt = replay::options_from_config(storm_config());
  opt.link.drop_probability = 0.2;
  opt.forced_disconnects = {600'000, 1'800'000, 3'600'000};
  const auto s = replay::run_replay(flat(1000), 1, opt);
  EXPECT_TRUE(s.all_acked);
  EXPECT_EQ(s.readings_generated, 5000u);
  EXPECT_EQ(s.readings_stored, 5000u);
  EXPECT_EQ(s.forced_disconnects, 3u);
  EXPECT_GE(s.reconnects, 3u);
  EXPECT_GT(s.frames_dropped, 0u);
}

TEST(Replay, StormClimbsTheLadder) {
  TempDir dir;
  auto opt = replay::options_from_config(storm_config());
  opt.store_dir = dir.path;
  std::ostringstream console;
  opt.console = &console;
  const auto s = replay::run_replay(storm(), 1, opt);
  ASSERT_TRUE(s.all_acked);
  std::vector<AlertLevel> levels;
  for (const auto& e : s.alert_timeline) levels.push_back(e.level);
  EXPECT_EQ(levels, (std::vector<AlertLevel>{AlertLevel::Green, AlertLevel::Yellow, AlertLevel::Orange, AlertLevel::Red}));
  EXPECT_EQ(line_count(dir.path / alert::kAlertsFile), 3u);
  EXPECT_EQ(line_count(dir.path / alert::kSmsOutboxFile), 3u);
  std::istringstream con(console.str());
  std::size_t console_lines = 0;
  for (std::string l; std::getline(con, l);) console_lines += l.rfind("[ALERT", 0) == 0;
  EXPECT_EQ(console_lines, 3u);
}

TEST(Replay, AnalyzeAgreesWithSummaryAndCsvRoundTrips) {
  TempDir dir;
  const auto cfg = storm_config();
  auto opt = replay::options_from_config(cfg);
  opt.store_dir = dir.path;
  const auto s = replay::run_replay(storm(), 1, opt);
  const ingest::Repository repo(dir.path);
  const auto analysis = report::analyze_store(repo, cfg.analysis, cfg.thresholds.prediction_horizon);
  EXPECT_EQ(analysis.events.size(), s.rain_events);
  EXPECT_EQ(analysis.records, s.readings_stored);
  std::ostringstream csv;
  report::print_events(csv, analysis.events, report::Format::Csv);
  std::istringstream in(csv.str());
  const auto back = report::parse_events_csv(in);
  ASSERT_EQ(back.size(), analysis.events.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].event.start, analysis.events[i].event.start);
    EXPECT_EQ(back[i].event.end, analysis.events[i].event.end);
    EXPECT_EQ(back[i].event.total_mm, analysis.events[i].event.total_mm);
    EXPECT_EQ(back[i].event.mean_intensity_mm_per_h, analysis.events[i].event.mean_intensity_mm_per_h);
    EXPECT_EQ(back[i].caine_threshold, analysis.events[i].caine_threshold);
    EXPECT_EQ(back[i].exceeds_caine, analysis.events[i].exceeds_caine);
  }
}

TEST(Replay, RestartKeepsEverythingAcked) {
  TempDir dir;
  auto opt = replay::options_from_config(storm_config());
  opt.store_dir = dir.path;
  opt.link.drop_probability = 0.1;
  opt.server_restart_at = 30LL * 60 * 1000;
  std::vector<CalibratedReading> before;
  std::vector<CalibratedReading> on_disk;
  opt.before_restart = [&](const ingest::Repository& repo) {
    before = repo.all();
    on_disk = ingest::Repository(dir.path).all();
  };
  const auto s = replay::run_replay(flat(200), 1, opt);
  EXPECT_EQ(s.server_restarts, 1u);
  EXPECT_TRUE(s.all_acked);
  ASSERT_FALSE(before.empty());
  EXPECT_LT(before.size(), 1000u);
  EXPECT_EQ(on_disk, before);
  const ingest::Repository after(dir.path);
  EXPECT_EQ(after.size(), 1000u);
  for (const auto& r : before) EXPECT_TRUE(after.contains(r.node_id, r.seq));
}

TEST(Station, MissingCalibrationRejectsBatch) {
  StationSettings settings;
  settings.thresholds = {10, 50, 25, 5, 3, 1800};
  settings.calibration.set({SensorKind::RainGauge, 0.2, 0});
  BaseStation station(settings, std::nullopt, alert::Dispatcher{});
  const auto ok = station.on_batch(1, {1, 1, 100, {{SensorKind::RainGauge, 5}}}, 100);
  EXPECT_EQ(ok.stored, 1u);
  const auto bad = station.on_batch(1, {1, 2, 100, {{SensorKind::Tiltmeter, 5}}}, 100);
  EXPECT_TRUE(bad.rejected);
  EXPECT_EQ(station.rejected_batches(), 1u);
  EXPECT_EQ(station.repository().size(), 1u);
}

TEST(Station, RestoresAlertStateAfterRestart) {
  TempDir dir;
  StationSettings settings;
  settings.thresholds = {10, 50, 25, 5, 3, 1800};
  for (auto k : kAllSensors) settings.calibration.set({k, 1.0, 0});
  SinkSettings sinks{false, true, false, std::nullopt};
  std::ostringstream console;
  {
    BaseStation s(settings, dir.path, make_dispatcher(sinks, dir.path, console));
    const auto out = s.on_batch(1, {1, 1, 1000, {{SensorKind::RainGauge, 20}}}, 1000);
    ASSERT_EQ(out.notifications.size(), 1u);
    EXPECT_EQ(s.alert_state().active_level, AlertLevel::Yellow);
  }
  BaseStation again(settings, dir.path, make_dispatcher(sinks, dir.path, console));
  EXPECT_EQ(again.alert_state().active_level, AlertLevel::Yellow);
  EXPECT_TRUE(again.on_batch(1, {1, 2, 1060, {{SensorKind::RainGauge, 20}}}, 1060).notifications.empty());
  EXPECT_EQ(line_count(dir.path / alert::kAlertsFile), 1u);
}

TEST(Station, MultipleNodesCombineByMax) {
  ingest::Repository repo;
  repo.append(std::vector<CalibratedReading>{{1, 100, SensorKind::Piezometer, 10.0, 1},
                                             {2, 100, SensorKind::Piezometer, 70.0, 1},
                                             {1, 100, SensorKind::RainGauge, 2.0, 2}});
  const auto in = build_alert_inputs(repo, AnalysisSettings{}, 3, 100);
  ASSERT_TRUE(in.snapshot.current.pore_kpa);
  EXPECT_EQ(*in.snapshot.current.pore_kpa, 70.0);
  ASSERT_TRUE(in.snapshot.current.rain_mm_per_h);
  EXPECT_EQ(*in.snapshot.current.rain_mm_per_h, 2.0);
  EXPECT_FALSE(in.snapshot.current.tiltmeter_deg);
}
