#pragma once

// End-to-end replay: one simulated node streams a scenario through the lossy
// link model into a base station, all driven by a discrete-event simulated
// clock. Runs are deterministic for a given seed.

#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ews/config.hpp"
#include "ews/link.hpp"
#include "ews/nodesim.hpp"
#include "ews/session.hpp"
#include "ews/station.hpp"

namespace ews::replay {

struct ReplayOptions {
  StationSettings station;
  session::LinkConfig link;
  session::NodeConfig protocol;
  SinkSettings sinks;
  std::optional<std::filesystem::path> store_dir;
  Timestamp start = 1270080000;
  // Simulated seconds per wall-clock second; 0 runs unpaced.
  double speedup = 0.0;
  // Offsets from scenario start at which the data link is cut.
  std::vector<Millis> forced_disconnects;
  // Offset at which the server process is killed and restarted from its
  // store. Requires store_dir.
  std::optional<Millis> server_restart_at;
  // Called with the dying station's store just before the restart.
  std::function<void(const ingest::Repository&)> before_restart;
  // Modem and control-channel delivery delay.
  Millis control_latency_ms = 1000;
  // Give up this long after the last reading was generated.
  Millis drain_limit_ms = 48LL * 3600 * 1000;
  std::ostream* console = nullptr;  // console sink target; null disables it
  std::ostream* trace = nullptr;    // `ts,side,node_id,state,event,action` lines
};

struct TimelineEntry {
  Timestamp ts = 0;
  AlertLevel level = AlertLevel::Green;
  alert::Mode mode = alert::Mode::Multi;
  alert::Source source = alert::Source::Current;
};

struct ReplaySummary {
  std::string scenario;
  std::size_t readings_generated = 0;
  std::size_t readings_stored = 0;
  std::size_t batches_generated = 0;
  std::size_t frames_sent = 0;
  std::size_t frames_dropped = 0;
  std::size_t link_severs = 0;
  std::size_t forced_disconnects = 0;
  std::size_t reconnects = 0;  // Backoff -> Connecting -> Streaming recoveries
  std::size_t server_restarts = 0;
  std::size_t rejected_batches = 0;
  std::size_t rain_events = 0;
  bool all_acked = false;
  Millis sim_duration_ms = 0;
  // Starts with the initial Green entry.
  std::vector<TimelineEntry> alert_timeline;
  // Notifications per sink name, across the run.
  std::size_t notifications = 0;
};

void print_summary(std::ostream& out, const ReplaySummary& s);

ReplaySummary run_replay(const nodesim::Scenario& scenario, NodeId node_id, const ReplayOptions& options);

// Options from a loaded config (thresholds, calibration, link, protocol,
// sinks, store).
ReplayOptions options_from_config(const Config& config);

}  // namespace ews::replay
