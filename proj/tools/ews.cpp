// ews: node, server, replay, analyze and report in one binary.

#include <atomic>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "ews/config.hpp"
#include "ews/nodesim.hpp"
#include "ews/replay.hpp"
#include "ews/report.hpp"
#include "ews/sinks.hpp"
#include "ews/station.hpp"
#include "ews/transport.hpp"

namespace {

constexpr int kOk = 0;
constexpr int kRuntime = 1;
constexpr int kUsage = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop.store(true); }

struct Common {
  std::string config;
  std::string store;
  std::string format = "text";
  std::string log_level = "warn";
};

ews::Config require_config(const std::string& flag) {
  auto path = ews::resolve_config_path(flag);
  if (!path) throw ews::ConfigError("no configuration: pass --config or set EWS_CONFIG");
  auto cfg = ews::load_config(*path);
  for (const auto& w : cfg.warnings) spdlog::warn("config: {}", w);
  return cfg;
}

// Analysis-only commands run without a config file if none is given.
std::optional<ews::Config> optional_config(const std::string& flag) {
  if (!ews::resolve_config_path(flag)) return std::nullopt;
  return require_config(flag);
}

std::filesystem::path store_dir(const Common& c, const std::optional<ews::Config>& cfg) {
  if (!c.store.empty()) return c.store;
  if (cfg && cfg->store_dir) return *cfg->store_dir;
  throw ews::ConfigError("no store directory: pass --store or set [store] dir");
}

ews::report::Format format_of(const std::string& s) {
  return s == "csv" ? ews::report::Format::Csv : ews::report::Format::Text;
}

int run_replay_cmd(const Common& c, const std::string& scenario_path, ews::NodeId node_id,
                   std::optional<std::uint64_t> seed, double speedup, const std::string& trace_path,
                   const std::vector<double>& disconnects, std::optional<double> restart_at) {
  const auto cfg = require_config(c.config);
  auto options = ews::replay::options_from_config(cfg);
  if (!c.store.empty()) options.store_dir = c.store;
  if (seed) options.link.rng_seed = *seed;
  options.speedup = speedup;
  options.console = &std::cout;
  for (double s : disconnects) options.forced_disconnects.push_back(static_cast<ews::Millis>(s * 1000));
  if (restart_at) {
    if (!options.store_dir) throw ews::ConfigError("--restart-at needs a store directory");
    options.server_restart_at = static_cast<ews::Millis>(*restart_at * 1000);
  }
  std::ofstream trace;
  if (!trace_path.empty()) {
    trace.open(trace_path);
    if (!trace) throw ews::Error("cannot write trace file " + trace_path);
    options.trace = &trace;
  }
  const auto scenario = ews::nodesim::load_scenario(scenario_path);
  const auto summary = ews::replay::run_replay(scenario, node_id, options);
  ews::replay::print_summary(std::cout, summary);
  return summary.all_acked ? kOk : kRuntime;
}

int run_server_cmd(const Common& c, const std::string& listen, bool sim, const std::string& scenario_path,
                   double speedup, double duration) {
  const auto cfg = require_config(c.config);
  auto dir = c.store.empty() ? cfg.store_dir : std::optional<std::filesystem::path>(c.store);
  if (!dir) throw ews::ConfigError("no store directory: pass --store or set [store] dir");

  if (sim && !scenario_path.empty()) {
    auto options = ews::replay::options_from_config(cfg);
    options.store_dir = dir;
    options.speedup = speedup;
    options.console = &std::cout;
    const auto summary = ews::replay::run_replay(ews::nodesim::load_scenario(scenario_path), 1, options);
    ews::replay::print_summary(std::cout, summary);
    return summary.all_acked ? kOk : kRuntime;
  }

  ews::BaseStation station(ews::StationSettings{cfg.thresholds, cfg.analysis, cfg.calibration}, dir,
                           ews::make_dispatcher(cfg.sinks, dir, std::cout));
  for (const auto& w : station.repository().load_warnings()) spdlog::warn("store: {}", w);

  std::thread timer;
  if (duration > 0) {
    timer = std::thread([duration] {
      const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(duration);
      while (!g_stop.load() && std::chrono::steady_clock::now() < until) {
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      g_stop.store(true);
    });
  }

  int rc = kOk;
  if (sim) {
    std::cerr << "server: simulated transport, no clients attached\n";
    while (!g_stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(20));
  } else {
    try {
      ews::transport::Listener listener(ews::transport::parse_endpoint(listen));
      std::cerr << "server: listening on port " << listener.port() << '\n';
      const auto stats = ews::transport::serve(listener, station, g_stop);
      std::cerr << "server: " << stats.connections << " connections, " << stats.batches << " batches, "
                << stats.violations << " protocol warnings\n";
    } catch (const ews::ConfigError&) {
      throw;
    } catch (const ews::Error& ex) {
      std::cerr << "error: " << ex.what() << '\n';
      rc = kRuntime;
    }
  }
  g_stop.store(true);
  if (timer.joinable()) timer.join();
  std::cerr << "server: " << station.repository().size() << " readings in store\n";
  return rc;
}

int run_node_cmd(const Common& c, const std::string& connect, const std::string& scenario_path,
                 ews::NodeId node_id, double speedup) {
  const auto cfg = optional_config(c.config);
  ews::transport::NodeRunOptions options;
  options.server = ews::transport::parse_endpoint(connect);
  if (cfg) {
    options.protocol = cfg->protocol;
    options.start = cfg->scenario_start;
  } else {
    options.start = ews::Config{}.scenario_start;
  }
  options.protocol.node_id = node_id;
  options.speedup = speedup;
  const auto scenario = ews::nodesim::load_scenario(scenario_path);
  const auto stats = ews::transport::run_node(scenario, options, g_stop);
  std::cout << "readings generated  " << stats.readings << '\n'
            << "batches acked       " << stats.acked_batches << '\n'
            << "connections         " << stats.connects << '\n'
            << "recoveries          " << stats.recoveries << '\n'
            << "all acked           " << (stats.all_acked ? "yes" : "no") << '\n';
  return stats.all_acked ? kOk : kRuntime;
}

int run_analysis_cmd(const Common& c, bool full) {
  const auto cfg = optional_config(c.config);
  const auto dir = store_dir(c, cfg);
  if (!std::filesystem::is_directory(dir)) throw ews::Error("store directory not found: " + dir.string());
  const ews::AnalysisSettings settings = cfg ? cfg->analysis : ews::AnalysisSettings{};
  const int horizon = cfg ? cfg->thresholds.prediction_horizon : ews::alert::Thresholds{}.prediction_horizon;

  const ews::ingest::Repository repo(dir);
  for (const auto& w : repo.load_warnings()) std::cerr << "warning: " << w << '\n';
  if (repo.parsed_rows() == 0 && !repo.load_warnings().empty()) {
    std::cerr << "error: no parseable rows in " << (dir / "readings.csv").string() << '\n';
    return kRuntime;
  }

  const auto analysis = ews::report::analyze_store(repo, settings, horizon);
  const auto fmt = format_of(c.format);
  ews::report::print_events(std::cout, analysis.events, fmt);
  if (fmt == ews::report::Format::Csv && !full) return kOk;
  if (fmt == ews::report::Format::Csv) std::cout << '\n';
  ews::report::print_forecasts(std::cout, analysis.forecasts, fmt);
  if (full) {
    std::size_t bad = 0;
    const auto alerts = ews::alert::load_alert_log(dir / "alerts.ndjson", &bad);
    if (bad > 0) std::cerr << "warning: skipped " << bad << " unreadable alert rows\n";
    if (fmt == ews::report::Format::Csv) std::cout << '\n';
    ews::report::print_alerts(std::cout, alerts, fmt);
  }
  return kOk;
}

void add_common(CLI::App* cmd, Common& c, bool with_format) {
  cmd->add_option("--config", c.config, "Configuration file (falls back to $EWS_CONFIG)");
  cmd->add_option("--store", c.store, "Store directory (overrides [store] dir)");
  if (with_format) {
    cmd->add_option("--format", c.format, "Output format")->check(CLI::IsMember({"text", "csv"}));
  }
  cmd->add_option("--log-level", c.log_level, "trace, debug, info, warn, error or off");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Landslide early-warning telemetry: nodes, base station, replay and analysis"};
  app.require_subcommand(1);

  Common common;
  std::string scenario_path;
  std::string listen = "127.0.0.1:7100";
  std::string connect = "127.0.0.1:7100";
  std::string trace_path;
  ews::NodeId node_id = 1;
  std::optional<std::uint64_t> seed;
  double speedup = 0.0;
  double node_speedup = 3600.0;
  double duration = 0.0;
  bool sim = false;
  std::vector<double> disconnects;
  std::optional<double> restart_at;

  auto* replay = app.add_subcommand("replay", "Replay a scenario through the simulated link into a base station");
  add_common(replay, common, false);
  replay->add_option("--scenario", scenario_path, "Scenario CSV (t_offset_s,sensor,raw)")->required();
  replay->add_option("--node-id", node_id, "Node id of the simulated station");
  replay->add_option("--seed", seed, "Link RNG seed (overrides [link] seed)");
  replay->add_option("--speedup", speedup, "Simulated seconds per wall second; 0 runs unpaced")
      ->check(CLI::NonNegativeNumber);
  replay->add_option("--trace", trace_path, "Write protocol trace lines to this file");
  replay->add_option("--disconnect-at", disconnects, "Cut the data link at these scenario offsets (s)");
  replay->add_option("--restart-at", restart_at, "Kill and restart the server at this scenario offset (s)");

  auto* server = app.add_subcommand("server", "Run the base station");
  add_common(server, common, false);
  server->add_option("--listen", listen, "Listen address host:port");
  server->add_flag("--sim", sim, "Use the in-process simulated link instead of sockets");
  server->add_option("--scenario", scenario_path, "With --sim: replay this scenario from node 1");
  server->add_option("--speedup", speedup, "With --sim: simulated seconds per wall second")
      ->check(CLI::NonNegativeNumber);
  server->add_option("--duration", duration, "Stop after this many wall seconds (0 runs until SIGINT)")
      ->check(CLI::NonNegativeNumber);

  auto* node = app.add_subcommand("node", "Run one field node against a socket server");
  add_common(node, common, false);
  node->add_option("--connect", connect, "Server address host:port");
  node->add_option("--scenario", scenario_path, "Scenario CSV (t_offset_s,sensor,raw)")->required();
  node->add_option("--node-id", node_id, "Node id");
  node->add_option("--speedup", node_speedup, "Simulated seconds per wall second")
      ->check(CLI::PositiveNumber);

  auto* analyze = app.add_subcommand("analyze", "Rain events and Caine exceedances from a store");
  add_common(analyze, common, true);

  auto* report = app.add_subcommand("report", "Rain events, forecasts and alert history from a store");
  add_common(report, common, true);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  spdlog::set_level(spdlog::level::from_str(common.log_level));
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);

  try {
    if (replay->parsed()) {
      return run_replay_cmd(common, scenario_path, node_id, seed, speedup, trace_path, disconnects, restart_at);
    }
    if (server->parsed()) return run_server_cmd(common, listen, sim, scenario_path, speedup, duration);
    if (node->parsed()) return run_node_cmd(common, connect, scenario_path, node_id, node_speedup);
    if (analyze->parsed()) return run_analysis_cmd(common, false);
    if (report->parsed()) return run_analysis_cmd(common, true);
  } catch (const ews::ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const ews::nodesim::ScenarioError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntime;
  }
  return kUsage;
}
