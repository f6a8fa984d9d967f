#pragma once

#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "ews/alert.hpp"
#include "ews/ingest.hpp"
#include "ews/link.hpp"
#include "ews/session.hpp"

namespace ews {

struct AnalysisSettings {
  int ar_order = 2;
  std::int64_t dry_gap_s = 6 * 3600;
  std::int64_t antecedent_lookback_s = 72 * 3600;
  // Window for the current rain intensity, (now - w, now].
  std::int64_t intensity_window_s = 3600;
  // Samples per sensor handed to the predictor.
  std::size_t history_samples = 64;
  // How far back the alert engine looks for rain events and predictor input.
  std::int64_t history_window_s = 7 * 24 * 3600;
};

struct SinkSettings {
  bool console = true;
  bool file = true;
  bool sms = true;
  std::optional<std::string> webhook_url;
};

struct Config {
  alert::Thresholds thresholds;
  AnalysisSettings analysis;
  ingest::CalibrationTable calibration;
  session::LinkConfig link;
  session::NodeConfig protocol;
  std::optional<std::filesystem::path> store_dir;
  SinkSettings sinks;
  // Unix time the replayed scenario starts at.
  Timestamp scenario_start = 1270080000;  // 2010-04-01T00:00:00Z
  std::vector<std::string> warnings;
};

// INI-style key/value file. Throws ConfigError listing every missing or
// invalid key at once.
Config parse_config(std::istream& in);
Config load_config(const std::filesystem::path& path);

// Config path from the flag, else the EWS_CONFIG environment variable.
std::optional<std::filesystem::path> resolve_config_path(const std::string& flag_value);

}  // namespace ews
