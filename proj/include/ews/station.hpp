#pragma once

#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "ews/alert.hpp"
#include "ews/config.hpp"
#include "ews/ingest.hpp"
#include "ews/sinks.hpp"

namespace ews {

struct StationSettings {
  alert::Thresholds thresholds;
  AnalysisSettings analysis;
  ingest::CalibrationTable calibration;
};

// Builds the alert engine inputs from stored readings at time `now`. Values
// from several nodes are combined by taking the maximum, so a parameter is
// exceeded when any node exceeds it.
struct AlertInputs {
  alert::Snapshot snapshot;
  alert::Forecasts forecasts;
};

AlertInputs build_alert_inputs(const ingest::Repository& repo, const AnalysisSettings& settings,
                               int horizon, Timestamp now);

alert::Dispatcher make_dispatcher(const SinkSettings& sinks, const std::optional<std::filesystem::path>& dir,
                                  std::ostream& console);

struct BatchOutcome {
  std::size_t stored = 0;
  bool rejected = false;
  std::string error;
  std::vector<alert::Notification> notifications;
};

// The base-station pipeline behind the server session: calibrate, dedup and
// store each batch, then run one alert evaluation.
class BaseStation {
 public:
  BaseStation(StationSettings settings, std::optional<std::filesystem::path> store_dir,
              alert::Dispatcher dispatcher);

  BatchOutcome on_batch(NodeId node, const wire::SendDataPayload& payload, Timestamp now);
  std::vector<alert::Notification> evaluate(Timestamp now);

  const ingest::Repository& repository() const noexcept { return *repo_; }
  alert::AlertState alert_state() const;
  // Notifications raised by this instance, in order.
  std::vector<alert::Notification> timeline() const;
  std::optional<alert::Decisions> last_decisions() const;
  std::size_t rejected_batches() const noexcept { return rejected_; }

 private:
  std::vector<alert::Notification> evaluate_locked(Timestamp now);

  StationSettings settings_;
  std::unique_ptr<ingest::Repository> repo_;
  alert::Dispatcher dispatcher_;
  mutable std::mutex mu_;
  alert::AlertState state_;
  std::vector<alert::Notification> timeline_;
  std::optional<alert::Decisions> last_decisions_;
  std::size_t rejected_ = 0;
};

}  // namespace ews
