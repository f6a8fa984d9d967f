#include "ews/station.hpp"

#include <algorithm>
#include <map>

#include <spdlog/spdlog.h>

namespace ews {

namespace {

using analytics::RainSample;

struct NodeSeries {
  std::vector<RainSample> rain;
  std::array<std::vector<double>, 5> values;
};

void take_max(std::optional<double>& slot, std::optional<double> v) {
  if (v && (!slot || *v > *slot)) slot = v;
}

void take_max(std::vector<double>& slot, const std::optional<std::vector<double>>& v) {
  if (!v) return;
  if (slot.empty()) {
    slot = *v;
    return;
  }
  for (std::size_t i = 0; i < slot.size() && i < v->size(); ++i) slot[i] = std::max(slot[i], (*v)[i]);
}

template <class T>
std::span<const T> tail(const std::vector<T>& v, std::size_t n) {
  const std::size_t k = std::min(n, v.size());
  return std::span<const T>(v).subspan(v.size() - k, k);
}

}  // namespace

AlertInputs build_alert_inputs(const ingest::Repository& repo, const AnalysisSettings& settings,
                               int horizon, Timestamp now) {
  const Timestamp from = now - settings.history_window_s;
  std::map<NodeId, NodeSeries> nodes;
  for (const auto& r : repo.query_range(from, now)) {
    auto& series = nodes[r.node_id];
    if (r.sensor == SensorKind::RainGauge) series.rain.push_back({r.timestamp, r.value});
    series.values[sensor_index(r.sensor)].push_back(r.value);
  }

  const analytics::ARPredictor predictor(settings.ar_order);
  AlertInputs out;
  auto& cur = out.snapshot.current;
  auto& fc = out.forecasts;
  for (const auto& [node, series] : nodes) {
    if (!series.rain.empty()) {
      take_max(cur.rain_mm_per_h,
               analytics::rain_intensity(series.rain, now, settings.intensity_window_s));
      if (auto ev = analytics::active_event(series.rain, now, settings.dry_gap_s)) {
        out.snapshot.active_events.push_back(*ev);
      }
      const double hours = static_cast<double>(analytics::nominal_interval(series.rain)) / 3600.0;
      std::vector<double> intensity;
      for (const auto& s : tail(series.rain, settings.history_samples)) intensity.push_back(s.mm / hours);
      take_max(fc.rain_mm_per_h, predictor.predict(intensity, horizon));
    }
    auto latest = [&](SensorKind k) -> std::optional<double> {
      const auto& v = series.values[sensor_index(k)];
      if (v.empty()) return std::nullopt;
      return v.back();
    };
    auto forecast = [&](SensorKind k) {
      return predictor.predict(tail(series.values[sensor_index(k)], settings.history_samples), horizon);
    };
    take_max(cur.pore_kpa, latest(SensorKind::Piezometer));
    take_max(cur.displacement_mm, latest(SensorKind::Extensometer));
    take_max(cur.inclinometer_deg, latest(SensorKind::Inclinometer));
    take_max(cur.tiltmeter_deg, latest(SensorKind::Tiltmeter));
    take_max(fc.pore_kpa, forecast(SensorKind::Piezometer));
    take_max(fc.displacement_mm, forecast(SensorKind::Extensometer));
    take_max(fc.inclinometer_deg, forecast(SensorKind::Inclinometer));
    take_max(fc.tiltmeter_deg, forecast(SensorKind::Tiltmeter));
  }
  return out;
}

alert::Dispatcher make_dispatcher(const SinkSettings& sinks,
                                  const std::optional<std::filesystem::path>& dir,
                                  std::ostream& console) {
  alert::Dispatcher d;
  if (sinks.console) d.add(std::make_unique<alert::ConsoleSink>(console));
  if (dir) {
    if (sinks.file) d.add(std::make_unique<alert::FileSink>(*dir / alert::kAlertsFile));
    if (sinks.sms) d.add(std::make_unique<alert::SmsOutboxSink>(*dir / alert::kSmsOutboxFile));
  }
  if (sinks.webhook_url) d.add(std::make_unique<alert::WebhookSink>(*sinks.webhook_url));
  return d;
}

BaseStation::BaseStation(StationSettings settings, std::optional<std::filesystem::path> store_dir,
                         alert::Dispatcher dispatcher)
    : settings_(std::move(settings)),
      repo_(store_dir ? std::make_unique<ingest::Repository>(*store_dir)
                      : std::make_unique<ingest::Repository>()),
      dispatcher_(std::move(dispatcher)) {
  settings_.thresholds.validate();
  if (store_dir) {
    for (const auto& w : repo_->load_warnings()) spdlog::warn("{}", w);
    // Resume the alert ladder where the previous run left it.
    const auto history = alert::load_alert_log(*store_dir / alert::kAlertsFile);
    for (const auto& n : history) dispatcher_.mark_dispatched(n.level, n.since());
    if (!history.empty()) {
      state_ = alert::AlertState{history.back().level, history.back().ts, std::nullopt};
    }
  }
}

BatchOutcome BaseStation::on_batch(NodeId node, const wire::SendDataPayload& payload, Timestamp now) {
  std::lock_guard lock(mu_);
  BatchOutcome out;
  try {
    out.stored = ingest::ingest_batch(*repo_, payload, node, settings_.calibration);
  } catch (const ConfigError& ex) {
    ++rejected_;
    out.rejected = true;
    out.error = ex.what();
    spdlog::error("batch seq {} from node {} rejected: {}", payload.seq, node, ex.what());
    return out;
  }
  out.notifications = evaluate_locked(now);
  return out;
}

std::vector<alert::Notification> BaseStation::evaluate(Timestamp now) {
  std::lock_guard lock(mu_);
  return evaluate_locked(now);
}

std::vector<alert::Notification> BaseStation::evaluate_locked(Timestamp now) {
  const auto inputs =
      build_alert_inputs(*repo_, settings_.analysis, settings_.thresholds.prediction_horizon, now);
  const auto decisions = alert::evaluate(inputs.snapshot, inputs.forecasts, settings_.thresholds, now);
  last_decisions_ = decisions;
  auto step = alert::step_alert_state(state_, decisions, now, settings_.thresholds.hold_period_s);
  state_ = step.state;
  for (const auto& n : step.notifications) {
    timeline_.push_back(n);
    for (const auto& r : dispatcher_.dispatch(n)) {
      if (r.status == alert::DeliveryResult::Status::Failed) {
        spdlog::error("sink {} failed after {} attempts: {}", r.sink, r.attempts, r.error);
      }
    }
  }
  return step.notifications;
}

alert::AlertState BaseStation::alert_state() const {
  std::lock_guard lock(mu_);
  return state_;
}

std::vector<alert::Notification> BaseStation::timeline() const {
  std::lock_guard lock(mu_);
  return timeline_;
}

std::optional<alert::Decisions> BaseStation::last_decisions() const {
  std::lock_guard lock(mu_);
  return last_decisions_;
}

}  // namespace ews
