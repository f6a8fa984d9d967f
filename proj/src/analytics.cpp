#include "ews/analytics.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace ews::analytics {

namespace {

void check_ordered(std::span<const RainSample> rain) {
  for (std::size_t i = 0; i < rain.size(); ++i) {
    if (!std::isfinite(rain[i].mm)) {
      throw InvalidInput("rain sample " + std::to_string(i) + " is not finite");
    }
    if (i > 0 && rain[i].timestamp < rain[i - 1].timestamp) {
      throw InvalidInput("rain series not time-ordered at sample " + std::to_string(i));
    }
  }
}

}  // namespace

std::int64_t nominal_interval(std::span<const RainSample> rain) {
  std::vector<std::int64_t> gaps;
  for (std::size_t i = 1; i < rain.size(); ++i) {
    const auto gap = rain[i].timestamp - rain[i - 1].timestamp;
    if (gap > 0) gaps.push_back(gap);
  }
  if (gaps.empty()) return 3600;
  auto mid = gaps.begin() + static_cast<std::ptrdiff_t>(gaps.size() / 2);
  std::nth_element(gaps.begin(), mid, gaps.end());
  return *mid;
}

std::vector<RainEvent> segment_events(std::span<const RainSample> rain, std::int64_t dry_gap) {
  if (dry_gap <= 0) throw InvalidInput("dry_gap must be positive");
  check_ordered(rain);
  const std::int64_t nominal = nominal_interval(rain);

  std::vector<RainEvent> events;
  std::optional<Timestamp> prev_distinct;  // last timestamp strictly before the current one
  Timestamp current_time = 0;
  for (std::size_t i = 0; i < rain.size(); ++i) {
    const auto& s = rain[i];
    if (i == 0 || s.timestamp != current_time) {
      if (i > 0) prev_distinct = current_time;
      current_time = s.timestamp;
    }
    if (!(s.mm > 0.0)) continue;
    const std::int64_t dt = prev_distinct ? std::min(s.timestamp - *prev_distinct, nominal) : nominal;
    const Timestamp interval_start = s.timestamp - dt;
    if (events.empty() || interval_start - events.back().end >= dry_gap) {
      events.push_back(RainEvent{interval_start, s.timestamp, 0.0, 0.0, 0.0, 0});
    }
    auto& ev = events.back();
    ev.end = s.timestamp;
    ev.total_mm += s.mm;
    ++ev.samples;
  }
  for (auto& ev : events) {
    ev.duration_h = static_cast<double>(ev.end - ev.start) / kSecondsPerHour;
    ev.mean_intensity_mm_per_h = ev.total_mm / ev.duration_h;
  }
  return events;
}

double antecedent_rainfall(std::span<const RainSample> rain, Timestamp now, std::int64_t lookback) {
  if (lookback <= 0) throw InvalidInput("lookback must be positive");
  double sum = 0.0;
  for (const auto& s : rain) {
    if (s.timestamp >= now - lookback && s.timestamp <= now) sum += s.mm;
  }
  return sum;
}

double rain_intensity(std::span<const RainSample> rain, Timestamp now, std::int64_t window) {
  if (window <= 0) throw InvalidInput("intensity window must be positive");
  double sum = 0.0;
  for (const auto& s : rain) {
    if (s.timestamp > now - window && s.timestamp <= now) sum += s.mm;
  }
  return sum / (static_cast<double>(window) / kSecondsPerHour);
}

std::optional<RainEvent> active_event(std::span<const RainSample> rain, Timestamp now,
                                      std::int64_t dry_gap) {
  auto events = segment_events(rain, dry_gap);
  if (events.empty()) return std::nullopt;
  const auto& last = events.back();
  if (now - last.end >= dry_gap || last.end > now) return std::nullopt;
  return last;
}

RainfallFeatures rainfall_features(std::span<const RainSample> rain, Timestamp window_start,
                                   Timestamp now, std::int64_t lookback, std::int64_t dry_gap) {
  RainfallFeatures f;
  for (const auto& s : rain) {
    if (s.timestamp >= window_start && s.timestamp <= now) f.total_mm += std::max(s.mm, 0.0);
  }
  f.antecedent_mm = std::max(antecedent_rainfall(rain, now, lookback), 0.0);
  f.active_event = active_event(rain, now, dry_gap);
  return f;
}

double caine_threshold(double duration_h) {
  if (!(duration_h > kCaineMinHours && duration_h < kCaineMaxHours)) {
    throw DomainError("rainfall duration " + std::to_string(duration_h) +
                      " h outside (0.167, 500)");
  }
  return kCaineCoefficient * std::pow(duration_h, kCaineExponent);
}

std::optional<bool> exceeds_caine(const RainEvent& event) {
  const double d = event.duration_h;
  if (!(d > kCaineMinHours && d < kCaineMaxHours)) return std::nullopt;
  return event.mean_intensity_mm_per_h >= caine_threshold(d);
}

ARModel ar_fit(std::span<const double> series, int order) {
  if (order < 1) throw InvalidInput("AR order must be >= 1");
  const auto n = static_cast<Eigen::Index>(series.size());
  const Eigen::Index p = order;
  if (n < 2 * p + 2) {
    throw InsufficientData("AR(" + std::to_string(order) + ") needs at least " +
                           std::to_string(2 * p + 2) + " samples, got " + std::to_string(n));
  }
  for (std::size_t i = 0; i < series.size(); ++i) {
    if (!std::isfinite(series[i])) {
      throw InvalidInput("series value " + std::to_string(i) + " is not finite");
    }
  }

  const Eigen::Map<const Eigen::VectorXd> x(series.data(), n);
  const Eigen::Index rows = n - p;
  Eigen::MatrixXd lags(rows, p);
  for (Eigen::Index i = 0; i < p; ++i) lags.col(i) = x.segment(p - 1 - i, rows);
  const Eigen::VectorXd y = x.tail(rows);

  // Fitting on centred columns is the intercept model with the intercept
  // eliminated; a constant series gives an all-zero design and phi = 0.
  const Eigen::RowVectorXd lag_means = lags.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd centred = lags.rowwise() - lag_means;
  const Eigen::VectorXd y_centred = y.array() - y_mean;

  ARModel m;
  m.order = order;
  m.coefficients = centred.completeOrthogonalDecomposition().solve(y_centred);
  m.intercept = y_mean - lag_means.dot(m.coefficients);
  const Eigen::VectorXd residual = (y.array() - m.intercept).matrix() - lags * m.coefficients;
  m.residual_rms = std::sqrt(residual.squaredNorm() / static_cast<double>(rows));
  return m;
}

std::vector<double> ar_forecast(const ARModel& model, std::span<const double> history, int horizon) {
  if (horizon < 1) throw InvalidInput("forecast horizon must be >= 1");
  const auto p = static_cast<std::size_t>(model.order);
  if (model.coefficients.size() != model.order) throw InvalidInput("malformed AR model");
  if (history.size() < p) {
    throw InsufficientData("forecast needs " + std::to_string(p) + " history values, got " +
                           std::to_string(history.size()));
  }
  std::vector<double> window(history.end() - static_cast<std::ptrdiff_t>(p), history.end());
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(horizon));
  for (int h = 0; h < horizon; ++h) {
    double next = model.intercept;
    for (std::size_t i = 0; i < p; ++i) {
      next += model.coefficients[static_cast<Eigen::Index>(i)] * window[window.size() - 1 - i];
    }
    out.push_back(next);
    window.push_back(next);
  }
  return out;
}

ARPredictor::ARPredictor(int order) : order_(order) {
  if (order < 1) throw InvalidInput("AR order must be >= 1");
}

std::optional<std::vector<double>> ARPredictor::predict(std::span<const double> history,
                                                        int horizon) const {
  if (history.size() < static_cast<std::size_t>(2 * order_ + 2)) return std::nullopt;
  return ar_forecast(ar_fit(history, order_), history, horizon);
}

}  // namespace ews::analytics
