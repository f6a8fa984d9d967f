#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ews/domain.hpp"

namespace ews::analytics {

class DomainError : public Error {
 public:
  using Error::Error;
};

class InsufficientData : public Error {
 public:
  using Error::Error;
};

// Rain accumulated over the sampling interval that ends at `timestamp`.
struct RainSample {
  Timestamp timestamp = 0;
  double mm = 0.0;
};

struct RainEvent {
  Timestamp start = 0;
  Timestamp end = 0;
  double total_mm = 0.0;
  double duration_h = 0.0;
  double mean_intensity_mm_per_h = 0.0;
  std::size_t samples = 0;  // wet samples inside the event
};

struct RainfallFeatures {
  double total_mm = 0.0;
  double antecedent_mm = 0.0;
  std::optional<RainEvent> active_event;
};

inline constexpr double kSecondsPerHour = 3600.0;
inline constexpr std::int64_t kDefaultDryGapSeconds = 6 * 3600;

// Nominal sampling interval of a series: the median positive gap between
// samples, or one hour when the series has fewer than two distinct times.
std::int64_t nominal_interval(std::span<const RainSample> rain);

// Maximal runs of wet samples; a new event starts when the rain-free span
// between two wet intervals is at least dry_gap seconds. Each wet sample
// covers (t - dt, t] with dt = min(gap to previous sample, nominal interval).
std::vector<RainEvent> segment_events(std::span<const RainSample> rain, std::int64_t dry_gap);

// Sum of samples with now - lookback <= t <= now.
double antecedent_rainfall(std::span<const RainSample> rain, Timestamp now, std::int64_t lookback);

// Mean intensity over (now - window, now], mm/h.
double rain_intensity(std::span<const RainSample> rain, Timestamp now, std::int64_t window);

// The last event if it is still open at `now`, i.e. less than dry_gap has
// passed since its final wet sample.
std::optional<RainEvent> active_event(std::span<const RainSample> rain, Timestamp now,
                                      std::int64_t dry_gap);

RainfallFeatures rainfall_features(std::span<const RainSample> rain, Timestamp window_start,
                                   Timestamp now, std::int64_t lookback, std::int64_t dry_gap);

inline constexpr double kCaineCoefficient = 14.82;
inline constexpr double kCaineExponent = -0.39;
inline constexpr double kCaineMinHours = 0.167;
inline constexpr double kCaineMaxHours = 500.0;

// I = 14.82 * D^-0.39 in mm/h for 0.167 < D < 500 hours; DomainError outside.
double caine_threshold(double duration_h);

// True when the event's mean intensity reaches or exceeds the curve; nullopt
// when its duration lies outside the curve's domain.
std::optional<bool> exceeds_caine(const RainEvent& event);

struct ARModel {
  int order = 0;
  Eigen::VectorXd coefficients;  // phi_1 .. phi_p, phi_i multiplies x_{t-i}
  double intercept = 0.0;
  double residual_rms = 0.0;
};

// Least-squares fit of x_t = c + sum_i phi_i x_{t-i}. The lag coefficients of
// a rank-deficient design take the minimum-norm solution.
ARModel ar_fit(std::span<const double> series, int order);

// Recursive multi-step forecast continuing `history`.
std::vector<double> ar_forecast(const ARModel& model, std::span<const double> history, int horizon);

class Predictor {
 public:
  virtual ~Predictor() = default;
  // Forecast of the next `horizon` values, or nullopt when the history is too
  // short to say anything.
  virtual std::optional<std::vector<double>> predict(std::span<const double> history,
                                                     int horizon) const = 0;
};

class ARPredictor final : public Predictor {
 public:
  explicit ARPredictor(int order);
  std::optional<std::vector<double>> predict(std::span<const double> history,
                                             int horizon) const override;
  int order() const noexcept { return order_; }

 private:
  int order_;
};

}  // namespace ews::analytics
