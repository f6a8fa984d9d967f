#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ews/analytics.hpp"
#include "ews/domain.hpp"

namespace ews::alert {

enum class Parameter : std::uint8_t { Rain, Pore, Displacement, Inclination };

std::string_view parameter_name(Parameter p);

// Monitoring thresholds (MT). No defaults exist for the four MT values; they
// must come from configuration.
struct Thresholds {
  double mt_rain_mm_per_h = 0.0;
  double mt_pore_kpa = 0.0;
  double mt_displacement_mm = 0.0;
  double mt_inclination_deg = 0.0;
  int prediction_horizon = 3;
  std::int64_t hold_period_s = 1800;

  // Throws ConfigError unless every MT is > 0, hold >= 0 and horizon >= 1.
  void validate() const;
};

struct ExceedanceSet {
  bool rain = false;
  bool pore = false;
  bool displacement = false;
  bool inclination = false;

  bool any() const { return rain || pore || displacement || inclination; }
  friend bool operator==(const ExceedanceSet&, const ExceedanceSet&) = default;
};

// Rain-gated ladder:
//   Red    rain && pore && (displacement || inclination)
//   Orange rain && pore
//   Yellow rain
//   Green  otherwise
AlertLevel multi_level(const ExceedanceSet& e);

// Parameters at or above their MT, in Parameter order.
std::vector<Parameter> uni_alerts(const ExceedanceSet& e);

// Level of a uni-parameter decision: Yellow when any single parameter is
// exceeded, Green otherwise.
AlertLevel uni_level(const ExceedanceSet& e);

enum class Mode : std::uint8_t { Uni, Multi };
enum class Source : std::uint8_t { Current, Predicted };

std::string_view mode_name(Mode m);
std::string_view source_name(Source s);

struct AlertDecision {
  AlertLevel level = AlertLevel::Green;
  Mode mode = Mode::Multi;
  Source source = Source::Current;
  ExceedanceSet exceedances;
  Timestamp timestamp = 0;
};

// Latest value per parameter in comparison units. Missing entries never
// exceed.
struct ParameterValues {
  std::optional<double> rain_mm_per_h;
  std::optional<double> pore_kpa;
  std::optional<double> displacement_mm;
  std::optional<double> inclinometer_deg;
  std::optional<double> tiltmeter_deg;
};

struct Snapshot {
  ParameterValues current;
  // Open rain events (one per rain gauge at most).
  std::vector<analytics::RainEvent> active_events;
};

struct Forecasts {
  std::vector<double> rain_mm_per_h;
  std::vector<double> pore_kpa;
  std::vector<double> displacement_mm;
  std::vector<double> inclinometer_deg;
  std::vector<double> tiltmeter_deg;
};

// Each parameter's forecast reduced to its maximum over the horizon.
ParameterValues peak(const Forecasts& f);

ExceedanceSet exceedances(const ParameterValues& v, const Thresholds& th,
                          std::span<const analytics::RainEvent> active_events);

inline constexpr std::size_t kDecisionCount = 4;
using Decisions = std::array<AlertDecision, kDecisionCount>;

// The four alarm paths, in this order: (current, multi), (current, uni),
// (predicted, multi), (predicted, uni). Rain counts as exceeded when the
// intensity reaches MT or an open event reaches the Caine curve.
Decisions evaluate(const Snapshot& snapshot, const Forecasts& predicted, const Thresholds& th,
                   Timestamp now, std::vector<std::string>* notes = nullptr);

struct AlertState {
  AlertLevel active_level = AlertLevel::Green;
  Timestamp since = 0;
  std::optional<Timestamp> below_since;

  friend bool operator==(const AlertState&, const AlertState&) = default;
};

struct Notification {
  Timestamp ts = 0;
  AlertLevel level = AlertLevel::Green;
  AlertLevel previous = AlertLevel::Green;
  Mode mode = Mode::Multi;
  Source source = Source::Current;
  ExceedanceSet exceedances;
  std::string message;

  // Idempotence key is (level, since); a level change always starts at ts.
  Timestamp since() const { return ts; }
};

std::string render_message(AlertLevel level, AlertLevel previous, const ExceedanceSet& e);

struct AlertStep {
  AlertState state;
  std::vector<Notification> notifications;
};

// Escalates immediately to the highest decision level; steps down only after
// every decision has stayed below the active level for hold_period_s.
AlertStep step_alert_state(const AlertState& state, const Decisions& decisions, Timestamp now,
                           std::int64_t hold_period_s);

}  // namespace ews::alert
