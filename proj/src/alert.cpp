#include "ews/alert.hpp"

#include <algorithm>
#include <cmath>

namespace ews::alert {

namespace {

bool reaches(const std::optional<double>& value, double mt) { return value && *value >= mt; }

std::optional<double> max_of(const std::vector<double>& v) {
  if (v.empty()) return std::nullopt;
  return *std::max_element(v.begin(), v.end());
}

void note_missing(const ParameterValues& v, std::string_view source, std::vector<std::string>* notes) {
  if (notes == nullptr) return;
  auto check = [&](const std::optional<double>& value, std::string_view what) {
    if (!value) notes->push_back(std::string(source) + " " + std::string(what) + " missing");
  };
  check(v.rain_mm_per_h, "rain");
  check(v.pore_kpa, "pore pressure");
  check(v.displacement_mm, "displacement");
  if (!v.inclinometer_deg && !v.tiltmeter_deg) check(std::nullopt, "inclination");
}

}  // namespace

std::string_view parameter_name(Parameter p) {
  switch (p) {
    case Parameter::Rain: return "rain";
    case Parameter::Pore: return "pore";
    case Parameter::Displacement: return "displacement";
    case Parameter::Inclination: return "inclination";
  }
  return "?";
}

std::string_view mode_name(Mode m) { return m == Mode::Uni ? "uni" : "multi"; }
std::string_view source_name(Source s) { return s == Source::Current ? "current" : "predicted"; }

void Thresholds::validate() const {
  auto positive = [](double v, const char* key) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("thresholds.") + key + " must be > 0");
    }
  };
  positive(mt_rain_mm_per_h, "mt_rain_mm_per_h");
  positive(mt_pore_kpa, "mt_pore_kpa");
  positive(mt_displacement_mm, "mt_displacement_mm");
  positive(mt_inclination_deg, "mt_inclination_deg");
  if (hold_period_s < 0) throw ConfigError("thresholds.hold_period_s must be >= 0");
  if (prediction_horizon < 1) throw ConfigError("thresholds.prediction_horizon must be >= 1");
}

AlertLevel multi_level(const ExceedanceSet& e) {
  if (!e.rain) return AlertLevel::Green;
  if (!e.pore) return AlertLevel::Yellow;
  if (e.displacement || e.inclination) return AlertLevel::Red;
  return AlertLevel::Orange;
}

std::vector<Parameter> uni_alerts(const ExceedanceSet& e) {
  std::vector<Parameter> out;
  if (e.rain) out.push_back(Parameter::Rain);
  if (e.pore) out.push_back(Parameter::Pore);
  if (e.displacement) out.push_back(Parameter::Displacement);
  if (e.inclination) out.push_back(Parameter::Inclination);
  return out;
}

AlertLevel uni_level(const ExceedanceSet& e) { return e.any() ? AlertLevel::Yellow : AlertLevel::Green; }

ParameterValues peak(const Forecasts& f) {
  return ParameterValues{max_of(f.rain_mm_per_h), max_of(f.pore_kpa), max_of(f.displacement_mm),
                         max_of(f.inclinometer_deg), max_of(f.tiltmeter_deg)};
}

ExceedanceSet exceedances(const ParameterValues& v, const Thresholds& th,
                          std::span<const analytics::RainEvent> active_events) {
  ExceedanceSet e;
  const bool caine = std::any_of(active_events.begin(), active_events.end(), [](const auto& ev) {
    return analytics::exceeds_caine(ev).value_or(false);
  });
  e.rain = reaches(v.rain_mm_per_h, th.mt_rain_mm_per_h) || caine;
  e.pore = reaches(v.pore_kpa, th.mt_pore_kpa);
  e.displacement = reaches(v.displacement_mm, th.mt_displacement_mm);
  e.inclination = reaches(v.inclinometer_deg, th.mt_inclination_deg) ||
                  reaches(v.tiltmeter_deg, th.mt_inclination_deg);
  return e;
}

Decisions evaluate(const Snapshot& snapshot, const Forecasts& predicted, const Thresholds& th,
                   Timestamp now, std::vector<std::string>* notes) {
  const ParameterValues ahead = peak(predicted);
  note_missing(snapshot.current, "current", notes);
  note_missing(ahead, "predicted", notes);

  const ExceedanceSet current = exceedances(snapshot.current, th, snapshot.active_events);
  const ExceedanceSet future = exceedances(ahead, th, snapshot.active_events);
  return Decisions{{
      {multi_level(current), Mode::Multi, Source::Current, current, now},
      {uni_level(current), Mode::Uni, Source::Current, current, now},
      {multi_level(future), Mode::Multi, Source::Predicted, future, now},
      {uni_level(future), Mode::Uni, Source::Predicted, future, now},
  }};
}

std::string render_message(AlertLevel level, AlertLevel previous, const ExceedanceSet& e) {
  std::string params;
  for (auto p : uni_alerts(e)) {
    if (!params.empty()) params += ", ";
    params += parameter_name(p);
  }
  if (params.empty()) params = "none";

  std::string head;
  switch (level) {
    case AlertLevel::Green:
      head = "GREEN all clear: readings below monitoring thresholds";
      break;
    case AlertLevel::Yellow:
      head = "YELLOW first-level warning: landslide possible; station beeper on, text/fax to local authority";
      break;
    case AlertLevel::Orange:
      head = "ORANGE second-level warning: SMS to authorities; keep away from the slope";
      break;
    case AlertLevel::Red:
      head = "RED third-level warning: sound sirens and loudspeakers; evacuate the area; SMS to authorities";
      break;
  }
  std::string out = head + " (exceeded: " + params + ")";
  if (level < previous) out += " [stepped down from " + std::string(level_name(previous)) + "]";
  return out;
}

AlertStep step_alert_state(const AlertState& state, const Decisions& decisions, Timestamp now,
                           std::int64_t hold_period_s) {
  const AlertDecision* top = &decisions[0];
  for (const auto& d : decisions) {
    if (d.level > top->level) top = &d;
  }
  const AlertLevel candidate = top->level;

  AlertStep out{state, {}};
  auto& st = out.state;
  auto change_to = [&](AlertLevel level) {
    const AlertLevel previous = st.active_level;
    st = AlertState{level, now, std::nullopt};
    out.notifications.push_back(Notification{now, level, previous, top->mode, top->source,
                                             top->exceedances,
                                             render_message(level, previous, top->exceedances)});
  };

  if (candidate > st.active_level) {
    change_to(candidate);
  } else if (candidate == st.active_level) {
    st.below_since.reset();
  } else {
    if (!st.below_since) st.below_since = now;
    if (now - *st.below_since >= hold_period_s) change_to(candidate);
  }
  return out;
}

}  // namespace ews::alert
