#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "ews/alert.hpp"
#include "ews/analytics.hpp"
#include "ews/config.hpp"
#include "ews/ingest.hpp"

namespace ews::report {

struct EventRow {
  NodeId node_id = 0;
  analytics::RainEvent event;
  std::optional<double> caine_threshold;  // nullopt outside the curve's domain
  std::optional<bool> exceeds_caine;
};

struct ForecastRow {
  NodeId node_id = 0;
  SensorKind sensor = SensorKind::RainGauge;
  Timestamp last_ts = 0;
  double last_value = 0.0;
  std::optional<std::vector<double>> forecast;
};

struct StoreAnalysis {
  std::vector<EventRow> events;
  std::vector<ForecastRow> forecasts;
  std::size_t records = 0;
};

StoreAnalysis analyze_store(const ingest::Repository& repo, const AnalysisSettings& settings,
                            int horizon);

enum class Format { Text, Csv };

void print_events(std::ostream& out, const std::vector<EventRow>& rows, Format f);
void print_forecasts(std::ostream& out, const std::vector<ForecastRow>& rows, Format f);
void print_alerts(std::ostream& out, const std::vector<alert::Notification>& rows, Format f);

// Parses the CSV emitted by print_events back into rows (for round-trip checks
// and downstream tooling).
std::vector<EventRow> parse_events_csv(std::istream& in);

}  // namespace ews::report
