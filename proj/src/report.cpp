#include "ews/report.hpp"

#include <array>
#include <charconv>
#include <iomanip>
#include <map>
#include <sstream>

namespace ews::report {

namespace {

// Shortest representation that parses back to the same double.
std::string num(double v) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

std::string fixed(double v, int digits = 3) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string flag(const std::optional<bool>& b) {
  if (!b) return "n/a";
  return *b ? "yes" : "no";
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(item);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

template <class T>
T parse(const std::string& s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) throw InvalidInput("bad number '" + s + "'");
  return v;
}

}  // namespace

StoreAnalysis analyze_store(const ingest::Repository& repo, const AnalysisSettings& settings,
                            int horizon) {
  StoreAnalysis out;
  const auto records = repo.all();
  out.records = records.size();

  std::map<NodeId, std::vector<analytics::RainSample>> rain;
  std::map<std::pair<NodeId, SensorKind>, std::vector<const CalibratedReading*>> series;
  for (const auto& r : records) {
    if (r.sensor == SensorKind::RainGauge) rain[r.node_id].push_back({r.timestamp, r.value});
    series[{r.node_id, r.sensor}].push_back(&r);
  }

  for (const auto& [node, samples] : rain) {
    for (const auto& ev : analytics::segment_events(samples, settings.dry_gap_s)) {
      EventRow row{node, ev, std::nullopt, analytics::exceeds_caine(ev)};
      if (row.exceeds_caine) row.caine_threshold = analytics::caine_threshold(ev.duration_h);
      out.events.push_back(row);
    }
  }

  const analytics::ARPredictor predictor(settings.ar_order);
  for (const auto& [key, points] : series) {
    std::vector<double> values;
    const std::size_t first =
        points.size() > settings.history_samples ? points.size() - settings.history_samples : 0;
    for (std::size_t i = first; i < points.size(); ++i) values.push_back(points[i]->value);
    ForecastRow row{key.first, key.second, points.back()->timestamp, points.back()->value,
                    predictor.predict(values, horizon)};
    out.forecasts.push_back(std::move(row));
  }
  return out;
}

void print_events(std::ostream& out, const std::vector<EventRow>& rows, Format f) {
  if (f == Format::Csv) {
    out << "node_id,start,end,total_mm,duration_h,mean_intensity_mm_per_h,caine_threshold_mm_per_h,"
           "exceeds_caine\n";
    for (const auto& r : rows) {
      out << r.node_id << ',' << r.event.start << ',' << r.event.end << ',' << num(r.event.total_mm)
          << ',' << num(r.event.duration_h) << ',' << num(r.event.mean_intensity_mm_per_h) << ','
          << (r.caine_threshold ? num(*r.caine_threshold) : "") << ',' << flag(r.exceeds_caine)
          << '\n';
    }
    return;
  }
  out << "Rain events: " << rows.size() << '\n';
  if (rows.empty()) return;
  out << std::left << std::setw(6) << "node" << std::setw(12) << "start" << std::setw(12) << "end"
      << std::right << std::setw(11) << "total_mm" << std::setw(11) << "D_h" << std::setw(11)
      << "I_mm/h" << std::setw(11) << "caine_I" << std::setw(8) << "exceed" << '\n';
  for (const auto& r : rows) {
    out << std::left << std::setw(6) << r.node_id << std::setw(12) << r.event.start << std::setw(12)
        << r.event.end << std::right << std::setw(11) << fixed(r.event.total_mm) << std::setw(11)
        << fixed(r.event.duration_h) << std::setw(11) << fixed(r.event.mean_intensity_mm_per_h)
        << std::setw(11) << (r.caine_threshold ? fixed(*r.caine_threshold) : "-") << std::setw(8)
        << flag(r.exceeds_caine) << '\n';
  }
}

void print_forecasts(std::ostream& out, const std::vector<ForecastRow>& rows, Format f) {
  auto joined = [](const std::optional<std::vector<double>>& v, char sep, bool exact) {
    if (!v) return std::string();
    std::string s;
    for (std::size_t i = 0; i < v->size(); ++i) {
      if (i) s += sep;
      s += exact ? num((*v)[i]) : fixed((*v)[i]);
    }
    return s;
  };
  if (f == Format::Csv) {
    out << "node_id,sensor,last_ts,last_value,forecast\n";
    for (const auto& r : rows) {
      out << r.node_id << ',' << sensor_name(r.sensor) << ',' << r.last_ts << ',' << num(r.last_value)
          << ',' << joined(r.forecast, ' ', true) << '\n';
    }
    return;
  }
  out << "AR forecasts: " << rows.size() << '\n';
  for (const auto& r : rows) {
    out << "  node " << r.node_id << ' ' << std::left << std::setw(13) << sensor_name(r.sensor)
        << std::right << " last=" << fixed(r.last_value) << ' ' << sensor_unit(r.sensor) << "  next=";
    out << (r.forecast ? "[" + joined(r.forecast, ' ', false) + "]" : "(insufficient history)") << '\n';
  }
}

void print_alerts(std::ostream& out, const std::vector<alert::Notification>& rows, Format f) {
  if (f == Format::Csv) {
    out << "ts,level,mode,source,rain,pore,displacement,inclination\n";
    for (const auto& n : rows) {
      out << n.ts << ',' << level_name(n.level) << ',' << alert::mode_name(n.mode) << ','
          << alert::source_name(n.source) << ',' << n.exceedances.rain << ',' << n.exceedances.pore
          << ',' << n.exceedances.displacement << ',' << n.exceedances.inclination << '\n';
    }
    return;
  }
  out << "Alert history: " << rows.size() << '\n';
  for (const auto& n : rows) {
    out << "  " << n.ts << ' ' << std::left << std::setw(7) << level_name(n.level) << std::right
        << alert::mode_name(n.mode) << '/' << alert::source_name(n.source) << "  " << n.message << '\n';
  }
}

std::vector<EventRow> parse_events_csv(std::istream& in) {
  std::vector<EventRow> rows;
  std::string line;
  if (!std::getline(in, line)) return rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split(line);
    if (c.size() != 8) throw InvalidInput("event row needs 8 columns: " + line);
    EventRow r;
    r.node_id = parse<NodeId>(c[0]);
    r.event.start = parse<Timestamp>(c[1]);
    r.event.end = parse<Timestamp>(c[2]);
    r.event.total_mm = parse<double>(c[3]);
    r.event.duration_h = parse<double>(c[4]);
    r.event.mean_intensity_mm_per_h = parse<double>(c[5]);
    if (!c[6].empty()) r.caine_threshold = parse<double>(c[6]);
    if (c[7] == "yes") r.exceeds_caine = true;
    else if (c[7] == "no") r.exceeds_caine = false;
    rows.push_back(r);
  }
  return rows;
}

}  // namespace ews::report
