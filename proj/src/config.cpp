#include "ews/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

namespace ews {

namespace {

namespace pt = boost::property_tree;

std::string snake_name(SensorKind k) {
  switch (k) {
    case SensorKind::RainGauge: return "rain_gauge";
    case SensorKind::Piezometer: return "piezometer";
    case SensorKind::Extensometer: return "extensometer";
    case SensorKind::Inclinometer: return "inclinometer";
    case SensorKind::Tiltmeter: return "tiltmeter";
  }
  return "unknown";
}

std::string trim(std::string s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {}

  std::optional<std::string> raw(const std::string& key) const {
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(key, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  template <class T>
  std::optional<T> number(const std::string& key) {
    auto text = raw(key);
    if (!text) return std::nullopt;
    T v{};
    auto [ptr, ec] = std::from_chars(text->data(), text->data() + text->size(), v);
    if (text->empty() || ec != std::errc{} || ptr != text->data() + text->size()) {
      invalid_.push_back(key + " = '" + *text + "' is not a number");
      return std::nullopt;
    }
    return v;
  }

  template <class T>
  T required(const std::string& key) {
    if (!raw(key)) {
      missing_.push_back(key);
      return T{};
    }
    return number<T>(key).value_or(T{});
  }

  template <class T>
  void optional(const std::string& key, T& target) {
    if (auto v = number<T>(key)) target = *v;
  }

  void invalid(std::string msg) { invalid_.push_back(std::move(msg)); }

  void throw_if_errors() const {
    if (missing_.empty() && invalid_.empty()) return;
    std::ostringstream os;
    os << "invalid configuration:";
    if (!missing_.empty()) {
      os << " missing keys:";
      for (const auto& k : missing_) os << ' ' << k;
      os << ';';
    }
    for (const auto& msg : invalid_) os << ' ' << msg << ';';
    throw ConfigError(os.str());
  }

 private:
  const pt::ptree& tree_;
  std::vector<std::string> missing_;
  std::vector<std::string> invalid_;
};

}  // namespace

Config parse_config(std::istream& in) {
  pt::ptree tree;
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& ex) {
    throw ConfigError("config line " + std::to_string(ex.line()) + ": " + ex.message());
  }
  Reader r(tree);
  Config c;

  auto& th = c.thresholds;
  th.mt_rain_mm_per_h = r.required<double>("thresholds.mt_rain_mm_per_h");
  th.mt_pore_kpa = r.required<double>("thresholds.mt_pore_kpa");
  th.mt_displacement_mm = r.required<double>("thresholds.mt_displacement_mm");
  th.mt_inclination_deg = r.required<double>("thresholds.mt_inclination_deg");
  r.optional("thresholds.hold_period_s", th.hold_period_s);
  r.optional("thresholds.prediction_horizon", th.prediction_horizon);

  auto& an = c.analysis;
  r.optional("thresholds.ar_order", an.ar_order);
  double dry_gap_h = static_cast<double>(an.dry_gap_s) / 3600.0;
  double lookback_h = static_cast<double>(an.antecedent_lookback_s) / 3600.0;
  r.optional("thresholds.dry_gap_h", dry_gap_h);
  r.optional("thresholds.antecedent_lookback_h", lookback_h);
  an.dry_gap_s = static_cast<std::int64_t>(dry_gap_h * 3600.0);
  an.antecedent_lookback_s = static_cast<std::int64_t>(lookback_h * 3600.0);
  r.optional("analysis.intensity_window_s", an.intensity_window_s);
  r.optional("analysis.history_samples", an.history_samples);
  r.optional("analysis.history_window_s", an.history_window_s);

  for (auto kind : kAllSensors) {
    const std::string base = "calibration." + snake_name(kind);
    auto gain = r.number<double>(base + "_gain");
    double offset = 0.0;
    r.optional(base + "_offset", offset);
    if (!gain) {
      c.warnings.push_back("no calibration for " + std::string(sensor_name(kind)) +
                           "; its readings will be rejected");
      continue;
    }
    try {
      c.calibration.set({kind, *gain, offset});
    } catch (const CalibrationError& ex) {
      r.invalid(ex.what());
    }
  }

  auto& link = c.link;
  r.optional("link.drop_probability", link.drop_probability);
  r.optional("link.disconnect_probability", link.disconnect_probability_per_frame);
  r.optional("link.latency_ms", link.latency_ms);
  r.optional("link.bandwidth_bps", link.bandwidth_bps);
  r.optional("link.seed", link.rng_seed);

  auto& proto = c.protocol;
  r.optional("protocol.retry_interval_ms", proto.retry_interval_ms);
  r.optional("protocol.connect_timeout_ms", proto.connect_timeout_ms);
  r.optional("protocol.ack_timeout_ms", proto.ack_timeout_ms);
  r.optional("protocol.window", proto.window);
  r.optional("protocol.max_silent_rounds", proto.max_silent_rounds);

  if (auto dir = r.raw("store.dir"); dir && !dir->empty()) c.store_dir = *dir;
  r.optional("scenario.start_unix", c.scenario_start);

  if (auto enabled = r.raw("sinks.enabled")) {
    c.sinks = SinkSettings{false, false, false, std::nullopt};
    std::stringstream ss(*enabled);
    std::string item;
    bool webhook = false;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item == "console") c.sinks.console = true;
      else if (item == "file") c.sinks.file = true;
      else if (item == "sms") c.sinks.sms = true;
      else if (item == "webhook") webhook = true;
      else if (!item.empty()) r.invalid("sinks.enabled: unknown sink '" + item + "'");
    }
    if (webhook) {
      auto url = r.raw("sinks.webhook_url");
      if (!url || url->empty()) r.invalid("sinks.enabled lists webhook but sinks.webhook_url is empty");
      else c.sinks.webhook_url = *url;
    }
  }

  r.throw_if_errors();
  try {
    th.validate();
    link.validate();
  } catch (const ConfigError& ex) {
    throw ConfigError(std::string("invalid configuration: ") + ex.what());
  }
  if (an.ar_order < 1) throw ConfigError("invalid configuration: thresholds.ar_order must be >= 1");
  if (an.dry_gap_s <= 0 || an.antecedent_lookback_s <= 0 || an.intensity_window_s <= 0) {
    throw ConfigError("invalid configuration: dry gap, lookback and intensity window must be positive");
  }
  if (proto.window == 0) throw ConfigError("invalid configuration: protocol.window must be >= 1");
  return c;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse_config(in);
}

std::optional<std::filesystem::path> resolve_config_path(const std::string& flag_value) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv("EWS_CONFIG"); env != nullptr && *env != '\0') return env;
  return std::nullopt;
}

}  // namespace ews
