#include "ews/nodesim.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <ostream>

namespace ews::nodesim {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    auto comma = line.find(',', start);
    out.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

template <class T>
std::optional<T> parse_int(std::string_view s) {
  T v{};
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

}  // namespace

ScenarioError::ScenarioError(std::size_t line, const std::string& what)
    : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

void finalize(Scenario& s) {
  std::stable_sort(s.steps.begin(), s.steps.end(),
                   [](const ScenarioStep& a, const ScenarioStep& b) { return a.t_offset < b.t_offset; });
  s.sample_interval = 0;
  for (std::size_t i = 1; i < s.steps.size(); ++i) {
    const auto gap = s.steps[i].t_offset - s.steps[i - 1].t_offset;
    if (gap > 0 && (s.sample_interval == 0 || gap < s.sample_interval)) s.sample_interval = gap;
  }
}

Scenario parse_scenario(std::istream& in, std::string name) {
  Scenario s;
  s.name = std::move(name);
  std::string line;
  std::size_t lineno = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++lineno;
    const auto text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    if (!header_seen) {
      header_seen = true;
      const auto cols = split(text);
      if (cols.size() != 3 || cols[0] != "t_offset_s" || cols[1] != "sensor" || cols[2] != "raw") {
        throw ScenarioError(lineno, "expected header 't_offset_s,sensor,raw'");
      }
      continue;
    }
    const auto cols = split(text);
    if (cols.size() != 3) {
      throw ScenarioError(lineno, "expected 3 columns, got " + std::to_string(cols.size()));
    }
    auto offset = parse_int<std::int64_t>(cols[0]);
    if (!offset) throw ScenarioError(lineno, "bad t_offset_s '" + std::string(cols[0]) + "'");
    if (*offset < 0) throw ScenarioError(lineno, "negative t_offset_s " + std::to_string(*offset));
    auto kind = sensor_from_name(cols[1]);
    if (!kind) throw ScenarioError(lineno, "unknown sensor '" + std::string(cols[1]) + "'");
    auto raw = parse_int<std::int32_t>(cols[2]);
    if (!raw) throw ScenarioError(lineno, "bad raw value '" + std::string(cols[2]) + "'");
    s.steps.push_back({*offset, *kind, *raw});
  }
  finalize(s);
  return s;
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ScenarioError(0, "cannot open " + path.string());
  return parse_scenario(in, path.stem().string());
}

void write_scenario(std::ostream& out, const Scenario& s) {
  out << "t_offset_s,sensor,raw\n";
  for (const auto& step : s.steps) {
    out << step.t_offset << ',' << sensor_name(step.sensor) << ',' << step.raw << '\n';
  }
}

NodeSimulator::NodeSimulator(Scenario scenario, NodeId node_id, Timestamp start)
    : scenario_(std::move(scenario)), node_id_(node_id), start_(start) {
  if (start < 0) throw InvalidInput("scenario start must be non-negative");
}

std::vector<RawReading> NodeSimulator::emit_readings(Timestamp up_to) {
  std::vector<RawReading> out;
  while (cursor_ < scenario_.steps.size()) {
    const auto& step = scenario_.steps[cursor_];
    const Timestamp due = start_ + step.t_offset;
    if (due > up_to) break;
    out.push_back(RawReading{node_id_, next_seq_++, due, step.sensor, step.raw});
    ++cursor_;
  }
  return out;
}

std::optional<Timestamp> NodeSimulator::next_due() const {
  if (finished()) return std::nullopt;
  return start_ + scenario_.steps[cursor_].t_offset;
}

}  // namespace ews::nodesim
