#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include "ews/domain.hpp"

namespace ews::nodesim {

struct ScenarioStep {
  std::int64_t t_offset = 0;  // seconds from scenario start
  SensorKind sensor = SensorKind::RainGauge;
  std::int32_t raw = 0;

  friend bool operator==(const ScenarioStep&, const ScenarioStep&) = default;
};

struct Scenario {
  std::string name;
  std::vector<ScenarioStep> steps;  // sorted by t_offset, stable
  // Smallest positive gap between step offsets; 0 when fewer than two
  // distinct offsets exist.
  std::int64_t sample_interval = 0;

  std::int64_t duration() const { return steps.empty() ? 0 : steps.back().t_offset; }
};

class ScenarioError : public Error {
 public:
  ScenarioError(std::size_t line, const std::string& what);
  std::size_t line() const noexcept { return line_; }

 private:
  std::size_t line_;
};

// CSV with header `t_offset_s,sensor,raw`; sensor by name (RainGauge, ...).
// Blank lines and lines starting with '#' are skipped.
Scenario parse_scenario(std::istream& in, std::string name = "scenario");
Scenario load_scenario(const std::filesystem::path& path);

void write_scenario(std::ostream& out, const Scenario& s);

// Recomputes sample_interval after the steps have been sorted.
void finalize(Scenario& s);

// Replays a scenario for one node. Steps become RawReadings once the clock
// passes scenario start + t_offset; sequence numbers are gapless from 1.
class NodeSimulator {
 public:
  NodeSimulator(Scenario scenario, NodeId node_id, Timestamp start);

  // All not-yet-emitted steps due at or before up_to.
  std::vector<RawReading> emit_readings(Timestamp up_to);

  std::optional<Timestamp> next_due() const;
  bool finished() const noexcept { return cursor_ == scenario_.steps.size(); }
  std::size_t emitted() const noexcept { return cursor_; }

  const Scenario& scenario() const noexcept { return scenario_; }
  Timestamp start() const noexcept { return start_; }
  NodeId node_id() const noexcept { return node_id_; }

 private:
  Scenario scenario_;
  NodeId node_id_;
  Timestamp start_;
  std::size_t cursor_ = 0;
  Seq next_seq_ = 1;
};

}  // namespace ews::nodesim
