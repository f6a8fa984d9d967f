#include "ews/domain.hpp"

namespace ews {

namespace {

struct SensorInfo {
  SensorKind kind;
  std::string_view name;
  std::string_view unit;
};

constexpr std::array<SensorInfo, 5> kSensorInfo = {{
    {SensorKind::RainGauge, "RainGauge", "mm"},
    {SensorKind::Piezometer, "Piezometer", "kPa"},
    {SensorKind::Extensometer, "Extensometer", "mm"},
    {SensorKind::Inclinometer, "Inclinometer", "deg"},
    {SensorKind::Tiltmeter, "Tiltmeter", "deg"},
}};

constexpr std::array<std::string_view, 4> kLevelNames = {"Green", "Yellow", "Orange", "Red"};

}  // namespace

std::optional<SensorKind> sensor_from_code(std::uint8_t code) {
  if (code < 0x01 || code > 0x05) return std::nullopt;
  return static_cast<SensorKind>(code);
}

std::string_view sensor_name(SensorKind k) { return kSensorInfo[sensor_index(k)].name; }

std::optional<SensorKind> sensor_from_name(std::string_view name) {
  for (const auto& info : kSensorInfo) {
    if (info.name == name) return info.kind;
  }
  return std::nullopt;
}

std::string_view sensor_unit(SensorKind k) { return kSensorInfo[sensor_index(k)].unit; }

std::string_view level_name(AlertLevel l) { return kLevelNames[static_cast<std::size_t>(l)]; }

std::optional<AlertLevel> level_from_name(std::string_view name) {
  for (std::size_t i = 0; i < kLevelNames.size(); ++i) {
    if (kLevelNames[i] == name) return static_cast<AlertLevel>(i);
  }
  return std::nullopt;
}

double tips_to_mm(std::int64_t tip_count, double mm_per_tip) {
  if (!(mm_per_tip > 0.0)) {
    throw CalibrationError("mm_per_tip must be positive");
  }
  if (tip_count < 0) {
    throw InvalidInput("tip count must be non-negative");
  }
  return static_cast<double>(tip_count) * mm_per_tip;
}

}  // namespace ews
