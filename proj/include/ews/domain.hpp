#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ews {

using NodeId = std::uint16_t;
using Seq = std::uint32_t;
// Seconds since the Unix epoch.
using Timestamp = std::int64_t;
// Milliseconds since the Unix epoch, simulated or wall clock.
using Millis = std::int64_t;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class CalibrationError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class InvalidInput : public Error {
 public:
  using Error::Error;
};

enum class SensorKind : std::uint8_t {
  RainGauge = 0x01,
  Piezometer = 0x02,
  Extensometer = 0x03,
  Inclinometer = 0x04,
  Tiltmeter = 0x05,
};

inline constexpr std::array<SensorKind, 5> kAllSensors = {
    SensorKind::RainGauge, SensorKind::Piezometer, SensorKind::Extensometer,
    SensorKind::Inclinometer, SensorKind::Tiltmeter};

constexpr std::uint8_t wire_code(SensorKind k) { return static_cast<std::uint8_t>(k); }
std::optional<SensorKind> sensor_from_code(std::uint8_t code);

std::string_view sensor_name(SensorKind k);
std::optional<SensorKind> sensor_from_name(std::string_view name);
std::string_view sensor_unit(SensorKind k);

// Index into per-sensor arrays, 0..4.
constexpr std::size_t sensor_index(SensorKind k) { return wire_code(k) - 1u; }

struct RawReading {
  NodeId node_id = 0;
  Seq seq = 0;
  Timestamp timestamp = 0;
  SensorKind sensor = SensorKind::RainGauge;
  std::int32_t raw = 0;

  friend bool operator==(const RawReading&, const RawReading&) = default;
};

struct CalibratedReading {
  NodeId node_id = 0;
  Timestamp timestamp = 0;
  SensorKind sensor = SensorKind::RainGauge;
  double value = 0.0;
  Seq seq = 0;

  friend bool operator==(const CalibratedReading&, const CalibratedReading&) = default;
};

struct CalibrationConstants {
  SensorKind sensor = SensorKind::RainGauge;
  double gain = 1.0;
  double offset = 0.0;
};

enum class AlertLevel : std::uint8_t { Green = 0, Yellow = 1, Orange = 2, Red = 3 };

constexpr auto operator<=>(AlertLevel a, AlertLevel b) {
  return static_cast<std::uint8_t>(a) <=> static_cast<std::uint8_t>(b);
}

constexpr AlertLevel level_max(AlertLevel a, AlertLevel b) { return a < b ? b : a; }

std::string_view level_name(AlertLevel l);
std::optional<AlertLevel> level_from_name(std::string_view name);

// Rain gauge raw values are bucket tips per reporting interval.
double tips_to_mm(std::int64_t tip_count, double mm_per_tip);

}  // namespace ews
