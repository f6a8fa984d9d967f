#pragma once

#include <array>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_set>
#include <vector>

#include "ews/domain.hpp"
#include "ews/wire.hpp"

namespace ews::ingest {

class CalibrationTable {
 public:
  // Throws CalibrationError when gain == 0 or is not finite.
  void set(const CalibrationConstants& c);
  const CalibrationConstants* find(SensorKind k) const;
  bool complete() const;

 private:
  std::array<std::optional<CalibrationConstants>, 5> entries_;
};

// value = gain * raw + offset.
CalibratedReading calibrate(const RawReading& r, const CalibrationConstants& c);

inline constexpr std::string_view kReadingsFile = "readings.csv";
inline constexpr std::string_view kReadingsHeader = "ts_unix,node_id,sensor,seq,value";

std::string format_record(const CalibratedReading& r);
void write_records(std::ostream& out, std::span<const CalibratedReading> records);

// Append-only reading store. Each accepted record is appended to
// <dir>/readings.csv and flushed before append() returns; the dedup index on
// (node_id, seq) is rebuilt from that file on open.
//
// One writer, any number of concurrent readers.
class Repository {
 public:
  // In-memory only.
  Repository() = default;
  // Opens (creating if needed) the store under dir and loads existing rows.
  // Unparseable rows are skipped and reported through load_warnings().
  explicit Repository(const std::filesystem::path& dir);

  Repository(const Repository&) = delete;
  Repository& operator=(const Repository&) = delete;

  // Stores records whose (node_id, seq) is unseen; returns how many.
  std::size_t append(std::span<const CalibratedReading> records);

  bool contains(NodeId node, Seq seq) const;

  // Records with from <= timestamp <= to, ordered by (timestamp, node_id, seq).
  std::vector<CalibratedReading> query_range(Timestamp from, Timestamp to,
                                             std::optional<SensorKind> sensor = std::nullopt) const;

  std::vector<CalibratedReading> all() const;
  std::size_t size() const;
  std::optional<Timestamp> latest_timestamp() const;

  const std::vector<std::string>& load_warnings() const noexcept { return warnings_; }
  std::size_t parsed_rows() const noexcept { return parsed_rows_; }
  const std::optional<std::filesystem::path>& dir() const noexcept { return dir_; }

 private:
  static std::uint64_t key(NodeId node, Seq seq) {
    return (std::uint64_t{node} << 32) | seq;
  }
  bool insert_locked(const CalibratedReading& r);

  mutable std::shared_mutex mu_;
  std::vector<CalibratedReading> records_;
  std::unordered_set<std::uint64_t> seen_;
  std::optional<std::filesystem::path> dir_;
  std::ofstream log_;
  std::vector<std::string> warnings_;
  std::size_t parsed_rows_ = 0;
};

// Calibrates every reading of a SENDDATA batch (reading i has seq + i) and
// stores the unseen ones. Throws ConfigError, storing nothing, when a
// reading's sensor has no calibration constants.
std::size_t ingest_batch(Repository& repo, const wire::SendDataPayload& payload, NodeId node_id,
                         const CalibrationTable& constants);

std::vector<RawReading> unpack_batch(const wire::SendDataPayload& payload, NodeId node_id);

}  // namespace ews::ingest
