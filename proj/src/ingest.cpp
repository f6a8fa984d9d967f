#include "ews/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <mutex>
#include <sstream>

namespace ews::ingest {

namespace {

bool record_less(const CalibratedReading& a, const CalibratedReading& b) {
  if (a.timestamp != b.timestamp) return a.timestamp < b.timestamp;
  if (a.node_id != b.node_id) return a.node_id < b.node_id;
  return a.seq < b.seq;
}

template <class T>
bool parse_number(std::string_view s, T& out) {
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  return !s.empty() && ec == std::errc{} && ptr == s.data() + s.size();
}

std::optional<CalibratedReading> parse_record(std::string_view line) {
  std::array<std::string_view, 5> cols;
  std::size_t start = 0;
  for (std::size_t i = 0; i < cols.size(); ++i) {
    const auto comma = line.find(',', start);
    if ((comma == std::string_view::npos) != (i == cols.size() - 1)) return std::nullopt;
    cols[i] = line.substr(start, comma - start);
    start = comma + 1;
  }
  CalibratedReading r;
  std::uint32_t node = 0;
  if (!parse_number(cols[0], r.timestamp) || !parse_number(cols[1], node) || node > 0xFFFF ||
      !parse_number(cols[3], r.seq) || !parse_number(cols[4], r.value) || !std::isfinite(r.value)) {
    return std::nullopt;
  }
  auto kind = sensor_from_name(cols[2]);
  if (!kind) return std::nullopt;
  r.node_id = static_cast<NodeId>(node);
  r.sensor = *kind;
  return r;
}

}  // namespace

void CalibrationTable::set(const CalibrationConstants& c) {
  if (c.gain == 0.0 || !std::isfinite(c.gain) || !std::isfinite(c.offset)) {
    throw CalibrationError("calibration for " + std::string(sensor_name(c.sensor)) +
                           " needs a finite non-zero gain");
  }
  entries_[sensor_index(c.sensor)] = c;
}

const CalibrationConstants* CalibrationTable::find(SensorKind k) const {
  const auto& e = entries_[sensor_index(k)];
  return e ? &*e : nullptr;
}

bool CalibrationTable::complete() const {
  return std::all_of(entries_.begin(), entries_.end(), [](const auto& e) { return e.has_value(); });
}

CalibratedReading calibrate(const RawReading& r, const CalibrationConstants& c) {
  if (c.sensor != r.sensor) {
    throw CalibrationError("constants for " + std::string(sensor_name(c.sensor)) +
                           " applied to a " + std::string(sensor_name(r.sensor)) + " reading");
  }
  if (c.gain == 0.0) throw CalibrationError("calibration gain must be non-zero");
  return CalibratedReading{r.node_id, r.timestamp, r.sensor, c.gain * r.raw + c.offset, r.seq};
}

std::string format_record(const CalibratedReading& r) {
  std::array<char, 32> buf{};
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), r.value);
  std::string out = std::to_string(r.timestamp);
  out += ',';
  out += std::to_string(r.node_id);
  out += ',';
  out += sensor_name(r.sensor);
  out += ',';
  out += std::to_string(r.seq);
  out += ',';
  out.append(buf.data(), res.ptr);
  return out;
}

void write_records(std::ostream& out, std::span<const CalibratedReading> records) {
  out << kReadingsHeader << '\n';
  for (const auto& r : records) out << format_record(r) << '\n';
}

Repository::Repository(const std::filesystem::path& dir) : dir_(dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / kReadingsFile;
  bool needs_header = true;
  bool needs_newline = false;
  if (std::ifstream in{path, std::ios::binary}) {
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
      ++lineno;
      needs_header = false;
      needs_newline = in.eof();
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (lineno == 1 && line == kReadingsHeader) continue;
      if (line.empty()) continue;
      auto rec = parse_record(line);
      if (!rec) {
        warnings_.push_back("readings.csv line " + std::to_string(lineno) + ": unparseable row");
        continue;
      }
      ++parsed_rows_;
      if (!insert_locked(*rec)) {
        warnings_.push_back("readings.csv line " + std::to_string(lineno) + ": duplicate (node " +
                            std::to_string(rec->node_id) + ", seq " + std::to_string(rec->seq) + ")");
      }
    }
  }
  log_.open(path, std::ios::app | std::ios::binary);
  if (!log_) throw Error("cannot open " + path.string() + " for append");
  if (needs_header) {
    log_ << kReadingsHeader << '\n';
  } else if (needs_newline) {
    // torn final row from an interrupted writer
    log_ << '\n';
  }
  log_.flush();
}

bool Repository::insert_locked(const CalibratedReading& r) {
  if (!seen_.insert(key(r.node_id, r.seq)).second) return false;
  auto pos = std::upper_bound(records_.begin(), records_.end(), r, record_less);
  records_.insert(pos, r);
  return true;
}

std::size_t Repository::append(std::span<const CalibratedReading> records) {
  std::unique_lock lock(mu_);
  std::size_t added = 0;
  std::string buffer;
  for (const auto& r : records) {
    if (!insert_locked(r)) continue;
    ++added;
    if (log_.is_open()) {
      buffer += format_record(r);
      buffer += '\n';
    }
  }
  if (!buffer.empty()) {
    log_ << buffer;
    log_.flush();
    if (!log_) throw Error("write to readings.csv failed");
  }
  return added;
}

bool Repository::contains(NodeId node, Seq seq) const {
  std::shared_lock lock(mu_);
  return seen_.contains(key(node, seq));
}

std::vector<CalibratedReading> Repository::query_range(Timestamp from, Timestamp to,
                                                       std::optional<SensorKind> sensor) const {
  if (from > to) {
    throw InvalidInput("query range from " + std::to_string(from) + " > to " + std::to_string(to));
  }
  std::shared_lock lock(mu_);
  auto first = std::lower_bound(records_.begin(), records_.end(), from,
                                [](const CalibratedReading& r, Timestamp t) { return r.timestamp < t; });
  std::vector<CalibratedReading> out;
  for (auto it = first; it != records_.end() && it->timestamp <= to; ++it) {
    if (!sensor || it->sensor == *sensor) out.push_back(*it);
  }
  return out;
}

std::vector<CalibratedReading> Repository::all() const {
  std::shared_lock lock(mu_);
  return records_;
}

std::size_t Repository::size() const {
  std::shared_lock lock(mu_);
  return records_.size();
}

std::optional<Timestamp> Repository::latest_timestamp() const {
  std::shared_lock lock(mu_);
  if (records_.empty()) return std::nullopt;
  return records_.back().timestamp;
}

std::vector<RawReading> unpack_batch(const wire::SendDataPayload& payload, NodeId node_id) {
  std::vector<RawReading> out;
  out.reserve(payload.readings.size());
  for (std::size_t i = 0; i < payload.readings.size(); ++i) {
    const auto& w = payload.readings[i];
    out.push_back(RawReading{node_id, static_cast<Seq>(payload.seq + i),
                             static_cast<Timestamp>(payload.timestamp), w.sensor, w.raw});
  }
  return out;
}

std::size_t ingest_batch(Repository& repo, const wire::SendDataPayload& payload, NodeId node_id,
                         const CalibrationTable& constants) {
  const auto raw = unpack_batch(payload, node_id);
  std::vector<CalibratedReading> calibrated;
  calibrated.reserve(raw.size());
  for (const auto& r : raw) {
    const auto* c = constants.find(r.sensor);
    if (c == nullptr) {
      throw ConfigError("no calibration constants for " + std::string(sensor_name(r.sensor)));
    }
    calibrated.push_back(calibrate(r, *c));
  }
  return repo.append(calibrated);
}

}  // namespace ews::ingest
