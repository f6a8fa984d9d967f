#pragma once

#include <filesystem>
#include <memory>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include "ews/alert.hpp"

namespace ews::alert {

inline constexpr std::string_view kAlertsFile = "alerts.ndjson";
inline constexpr std::string_view kSmsOutboxFile = "sms_outbox.txt";

// {ts, level, mode, source, exceedances, message} as one line of JSON.
std::string to_json_line(const Notification& n);
Notification from_json_line(std::string_view line);

// Reads alerts.ndjson; malformed lines are skipped and counted in `bad`.
std::vector<Notification> load_alert_log(const std::filesystem::path& file, std::size_t* bad = nullptr);

class Sink {
 public:
  virtual ~Sink() = default;
  virtual std::string name() const = 0;
  // Throws on delivery failure.
  virtual void deliver(const Notification& n) = 0;
};

class ConsoleSink final : public Sink {
 public:
  explicit ConsoleSink(std::ostream& out) : out_(out) {}
  std::string name() const override { return "console"; }
  void deliver(const Notification& n) override;

 private:
  std::ostream& out_;
};

// Appends one ND-JSON record per notification.
class FileSink final : public Sink {
 public:
  explicit FileSink(std::filesystem::path file) : file_(std::move(file)) {}
  std::string name() const override { return "file"; }
  void deliver(const Notification& n) override;

 private:
  std::filesystem::path file_;
};

// Stands in for the SMS gateway: one rendered message per line.
class SmsOutboxSink final : public Sink {
 public:
  explicit SmsOutboxSink(std::filesystem::path file) : file_(std::move(file)) {}
  std::string name() const override { return "sms"; }
  void deliver(const Notification& n) override;

 private:
  std::filesystem::path file_;
};

// POSTs the ND-JSON record as the request body.
class WebhookSink final : public Sink {
 public:
  explicit WebhookSink(std::string url, int timeout_ms = 2000);
  std::string name() const override { return "webhook"; }
  void deliver(const Notification& n) override;

 private:
  std::string origin_;  // scheme://host[:port]
  std::string path_;
  int timeout_ms_;
};

struct DeliveryResult {
  enum class Status { Delivered, Failed, Suppressed };

  std::string sink;
  Status status = Status::Delivered;
  int attempts = 0;
  std::string error;
};

// Fans a notification out to every sink. A failing sink is retried once and
// never prevents delivery to the others. Each (level, since) key reaches a
// given sink at most once.
class Dispatcher {
 public:
  void add(std::unique_ptr<Sink> sink);
  std::vector<DeliveryResult> dispatch(const Notification& n);

  // Marks a key as already handled by every sink (used after a restart).
  void mark_dispatched(AlertLevel level, Timestamp since);

  std::size_t sink_count() const noexcept { return sinks_.size(); }

 private:
  using Key = std::tuple<std::size_t, AlertLevel, Timestamp>;
  std::vector<std::unique_ptr<Sink>> sinks_;
  std::set<Key> done_;
  std::set<std::pair<AlertLevel, Timestamp>> restored_;
};

}  // namespace ews::alert
