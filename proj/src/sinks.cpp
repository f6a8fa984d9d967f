#include "ews/sinks.hpp"

#include <fstream>

#include <httplib.h>
#include <json.hpp>

namespace ews::alert {

namespace {

using nlohmann::json;

void append_line(const std::filesystem::path& file, const std::string& line) {
  std::ofstream out(file, std::ios::app | std::ios::binary);
  if (!out) throw Error("cannot open " + file.string());
  out << line << '\n';
  out.flush();
  if (!out) throw Error("write to " + file.string() + " failed");
}

}  // namespace

std::string to_json_line(const Notification& n) {
  json j;
  j["ts"] = n.ts;
  j["level"] = level_name(n.level);
  j["mode"] = mode_name(n.mode);
  j["source"] = source_name(n.source);
  j["exceedances"] = {{"rain", n.exceedances.rain},
                      {"pore", n.exceedances.pore},
                      {"displacement", n.exceedances.displacement},
                      {"inclination", n.exceedances.inclination}};
  j["message"] = n.message;
  return j.dump();
}

Notification from_json_line(std::string_view line) {
  Notification n;
  try {
    const json j = json::parse(line);
    n.ts = j.at("ts").get<Timestamp>();
    auto level = level_from_name(j.at("level").get<std::string>());
    if (!level) throw Error("unknown level");
    n.level = *level;
    n.mode = j.at("mode").get<std::string>() == "uni" ? Mode::Uni : Mode::Multi;
    n.source = j.at("source").get<std::string>() == "predicted" ? Source::Predicted : Source::Current;
    const auto& e = j.at("exceedances");
    n.exceedances = {e.at("rain").get<bool>(), e.at("pore").get<bool>(),
                     e.at("displacement").get<bool>(), e.at("inclination").get<bool>()};
    n.message = j.at("message").get<std::string>();
  } catch (const json::exception& ex) {
    throw Error(std::string("malformed alert record: ") + ex.what());
  }
  return n;
}

std::vector<Notification> load_alert_log(const std::filesystem::path& file, std::size_t* bad) {
  std::vector<Notification> out;
  std::size_t skipped = 0;
  std::ifstream in(file);
  std::string line;
  AlertLevel previous = AlertLevel::Green;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto n = from_json_line(line);
      n.previous = previous;
      previous = n.level;
      out.push_back(std::move(n));
    } catch (const Error&) {
      ++skipped;
    }
  }
  if (bad != nullptr) *bad = skipped;
  return out;
}

void ConsoleSink::deliver(const Notification& n) {
  out_ << "[ALERT ts=" << n.ts << " " << level_name(n.level) << " " << mode_name(n.mode) << "/"
       << source_name(n.source) << "] " << n.message << std::endl;
}

void FileSink::deliver(const Notification& n) { append_line(file_, to_json_line(n)); }

void SmsOutboxSink::deliver(const Notification& n) {
  append_line(file_, std::to_string(n.ts) + " " + n.message);
}

WebhookSink::WebhookSink(std::string url, int timeout_ms) : timeout_ms_(timeout_ms) {
  const auto scheme = url.find("://");
  if (scheme == std::string::npos) throw ConfigError("webhook url needs a scheme: " + url);
  const auto slash = url.find('/', scheme + 3);
  origin_ = url.substr(0, slash);
  path_ = slash == std::string::npos ? "/" : url.substr(slash);
}

void WebhookSink::deliver(const Notification& n) {
  httplib::Client client(origin_);
  const auto sec = timeout_ms_ / 1000;
  const auto usec = (timeout_ms_ % 1000) * 1000;
  client.set_connection_timeout(sec, usec);
  client.set_read_timeout(sec, usec);
  client.set_write_timeout(sec, usec);
  auto res = client.Post(path_, to_json_line(n), "application/json");
  if (!res) throw Error("webhook " + origin_ + path_ + ": " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300) {
    throw Error("webhook " + origin_ + path_ + ": HTTP " + std::to_string(res->status));
  }
}

void Dispatcher::add(std::unique_ptr<Sink> sink) { sinks_.push_back(std::move(sink)); }

void Dispatcher::mark_dispatched(AlertLevel level, Timestamp since) {
  restored_.emplace(level, since);
}

std::vector<DeliveryResult> Dispatcher::dispatch(const Notification& n) {
  std::vector<DeliveryResult> results;
  results.reserve(sinks_.size());
  const bool restored = restored_.contains({n.level, n.since()});
  for (std::size_t i = 0; i < sinks_.size(); ++i) {
    DeliveryResult r;
    r.sink = sinks_[i]->name();
    if (restored || !done_.emplace(i, n.level, n.since()).second) {
      r.status = DeliveryResult::Status::Suppressed;
      results.push_back(std::move(r));
      continue;
    }
    r.status = DeliveryResult::Status::Failed;
    for (int attempt = 1; attempt <= 2; ++attempt) {
      r.attempts = attempt;
      try {
        sinks_[i]->deliver(n);
        r.status = DeliveryResult::Status::Delivered;
        r.error.clear();
        break;
      } catch (const std::exception& ex) {
        r.error = ex.what();
      }
    }
    results.push_back(std::move(r));
  }
  return results;
}

}  // namespace ews::alert
