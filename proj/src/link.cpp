#include "ews/link.hpp"

#include <algorithm>
#include <string>

namespace ews::session {

void LinkConfig::validate() const {
  auto in_unit = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!in_unit(drop_probability)) {
    throw ConfigError("link.drop_probability must be in [0,1], got " +
                      std::to_string(drop_probability));
  }
  if (!in_unit(disconnect_probability_per_frame)) {
    throw ConfigError("link.disconnect_probability must be in [0,1], got " +
                      std::to_string(disconnect_probability_per_frame));
  }
  if (latency_ms < 0) throw ConfigError("link.latency_ms must be non-negative");
  if (bandwidth_bps == 0) throw ConfigError("link.bandwidth_bps must be positive");
}

SimulatedLink::SimulatedLink(LinkConfig cfg) : cfg_(cfg), rng_(cfg.rng_seed) { cfg_.validate(); }

double SimulatedLink::uniform() {
  // 53 random bits mapped onto [0, 1); avoids the implementation-defined
  // behaviour of std::uniform_real_distribution.
  return static_cast<double>(rng_() >> 11) * 0x1.0p-53;
}

DeliveryOutcome SimulatedLink::deliver(wire::ByteView frame, Millis now) {
  const double sever_draw = uniform();
  const double drop_draw = uniform();
  if (sever_draw < cfg_.disconnect_probability_per_frame) {
    ++severed_;
    return LinkSevered{};
  }
  const auto bits = static_cast<std::uint64_t>(frame.size()) * 8u;
  const auto tx_ms = static_cast<Millis>((bits * 1000u + cfg_.bandwidth_bps - 1) / cfg_.bandwidth_bps);
  const Millis start = std::max(now, busy_until_);
  busy_until_ = start + tx_ms;
  if (drop_draw < cfg_.drop_probability) {
    ++dropped_;
    return Dropped{};
  }
  ++delivered_;
  return Delivered{busy_until_ + cfg_.latency_ms};
}

}  // namespace ews::session
