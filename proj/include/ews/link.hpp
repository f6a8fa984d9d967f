#pragma once

#include <cstdint>
#include <random>
#include <variant>

#include "ews/domain.hpp"
#include "ews/wire.hpp"

namespace ews::session {

struct LinkConfig {
  double drop_probability = 0.0;
  double disconnect_probability_per_frame = 0.0;
  Millis latency_ms = 0;
  std::uint64_t bandwidth_bps = 115200;
  std::uint64_t rng_seed = 0;

  // Throws ConfigError on out-of-range fields.
  void validate() const;
};

struct Delivered {
  Millis at = 0;
  friend bool operator==(const Delivered&, const Delivered&) = default;
};
struct Dropped {
  friend bool operator==(const Dropped&, const Dropped&) = default;
};
struct LinkSevered {
  friend bool operator==(const LinkSevered&, const LinkSevered&) = default;
};

using DeliveryOutcome = std::variant<Delivered, Dropped, LinkSevered>;

// One direction of the lossy data channel. Decisions come from a seeded
// generator, so the same seed and frame sequence reproduce the same trace.
// Frames are serialized onto the wire at bandwidth_bps; a frame sent while the
// previous one is still being clocked out queues behind it.
class SimulatedLink {
 public:
  explicit SimulatedLink(LinkConfig cfg);

  DeliveryOutcome deliver(wire::ByteView frame, Millis now);

  const LinkConfig& config() const noexcept { return cfg_; }
  std::uint64_t delivered() const noexcept { return delivered_; }
  std::uint64_t dropped() const noexcept { return dropped_; }
  std::uint64_t severed() const noexcept { return severed_; }

 private:
  double uniform();

  LinkConfig cfg_;
  std::mt19937_64 rng_;
  Millis busy_until_ = 0;
  std::uint64_t delivered_ = 0;
  std::uint64_t dropped_ = 0;
  std::uint64_t severed_ = 0;
};

}  // namespace ews::session
