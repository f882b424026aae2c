#pragma once

#include <compare>
#include <cstdint>
#include <optional>
#include <string>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/common/time.hpp"

namespace ehr::sync {

/// Hybrid logical clock timestamp. Totally ordered by
/// (physical_ms, counter, replica_id).
struct Hlc {
  Millis physical_ms = 0;
  std::uint32_t counter = 0;
  std::string replica_id;

  friend auto operator<=>(const Hlc&, const Hlc&) = default;
  friend bool operator==(const Hlc&, const Hlc&) = default;
};

inline constexpr Millis kDefaultMaxDrift = kDay;

/// Next timestamp for a replica whose previous timestamp is `prev`.
///
/// Without `observed` this is a local/send event; with it, a receive event
/// that merges the remote timestamp. The result is strictly greater than
/// `prev` and, when given, strictly greater than `observed`. Fails with
/// CLOCK_DRIFT when the observed physical component is more than
/// `max_drift` away from `physical_now`.
Result<Hlc> hlc_event(const Hlc& prev, Millis physical_now,
                      const std::optional<Hlc>& observed = std::nullopt,
                      Millis max_drift = kDefaultMaxDrift);

class HlcClock {
 public:
  explicit HlcClock(std::string replica_id, Millis max_drift = kDefaultMaxDrift)
      : last_{0, 0, std::move(replica_id)}, max_drift_(max_drift) {}

  Hlc tick(Millis physical_now);
  Result<Hlc> observe(const Hlc& remote, Millis physical_now);

  /// Raises the clock so the next tick exceeds `seen` (used when rebuilding
  /// from a durable log). Never moves the clock backwards.
  void witness(const Hlc& seen);

  const Hlc& last() const noexcept { return last_; }
  const std::string& replica_id() const noexcept { return last_.replica_id; }

 private:
  Hlc last_;
  Millis max_drift_;
};

void to_json(nlohmann::json& j, const Hlc& h);
void from_json(const nlohmann::json& j, Hlc& h);

}  // namespace ehr::sync
