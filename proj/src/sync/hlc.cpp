#include "ehr/sync/hlc.hpp"

#include <algorithm>
#include <cstdlib>
#include <tuple>

namespace ehr::sync {

Result<Hlc> hlc_event(const Hlc& prev, Millis physical_now, const std::optional<Hlc>& observed,
                      Millis max_drift) {
  Hlc next{0, 0, prev.replica_id};
  if (!observed) {
    next.physical_ms = std::max(prev.physical_ms, physical_now);
    next.counter = next.physical_ms == prev.physical_ms ? prev.counter + 1 : 0;
    return next;
  }
  if (std::llabs(physical_now - observed->physical_ms) > max_drift) {
    return make_error(Errc::clock_drift, "observed " + std::to_string(observed->physical_ms) +
                                             " vs local " + std::to_string(physical_now));
  }
  next.physical_ms = std::max({prev.physical_ms, observed->physical_ms, physical_now});
  const bool from_prev = next.physical_ms == prev.physical_ms;
  const bool from_obs = next.physical_ms == observed->physical_ms;
  if (from_prev && from_obs) {
    next.counter = std::max(prev.counter, observed->counter) + 1;
  } else if (from_prev) {
    next.counter = prev.counter + 1;
  } else if (from_obs) {
    next.counter = observed->counter + 1;
  } else {
    next.counter = 0;
  }
  return next;
}

Hlc HlcClock::tick(Millis physical_now) {
  last_ = hlc_event(last_, physical_now).value();
  return last_;
}

Result<Hlc> HlcClock::observe(const Hlc& remote, Millis physical_now) {
  auto next = hlc_event(last_, physical_now, remote, max_drift_);
  if (next) last_ = *next;
  return next;
}

void HlcClock::witness(const Hlc& seen) {
  if (std::tie(seen.physical_ms, seen.counter) > std::tie(last_.physical_ms, last_.counter)) {
    last_.physical_ms = seen.physical_ms;
    last_.counter = seen.counter;
  }
}

void to_json(nlohmann::json& j, const Hlc& h) {
  j = nlohmann::json{{"physical_ms", h.physical_ms}, {"counter", h.counter},
                     {"replica_id", h.replica_id}};
}

void from_json(const nlohmann::json& j, Hlc& h) {
  j.at("physical_ms").get_to(h.physical_ms);
  j.at("counter").get_to(h.counter);
  j.at("replica_id").get_to(h.replica_id);
}

}  // namespace ehr::sync
