#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ehr/auth/audit.hpp"
#include "ehr/auth/authenticator.hpp"
#include "ehr/common/result.hpp"
#include "ehr/core/store.hpp"
#include "ehr/service.hpp"
#include "ehr/sync/replica.hpp"
#include "ehr/ussd/gateway.hpp"

namespace ehr::netsim {

enum class LinkState { up, down };
std::string_view to_string(LinkState s) noexcept;

inline constexpr std::string_view kGatewayUplink = "GATEWAY_UPLINK";
std::string internet_link(std::string_view facility_id);
std::string ussd_link(std::string_view msisdn);

struct Interval {
  Millis from_ms = 0;
  Millis to_ms = 0;
  LinkState state = LinkState::up;

  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Piecewise-constant link availability. Intervals are half-open
/// [from_ms, to_ms), ascending, contiguous and cover [0, horizon); times
/// past the last interval take its state.
class LinkSchedule {
 public:
  LinkSchedule(std::string id, Millis horizon, LinkState initial = LinkState::up,
               Millis base_latency_ms = 20, std::uint64_t jitter_seed = 0, Millis jitter_ms = 0);

  /// Replaces the intervals; they must be ascending, contiguous, start at 0
  /// and reach the horizon.
  Status set_intervals(std::vector<Interval> intervals);

  /// Forces `state` from `at` onward.
  void set_from(Millis at, LinkState state);

  LinkState state_at(Millis t) const;
  /// Times at which the link switches from DOWN to UP.
  std::vector<Millis> up_transitions() const;

  const std::string& id() const noexcept { return id_; }
  const std::vector<Interval>& intervals() const noexcept { return intervals_; }
  Millis base_latency_ms() const noexcept { return base_latency_ms_; }
  Millis jitter_ms() const noexcept { return jitter_ms_; }
  std::uint64_t jitter_seed() const noexcept { return jitter_seed_; }

 private:
  std::string id_;
  Millis horizon_;
  std::vector<Interval> intervals_;
  Millis base_latency_ms_;
  std::uint64_t jitter_seed_;
  Millis jitter_ms_;
};

struct Delivery {
  bool delivered = false;
  Millis at = 0;  // arrival time when delivered
};

struct WorldConfig {
  std::uint64_t seed = 0;
  Millis horizon_ms = 60 * kSecond;
  Millis default_latency_ms = 20;
  /// Wall-clock time of virtual time 0, as seen by stores and the gateway.
  Millis epoch_ms = 1'735'689'600'000;  // 2025-01-01T00:00:00Z
  ussd::GatewayConfig gateway;
  /// Sync each facility whenever its internet link comes back up.
  bool sync_on_link_up = false;
  /// Periodic background sync for every facility; 0 disables it.
  Millis sync_interval_ms = 0;
};

/// Per-session bookkeeping of a simulated phone.
struct PhoneSession {
  std::string msisdn;
  std::size_t exchanges = 0;
  std::size_t max_chars = 0;
  std::string last_text;
  bool closed = false;
};

/// Deterministic discrete-event world: a central store behind the service
/// layer, facility replicas, the USSD gateway, and the links between them.
/// All time is virtual; (config, commands) fully determine the trace.
class World {
 public:
  using Action = std::function<void(World&)>;

  explicit World(WorldConfig config);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  Millis now() const noexcept { return now_; }
  /// Wall-clock equivalent of a virtual time.
  Millis wall(Millis t) const noexcept { return config_.epoch_ms + t; }
  const WorldConfig& config() const noexcept { return config_; }

  // -------------------------------------------------------------- links
  void add_link(LinkSchedule schedule);
  LinkSchedule* link(std::string_view id);
  Result<LinkState> link_state(std::string_view id, Millis t) const;
  /// Records exactly one trace line: DELIVERED (with arrival time) or DROPPED.
  Result<Delivery> deliver(std::string_view message, std::string_view link_id, Millis at);
  /// Forces a link's state from now on.
  Status set_link(std::string_view id, LinkState state);

  // -------------------------------------------------------------- events
  /// Due events run in (time, insertion) order.
  void schedule(Millis at, Action action);
  /// Runs every event with time <= to_ms, then sets the clock to to_ms.
  void advance(Millis to_ms);
  std::size_t pending_events() const noexcept { return queue_.size(); }

  // -------------------------------------------------------------- components
  core::EhrStore& central() noexcept { return central_; }
  auth::AuditLog& audit() noexcept { return audit_; }
  auth::Authenticator& authenticator() noexcept { return auth_; }
  Service& service() noexcept { return service_; }
  ussd::Gateway& gateway() noexcept { return gateway_; }

  /// Registers a facility replica and its internet link.
  sync::Replica& add_replica(const std::string& facility_id);
  sync::Replica* replica(std::string_view facility_id);
  std::vector<std::string> facilities() const;
  /// Schedules the configured automatic syncs (link-up and periodic)
  /// against the current link schedules.
  void arm_auto_sync();
  /// Brings every replica up to date with the central store without using
  /// the network (initial provisioning).
  Status provision_replicas();

  // -------------------------------------------------------------- actions
  /// Commits at a facility replica, or at the central store for "central".
  Result<sync::ChangeEvent> write(std::string_view at, std::string_view actor,
                                  const core::Mutation& m);
  /// One sync round over the facility's internet link.
  Result<sync::SyncReport> sync_facility(std::string_view facility_id);
  /// Facility links go down and the replica loses its in-memory state until
  /// power returns.
  void power_cut(const std::string& facility_id, Millis duration_ms);
  bool powered(std::string_view facility_id) const;

  /// Sends one PDU over the phone's USSD channel and returns the gateway's
  /// reply, or nullopt when the channel dropped it (the session is aborted).
  std::optional<ussd::UssdPdu> ussd_send(const std::string& session_id, const std::string& msisdn,
                                         ussd::PduKind kind, const std::string& text);
  const PhoneSession* phone_session(std::string_view session_id) const;

  /// True when every replica's materialized view equals the central one.
  bool converged() const;

  // -------------------------------------------------------------- trace
  void record(nlohmann::ordered_json line);
  const std::vector<std::string>& trace() const noexcept { return trace_; }
  std::string trace_text() const;

 private:
  struct Event {
    Millis at;
    std::uint64_t seq;
    Action action;
  };
  struct Facility {
    std::unique_ptr<sync::Replica> replica;
    std::optional<Millis> power_back_at;
  };

  Millis jitter(const LinkSchedule& link);
  void periodic_sync(Millis at);

  WorldConfig config_;
  Millis now_ = 0;
  std::uint64_t next_seq_ = 0;
  std::multimap<std::pair<Millis, std::uint64_t>, Action> queue_;

  std::map<std::string, LinkSchedule, std::less<>> links_;
  std::map<std::string, std::mt19937_64, std::less<>> jitter_rng_;

  auth::AuditLog audit_;
  core::EhrStore central_;
  auth::Authenticator auth_;
  Service service_;
  ussd::Gateway gateway_;
  std::map<std::string, Facility, std::less<>> facilities_;
  std::map<std::string, PhoneSession, std::less<>> phones_;

  std::vector<std::string> trace_;
};

}  // namespace ehr::netsim
