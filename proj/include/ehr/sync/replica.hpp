#pragma once

#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehr/core/store.hpp"
#include "ehr/sync/change_event.hpp"

namespace ehr::sync {

/// Wire document for both directions: {replica_id, cursor, events:[...]}.
/// A push request carries the sender's pull cursor and its unpushed events;
/// a pull response carries the central cursor after the returned events.
struct SyncBatch {
  std::string replica_id;
  std::size_t cursor = 0;
  std::vector<ChangeEvent> events;
};

/// Push response: {replica_id, cursor, events:[], accepted}.
struct PushAck {
  std::string replica_id;
  std::size_t cursor = 0;
  std::size_t accepted = 0;
};

nlohmann::json to_json(const SyncBatch& b);
Result<SyncBatch> batch_from_json(const nlohmann::json& j);
nlohmann::json to_json(const PushAck& a);
Result<PushAck> ack_from_json(const nlohmann::json& j);

/// Central-side handlers shared by every transport.
Result<PushAck> accept_push(core::EhrStore& central, const SyncBatch& batch, Millis now);
Result<SyncBatch> serve_pull(const core::EhrStore& central, std::size_t cursor);

class SyncTransport {
 public:
  virtual ~SyncTransport() = default;
  virtual Result<PushAck> push(const SyncBatch& batch, Millis now) = 0;
  virtual Result<SyncBatch> pull(std::string_view replica_id, std::size_t cursor, Millis now) = 0;
};

/// Direct in-process delivery to a central store.
class LocalTransport final : public SyncTransport {
 public:
  explicit LocalTransport(core::EhrStore& central) : central_(central) {}
  Result<PushAck> push(const SyncBatch& batch, Millis now) override;
  Result<SyncBatch> pull(std::string_view replica_id, std::size_t cursor, Millis now) override;

 private:
  core::EhrStore& central_;
};

struct SyncReport {
  std::size_t pushed = 0;
  std::size_t pulled = 0;
  std::size_t new_cursor = 0;

  friend bool operator==(const SyncReport&, const SyncReport&) = default;
};

class Replica;
Result<SyncReport> sync_round(Replica& replica, SyncTransport& transport, Millis now);

/// A facility's "lite" database plus its sync cursors.
class Replica {
 public:
  Replica(std::string facility_id, std::uint64_t seed, auth::AuditLog* audit = nullptr,
          Millis max_drift = kDefaultMaxDrift);

  const std::string& id() const noexcept { return store_->replica_id(); }
  core::EhrStore& store() noexcept { return *store_; }
  const core::EhrStore& store() const noexcept { return *store_; }

  /// Commits a mutation locally; needs no connectivity.
  Result<ChangeEvent> local_apply(std::string_view actor, const core::Mutation& m, Millis now);

  /// Locally originated events not yet acknowledged by the central store.
  std::vector<ChangeEvent> unpushed() const;

  std::size_t pull_cursor() const noexcept { return pull_cursor_; }
  std::size_t push_cursor() const noexcept { return push_cursor_; }

  /// Simulated restart: in-memory view is rebuilt from the durable log;
  /// cursors are durable too.
  void power_cycle();

 private:
  friend Result<SyncReport> sync_round(Replica&, SyncTransport&, Millis);

  std::unique_ptr<core::EhrStore> store_;
  std::size_t push_cursor_ = 0;  // position in the local log
  std::size_t pull_cursor_ = 0;  // position in the central log
};

/// Push unacknowledged local events, then pull the central log past the
/// replica's cursor. LINK_DOWN when the push cannot be delivered (no state
/// change); PARTIAL when the push landed but the pull did not. Retrying is
/// always safe.
Result<SyncReport> sync_round(Replica& replica, SyncTransport& transport, Millis now);

}  // namespace ehr::sync
