#include "ehr/sync/replica.hpp"

#include <algorithm>

namespace ehr::sync {

using nlohmann::json;

json to_json(const SyncBatch& b) {
  json events = json::array();
  for (const auto& e : b.events) events.push_back(event_to_json(e));
  return json{{"replica_id", b.replica_id}, {"cursor", b.cursor}, {"events", std::move(events)}};
}

Result<SyncBatch> batch_from_json(const json& j) {
  try {
    SyncBatch b;
    j.at("replica_id").get_to(b.replica_id);
    j.at("cursor").get_to(b.cursor);
    for (const auto& ej : j.at("events")) {
      auto e = event_from_json(ej);
      if (!e) return e.error();
      b.events.push_back(std::move(*e));
    }
    return b;
  } catch (const json::exception& ex) {
    return make_error(Errc::malformed_event, ex.what());
  }
}

json to_json(const PushAck& a) {
  return json{{"replica_id", a.replica_id},
              {"cursor", a.cursor},
              {"events", json::array()},
              {"accepted", a.accepted}};
}

Result<PushAck> ack_from_json(const json& j) {
  try {
    PushAck a;
    j.at("replica_id").get_to(a.replica_id);
    j.at("cursor").get_to(a.cursor);
    j.at("accepted").get_to(a.accepted);
    return a;
  } catch (const json::exception& ex) {
    return make_error(Errc::malformed_event, ex.what());
  }
}

Result<PushAck> accept_push(core::EhrStore& central, const SyncBatch& batch, Millis now) {
  for (const auto& e : batch.events) {
    if (e.origin_replica != batch.replica_id) {
      return make_error(Errc::malformed_event, "event " + e.event_id + " not from sender");
    }
  }
  auto accepted = central.apply_remote(batch.events, now);
  if (!accepted) return accepted.error();
  return PushAck{central.replica_id(), central.log_size(), *accepted};
}

Result<SyncBatch> serve_pull(const core::EhrStore& central, std::size_t cursor) {
  auto events = central.delta(cursor);
  if (!events) return events.error();
  const std::size_t next = cursor + events->size();
  return SyncBatch{central.replica_id(), next, std::move(*events)};
}

Result<PushAck> LocalTransport::push(const SyncBatch& batch, Millis now) {
  return accept_push(central_, batch, now);
}

Result<SyncBatch> LocalTransport::pull(std::string_view, std::size_t cursor, Millis) {
  return serve_pull(central_, cursor);
}

Replica::Replica(std::string facility_id, std::uint64_t seed, auth::AuditLog* audit,
                 Millis max_drift)
    : store_(std::make_unique<core::EhrStore>(
          core::StoreOptions{std::move(facility_id), seed, max_drift}, audit)) {}

Result<ChangeEvent> Replica::local_apply(std::string_view actor, const core::Mutation& m,
                                         Millis now) {
  return store_->apply(actor, m, now);
}

std::vector<ChangeEvent> Replica::unpushed() const {
  auto tail = store_->delta(push_cursor_).value();
  std::erase_if(tail, [&](const ChangeEvent& e) { return e.origin_replica != id(); });
  return tail;
}

void Replica::power_cycle() { store_->rebuild(); }

Result<SyncReport> sync_round(Replica& replica, SyncTransport& transport, Millis now) {
  const std::size_t mark = replica.store().log_size();
  SyncBatch outgoing{replica.id(), replica.pull_cursor_, replica.unpushed()};
  auto ack = transport.push(outgoing, now);
  if (!ack) return ack.error();
  replica.push_cursor_ = mark;

  auto incoming = transport.pull(replica.id(), replica.pull_cursor_, now);
  if (!incoming) {
    return make_error(Errc::partial, "pushed " + std::to_string(ack->accepted) +
                                         ", pull failed: " + incoming.error().to_string());
  }
  auto fresh = replica.store().apply_remote(incoming->events, now);
  if (!fresh) return fresh.error();
  replica.pull_cursor_ = std::max(replica.pull_cursor_, incoming->cursor);
  return SyncReport{ack->accepted, *fresh, replica.pull_cursor_};
}

}  // namespace ehr::sync
