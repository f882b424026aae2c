#include "ehr/service.hpp"

#include "ehr/analytics/aggregates.hpp"

namespace ehr {

using auth::Action;
using auth::Identity;

Status Service::record(const Identity& who, std::string_view action, std::string_view entity,
                       Millis now, std::string_view outcome) {
  auto r = audit_.append(who.clinician_id, action, entity, now, outcome);
  if (!r) return r.error();
  return Ok{};
}

Result<core::PatientRecord> Service::get_patient(const Identity& who, std::string_view id, Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::read_patient, id, now); !ok) return ok.error();
  return store_.get_patient(who.clinician_id, id, now);
}

Result<std::string> Service::register_patient(const Identity& who, core::PatientRecord record,
                                              Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::register_patient, record.patient_id, now); !ok)
    return ok.error();
  return store_.register_patient(who.clinician_id, std::move(record), now);
}

Result<std::string> Service::update_patient(const Identity& who, core::UpdatePatient update,
                                            Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::update_patient, update.patient_id, now); !ok)
    return ok.error();
  return store_.update_patient(who.clinician_id, std::move(update), now);
}

Result<std::string> Service::record_encounter(const Identity& who, core::Encounter e, Millis now) {
  std::lock_guard lock(mu_);
  const Action action = e.kind == core::EncounterKind::observation ? Action::record_observation
                                                                   : Action::record_encounter;
  if (auto ok = auth_.authorize(who, action, e.patient_id, now); !ok) return ok.error();
  if (e.clinician_id.empty()) e.clinician_id = who.clinician_id;
  if (e.facility_id.empty()) e.facility_id = who.facility_id;
  return store_.record_encounter(who.clinician_id, std::move(e), now);
}

Result<std::string> Service::add_prescription(const Identity& who, core::Prescription rx, Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::add_prescription, rx.patient_id, now); !ok)
    return ok.error();
  if (rx.prescriber_id.empty()) rx.prescriber_id = who.clinician_id;
  return store_.add_prescription(who.clinician_id, std::move(rx), now);
}

Result<core::RefillRequest> Service::request_refill(const Identity& who, std::string_view rx_id,
                                                    Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::request_refill, rx_id, now); !ok) return ok.error();
  return store_.request_refill(who.clinician_id, rx_id, now);
}

Result<core::Prescription> Service::grant_refill(const Identity& who, std::string_view rx_id,
                                                 Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::grant_refill, rx_id, now); !ok) return ok.error();
  return store_.grant_refill(who.clinician_id, rx_id, now);
}

Result<std::vector<core::HistoryEntry>> Service::patient_history(const Identity& who,
                                                                 std::string_view patient_id,
                                                                 Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::read_patient, patient_id, now); !ok) return ok.error();
  return store_.patient_history(who.clinician_id, patient_id, now);
}

Result<std::vector<core::Prescription>> Service::pending_refills(const Identity& who, Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::read_patient, "prescription/*", now); !ok)
    return ok.error();
  return store_.pending_refills(who.clinician_id, now);
}

Result<sync::PushAck> Service::sync_push(const Identity& who, const sync::SyncBatch& batch,
                                         Millis now) {
  std::lock_guard lock(mu_);
  if (auto ok = auth_.authorize(who, Action::sync, batch.replica_id, now); !ok) return ok.error();
  const std::string entity = "replica/" + batch.replica_id;
  if (batch.replica_id != who.facility_id) {
    if (auto s = record(who, "sync.push", entity, now, "FORBIDDEN"); !s) return s.error();
    return make_error(Errc::forbidden, "replica is not the caller's facility");
  }
  auto ack = sync::accept_push(store_, batch, now);
  if (auto s = record(who, "sync.push", entity, now, ack ? "OK" : errc_name(ack.code())); !s)
    return s.error();
  return ack;
}

Result<sync::SyncBatch> Service::sync_pull(const Identity& who, std::size_t cursor, Millis now) {
  std::lock_guard lock(mu_);
  const std::string entity = "replica/" + who.facility_id;
  if (auto ok = auth_.authorize(who, Action::sync, entity, now); !ok) return ok.error();
  auto batch = sync::serve_pull(store_, cursor);
  if (auto s = record(who, "sync.pull", entity, now, batch ? "OK" : errc_name(batch.code())); !s)
    return s.error();
  return batch;
}

Result<nlohmann::json> Service::aggregates(const Identity& who, const Period& period, std::size_t k,
                                           Millis now) {
  std::lock_guard lock(mu_);
  const std::string entity = "aggregates/" + format_period(period);
  if (auto ok = auth_.authorize(who, Action::read_aggregates, entity, now); !ok) return ok.error();
  const core::EntityView view = store_.view_snapshot();
  auto rows = analytics::suppress_small_zones(analytics::build_aggregates(view, period), view, k);
  Result<nlohmann::json> doc = rows ? analytics::export_anonymized(*rows, view, period, k)
                                    : Result<nlohmann::json>(rows.error());
  if (auto s = record(who, "aggregates", entity, now, doc ? "OK" : errc_name(doc.code())); !s)
    return s.error();
  return doc;
}

Result<std::vector<auth::AuditEntry>> Service::audit_query(const Identity& who,
                                                           std::string_view actor, Millis now) {
  std::lock_guard lock(mu_);
  const std::string entity = actor.empty() ? "audit/*" : "audit/" + std::string(actor);
  if (auto ok = auth_.authorize(who, Action::read_audit, entity, now); !ok) return ok.error();
  std::vector<auth::AuditEntry> out;
  for (auto& e : audit_.entries()) {
    if (actor.empty() || e.actor == actor) out.push_back(std::move(e));
  }
  if (auto s = record(who, "audit.query", entity, now, "OK"); !s) return s.error();
  return out;
}

Status Service::record_refusal(std::string_view actor, std::string_view action,
                               std::string_view entity, Millis now, Errc outcome) {
  auto r = audit_.append(actor, action, entity, now, errc_name(outcome));
  if (!r) return r.error();
  return Ok{};
}

}  // namespace ehr
