#include "ehr/core/store.hpp"

#include <algorithm>
#include <mutex>

namespace ehr::core {

using nlohmann::json;
using sync::ChangeEvent;
using sync::EntityKind;

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

std::string entity_ref(EntityKind kind, std::string_view id) {
  std::string out(sync::kind_name(kind));
  out += '/';
  out += id;
  return out;
}

Error invalid(std::string why) { return make_error(Errc::validation, std::move(why)); }

bool valid_observation(std::string_view text) {
  const auto eq = text.find('=');
  return eq != std::string_view::npos && eq > 0 && eq + 1 < text.size();
}

}  // namespace

std::string_view mutation_name(const Mutation& m) noexcept {
  return std::visit(
      overloaded{
          [](const RegisterZone&) { return std::string_view("register_zone"); },
          [](const RegisterFacility&) { return std::string_view("register_facility"); },
          [](const RegisterClinician&) { return std::string_view("register_clinician"); },
          [](const RegisterPatient&) { return std::string_view("register_patient"); },
          [](const UpdatePatient&) { return std::string_view("update_patient"); },
          [](const RecordEncounter&) { return std::string_view("record_encounter"); },
          [](const AddPrescription&) { return std::string_view("add_prescription"); },
          [](const RequestRefill&) { return std::string_view("request_refill"); },
          [](const GrantRefill&) { return std::string_view("grant_refill"); },
          [](const ExpirePrescription&) { return std::string_view("expire_prescription"); },
          [](const VoidEncounter&) { return std::string_view("void_encounter"); },
      },
      m);
}

EhrStore::EhrStore(StoreOptions options, auth::AuditLog* audit)
    : options_(std::move(options)),
      audit_(audit),
      ids_(derive_seed(options_.seed, options_.replica_id)),
      clock_(options_.replica_id, options_.max_drift) {}

std::unique_ptr<EhrStore> EhrStore::restore(StoreOptions options, auth::AuditLog* audit,
                                            std::vector<ChangeEvent> log,
                                            const std::optional<Snapshot>& snapshot) {
  auto store = std::make_unique<EhrStore>(std::move(options), audit);
  std::size_t from = 0;
  if (snapshot && snapshot->upto <= log.size()) {
    store->view_ = EntityView::from_snapshot(snapshot->view);
    from = snapshot->upto;
  }
  for (std::size_t i = 0; i < log.size(); ++i) {
    if (i >= from) store->view_.apply(log[i]);
    store->seen_.insert(log[i].event_id);
    store->clock_.witness(log[i].hlc);
  }
  store->log_ = std::move(log);
  // Advance the id stream past ids issued before the restart.
  store->ids_ = IdGenerator(derive_seed(store->options_.seed ^ store->log_.size(),
                                        store->options_.replica_id));
  return store;
}

void EhrStore::rebuild() {
  std::unique_lock lock(mu_);
  view_ = EntityView{};
  seen_.clear();
  clock_ = sync::HlcClock(options_.replica_id, options_.max_drift);
  for (const auto& e : log_) {
    view_.apply(e);
    seen_.insert(e.event_id);
    clock_.witness(e.hlc);
  }
}

void EhrStore::set_commit_sink(CommitSink sink) {
  std::unique_lock lock(mu_);
  sink_ = std::move(sink);
}

Status EhrStore::audit(std::string_view actor, std::string_view action, std::string_view entity,
                       Millis ts, std::string_view outcome) {
  if (audit_ == nullptr) return Ok{};
  auto r = audit_->append(actor, action, entity, ts, outcome);
  if (!r) return r.error();
  return Ok{};
}

Status EhrStore::commit_event(const ChangeEvent& e) {
  if (sink_) {
    if (auto s = sink_(e); !s) return s;
  }
  view_.apply(e);
  seen_.insert(e.event_id);
  log_.push_back(e);
  return Ok{};
}

Result<EhrStore::Planned> EhrStore::plan(const Mutation& m, Millis now) {
  auto zone_exists = [&](const std::string& id) {
    return view_.find(EntityKind::zone, id) != nullptr;
  };
  auto exists = [&](EntityKind k, const std::string& id) { return view_.find(k, id) != nullptr; };
  // Ids are unique across live and deleted entities alike.
  auto taken = [&](EntityKind k, const std::string& id) {
    return view_.known(k, id);
  };

  return std::visit(
      overloaded{
          [&](const RegisterZone& r) -> Result<Planned> {
            if (r.zone.zone_id.empty() || r.zone.name.empty()) return invalid("zone id and name required");
            if (taken(EntityKind::zone, r.zone.zone_id)) return make_error(Errc::duplicate_id, r.zone.zone_id);
            return Planned{EntityKind::zone, r.zone.zone_id, "", to_document(r.zone)};
          },
          [&](const RegisterFacility& r) -> Result<Planned> {
            const Facility& f = r.facility;
            if (f.facility_id.empty() || f.name.empty()) return invalid("facility id and name required");
            if (taken(EntityKind::facility, f.facility_id)) return make_error(Errc::duplicate_id, f.facility_id);
            if (!zone_exists(f.zone_id)) return make_error(Errc::invalid_zone, f.zone_id);
            return Planned{EntityKind::facility, f.facility_id, "", to_document(f)};
          },
          [&](const RegisterClinician& r) -> Result<Planned> {
            const Clinician& c = r.clinician;
            if (c.clinician_id.empty() || c.name.empty()) return invalid("clinician id and name required");
            if (taken(EntityKind::clinician, c.clinician_id)) return make_error(Errc::duplicate_id, c.clinician_id);
            if (!exists(EntityKind::facility, c.facility_id))
              return make_error(Errc::unknown_facility, c.facility_id);
            return Planned{EntityKind::clinician, c.clinician_id, "", to_document(c)};
          },
          [&](const RegisterPatient& r) -> Result<Planned> {
            PatientRecord p = r.record;
            if (p.patient_id.empty()) p.patient_id = ids_.next();
            if (taken(EntityKind::patient, p.patient_id)) return make_error(Errc::duplicate_id, p.patient_id);
            if (p.name.empty()) return invalid("name required");
            if (p.birth_date > date_of(now)) return invalid("birth_date in the future");
            if (!zone_exists(p.zone_id)) return make_error(Errc::invalid_zone, p.zone_id);
            p.registered_at = now;
            return Planned{EntityKind::patient, p.patient_id, "", to_document(p)};
          },
          [&](const UpdatePatient& u) -> Result<Planned> {
            if (!exists(EntityKind::patient, u.patient_id)) return make_error(Errc::unknown_patient, u.patient_id);
            json doc = json::object();
            if (u.name) {
              if (u.name->empty()) return invalid("name required");
              doc["name"] = *u.name;
            }
            if (u.birth_date) {
              if (*u.birth_date > date_of(now)) return invalid("birth_date in the future");
              doc["birth_date"] = format_date(*u.birth_date);
            }
            if (u.sex) doc["sex"] = to_string(*u.sex);
            if (u.zone_id) {
              if (!zone_exists(*u.zone_id)) return make_error(Errc::invalid_zone, *u.zone_id);
              doc["zone_id"] = *u.zone_id;
            }
            if (u.allergies) doc["allergies"] = *u.allergies;
            if (doc.empty()) return invalid("no fields to update");
            return Planned{EntityKind::patient, u.patient_id, "", std::move(doc)};
          },
          [&](const RecordEncounter& r) -> Result<Planned> {
            Encounter e = r.encounter;
            if (e.encounter_id.empty()) e.encounter_id = ids_.next();
            if (taken(EntityKind::encounter, e.encounter_id)) return make_error(Errc::duplicate_id, e.encounter_id);
            if (!exists(EntityKind::patient, e.patient_id)) return make_error(Errc::unknown_patient, e.patient_id);
            if (!exists(EntityKind::clinician, e.clinician_id))
              return make_error(Errc::unknown_clinician, e.clinician_id);
            if (!exists(EntityKind::facility, e.facility_id))
              return make_error(Errc::unknown_facility, e.facility_id);
            if (e.occurred_at == 0) e.occurred_at = now;
            if (e.occurred_at > now) return invalid("occurred_at after store clock");
            if (e.kind == EncounterKind::observation && !valid_observation(e.note))
              return invalid("observation must be KEY=VALUE");
            if (e.kind == EncounterKind::note && e.note.empty()) return invalid("empty note");
            return Planned{EntityKind::encounter, e.encounter_id, "", to_document(e)};
          },
          [&](const AddPrescription& r) -> Result<Planned> {
            Prescription rx = r.rx;
            if (rx.rx_id.empty()) rx.rx_id = ids_.next();
            if (taken(EntityKind::prescription, rx.rx_id)) return make_error(Errc::duplicate_id, rx.rx_id);
            if (!exists(EntityKind::patient, rx.patient_id)) return make_error(Errc::unknown_patient, rx.patient_id);
            if (!exists(EntityKind::clinician, rx.prescriber_id))
              return make_error(Errc::unknown_clinician, rx.prescriber_id);
            if (rx.drug_code.empty()) return invalid("drug_code required");
            if (rx.refills_remaining < 0) return invalid("refills_remaining must be >= 0");
            if (rx.prescribed_at == 0) rx.prescribed_at = now;
            if (rx.prescribed_at > now) return invalid("prescribed_at after store clock");
            rx.status = RxStatus::active;
            return Planned{EntityKind::prescription, rx.rx_id, "", to_document(rx)};
          },
          [&](const RequestRefill& r) -> Result<Planned> {
            auto rx = find_prescription_locked(r.rx_id);
            if (!rx) return make_error(Errc::unknown_rx, r.rx_id);
            if (rx->status != RxStatus::active) return make_error(Errc::not_active, r.rx_id);
            if (rx->refills_remaining <= 0) return make_error(Errc::no_refills_left, r.rx_id);
            return Planned{EntityKind::prescription, rx->rx_id, "status",
                           json(to_string(RxStatus::refill_requested))};
          },
          [&](const GrantRefill& r) -> Result<Planned> {
            auto rx = find_prescription_locked(r.rx_id);
            if (!rx) return make_error(Errc::unknown_rx, r.rx_id);
            if (rx->status != RxStatus::refill_requested) return make_error(Errc::not_active, r.rx_id);
            if (rx->refills_remaining <= 0) return make_error(Errc::no_refills_left, r.rx_id);
            return Planned{EntityKind::prescription, rx->rx_id, "",
                           json{{"status", to_string(RxStatus::active)},
                                {"refills_remaining", rx->refills_remaining - 1}}};
          },
          [&](const ExpirePrescription& r) -> Result<Planned> {
            auto rx = find_prescription_locked(r.rx_id);
            if (!rx) return make_error(Errc::unknown_rx, r.rx_id);
            if (rx->status == RxStatus::expired) return make_error(Errc::not_active, r.rx_id);
            return Planned{EntityKind::prescription, rx->rx_id, "status",
                           json(to_string(RxStatus::expired))};
          },
          [&](const VoidEncounter& r) -> Result<Planned> {
            if (!exists(EntityKind::encounter, r.encounter_id))
              return make_error(Errc::not_found, r.encounter_id);
            return Planned{EntityKind::encounter, r.encounter_id, "", json(), true};
          },
      },
      m);
}

Result<ChangeEvent> EhrStore::apply(std::string_view actor, const Mutation& m, Millis now) {
  std::unique_lock lock(mu_);
  const std::string_view action = mutation_name(m);
  auto planned = plan(m, now);
  if (!planned) {
    if (auto a = audit(actor, action, "", now, errc_name(planned.code())); !a) return a.error();
    return planned.error();
  }
  ChangeEvent e;
  e.event_id = ids_.next();
  e.entity_kind = planned->kind;
  e.entity_id = planned->entity_id;
  e.field_path = planned->field_path;
  e.new_value = std::move(planned->value);
  e.tombstone = planned->tombstone;
  e.origin_replica = options_.replica_id;
  if (auto a = audit(actor, action, entity_ref(e.entity_kind, e.entity_id), now, "OK"); !a) {
    return a.error();
  }
  const sync::HlcClock saved = clock_;
  e.hlc = clock_.tick(now);
  if (auto s = commit_event(e); !s) {
    clock_ = saved;
    return s.error();
  }
  return e;
}

Result<std::string> EhrStore::register_patient(std::string_view actor, PatientRecord record,
                                               Millis now) {
  auto e = apply(actor, RegisterPatient{std::move(record)}, now);
  if (!e) return e.error();
  return e->entity_id;
}

Result<std::string> EhrStore::update_patient(std::string_view actor, UpdatePatient update,
                                             Millis now) {
  auto e = apply(actor, std::move(update), now);
  if (!e) return e.error();
  return e->entity_id;
}

Result<std::string> EhrStore::record_encounter(std::string_view actor, Encounter encounter,
                                               Millis now) {
  auto e = apply(actor, RecordEncounter{std::move(encounter)}, now);
  if (!e) return e.error();
  return e->entity_id;
}

Result<std::string> EhrStore::add_prescription(std::string_view actor, Prescription rx, Millis now) {
  auto e = apply(actor, AddPrescription{std::move(rx)}, now);
  if (!e) return e.error();
  return e->entity_id;
}

Result<RefillRequest> EhrStore::request_refill(std::string_view actor, std::string_view rx_id,
                                               Millis now) {
  auto e = apply(actor, RequestRefill{std::string(rx_id)}, now);
  if (!e) return e.error();
  auto rx = find_prescription(rx_id);
  return RefillRequest{rx->rx_id, rx->patient_id, std::string(actor), now, rx->refills_remaining};
}

Result<Prescription> EhrStore::grant_refill(std::string_view actor, std::string_view rx_id,
                                            Millis now) {
  auto e = apply(actor, GrantRefill{std::string(rx_id)}, now);
  if (!e) return e.error();
  return *find_prescription(rx_id);
}

Result<PatientRecord> EhrStore::get_patient(std::string_view actor, std::string_view patient_id,
                                            Millis now) {
  std::shared_lock lock(mu_);
  auto p = find_patient_locked(patient_id);
  const std::string ref = entity_ref(EntityKind::patient, patient_id);
  if (auto a = audit(actor, "get_patient", ref, now, p ? "OK" : "NOT_FOUND"); !a) return a.error();
  if (!p) return make_error(Errc::not_found, std::string(patient_id));
  return *p;
}

Result<std::vector<HistoryEntry>> EhrStore::patient_history(std::string_view actor,
                                                            std::string_view patient_id,
                                                            Millis now) {
  std::shared_lock lock(mu_);
  const bool known = find_patient_locked(patient_id).has_value();
  const std::string ref = entity_ref(EntityKind::patient, patient_id);
  if (auto a = audit(actor, "patient_history", ref, now, known ? "OK" : "UNKNOWN_PATIENT"); !a)
    return a.error();
  if (!known) return make_error(Errc::unknown_patient, std::string(patient_id));
  return history_locked(patient_id);
}

Result<std::vector<Prescription>> EhrStore::pending_refills(std::string_view actor, Millis now) {
  std::shared_lock lock(mu_);
  if (auto a = audit(actor, "pending_refills", "prescription/*", now, "OK"); !a) return a.error();
  std::vector<Prescription> out;
  view_.for_each(EntityKind::prescription, [&](const std::string&, const EntityState& s) {
    auto rx = prescription_from(s.document());
    if (rx && rx->status == RxStatus::refill_requested) out.push_back(std::move(*rx));
  });
  std::sort(out.begin(), out.end(), [](const Prescription& a, const Prescription& b) {
    return std::tie(a.prescribed_at, a.rx_id) < std::tie(b.prescribed_at, b.rx_id);
  });
  return out;
}

std::optional<Zone> EhrStore::find_zone(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto s = view_.find(EntityKind::zone, id);
  return s ? zone_from(s->document()) : std::nullopt;
}

std::optional<Facility> EhrStore::find_facility(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto s = view_.find(EntityKind::facility, id);
  return s ? facility_from(s->document()) : std::nullopt;
}

std::optional<Clinician> EhrStore::find_clinician(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto s = view_.find(EntityKind::clinician, id);
  return s ? clinician_from(s->document()) : std::nullopt;
}

std::optional<PatientRecord> EhrStore::find_patient(std::string_view id) const {
  std::shared_lock lock(mu_);
  return find_patient_locked(id);
}

std::optional<Encounter> EhrStore::find_encounter(std::string_view id) const {
  std::shared_lock lock(mu_);
  auto s = view_.find(EntityKind::encounter, id);
  return s ? encounter_from(s->document()) : std::nullopt;
}

std::optional<Prescription> EhrStore::find_prescription(std::string_view id) const {
  std::shared_lock lock(mu_);
  return find_prescription_locked(id);
}

std::optional<PatientRecord> EhrStore::find_patient_locked(std::string_view id) const {
  auto s = view_.find(EntityKind::patient, id);
  return s ? patient_from(s->document()) : std::nullopt;
}

std::optional<Prescription> EhrStore::find_prescription_locked(std::string_view id) const {
  auto s = view_.find(EntityKind::prescription, id);
  return s ? prescription_from(s->document()) : std::nullopt;
}

std::vector<HistoryEntry> EhrStore::history_of(std::string_view patient_id) const {
  std::shared_lock lock(mu_);
  return history_locked(patient_id);
}

std::vector<HistoryEntry> EhrStore::history_locked(std::string_view patient_id) const {
  std::vector<HistoryEntry> out;
  view_.for_each(EntityKind::encounter, [&](const std::string&, const EntityState& s) {
    auto e = encounter_from(s.document());
    if (e && e->patient_id == patient_id) out.emplace_back(std::move(*e));
  });
  view_.for_each(EntityKind::prescription, [&](const std::string&, const EntityState& s) {
    auto rx = prescription_from(s.document());
    if (rx && rx->patient_id == patient_id) out.emplace_back(std::move(*rx));
  });
  std::sort(out.begin(), out.end(), history_before);
  return out;
}

std::size_t EhrStore::patient_count() const {
  std::shared_lock lock(mu_);
  return view_.live_count(EntityKind::patient);
}

EntityView EhrStore::view_snapshot() const {
  std::shared_lock lock(mu_);
  return view_;
}

Snapshot EhrStore::make_snapshot() const {
  std::shared_lock lock(mu_);
  return Snapshot{log_.size(), view_.to_snapshot()};
}

Result<std::size_t> EhrStore::apply_remote(std::span<const ChangeEvent> events, Millis now) {
  for (const auto& e : events) {
    if (auto ok = sync::validate_event(e); !ok) return ok.error();
  }
  std::unique_lock lock(mu_);
  std::size_t fresh = 0;
  for (const auto& e : events) {
    if (seen_.contains(e.event_id)) continue;
    if (auto s = commit_event(e); !s) return s.error();
    // Drifted clocks still contribute data; only the local clock refuses
    // to follow them.
    (void)clock_.observe(e.hlc, now);
    ++fresh;
  }
  return fresh;
}

Result<std::vector<ChangeEvent>> EhrStore::delta(std::size_t cursor) const {
  std::shared_lock lock(mu_);
  return sync::compute_delta(log_, cursor);
}

std::size_t EhrStore::log_size() const {
  std::shared_lock lock(mu_);
  return log_.size();
}

std::vector<ChangeEvent> EhrStore::log_copy() const {
  std::shared_lock lock(mu_);
  return log_;
}

bool EhrStore::has_event(std::string_view event_id) const {
  std::shared_lock lock(mu_);
  return seen_.contains(std::string(event_id));
}

sync::Hlc EhrStore::clock() const {
  std::shared_lock lock(mu_);
  return clock_.last();
}

}  // namespace ehr::core
