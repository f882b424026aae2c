#pragma once

#include <functional>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_set>
#include <variant>
#include <vector>

#include "ehr/auth/audit.hpp"
#include "ehr/common/ids.hpp"
#include "ehr/common/result.hpp"
#include "ehr/core/types.hpp"
#include "ehr/core/view.hpp"
#include "ehr/sync/change_event.hpp"
#include "ehr/sync/hlc.hpp"

namespace ehr::core {

struct RegisterZone {
  Zone zone;
};
struct RegisterFacility {
  Facility facility;
};
struct RegisterClinician {
  Clinician clinician;
};
/// An empty patient_id requests a generated one; registered_at is set to
/// the commit time.
struct RegisterPatient {
  PatientRecord record;
};
struct UpdatePatient {
  std::string patient_id;
  std::optional<std::string> name;
  std::optional<CivilDate> birth_date;
  std::optional<Sex> sex;
  std::optional<std::string> zone_id;
  std::optional<std::set<std::string>> allergies;
};
/// Empty encounter_id requests a generated one; occurred_at 0 means now.
struct RecordEncounter {
  Encounter encounter;
};
/// Status is forced to ACTIVE; prescribed_at 0 means now.
struct AddPrescription {
  Prescription rx;
};
struct RequestRefill {
  std::string rx_id;
};
struct GrantRefill {
  std::string rx_id;
};
struct ExpirePrescription {
  std::string rx_id;
};
/// Entered-in-error removal; replicates as a whole-entity tombstone.
struct VoidEncounter {
  std::string encounter_id;
};

using Mutation = std::variant<RegisterZone, RegisterFacility, RegisterClinician, RegisterPatient,
                              UpdatePatient, RecordEncounter, AddPrescription, RequestRefill,
                              GrantRefill, ExpirePrescription, VoidEncounter>;

std::string_view mutation_name(const Mutation& m) noexcept;

struct StoreOptions {
  std::string replica_id = "central";
  std::uint64_t seed = 0;
  Millis max_drift = sync::kDefaultMaxDrift;
};

/// Saved materialization of the first `upto` log entries.
struct Snapshot {
  std::size_t upto = 0;
  nlohmann::json view;
};

/// The EHR record store. Used both as the central database and, inside
/// sync::Replica, as a facility's local "lite" database.
///
/// Every committed mutation appends exactly one ChangeEvent to the log and,
/// when an audit log is attached, exactly one audit entry. Reads through the
/// audited accessors (get_patient, patient_history, pending_refills) are
/// audited as well; find_* accessors are not and exist for internal use.
class EhrStore {
 public:
  explicit EhrStore(StoreOptions options = {}, auth::AuditLog* audit = nullptr);

  /// Rebuilds a store from a durable log, optionally starting from a
  /// snapshot of its prefix.
  static std::unique_ptr<EhrStore> restore(StoreOptions options, auth::AuditLog* audit,
                                           std::vector<sync::ChangeEvent> log,
                                           const std::optional<Snapshot>& snapshot = std::nullopt);

  EhrStore(const EhrStore&) = delete;
  EhrStore& operator=(const EhrStore&) = delete;

  /// Validates a mutation against the current view and commits it.
  Result<sync::ChangeEvent> apply(std::string_view actor, const Mutation& m, Millis now);

  Result<std::string> register_patient(std::string_view actor, PatientRecord record, Millis now);
  Result<std::string> update_patient(std::string_view actor, UpdatePatient update, Millis now);
  Result<std::string> record_encounter(std::string_view actor, Encounter encounter, Millis now);
  Result<std::string> add_prescription(std::string_view actor, Prescription rx, Millis now);
  Result<RefillRequest> request_refill(std::string_view actor, std::string_view rx_id, Millis now);
  Result<Prescription> grant_refill(std::string_view actor, std::string_view rx_id, Millis now);

  Result<PatientRecord> get_patient(std::string_view actor, std::string_view patient_id, Millis now);
  Result<std::vector<HistoryEntry>> patient_history(std::string_view actor,
                                                    std::string_view patient_id, Millis now);
  Result<std::vector<Prescription>> pending_refills(std::string_view actor, Millis now);

  std::optional<Zone> find_zone(std::string_view id) const;
  std::optional<Facility> find_facility(std::string_view id) const;
  std::optional<Clinician> find_clinician(std::string_view id) const;
  std::optional<PatientRecord> find_patient(std::string_view id) const;
  std::optional<Encounter> find_encounter(std::string_view id) const;
  std::optional<Prescription> find_prescription(std::string_view id) const;
  std::vector<HistoryEntry> history_of(std::string_view patient_id) const;
  std::size_t patient_count() const;

  /// Copy of the materialized view (consistent point-in-time snapshot).
  EntityView view_snapshot() const;
  Snapshot make_snapshot() const;

  /// Merges remote events. Returns how many were new. Malformed batches are
  /// rejected whole; already-seen event ids are skipped.
  Result<std::size_t> apply_remote(std::span<const sync::ChangeEvent> events, Millis now);

  Result<std::vector<sync::ChangeEvent>> delta(std::size_t cursor) const;
  std::size_t log_size() const;
  std::vector<sync::ChangeEvent> log_copy() const;
  bool has_event(std::string_view event_id) const;

  const std::string& replica_id() const noexcept { return options_.replica_id; }
  sync::Hlc clock() const;

  /// Called with each newly logged event before it becomes visible; a
  /// failure aborts the commit.
  using CommitSink = std::function<Status(const sync::ChangeEvent&)>;
  void set_commit_sink(CommitSink sink);

  /// Discards in-memory state and replays the log (simulated restart).
  void rebuild();

 private:
  struct Planned {
    sync::EntityKind kind;
    std::string entity_id;
    std::string field_path;
    nlohmann::json value;
    bool tombstone = false;
  };

  Result<Planned> plan(const Mutation& m, Millis now);
  Status commit_event(const sync::ChangeEvent& e);
  Status audit(std::string_view actor, std::string_view action, std::string_view entity,
               Millis ts, std::string_view outcome);

  std::optional<PatientRecord> find_patient_locked(std::string_view id) const;
  std::optional<Prescription> find_prescription_locked(std::string_view id) const;
  std::vector<HistoryEntry> history_locked(std::string_view patient_id) const;

  StoreOptions options_;
  auth::AuditLog* audit_;
  mutable std::shared_mutex mu_;
  IdGenerator ids_;
  sync::HlcClock clock_;
  EntityView view_;
  std::vector<sync::ChangeEvent> log_;
  std::unordered_set<std::string> seen_;
  CommitSink sink_;
};

}  // namespace ehr::core
