#pragma once

#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ehr/auth/audit.hpp"
#include "ehr/auth/authenticator.hpp"
#include "ehr/common/result.hpp"
#include "ehr/core/store.hpp"
#include "ehr/sync/replica.hpp"

namespace ehr {

/// Authorized access to the central store. Every call made with an
/// identity yields exactly one audit entry: a refusal from the
/// authenticator, or the store's (or this class's) record of the operation.
class Service {
 public:
  Service(core::EhrStore& store, auth::Authenticator& auth, auth::AuditLog& audit)
      : store_(store), auth_(auth), audit_(audit) {}

  Result<auth::Identity> login_web(std::string_view username, std::string_view password, Millis now) {
    return auth_.authenticate_web(username, password, now);
  }
  Result<auth::Identity> login_ussd(std::string_view msisdn, std::string_view pin, Millis now) {
    return auth_.authenticate_ussd(msisdn, pin, now);
  }
  Result<auth::Identity> resolve(std::string_view token, Millis now) const {
    return auth_.resolve_token(token, now);
  }
  bool msisdn_registered(std::string_view msisdn) const { return auth_.msisdn_registered(msisdn); }

  Result<core::PatientRecord> get_patient(const auth::Identity& who, std::string_view id, Millis now);
  Result<std::string> register_patient(const auth::Identity& who, core::PatientRecord record, Millis now);
  Result<std::string> update_patient(const auth::Identity& who, core::UpdatePatient update, Millis now);
  /// Empty clinician/facility ids default to the caller's.
  Result<std::string> record_encounter(const auth::Identity& who, core::Encounter e, Millis now);
  Result<std::string> add_prescription(const auth::Identity& who, core::Prescription rx, Millis now);
  Result<core::RefillRequest> request_refill(const auth::Identity& who, std::string_view rx_id, Millis now);
  Result<core::Prescription> grant_refill(const auth::Identity& who, std::string_view rx_id, Millis now);
  Result<std::vector<core::HistoryEntry>> patient_history(const auth::Identity& who,
                                                          std::string_view patient_id, Millis now);
  Result<std::vector<core::Prescription>> pending_refills(const auth::Identity& who, Millis now);

  /// The batch's replica id must be the caller's facility.
  Result<sync::PushAck> sync_push(const auth::Identity& who, const sync::SyncBatch& batch, Millis now);
  Result<sync::SyncBatch> sync_pull(const auth::Identity& who, std::size_t cursor, Millis now);

  Result<nlohmann::json> aggregates(const auth::Identity& who, const Period& period, std::size_t k,
                                    Millis now);

  /// Audit entries, optionally only those by one actor.
  Result<std::vector<auth::AuditEntry>> audit_query(const auth::Identity& who,
                                                    std::string_view actor, Millis now);

  /// Records a request refused before reaching a guarded operation: no
  /// valid identity (actor "anonymous") or unreadable input.
  Status record_refusal(std::string_view actor, std::string_view action, std::string_view entity,
                        Millis now, Errc outcome);

  core::EhrStore& store() noexcept { return store_; }
  auth::AuditLog& audit_log() noexcept { return audit_; }
  auth::Authenticator& authenticator() noexcept { return auth_; }
  /// Held by every guarded call; take it for direct store access from
  /// threads that share this service.
  std::recursive_mutex& mutex() noexcept { return mu_; }

 private:
  Status record(const auth::Identity& who, std::string_view action, std::string_view entity,
                Millis now, std::string_view outcome);

  core::EhrStore& store_;
  auth::Authenticator& auth_;
  auth::AuditLog& audit_;
  std::recursive_mutex mu_;
};

}  // namespace ehr
