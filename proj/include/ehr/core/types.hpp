#pragma once

#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

#include "ehr/common/time.hpp"

namespace ehr::core {

enum class Sex { F, M, X };
enum class Role { physician, nurse, pharmacist, admin };
enum class Modality { wes, mes, ues };
enum class RxStatus { active, refill_requested, expired };
enum class EncounterKind { visit, observation, note };

std::string_view to_string(Sex v) noexcept;
std::string_view to_string(Role v) noexcept;
std::string_view to_string(Modality v) noexcept;
std::string_view to_string(RxStatus v) noexcept;
std::string_view to_string(EncounterKind v) noexcept;

std::optional<Sex> parse_sex(std::string_view s) noexcept;
std::optional<Role> parse_role(std::string_view s) noexcept;
std::optional<Modality> parse_modality(std::string_view s) noexcept;
std::optional<RxStatus> parse_rx_status(std::string_view s) noexcept;
std::optional<EncounterKind> parse_encounter_kind(std::string_view s) noexcept;

struct Zone {
  std::string zone_id;
  std::string name;
};

struct Facility {
  std::string facility_id;
  std::string name;
  std::string zone_id;
  Modality modality = Modality::mes;
};

/// Directory entry for a clinician. Secrets live in auth::Authenticator.
struct Clinician {
  std::string clinician_id;
  std::string name;
  Role role = Role::nurse;
  std::string facility_id;
};

struct PatientRecord {
  std::string patient_id;
  std::string name;
  CivilDate birth_date;
  Sex sex = Sex::X;
  std::string zone_id;
  std::set<std::string> allergies;
  Millis registered_at = 0;

  friend bool operator==(const PatientRecord&, const PatientRecord&) = default;
};

struct Encounter {
  std::string encounter_id;
  std::string patient_id;
  std::string facility_id;
  std::string clinician_id;
  Millis occurred_at = 0;
  EncounterKind kind = EncounterKind::visit;
  std::vector<std::string> diagnosis_codes;
  std::string note;

  friend bool operator==(const Encounter&, const Encounter&) = default;
};

struct Prescription {
  std::string rx_id;
  std::string patient_id;
  std::string prescriber_id;
  std::string drug_code;
  std::string dose;
  int refills_remaining = 0;
  RxStatus status = RxStatus::active;
  Millis prescribed_at = 0;

  friend bool operator==(const Prescription&, const Prescription&) = default;
};

struct RefillRequest {
  std::string rx_id;
  std::string patient_id;
  std::string requested_by;
  Millis requested_at = 0;
  int refills_remaining = 0;
};

/// One row of a patient's chronological history.
using HistoryEntry = std::variant<Encounter, Prescription>;

Millis entry_time(const HistoryEntry& e);
const std::string& entry_id(const HistoryEntry& e);
/// Strict history order: (timestamp, entity id).
bool history_before(const HistoryEntry& a, const HistoryEntry& b);

// Document encodings. These are the field maps stored in change events.
nlohmann::json to_document(const Zone& v);
nlohmann::json to_document(const Facility& v);
nlohmann::json to_document(const Clinician& v);
nlohmann::json to_document(const PatientRecord& v);
nlohmann::json to_document(const Encounter& v);
nlohmann::json to_document(const Prescription& v);

// Decoding returns nullopt for incomplete or ill-typed documents, which can
// legitimately exist on a replica that has seen a field update before the
// entity's creation.
std::optional<Zone> zone_from(const nlohmann::json& doc);
std::optional<Facility> facility_from(const nlohmann::json& doc);
std::optional<Clinician> clinician_from(const nlohmann::json& doc);
std::optional<PatientRecord> patient_from(const nlohmann::json& doc);
std::optional<Encounter> encounter_from(const nlohmann::json& doc);
std::optional<Prescription> prescription_from(const nlohmann::json& doc);

nlohmann::json history_entry_json(const HistoryEntry& e);

}  // namespace ehr::core
