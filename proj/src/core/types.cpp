#include "ehr/core/types.hpp"

#include <array>
#include <utility>

namespace ehr::core {

using nlohmann::json;

namespace {

template <typename E, std::size_t N>
std::optional<E> lookup(const std::array<std::pair<E, std::string_view>, N>& table,
                        std::string_view s) noexcept {
  for (const auto& [value, name] : table) {
    if (name == s) return value;
  }
  return std::nullopt;
}

template <typename E, std::size_t N>
std::string_view name_of(const std::array<std::pair<E, std::string_view>, N>& table, E v) noexcept {
  for (const auto& [value, name] : table) {
    if (value == v) return name;
  }
  return "?";
}

constexpr std::array<std::pair<Sex, std::string_view>, 3> kSex{
    {{Sex::F, "F"}, {Sex::M, "M"}, {Sex::X, "X"}}};
constexpr std::array<std::pair<Role, std::string_view>, 4> kRole{{{Role::physician, "PHYSICIAN"},
                                                                 {Role::nurse, "NURSE"},
                                                                 {Role::pharmacist, "PHARMACIST"},
                                                                 {Role::admin, "ADMIN"}}};
constexpr std::array<std::pair<Modality, std::string_view>, 3> kModality{
    {{Modality::wes, "WES"}, {Modality::mes, "MES"}, {Modality::ues, "UES"}}};
constexpr std::array<std::pair<RxStatus, std::string_view>, 3> kRxStatus{
    {{RxStatus::active, "ACTIVE"},
     {RxStatus::refill_requested, "REFILL_REQUESTED"},
     {RxStatus::expired, "EXPIRED"}}};
constexpr std::array<std::pair<EncounterKind, std::string_view>, 3> kEncounterKind{
    {{EncounterKind::visit, "VISIT"},
     {EncounterKind::observation, "OBSERVATION"},
     {EncounterKind::note, "NOTE"}}};

// Reads a required member; any absence or type mismatch voids the decode.
template <typename T>
bool read(const json& doc, const char* key, T& out) {
  auto it = doc.find(key);
  if (it == doc.end()) return false;
  try {
    it->get_to(out);
    return true;
  } catch (const json::exception&) {
    return false;
  }
}

}  // namespace

std::string_view to_string(Sex v) noexcept { return name_of(kSex, v); }
std::string_view to_string(Role v) noexcept { return name_of(kRole, v); }
std::string_view to_string(Modality v) noexcept { return name_of(kModality, v); }
std::string_view to_string(RxStatus v) noexcept { return name_of(kRxStatus, v); }
std::string_view to_string(EncounterKind v) noexcept { return name_of(kEncounterKind, v); }

std::optional<Sex> parse_sex(std::string_view s) noexcept { return lookup(kSex, s); }
std::optional<Role> parse_role(std::string_view s) noexcept { return lookup(kRole, s); }
std::optional<Modality> parse_modality(std::string_view s) noexcept { return lookup(kModality, s); }
std::optional<RxStatus> parse_rx_status(std::string_view s) noexcept { return lookup(kRxStatus, s); }
std::optional<EncounterKind> parse_encounter_kind(std::string_view s) noexcept {
  return lookup(kEncounterKind, s);
}

Millis entry_time(const HistoryEntry& e) {
  return std::visit(
      [](const auto& v) -> Millis {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Encounter>) return v.occurred_at;
        else return v.prescribed_at;
      },
      e);
}

const std::string& entry_id(const HistoryEntry& e) {
  return std::visit(
      [](const auto& v) -> const std::string& {
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Encounter>) return v.encounter_id;
        else return v.rx_id;
      },
      e);
}

bool history_before(const HistoryEntry& a, const HistoryEntry& b) {
  const Millis ta = entry_time(a);
  const Millis tb = entry_time(b);
  if (ta != tb) return ta < tb;
  return entry_id(a) < entry_id(b);
}

json to_document(const Zone& v) { return {{"zone_id", v.zone_id}, {"name", v.name}}; }

json to_document(const Facility& v) {
  return {{"facility_id", v.facility_id},
          {"name", v.name},
          {"zone_id", v.zone_id},
          {"modality", to_string(v.modality)}};
}

json to_document(const Clinician& v) {
  return {{"clinician_id", v.clinician_id},
          {"name", v.name},
          {"role", to_string(v.role)},
          {"facility_id", v.facility_id}};
}

json to_document(const PatientRecord& v) {
  return {{"patient_id", v.patient_id},
          {"name", v.name},
          {"birth_date", format_date(v.birth_date)},
          {"sex", to_string(v.sex)},
          {"zone_id", v.zone_id},
          {"allergies", v.allergies},
          {"registered_at", v.registered_at}};
}

json to_document(const Encounter& v) {
  return {{"encounter_id", v.encounter_id},
          {"patient_id", v.patient_id},
          {"facility_id", v.facility_id},
          {"clinician_id", v.clinician_id},
          {"occurred_at", v.occurred_at},
          {"kind", to_string(v.kind)},
          {"diagnosis_codes", v.diagnosis_codes},
          {"note", v.note}};
}

json to_document(const Prescription& v) {
  return {{"rx_id", v.rx_id},
          {"patient_id", v.patient_id},
          {"prescriber_id", v.prescriber_id},
          {"drug_code", v.drug_code},
          {"dose", v.dose},
          {"refills_remaining", v.refills_remaining},
          {"status", to_string(v.status)},
          {"prescribed_at", v.prescribed_at}};
}

std::optional<Zone> zone_from(const json& doc) {
  Zone v;
  if (!read(doc, "zone_id", v.zone_id) || !read(doc, "name", v.name)) return std::nullopt;
  return v;
}

std::optional<Facility> facility_from(const json& doc) {
  Facility v;
  std::string modality;
  if (!read(doc, "facility_id", v.facility_id) || !read(doc, "name", v.name) ||
      !read(doc, "zone_id", v.zone_id) || !read(doc, "modality", modality))
    return std::nullopt;
  auto m = parse_modality(modality);
  if (!m) return std::nullopt;
  v.modality = *m;
  return v;
}

std::optional<Clinician> clinician_from(const json& doc) {
  Clinician v;
  std::string role;
  if (!read(doc, "clinician_id", v.clinician_id) || !read(doc, "name", v.name) ||
      !read(doc, "role", role) || !read(doc, "facility_id", v.facility_id))
    return std::nullopt;
  auto r = parse_role(role);
  if (!r) return std::nullopt;
  v.role = *r;
  return v;
}

std::optional<PatientRecord> patient_from(const json& doc) {
  PatientRecord v;
  std::string birth, sex;
  if (!read(doc, "patient_id", v.patient_id) || !read(doc, "name", v.name) ||
      !read(doc, "birth_date", birth) || !read(doc, "sex", sex) ||
      !read(doc, "zone_id", v.zone_id) || !read(doc, "allergies", v.allergies) ||
      !read(doc, "registered_at", v.registered_at))
    return std::nullopt;
  auto d = parse_date(birth);
  auto s = parse_sex(sex);
  if (!d || !s) return std::nullopt;
  v.birth_date = *d;
  v.sex = *s;
  return v;
}

std::optional<Encounter> encounter_from(const json& doc) {
  Encounter v;
  std::string kind;
  if (!read(doc, "encounter_id", v.encounter_id) || !read(doc, "patient_id", v.patient_id) ||
      !read(doc, "facility_id", v.facility_id) || !read(doc, "clinician_id", v.clinician_id) ||
      !read(doc, "occurred_at", v.occurred_at) || !read(doc, "kind", kind) ||
      !read(doc, "diagnosis_codes", v.diagnosis_codes) || !read(doc, "note", v.note))
    return std::nullopt;
  auto k = parse_encounter_kind(kind);
  if (!k) return std::nullopt;
  v.kind = *k;
  return v;
}

std::optional<Prescription> prescription_from(const json& doc) {
  Prescription v;
  std::string status;
  if (!read(doc, "rx_id", v.rx_id) || !read(doc, "patient_id", v.patient_id) ||
      !read(doc, "prescriber_id", v.prescriber_id) || !read(doc, "drug_code", v.drug_code) ||
      !read(doc, "dose", v.dose) || !read(doc, "refills_remaining", v.refills_remaining) ||
      !read(doc, "status", status) || !read(doc, "prescribed_at", v.prescribed_at))
    return std::nullopt;
  auto s = parse_rx_status(status);
  if (!s || v.refills_remaining < 0) return std::nullopt;
  v.status = *s;
  return v;
}

json history_entry_json(const HistoryEntry& e) {
  return std::visit(
      [](const auto& v) {
        json j = to_document(v);
        if constexpr (std::is_same_v<std::decay_t<decltype(v)>, Encounter>) j["type"] = "encounter";
        else j["type"] = "prescription";
        return j;
      },
      e);
}

}  // namespace ehr::core
