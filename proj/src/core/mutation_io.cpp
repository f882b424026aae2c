#include "ehr/core/mutation_io.hpp"

#include <string>
#include <vector>

namespace ehr::core {
namespace {

using nlohmann::json;

Error invalid(std::string detail) { return make_error(Errc::validation, std::move(detail)); }

template <typename T>
Status read(const json& doc, const char* key, T& out, bool required) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) {
    if (required) return invalid(std::string("missing field ") + key);
    return Ok{};
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    return invalid(std::string("wrong type for field ") + key);
  }
  return Ok{};
}

Status all(std::initializer_list<Status> reads) {
  for (const Status& s : reads) {
    if (!s) return s.error();
  }
  return Ok{};
}

Result<std::string> required_id(const json& doc, const char* key) {
  std::string id;
  if (auto s = read(doc, key, id, true); !s) return s.error();
  if (id.empty()) return invalid(std::string("empty ") + key);
  return id;
}

}  // namespace

Result<PatientRecord> patient_input(const json& doc) {
  if (!doc.is_object()) return invalid("patient must be an object");
  PatientRecord p;
  std::string birth, sex;
  std::vector<std::string> allergies;
  if (auto s = all({read(doc, "patient_id", p.patient_id, false), read(doc, "name", p.name, true),
                    read(doc, "birth_date", birth, true), read(doc, "sex", sex, true),
                    read(doc, "zone_id", p.zone_id, true),
                    read(doc, "allergies", allergies, false)});
      !s)
    return s.error();
  auto d = parse_date(birth);
  if (!d) return invalid("birth_date must be YYYY-MM-DD");
  auto x = parse_sex(sex);
  if (!x) return invalid("sex must be F, M or X");
  if (p.name.empty()) return invalid("name must not be empty");
  p.birth_date = *d;
  p.sex = *x;
  p.allergies = {allergies.begin(), allergies.end()};
  return p;
}

Result<Encounter> encounter_input(const json& doc) {
  if (!doc.is_object()) return invalid("encounter must be an object");
  Encounter e;
  std::string kind = "VISIT";
  if (auto s = all({read(doc, "encounter_id", e.encounter_id, false),
                    read(doc, "patient_id", e.patient_id, true),
                    read(doc, "facility_id", e.facility_id, false),
                    read(doc, "clinician_id", e.clinician_id, false),
                    read(doc, "occurred_at", e.occurred_at, false), read(doc, "kind", kind, false),
                    read(doc, "diagnosis_codes", e.diagnosis_codes, false),
                    read(doc, "note", e.note, false)});
      !s)
    return s.error();
  auto k = parse_encounter_kind(kind);
  if (!k) return invalid("kind must be VISIT, OBSERVATION or NOTE");
  e.kind = *k;
  return e;
}

Result<Prescription> prescription_input(const json& doc) {
  if (!doc.is_object()) return invalid("prescription must be an object");
  Prescription rx;
  if (auto s = all({read(doc, "rx_id", rx.rx_id, false), read(doc, "patient_id", rx.patient_id, true),
                    read(doc, "prescriber_id", rx.prescriber_id, false),
                    read(doc, "drug_code", rx.drug_code, true), read(doc, "dose", rx.dose, true),
                    read(doc, "refills_remaining", rx.refills_remaining, false),
                    read(doc, "prescribed_at", rx.prescribed_at, false)});
      !s)
    return s.error();
  if (rx.refills_remaining < 0) return invalid("refills_remaining must be non-negative");
  return rx;
}

Result<Mutation> mutation_from_json(const json& doc) {
  if (!doc.is_object()) return invalid("mutation must be an object");
  std::string op;
  if (auto s = read(doc, "op", op, true); !s) return s.error();

  if (op == "register_zone") {
    Zone z;
    if (auto s = all({read(doc, "zone_id", z.zone_id, true), read(doc, "name", z.name, false)}); !s)
      return s.error();
    return Mutation{RegisterZone{z}};
  }
  if (op == "register_facility") {
    Facility f;
    std::string modality = "MES";
    if (auto s = all({read(doc, "facility_id", f.facility_id, true), read(doc, "name", f.name, false),
                      read(doc, "zone_id", f.zone_id, true), read(doc, "modality", modality, false)});
        !s)
      return s.error();
    auto m = parse_modality(modality);
    if (!m) return invalid("modality must be WES, MES or UES");
    f.modality = *m;
    return Mutation{RegisterFacility{f}};
  }
  if (op == "register_clinician") {
    Clinician c;
    std::string role;
    if (auto s = all({read(doc, "clinician_id", c.clinician_id, true), read(doc, "name", c.name, false),
                      read(doc, "role", role, true), read(doc, "facility_id", c.facility_id, true)});
        !s)
      return s.error();
    auto r = parse_role(role);
    if (!r) return invalid("unknown role " + role);
    c.role = *r;
    return Mutation{RegisterClinician{c}};
  }
  if (op == "register_patient") {
    auto p = patient_input(doc);
    if (!p) return p.error();
    return Mutation{RegisterPatient{std::move(*p)}};
  }
  if (op == "update_patient") {
    UpdatePatient u;
    auto id = required_id(doc, "patient_id");
    if (!id) return id.error();
    u.patient_id = *id;
    if (doc.contains("name")) {
      std::string v;
      if (auto s = read(doc, "name", v, true); !s) return s.error();
      u.name = v;
    }
    if (doc.contains("birth_date")) {
      std::string v;
      if (auto s = read(doc, "birth_date", v, true); !s) return s.error();
      auto d = parse_date(v);
      if (!d) return invalid("birth_date must be YYYY-MM-DD");
      u.birth_date = *d;
    }
    if (doc.contains("sex")) {
      std::string v;
      if (auto s = read(doc, "sex", v, true); !s) return s.error();
      auto x = parse_sex(v);
      if (!x) return invalid("sex must be F, M or X");
      u.sex = *x;
    }
    if (doc.contains("zone_id")) {
      std::string v;
      if (auto s = read(doc, "zone_id", v, true); !s) return s.error();
      u.zone_id = v;
    }
    if (doc.contains("allergies")) {
      std::vector<std::string> v;
      if (auto s = read(doc, "allergies", v, true); !s) return s.error();
      u.allergies = std::set<std::string>(v.begin(), v.end());
    }
    return Mutation{std::move(u)};
  }
  if (op == "record_encounter") {
    auto e = encounter_input(doc);
    if (!e) return e.error();
    return Mutation{RecordEncounter{std::move(*e)}};
  }
  if (op == "add_prescription") {
    auto rx = prescription_input(doc);
    if (!rx) return rx.error();
    return Mutation{AddPrescription{std::move(*rx)}};
  }
  if (op == "request_refill" || op == "grant_refill" || op == "expire_prescription") {
    auto id = required_id(doc, "rx_id");
    if (!id) return id.error();
    if (op == "request_refill") return Mutation{RequestRefill{*id}};
    if (op == "grant_refill") return Mutation{GrantRefill{*id}};
    return Mutation{ExpirePrescription{*id}};
  }
  if (op == "void_encounter") {
    auto id = required_id(doc, "encounter_id");
    if (!id) return id.error();
    return Mutation{VoidEncounter{*id}};
  }
  return invalid("unknown op " + op);
}

}  // namespace ehr::core
