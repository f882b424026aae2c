#pragma once

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/core/store.hpp"
#include "ehr/core/types.hpp"

namespace ehr::core {

// Lenient decoders for client input: optional fields take their defaults
// and ids may be omitted to request generated ones. Errors are VALIDATION.
Result<PatientRecord> patient_input(const nlohmann::json& doc);
Result<Encounter> encounter_input(const nlohmann::json& doc);
Result<Prescription> prescription_input(const nlohmann::json& doc);

/// {"op": <name>, ...fields}; op is one of register_zone, register_facility,
/// register_clinician, register_patient, update_patient, record_encounter,
/// add_prescription, request_refill, grant_refill, expire_prescription,
/// void_encounter. Fields are those of the corresponding entity.
Result<Mutation> mutation_from_json(const nlohmann::json& doc);

}  // namespace ehr::core
