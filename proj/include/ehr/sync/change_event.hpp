#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/sync/hlc.hpp"

namespace ehr::sync {

enum class EntityKind { zone, facility, clinician, patient, encounter, prescription };

std::string_view kind_name(EntityKind k) noexcept;
std::optional<EntityKind> parse_kind(std::string_view s) noexcept;

/// Field path naming the whole entity. A whole-entity event carries an
/// object whose members are written as individual fields, or a tombstone
/// that deletes the entity.
inline constexpr std::string_view kWholeEntity = "";

/// Reserved field set by a whole-entity tombstone.
inline constexpr std::string_view kDeletedField = "_deleted";

/// Unit of replication. Immutable once created.
struct ChangeEvent {
  std::string event_id;
  EntityKind entity_kind = EntityKind::patient;
  std::string entity_id;
  std::string field_path;
  nlohmann::json new_value;
  bool tombstone = false;
  Hlc hlc;
  std::string origin_replica;

  friend bool operator==(const ChangeEvent&, const ChangeEvent&) = default;
};

/// Structural checks shared by every ingestion path.
Status validate_event(const ChangeEvent& e);

nlohmann::json event_to_json(const ChangeEvent& e);
Result<ChangeEvent> event_from_json(const nlohmann::json& j);

/// Events strictly after `cursor`, in log order.
Result<std::vector<ChangeEvent>> compute_delta(std::span<const ChangeEvent> log,
                                               std::size_t cursor);

}  // namespace ehr::sync
