#include "ehr/sync/change_event.hpp"

namespace ehr::sync {

using nlohmann::json;

std::string_view kind_name(EntityKind k) noexcept {
  switch (k) {
    case EntityKind::zone: return "zone";
    case EntityKind::facility: return "facility";
    case EntityKind::clinician: return "clinician";
    case EntityKind::patient: return "patient";
    case EntityKind::encounter: return "encounter";
    case EntityKind::prescription: return "prescription";
  }
  return "unknown";
}

std::optional<EntityKind> parse_kind(std::string_view s) noexcept {
  for (auto k : {EntityKind::zone, EntityKind::facility, EntityKind::clinician,
                 EntityKind::patient, EntityKind::encounter, EntityKind::prescription}) {
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

Status validate_event(const ChangeEvent& e) {
  auto bad = [](std::string why) { return make_error(Errc::malformed_event, std::move(why)); };
  if (e.event_id.empty()) return bad("empty event_id");
  if (e.entity_id.empty()) return bad("empty entity_id");
  if (e.origin_replica.empty()) return bad("empty origin_replica");
  if (e.hlc.replica_id != e.origin_replica) return bad("hlc replica differs from origin");
  if (!e.field_path.empty() && e.field_path.front() == '_') return bad("reserved field path");
  if (e.field_path.empty() && !e.tombstone) {
    if (!e.new_value.is_object() || e.new_value.empty()) return bad("whole-entity write needs an object");
    for (const auto& [key, _] : e.new_value.items()) {
      if (key.empty() || key.front() == '_') return bad("reserved or empty field '" + key + "'");
    }
  }
  if (e.tombstone && !e.new_value.is_null()) return bad("tombstone carries a value");
  return Ok{};
}

json event_to_json(const ChangeEvent& e) {
  return json{{"event_id", e.event_id},
              {"entity_kind", kind_name(e.entity_kind)},
              {"entity_id", e.entity_id},
              {"field_path", e.field_path},
              {"new_value", e.new_value},
              {"tombstone", e.tombstone},
              {"hlc", e.hlc},
              {"origin_replica", e.origin_replica}};
}

Result<ChangeEvent> event_from_json(const json& j) {
  try {
    ChangeEvent e;
    j.at("event_id").get_to(e.event_id);
    auto kind = parse_kind(j.at("entity_kind").get<std::string>());
    if (!kind) return make_error(Errc::malformed_event, "unknown entity_kind");
    e.entity_kind = *kind;
    j.at("entity_id").get_to(e.entity_id);
    j.at("field_path").get_to(e.field_path);
    e.new_value = j.at("new_value");
    e.tombstone = j.value("tombstone", false);
    j.at("hlc").get_to(e.hlc);
    j.at("origin_replica").get_to(e.origin_replica);
    if (auto ok = validate_event(e); !ok) return ok.error();
    return e;
  } catch (const json::exception& ex) {
    return make_error(Errc::malformed_event, ex.what());
  }
}

Result<std::vector<ChangeEvent>> compute_delta(std::span<const ChangeEvent> log,
                                               std::size_t cursor) {
  if (cursor > log.size()) {
    return make_error(Errc::cursor_out_of_range,
                      std::to_string(cursor) + " > " + std::to_string(log.size()));
  }
  return std::vector<ChangeEvent>(log.begin() + static_cast<std::ptrdiff_t>(cursor), log.end());
}

}  // namespace ehr::sync
