#include "ehr/core/view.hpp"

#include <tuple>

namespace ehr::core {

using nlohmann::json;
using sync::EntityKind;

namespace {

bool wins(const sync::Hlc& hlc, const std::string& event_id, const Cell& current) {
  return std::tie(hlc, event_id) > std::tie(current.hlc, current.event_id);
}

bool merge(EntityState& entity, std::string_view field, Cell incoming) {
  auto it = entity.fields.find(field);
  if (it == entity.fields.end()) {
    entity.fields.emplace(std::string(field), std::move(incoming));
    return true;
  }
  if (!wins(incoming.hlc, incoming.event_id, it->second)) return false;
  it->second = std::move(incoming);
  return true;
}

}  // namespace

bool EntityState::deleted() const {
  auto it = fields.find(sync::kDeletedField);
  return it != fields.end() && it->second.value == true;
}

json EntityState::document() const {
  json doc = json::object();
  for (const auto& [name, cell] : fields) {
    if (cell.tombstone || name.front() == '_') continue;
    doc[name] = cell.value;
  }
  return doc;
}

bool EntityView::apply(const sync::ChangeEvent& e) {
  EntityState& entity = kinds_[e.entity_kind][e.entity_id];
  if (e.field_path.empty()) {
    if (e.tombstone) {
      return merge(entity, sync::kDeletedField, Cell{true, e.hlc, e.event_id, false});
    }
    bool changed = false;
    for (const auto& [key, value] : e.new_value.items()) {
      changed |= merge(entity, key, Cell{value, e.hlc, e.event_id, false});
    }
    return changed;
  }
  return merge(entity, e.field_path,
               Cell{e.tombstone ? json() : e.new_value, e.hlc, e.event_id, e.tombstone});
}

const EntityState* EntityView::find(EntityKind kind, std::string_view id) const {
  auto k = kinds_.find(kind);
  if (k == kinds_.end()) return nullptr;
  auto it = k->second.find(id);
  if (it == k->second.end() || it->second.deleted()) return nullptr;
  return &it->second;
}

void EntityView::for_each(EntityKind kind,
                          const std::function<void(const std::string&, const EntityState&)>& fn) const {
  auto k = kinds_.find(kind);
  if (k == kinds_.end()) return;
  for (const auto& [id, state] : k->second) {
    if (!state.deleted()) fn(id, state);
  }
}

bool EntityView::known(EntityKind kind, std::string_view id) const {
  auto k = kinds_.find(kind);
  return k != kinds_.end() && k->second.find(id) != k->second.end();
}

std::size_t EntityView::live_count(EntityKind kind) const {
  std::size_t n = 0;
  for_each(kind, [&](const std::string&, const EntityState&) { ++n; });
  return n;
}

json EntityView::materialize() const {
  json out = json::object();
  for (const auto& [kind, entities] : kinds_) {
    json& bucket = out[std::string(sync::kind_name(kind))];
    bucket = json::object();
    for (const auto& [id, state] : entities) {
      json doc = state.document();
      if (state.deleted()) doc[std::string(sync::kDeletedField)] = true;
      bucket[id] = std::move(doc);
    }
  }
  return out;
}

json EntityView::to_snapshot() const {
  json out = json::object();
  for (const auto& [kind, entities] : kinds_) {
    json& bucket = out[std::string(sync::kind_name(kind))];
    for (const auto& [id, state] : entities) {
      json fields = json::object();
      for (const auto& [name, cell] : state.fields) {
        fields[name] = {{"value", cell.value},
                        {"hlc", cell.hlc},
                        {"event_id", cell.event_id},
                        {"tombstone", cell.tombstone}};
      }
      bucket[id] = std::move(fields);
    }
  }
  return out;
}

EntityView EntityView::from_snapshot(const json& j) {
  EntityView view;
  for (const auto& [kind_name, bucket] : j.items()) {
    auto kind = sync::parse_kind(kind_name);
    if (!kind) continue;
    for (const auto& [id, fields] : bucket.items()) {
      EntityState& state = view.kinds_[*kind][id];
      for (const auto& [name, cell] : fields.items()) {
        state.fields.emplace(name, Cell{cell.at("value"), cell.at("hlc").get<sync::Hlc>(),
                                        cell.at("event_id").get<std::string>(),
                                        cell.at("tombstone").get<bool>()});
      }
    }
  }
  return view;
}

}  // namespace ehr::core
