#pragma once

#include <functional>
#include <map>
#include <string>

#include <json.hpp>

#include "ehr/sync/change_event.hpp"

namespace ehr::core {

/// Last-writer-wins register for one field.
struct Cell {
  nlohmann::json value;
  sync::Hlc hlc;
  std::string event_id;
  bool tombstone = false;
};

struct EntityState {
  std::map<std::string, Cell, std::less<>> fields;

  bool deleted() const;
  /// Live (non-tombstoned) fields as a JSON object, reserved fields excluded.
  nlohmann::json document() const;
};

/// Materialized entity map. Each field converges independently to the
/// value written by the greatest (hlc, event_id), so applying any set of
/// events in any order, any number of times, yields the same view.
class EntityView {
 public:
  /// Merges one event; returns true if any cell changed.
  bool apply(const sync::ChangeEvent& e);

  const EntityState* find(sync::EntityKind kind, std::string_view id) const;

  /// Visits live entities of a kind in id order.
  void for_each(sync::EntityKind kind,
                const std::function<void(const std::string&, const EntityState&)>& fn) const;

  /// True if the entity was ever written, deleted or not.
  bool known(sync::EntityKind kind, std::string_view id) const;

  std::size_t live_count(sync::EntityKind kind) const;

  /// Canonical value-level rendering used for convergence checks and
  /// snapshots: {kind: {id: {field: value}}}, tombstoned fields omitted,
  /// deleted entities marked with "_deleted": true.
  nlohmann::json materialize() const;

  /// Full-fidelity encoding including per-cell clocks (snapshot format).
  nlohmann::json to_snapshot() const;
  static EntityView from_snapshot(const nlohmann::json& j);

  friend bool operator==(const EntityView& a, const EntityView& b) {
    return a.materialize() == b.materialize();
  }

 private:
  using EntityMap = std::map<std::string, EntityState, std::less<>>;
  std::map<sync::EntityKind, EntityMap> kinds_;
};

}  // namespace ehr::core
