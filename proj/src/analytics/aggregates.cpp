#include "ehr/analytics/aggregates.hpp"

#include <set>

#include "ehr/core/types.hpp"

namespace ehr::analytics {

using nlohmann::json;
using sync::EntityKind;

std::map<std::string, std::size_t> zone_populations(const core::EntityView& view) {
  std::map<std::string, std::size_t> pop;
  view.for_each(EntityKind::patient, [&](const std::string&, const core::EntityState& s) {
    if (auto p = core::patient_from(s.document())) ++pop[p->zone_id];
  });
  return pop;
}

std::vector<ZoneAggregate> build_aggregates(const core::EntityView& view, const Period& period) {
  std::map<std::string, std::string> zone_of;
  view.for_each(EntityKind::patient, [&](const std::string& id, const core::EntityState& s) {
    if (auto p = core::patient_from(s.document())) zone_of[id] = p->zone_id;
  });

  std::map<std::pair<std::string, std::string>, std::size_t> counts;
  view.for_each(EntityKind::encounter, [&](const std::string&, const core::EntityState& s) {
    auto e = core::encounter_from(s.document());
    if (!e || !period.contains(e->occurred_at)) return;
    auto zone = zone_of.find(e->patient_id);
    if (zone == zone_of.end()) return;
    const std::set<std::string> codes(e->diagnosis_codes.begin(), e->diagnosis_codes.end());
    for (const auto& code : codes) ++counts[{zone->second, code}];
  });

  std::vector<ZoneAggregate> rows;
  rows.reserve(counts.size());
  for (const auto& [key, n] : counts) rows.push_back({key.first, period, key.second, n});
  return rows;
}

Result<std::vector<ZoneAggregate>> suppress_small_zones(std::vector<ZoneAggregate> rows,
                                                        const core::EntityView& view,
                                                        std::size_t k) {
  if (k < 1) return make_error(Errc::validation, "k must be >= 1");
  const auto pop = zone_populations(view);
  std::erase_if(rows, [&](const ZoneAggregate& r) {
    auto it = pop.find(r.zone_id);
    const std::size_t residents = it == pop.end() ? 0 : it->second;
    return residents < k || r.count < k;
  });
  return rows;
}

Result<json> export_anonymized(std::span<const ZoneAggregate> rows, const core::EntityView& view,
                               const Period& period, std::size_t k) {
  if (k < 1) return make_error(Errc::validation, "k must be >= 1");
  const auto pop = zone_populations(view);
  json out_rows = json::array();
  for (const auto& r : rows) {
    auto it = pop.find(r.zone_id);
    const std::size_t residents = it == pop.end() ? 0 : it->second;
    if (residents < k || r.count < k) {
      return make_error(Errc::unsuppressed_input, "zone " + r.zone_id + " below k");
    }
    out_rows.push_back(json{{"zone_id", r.zone_id},
                            {"period", format_period(r.period)},
                            {"condition_code", r.condition_code},
                            {"count", r.count}});
  }
  return json{{"period", format_period(period)}, {"k", k}, {"rows", std::move(out_rows)}};
}

}  // namespace ehr::analytics
