#pragma once

#include <compare>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/common/time.hpp"
#include "ehr/core/view.hpp"

namespace ehr::analytics {

inline constexpr std::size_t kDefaultSuppressionK = 5;

/// Anonymized count of encounters carrying `condition_code` for patients of
/// one zone within one calendar month.
struct ZoneAggregate {
  std::string zone_id;
  Period period;
  std::string condition_code;
  std::size_t count = 0;

  friend auto operator<=>(const ZoneAggregate&, const ZoneAggregate&) = default;
};

/// Registered (live) patients per zone.
std::map<std::string, std::size_t> zone_populations(const core::EntityView& view);

/// One row per (zone, condition) with a non-zero count, sorted by zone then
/// condition. An encounter contributes once per distinct diagnosis code.
std::vector<ZoneAggregate> build_aggregates(const core::EntityView& view, const Period& period);

/// Withdraws rows of zones with fewer than k registered patients and rows
/// whose own count is below k. Withdrawn rows are absent, not zeroed.
Result<std::vector<ZoneAggregate>> suppress_small_zones(std::vector<ZoneAggregate> rows,
                                                        const core::EntityView& view,
                                                        std::size_t k);

/// Export document {period, k, rows:[{zone_id, period, condition_code, count}]}.
/// Re-checks the threshold and fails with UNSUPPRESSED_INPUT on any violation.
Result<nlohmann::json> export_anonymized(std::span<const ZoneAggregate> rows,
                                         const core::EntityView& view, const Period& period,
                                         std::size_t k);

}  // namespace ehr::analytics
