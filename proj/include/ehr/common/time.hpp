#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace ehr {

/// Milliseconds since the Unix epoch. Simulated components only ever
/// receive time through this type; nothing under src/ reads a clock except
/// system_now_ms().
using Millis = std::int64_t;

inline constexpr Millis kSecond = 1000;
inline constexpr Millis kMinute = 60 * kSecond;
inline constexpr Millis kHour = 60 * kMinute;
inline constexpr Millis kDay = 24 * kHour;

struct CivilDate {
  int year = 1970;
  int month = 1;
  int day = 1;

  auto operator<=>(const CivilDate&) const = default;
};

std::int64_t days_from_civil(const CivilDate& d) noexcept;
CivilDate civil_from_days(std::int64_t days) noexcept;

/// Parses strict YYYY-MM-DD, rejecting impossible days.
std::optional<CivilDate> parse_date(std::string_view text);
std::string format_date(const CivilDate& d);

/// Calendar month "YYYY-MM".
struct Period {
  int year = 1970;
  int month = 1;

  auto operator<=>(const Period&) const = default;
  bool contains(Millis t) const noexcept;
};

std::optional<Period> parse_period(std::string_view text);
std::string format_period(const Period& p);

CivilDate date_of(Millis t) noexcept;
Millis start_of_day(const CivilDate& d) noexcept;

Millis system_now_ms();

}  // namespace ehr
