#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace ehr::utf8 {

/// Number of code points; invalid bytes count as one each.
std::size_t length(std::string_view s) noexcept;

/// Longest prefix with at most `max_chars` code points.
std::string_view prefix(std::string_view s, std::size_t max_chars) noexcept;

/// Shortens to `max_chars` code points, marking the cut with "..".
std::string ellipsize(std::string_view s, std::size_t max_chars);

bool is_valid(std::string_view s) noexcept;

}  // namespace ehr::utf8
