#include "ehr/common/utf8.hpp"

namespace ehr::utf8 {

namespace {

// Byte length of the sequence starting at s[i], or 1 if it is malformed.
std::size_t seq_len(std::string_view s, std::size_t i) noexcept {
  const auto c = static_cast<unsigned char>(s[i]);
  std::size_t n = 1;
  if (c >= 0xF0 && c <= 0xF4) n = 4;
  else if (c >= 0xE0) n = 3;
  else if (c >= 0xC2 && c < 0xE0) n = 2;
  else return 1;
  if (c >= 0xF5) return 1;
  if (i + n > s.size()) return 1;
  for (std::size_t k = 1; k < n; ++k) {
    if ((static_cast<unsigned char>(s[i + k]) & 0xC0) != 0x80) return 1;
  }
  return n;
}

}  // namespace

std::size_t length(std::string_view s) noexcept {
  std::size_t count = 0;
  for (std::size_t i = 0; i < s.size(); i += seq_len(s, i)) ++count;
  return count;
}

std::string_view prefix(std::string_view s, std::size_t max_chars) noexcept {
  std::size_t i = 0;
  for (std::size_t count = 0; i < s.size() && count < max_chars; ++count) i += seq_len(s, i);
  return s.substr(0, i);
}

std::string ellipsize(std::string_view s, std::size_t max_chars) {
  if (length(s) <= max_chars) return std::string(s);
  if (max_chars <= 2) return std::string(prefix(s, max_chars));
  std::string out(prefix(s, max_chars - 2));
  out += "..";
  return out;
}

bool is_valid(std::string_view s) noexcept {
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    const std::size_t n = seq_len(s, i);
    if (n == 1 && c >= 0x80) return false;
    i += n;
  }
  return true;
}

}  // namespace ehr::utf8
