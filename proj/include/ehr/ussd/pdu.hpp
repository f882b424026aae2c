#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ehr/common/result.hpp"

namespace ehr::ussd {

/// GSM USSD payload limit, in characters (code points).
inline constexpr std::size_t kMaxUssdChars = 182;

/// Largest accepted frame body on the stream transport.
inline constexpr std::size_t kMaxFrameBytes = 4096;

enum class PduKind { begin, cont, end, abort };

std::string_view kind_name(PduKind k) noexcept;
std::optional<PduKind> parse_pdu_kind(std::string_view s) noexcept;

struct UssdPdu {
  std::string session_id;
  std::string msisdn;
  PduKind kind = PduKind::cont;
  std::string text;

  friend bool operator==(const UssdPdu&, const UssdPdu&) = default;
};

/// {"session_id":..,"msisdn":..,"kind":..,"text":..} in exactly that order.
std::string to_json_text(const UssdPdu& pdu);
nlohmann::ordered_json to_json(const UssdPdu& pdu);

/// Structural decode. Text length is not limited here; the gateway applies
/// the character budget so it can answer overlong input with a re-prompt.
Result<UssdPdu> pdu_from_json(const nlohmann::json& j);

/// 4-byte big-endian body length followed by the UTF-8 JSON body.
std::string encode_frame(const UssdPdu& pdu);

/// Incremental decoder for a byte stream of frames.
class FrameDecoder {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }

  /// Next complete frame, if any. An oversized or malformed frame yields an
  /// error; the stream should then be dropped.
  std::optional<Result<UssdPdu>> next();

 private:
  std::string buffer_;
};

}  // namespace ehr::ussd
