#include "ehr/ussd/pdu.hpp"

#include "ehr/common/utf8.hpp"

namespace ehr::ussd {

std::string_view kind_name(PduKind k) noexcept {
  switch (k) {
    case PduKind::begin: return "BEGIN";
    case PduKind::cont: return "CONTINUE";
    case PduKind::end: return "END";
    case PduKind::abort: return "ABORT";
  }
  return "?";
}

std::optional<PduKind> parse_pdu_kind(std::string_view s) noexcept {
  for (auto k : {PduKind::begin, PduKind::cont, PduKind::end, PduKind::abort}) {
    if (kind_name(k) == s) return k;
  }
  return std::nullopt;
}

nlohmann::ordered_json to_json(const UssdPdu& pdu) {
  nlohmann::ordered_json j;
  j["session_id"] = pdu.session_id;
  j["msisdn"] = pdu.msisdn;
  j["kind"] = kind_name(pdu.kind);
  j["text"] = pdu.text;
  return j;
}

std::string to_json_text(const UssdPdu& pdu) {
  return to_json(pdu).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

Result<UssdPdu> pdu_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.size() != 4) return make_error(Errc::validation, "PDU needs exactly 4 fields");
    UssdPdu pdu;
    j.at("session_id").get_to(pdu.session_id);
    j.at("msisdn").get_to(pdu.msisdn);
    auto kind = parse_pdu_kind(j.at("kind").get<std::string>());
    if (!kind) return make_error(Errc::validation, "unknown PDU kind");
    pdu.kind = *kind;
    j.at("text").get_to(pdu.text);
    if (pdu.session_id.empty()) return make_error(Errc::validation, "empty session_id");
    if (!utf8::is_valid(pdu.text)) return make_error(Errc::validation, "text is not UTF-8");
    return pdu;
  } catch (const nlohmann::json::exception& ex) {
    return make_error(Errc::validation, ex.what());
  }
}

std::string encode_frame(const UssdPdu& pdu) {
  const std::string body = to_json_text(pdu);
  const auto n = static_cast<std::uint32_t>(body.size());
  std::string out;
  out.reserve(4 + body.size());
  out.push_back(static_cast<char>((n >> 24) & 0xFF));
  out.push_back(static_cast<char>((n >> 16) & 0xFF));
  out.push_back(static_cast<char>((n >> 8) & 0xFF));
  out.push_back(static_cast<char>(n & 0xFF));
  out += body;
  return out;
}

std::optional<Result<UssdPdu>> FrameDecoder::next() {
  if (buffer_.size() < 4) return std::nullopt;
  std::uint32_t n = 0;
  for (int i = 0; i < 4; ++i) n = (n << 8) | static_cast<unsigned char>(buffer_[i]);
  if (n > kMaxFrameBytes) return Result<UssdPdu>(make_error(Errc::validation, "frame too large"));
  if (buffer_.size() < 4 + n) return std::nullopt;
  const std::string body = buffer_.substr(4, n);
  buffer_.erase(0, 4 + n);
  auto j = nlohmann::json::parse(body, nullptr, false);
  if (j.is_discarded()) return Result<UssdPdu>(make_error(Errc::validation, "frame is not JSON"));
  return pdu_from_json(j);
}

}  // namespace ehr::ussd
