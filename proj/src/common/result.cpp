#include "ehr/common/result.hpp"

namespace ehr {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::duplicate_id: return "DUPLICATE_ID";
    case Errc::invalid_zone: return "INVALID_ZONE";
    case Errc::not_found: return "NOT_FOUND";
    case Errc::unknown_patient: return "UNKNOWN_PATIENT";
    case Errc::unknown_clinician: return "UNKNOWN_CLINICIAN";
    case Errc::unknown_facility: return "UNKNOWN_FACILITY";
    case Errc::unknown_rx: return "UNKNOWN_RX";
    case Errc::not_active: return "NOT_ACTIVE";
    case Errc::no_refills_left: return "NO_REFILLS_LEFT";
    case Errc::validation: return "VALIDATION";
    case Errc::clock_drift: return "CLOCK_DRIFT";
    case Errc::cursor_out_of_range: return "CURSOR_OUT_OF_RANGE";
    case Errc::malformed_event: return "MALFORMED_EVENT";
    case Errc::link_down: return "LINK_DOWN";
    case Errc::partial: return "PARTIAL";
    case Errc::bad_credentials: return "BAD_CREDENTIALS";
    case Errc::locked: return "LOCKED";
    case Errc::unknown_principal: return "UNKNOWN_PRINCIPAL";
    case Errc::expired_token: return "EXPIRED_TOKEN";
    case Errc::forbidden: return "FORBIDDEN";
    case Errc::unknown_link: return "UNKNOWN_LINK";
    case Errc::page_out_of_range: return "PAGE_OUT_OF_RANGE";
    case Errc::unsuppressed_input: return "UNSUPPRESSED_INPUT";
    case Errc::assertion_failed: return "ASSERTION_FAILED";
    case Errc::io_error: return "IO_ERROR";
    case Errc::invalid_config: return "INVALID_CONFIG";
  }
  return "UNKNOWN";
}

std::string Error::to_string() const {
  std::string out(errc_name(code));
  if (!detail.empty()) {
    out += ": ";
    out += detail;
  }
  return out;
}

}  // namespace ehr
