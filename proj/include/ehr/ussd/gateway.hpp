#pragma once

#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "ehr/auth/authenticator.hpp"
#include "ehr/service.hpp"
#include "ehr/ussd/menu.hpp"
#include "ehr/ussd/pdu.hpp"

namespace ehr::ussd {

inline constexpr std::string_view kDefaultShortcode = "*384#";
inline constexpr Millis kDefaultSessionTimeout = 90 * kSecond;

inline constexpr std::string_view kPinPrompt = "Enter PIN:";
inline constexpr std::string_view kSessionExpired = "Session expired. Dial again.";

struct GatewayConfig {
  std::string shortcode{kDefaultShortcode};
  Millis session_timeout = kDefaultSessionTimeout;
};

enum class SessionState { await_pin, menu, prompt, closed };
std::string_view to_string(SessionState s) noexcept;

/// Read-only copy of a session's bookkeeping.
struct SessionInfo {
  std::string session_id;
  std::string msisdn;
  std::optional<std::string> clinician_id;
  SessionState state = SessionState::await_pin;
  MenuState menu;
  Millis created_at = 0;
  Millis last_activity = 0;
};

/// Terminates USSD dialogues. The gateway reaches the central service over
/// the telco side, never through a facility's internet link; `uplink`
/// reports whether that path is currently available.
class Gateway {
 public:
  using UplinkProbe = std::function<bool(Millis)>;

  Gateway(Service& service, GatewayConfig config = {}, MenuTree tree = MenuTree::shipped());

  /// Every response carries at most kMaxUssdChars characters. Distinct
  /// sessions may be handled concurrently; one session's PDUs are handled
  /// one at a time.
  UssdPdu handle_pdu(const UssdPdu& pdu, Millis now);

  /// Closes every live session idle for longer than the timeout.
  std::size_t expire_sessions(Millis now);

  void set_uplink(UplinkProbe probe);

  std::optional<SessionInfo> session(std::string_view session_id) const;
  std::size_t live_sessions() const;
  const GatewayConfig& config() const noexcept { return config_; }
  const MenuEngine& engine() const noexcept { return engine_; }

 private:
  struct Session {
    std::mutex mu;
    SessionInfo info;
    std::optional<auth::Identity> identity;
  };

  UssdPdu begin(const UssdPdu& pdu, Millis now);
  UssdPdu resume(Session& s, const UssdPdu& pdu, Millis now);
  UssdPdu reply(const UssdPdu& to, PduKind kind, std::string text) const;
  bool uplink_up(Millis now) const;
  std::shared_ptr<Session> find(std::string_view session_id) const;
  void close(Session& s);

  Service& service_;
  GatewayConfig config_;
  MenuEngine engine_;

  mutable std::mutex table_mu_;
  std::map<std::string, std::shared_ptr<Session>, std::less<>> sessions_;
  std::map<std::string, std::string, std::less<>> by_msisdn_;
  UplinkProbe uplink_;
};

}  // namespace ehr::ussd
