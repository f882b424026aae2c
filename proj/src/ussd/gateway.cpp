#include "ehr/ussd/gateway.hpp"

#include "ehr/common/utf8.hpp"

namespace ehr::ussd {
namespace {

/// The menu's view of the EHR: one authenticated identity at one instant,
/// failing fast when the central service is unreachable.
class ServicePort final : public EhrPort {
 public:
  ServicePort(Service& service, const auth::Identity& who, Millis now, bool uplink)
      : service_(service), who_(who), now_(now), uplink_(uplink) {}

  Result<core::PatientRecord> get_patient(std::string_view id) override {
    if (!uplink_) return down();
    return service_.get_patient(who_, id, now_);
  }
  Result<std::vector<core::HistoryEntry>> patient_history(std::string_view id) override {
    if (!uplink_) return down();
    return service_.patient_history(who_, id, now_);
  }
  Result<core::RefillRequest> request_refill(std::string_view rx_id) override {
    if (!uplink_) return down();
    return service_.request_refill(who_, rx_id, now_);
  }
  Result<std::string> record_encounter(std::string_view patient_id, core::EncounterKind kind,
                                       std::string_view text) override {
    if (!uplink_) return down();
    core::Encounter e;
    e.patient_id = std::string(patient_id);
    e.kind = kind;
    e.note = std::string(text);
    e.occurred_at = now_;
    return service_.record_encounter(who_, std::move(e), now_);
  }
  Result<std::vector<core::Prescription>> pending_refills() override {
    if (!uplink_) return down();
    return service_.pending_refills(who_, now_);
  }

 private:
  static Error down() { return make_error(Errc::link_down, "gateway uplink down"); }

  Service& service_;
  const auth::Identity& who_;
  Millis now_;
  bool uplink_;
};

}  // namespace

std::string_view to_string(SessionState s) noexcept {
  switch (s) {
    case SessionState::await_pin: return "AWAIT_PIN";
    case SessionState::menu: return "MENU";
    case SessionState::prompt: return "PROMPT";
    case SessionState::closed: return "CLOSED";
  }
  return "CLOSED";
}

Gateway::Gateway(Service& service, GatewayConfig config, MenuTree tree)
    : service_(service), config_(std::move(config)), engine_(std::move(tree)) {}

void Gateway::set_uplink(UplinkProbe probe) {
  std::lock_guard lock(table_mu_);
  uplink_ = std::move(probe);
}

bool Gateway::uplink_up(Millis now) const {
  std::lock_guard lock(table_mu_);
  return !uplink_ || uplink_(now);
}

std::shared_ptr<Gateway::Session> Gateway::find(std::string_view session_id) const {
  std::lock_guard lock(table_mu_);
  auto it = sessions_.find(session_id);
  return it == sessions_.end() ? nullptr : it->second;
}

UssdPdu Gateway::reply(const UssdPdu& to, PduKind kind, std::string text) const {
  // Guard only: every screen producer already fits the budget.
  if (utf8::length(text) > kMaxUssdChars) text = utf8::ellipsize(text, kMaxUssdChars);
  return UssdPdu{to.session_id, to.msisdn, kind, std::move(text)};
}

void Gateway::close(Session& s) {
  s.info.state = SessionState::closed;
  s.identity.reset();
  std::lock_guard lock(table_mu_);
  auto it = by_msisdn_.find(s.info.msisdn);
  if (it != by_msisdn_.end() && it->second == s.info.session_id) by_msisdn_.erase(it);
}

UssdPdu Gateway::handle_pdu(const UssdPdu& pdu, Millis now) {
  if (pdu.kind == PduKind::begin) return begin(pdu, now);

  auto s = find(pdu.session_id);
  if (!s) {
    return reply(pdu, PduKind::end, pdu.kind == PduKind::cont ? std::string(kSessionExpired) : "");
  }
  std::lock_guard lock(s->mu);
  if (s->info.msisdn != pdu.msisdn) return reply(pdu, PduKind::end, std::string(kSessionExpired));
  if (pdu.kind != PduKind::cont) {
    if (s->info.state != SessionState::closed) close(*s);
    return reply(pdu, PduKind::end, "");
  }
  if (s->info.state == SessionState::closed) {
    return reply(pdu, PduKind::end, std::string(kSessionExpired));
  }
  if (now - s->info.last_activity > config_.session_timeout) {
    close(*s);
    return reply(pdu, PduKind::end, std::string(kSessionExpired));
  }
  s->info.last_activity = std::max(s->info.last_activity, now);
  return resume(*s, pdu, now);
}

UssdPdu Gateway::begin(const UssdPdu& pdu, Millis now) {
  if (pdu.text != config_.shortcode) return reply(pdu, PduKind::end, "Unknown service code.");
  if (!service_.msisdn_registered(pdu.msisdn)) {
    return reply(pdu, PduKind::end, "This number is not registered for EHR access.");
  }

  // One live dialogue per msisdn and per session id: a new BEGIN replaces it.
  std::shared_ptr<Session> previous[2];
  {
    std::lock_guard lock(table_mu_);
    if (auto it = by_msisdn_.find(pdu.msisdn); it != by_msisdn_.end()) {
      if (auto old = sessions_.find(it->second); old != sessions_.end()) previous[0] = old->second;
    }
    if (auto old = sessions_.find(pdu.session_id); old != sessions_.end()) previous[1] = old->second;
  }
  for (auto& old : previous) {
    if (!old) continue;
    std::lock_guard lock(old->mu);
    if (old->info.state != SessionState::closed) close(*old);
  }

  auto s = std::make_shared<Session>();
  s->info.session_id = pdu.session_id;
  s->info.msisdn = pdu.msisdn;
  s->info.state = SessionState::await_pin;
  s->info.created_at = now;
  s->info.last_activity = now;
  {
    std::lock_guard lock(table_mu_);
    sessions_[pdu.session_id] = s;
    by_msisdn_[pdu.msisdn] = pdu.session_id;
  }
  return reply(pdu, PduKind::cont, std::string(kPinPrompt));
}

UssdPdu Gateway::resume(Session& s, const UssdPdu& pdu, Millis now) {
  const bool overlong = utf8::length(pdu.text) > kMaxUssdChars;

  if (s.info.state == SessionState::await_pin) {
    if (overlong) return reply(pdu, PduKind::cont, "Input too long.\n" + std::string(kPinPrompt));
    if (!uplink_up(now)) {
      close(s);
      return reply(pdu, PduKind::end, "Service unavailable. Try later.");
    }
    auto who = service_.login_ussd(pdu.msisdn, pdu.text, now);
    if (who) {
      s.identity = *who;
      s.info.clinician_id = who->clinician_id;
      s.info.state = SessionState::menu;
      s.info.menu = engine_.start();
      return reply(pdu, PduKind::cont, engine_.current_screen(s.info.menu));
    }
    if (who.code() == Errc::bad_credentials) {
      return reply(pdu, PduKind::cont, "Wrong PIN.\n" + std::string(kPinPrompt));
    }
    close(s);
    if (who.code() == Errc::locked) return reply(pdu, PduKind::end, "Too many attempts. Try later.");
    return reply(pdu, PduKind::end, "Access refused.");
  }

  if (overlong) return reply(pdu, PduKind::cont, engine_.current_screen(s.info.menu, "Input too long."));

  ServicePort port(service_, *s.identity, now, uplink_up(now));
  StepResult r = engine_.step(s.info.menu, pdu.text, port);
  if (r.end) {
    close(s);
    return reply(pdu, PduKind::end, std::move(r.text));
  }
  s.info.state = s.info.menu.mode == MenuMode::prompt ? SessionState::prompt : SessionState::menu;
  return reply(pdu, PduKind::cont, std::move(r.text));
}

std::size_t Gateway::expire_sessions(Millis now) {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(table_mu_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  std::size_t expired = 0;
  std::vector<std::shared_ptr<Session>> purge;
  for (auto& s : all) {
    std::lock_guard lock(s->mu);
    if (s->info.state != SessionState::closed) {
      if (now - s->info.last_activity > config_.session_timeout) {
        close(*s);
        ++expired;
      }
    } else if (now - s->info.last_activity > 10 * config_.session_timeout) {
      purge.push_back(s);
    }
  }
  std::lock_guard lock(table_mu_);
  for (const auto& s : purge) {
    auto it = sessions_.find(s->info.session_id);
    if (it != sessions_.end() && it->second == s) sessions_.erase(it);
  }
  return expired;
}

std::optional<SessionInfo> Gateway::session(std::string_view session_id) const {
  auto s = find(session_id);
  if (!s) return std::nullopt;
  std::lock_guard lock(s->mu);
  return s->info;
}

std::size_t Gateway::live_sessions() const {
  std::vector<std::shared_ptr<Session>> all;
  {
    std::lock_guard lock(table_mu_);
    for (auto& [id, s] : sessions_) all.push_back(s);
  }
  std::size_t n = 0;
  for (auto& s : all) {
    std::lock_guard lock(s->mu);
    if (s->info.state != SessionState::closed) ++n;
  }
  return n;
}

}  // namespace ehr::ussd
