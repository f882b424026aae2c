#include "ehr/auth/authenticator.hpp"

#include <cstdio>
#include <limits>

#include "ehr/auth/crypto.hpp"

namespace ehr::auth {

using nlohmann::json;

std::string_view action_name(Action a) noexcept {
  switch (a) {
    case Action::read_patient: return "read_patient";
    case Action::register_patient: return "register_patient";
    case Action::update_patient: return "update_patient";
    case Action::record_encounter: return "record_encounter";
    case Action::record_observation: return "record_observation";
    case Action::add_prescription: return "add_prescription";
    case Action::request_refill: return "request_refill";
    case Action::grant_refill: return "grant_refill";
    case Action::expire_prescription: return "expire_prescription";
    case Action::void_encounter: return "void_encounter";
    case Action::sync: return "sync";
    case Action::read_aggregates: return "read_aggregates";
    case Action::read_audit: return "read_audit";
    case Action::manage_reference_data: return "manage_reference_data";
  }
  return "unknown";
}

bool role_permits(Role role, Action action) noexcept {
  using A = Action;
  switch (role) {
    case Role::physician:
      return action != A::read_audit && action != A::manage_reference_data;
    case Role::nurse:
      return action == A::read_patient || action == A::register_patient ||
             action == A::update_patient || action == A::record_encounter ||
             action == A::record_observation || action == A::request_refill || action == A::sync;
    case Role::pharmacist:
      return action == A::read_patient || action == A::request_refill ||
             action == A::grant_refill || action == A::expire_prescription || action == A::sync;
    case Role::admin:
      return action == A::sync || action == A::read_aggregates || action == A::read_audit ||
             action == A::manage_reference_data;
  }
  return false;
}

Authenticator::Authenticator(AuditLog& audit, AuthPolicy policy, std::uint64_t seed)
    : audit_(audit), policy_(policy), rng_(seed) {}

std::string Authenticator::new_salt() {
  char buf[33];
  std::snprintf(buf, sizeof buf, "%016llx%016llx", static_cast<unsigned long long>(rng_()),
                static_cast<unsigned long long>(rng_()));
  return buf;
}

std::string Authenticator::new_token() { return new_salt() + new_salt(); }

Status Authenticator::enroll(const Enrollment& e) {
  if (e.clinician_id.empty()) return make_error(Errc::validation, "empty clinician id");
  if (e.pin.empty() && e.password.empty()) return make_error(Errc::validation, "no secret given");
  std::lock_guard lock(mu_);
  if (by_id_.contains(e.clinician_id)) return make_error(Errc::duplicate_id, e.clinician_id);
  if (e.msisdn && id_by_msisdn_.contains(*e.msisdn)) {
    return make_error(Errc::duplicate_id, "msisdn already bound");
  }
  Credential c;
  c.clinician_id = e.clinician_id;
  c.role = e.role;
  c.facility_id = e.facility_id;
  c.msisdn = e.msisdn;
  if (!e.pin.empty()) {
    c.pin_salt = new_salt();
    c.pin_hash = pbkdf2_hex(e.pin, c.pin_salt, policy_.hash_iterations);
  }
  if (!e.password.empty()) {
    c.password_salt = new_salt();
    c.password_hash = pbkdf2_hex(e.password, c.password_salt, policy_.hash_iterations);
  }
  if (c.msisdn) id_by_msisdn_.emplace(*c.msisdn, c.clinician_id);
  by_id_.emplace(c.clinician_id, std::move(c));
  return Ok{};
}

bool Authenticator::msisdn_registered(std::string_view msisdn) const {
  std::lock_guard lock(mu_);
  return id_by_msisdn_.find(msisdn) != id_by_msisdn_.end();
}

Result<Identity> Authenticator::check_secret(Credential& cred, Channel channel,
                                             std::string_view secret, Millis now) {
  const std::string_view action = channel == Channel::ussd ? "login.ussd" : "login.web";
  auto refuse = [&](Errc code) -> Result<Identity> {
    auto logged = audit_.append(cred.clinician_id, action, cred.clinician_id, now, errc_name(code));
    if (!logged) return logged.error();
    return make_error(code);
  };

  if (cred.locked_until) {
    if (now < *cred.locked_until) return refuse(Errc::locked);
    cred.locked_until.reset();
    cred.failed_attempts = 0;
  }
  const std::string& salt = channel == Channel::ussd ? cred.pin_salt : cred.password_salt;
  const std::string& hash = channel == Channel::ussd ? cred.pin_hash : cred.password_hash;
  if (hash.empty() || !constant_time_equal(pbkdf2_hex(secret, salt, policy_.hash_iterations), hash)) {
    if (++cred.failed_attempts >= policy_.max_failures) cred.locked_until = now + policy_.lockout;
    return refuse(Errc::bad_credentials);
  }
  cred.failed_attempts = 0;

  Identity id{cred.clinician_id, cred.role, cred.facility_id, channel, new_token(), 0};
  id.expires_at = channel == Channel::web ? now + policy_.web_token_ttl
                                          : std::numeric_limits<Millis>::max();
  auto logged = audit_.append(cred.clinician_id, action, cred.clinician_id, now, "OK");
  if (!logged) return logged.error();
  if (channel == Channel::web) tokens_.emplace(id.token, id);
  return id;
}

Result<Identity> Authenticator::authenticate_ussd(std::string_view msisdn, std::string_view pin,
                                                  Millis now) {
  std::lock_guard lock(mu_);
  auto owner = id_by_msisdn_.find(msisdn);
  if (owner == id_by_msisdn_.end()) {
    if (auto logged = audit_.append(msisdn, "login.ussd", msisdn, now, "UNKNOWN_PRINCIPAL"); !logged)
      return logged.error();
    return make_error(Errc::unknown_principal);
  }
  return check_secret(by_id_.find(owner->second)->second, Channel::ussd, pin, now);
}

Result<Identity> Authenticator::authenticate_web(std::string_view username,
                                                 std::string_view password, Millis now) {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(username);
  if (it == by_id_.end()) {
    if (auto logged = audit_.append(username, "login.web", username, now, "UNKNOWN_PRINCIPAL"); !logged)
      return logged.error();
    return make_error(Errc::unknown_principal);
  }
  return check_secret(it->second, Channel::web, password, now);
}

Result<Identity> Authenticator::resolve_token(std::string_view token, Millis now) const {
  std::lock_guard lock(mu_);
  auto it = tokens_.find(token);
  if (it == tokens_.end()) return make_error(Errc::unknown_principal, "unknown token");
  if (now >= it->second.expires_at) return make_error(Errc::expired_token);
  return it->second;
}

Status Authenticator::authorize(const Identity& who, Action action, std::string_view entity,
                                Millis now) {
  Errc refusal;
  if (now >= who.expires_at) {
    refusal = Errc::expired_token;
  } else if (!role_permits(who.role, action)) {
    refusal = Errc::forbidden;
  } else {
    return Ok{};
  }
  if (auto logged = audit_.append(who.clinician_id, action_name(action), entity, now,
                                  errc_name(refusal));
      !logged) {
    return logged.error();
  }
  return make_error(refusal, std::string(action_name(action)));
}

std::optional<Credential> Authenticator::credential(std::string_view clinician_id) const {
  std::lock_guard lock(mu_);
  auto it = by_id_.find(clinician_id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

json Authenticator::export_credentials() const {
  std::lock_guard lock(mu_);
  json arr = json::array();
  for (const auto& [id, c] : by_id_) {
    json j{{"clinician_id", c.clinician_id},
           {"role", core::to_string(c.role)},
           {"facility_id", c.facility_id},
           {"pin_salt", c.pin_salt},
           {"pin_hash", c.pin_hash},
           {"password_salt", c.password_salt},
           {"password_hash", c.password_hash},
           {"failed_attempts", c.failed_attempts}};
    j["msisdn"] = c.msisdn ? json(*c.msisdn) : json();
    j["locked_until"] = c.locked_until ? json(*c.locked_until) : json();
    arr.push_back(std::move(j));
  }
  return json{{"credentials", arr}};
}

Status Authenticator::import_credentials(const json& doc) {
  std::lock_guard lock(mu_);
  try {
    for (const auto& j : doc.at("credentials")) {
      Credential c;
      j.at("clinician_id").get_to(c.clinician_id);
      auto role = core::parse_role(j.at("role").get<std::string>());
      if (!role) return make_error(Errc::invalid_config, "bad role for " + c.clinician_id);
      c.role = *role;
      j.at("facility_id").get_to(c.facility_id);
      j.at("pin_salt").get_to(c.pin_salt);
      j.at("pin_hash").get_to(c.pin_hash);
      j.at("password_salt").get_to(c.password_salt);
      j.at("password_hash").get_to(c.password_hash);
      c.failed_attempts = j.value("failed_attempts", 0);
      if (!j.at("msisdn").is_null()) c.msisdn = j.at("msisdn").get<std::string>();
      if (!j.at("locked_until").is_null()) c.locked_until = j.at("locked_until").get<Millis>();
      if (c.msisdn) id_by_msisdn_[*c.msisdn] = c.clinician_id;
      by_id_[c.clinician_id] = std::move(c);
    }
  } catch (const json::exception& ex) {
    return make_error(Errc::invalid_config, ex.what());
  }
  return Ok{};
}

Result<Authenticator::Enrollment> enrollment_from_json(const nlohmann::json& doc) {
  if (!doc.is_object()) return make_error(Errc::validation, "enrollment must be an object");
  Authenticator::Enrollment e;
  try {
    e.clinician_id = doc.at("clinician_id").get<std::string>();
    auto role = core::parse_role(doc.at("role").get<std::string>());
    if (!role) return make_error(Errc::validation, "unknown role");
    e.role = *role;
    e.facility_id = doc.at("facility_id").get<std::string>();
    if (doc.contains("msisdn")) e.msisdn = doc.at("msisdn").get<std::string>();
    e.pin = doc.value("pin", std::string{});
    e.password = doc.value("password", std::string{});
  } catch (const nlohmann::json::exception& ex) {
    return make_error(Errc::validation, std::string("enrollment: ") + ex.what());
  }
  return e;
}

}  // namespace ehr::auth
