#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <random>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ehr/auth/audit.hpp"
#include "ehr/common/result.hpp"
#include "ehr/common/time.hpp"
#include "ehr/core/types.hpp"

namespace ehr::auth {

using core::Role;

enum class Channel { ussd, web };

enum class Action {
  read_patient,
  register_patient,
  update_patient,
  record_encounter,
  record_observation,
  add_prescription,
  request_refill,
  grant_refill,
  expire_prescription,
  void_encounter,
  sync,
  read_aggregates,
  read_audit,
  manage_reference_data,
};

std::string_view action_name(Action a) noexcept;

/// Static role/permission table.
bool role_permits(Role role, Action action) noexcept;

struct Credential {
  std::string clinician_id;
  Role role = Role::nurse;
  std::string facility_id;
  std::optional<std::string> msisdn;
  std::string pin_salt;
  std::string pin_hash;
  std::string password_salt;
  std::string password_hash;
  int failed_attempts = 0;
  std::optional<Millis> locked_until;
};

struct Identity {
  std::string clinician_id;
  Role role = Role::nurse;
  std::string facility_id;
  Channel channel = Channel::web;
  std::string token;
  Millis expires_at = 0;
};

struct AuthPolicy {
  int max_failures = 3;
  Millis lockout = 15 * kMinute;
  Millis web_token_ttl = 8 * kHour;
  int hash_iterations = 4096;
};

/// Credential store, authentication with lockout, bearer tokens and the
/// role check. Every authentication attempt and every refused
/// authorization is written to the audit log.
class Authenticator {
 public:
  Authenticator(AuditLog& audit, AuthPolicy policy, std::uint64_t seed);

  struct Enrollment {
    std::string clinician_id;
    Role role = Role::nurse;
    std::string facility_id;
    std::optional<std::string> msisdn;
    std::string pin;
    std::string password;
  };
  Status enroll(const Enrollment& e);

  bool msisdn_registered(std::string_view msisdn) const;

  Result<Identity> authenticate_ussd(std::string_view msisdn, std::string_view pin, Millis now);
  Result<Identity> authenticate_web(std::string_view username, std::string_view password,
                                    Millis now);

  /// Looks up a bearer token. UNKNOWN_PRINCIPAL for unknown tokens,
  /// EXPIRED_TOKEN past expiry.
  Result<Identity> resolve_token(std::string_view token, Millis now) const;

  /// Allows or refuses `action` on `entity`. Expired identities yield
  /// EXPIRED_TOKEN; refusals yield FORBIDDEN. Both are audited.
  Status authorize(const Identity& who, Action action, std::string_view entity, Millis now);

  std::optional<Credential> credential(std::string_view clinician_id) const;

  /// Persistable form; contains salts and hashes only.
  nlohmann::json export_credentials() const;
  Status import_credentials(const nlohmann::json& doc);

  const AuthPolicy& policy() const noexcept { return policy_; }

 private:
  Result<Identity> check_secret(Credential& cred, Channel channel, std::string_view secret,
                                Millis now);
  std::string new_salt();
  std::string new_token();

  AuditLog& audit_;
  AuthPolicy policy_;
  mutable std::mutex mu_;
  std::mt19937_64 rng_;
  std::map<std::string, Credential, std::less<>> by_id_;
  std::map<std::string, std::string, std::less<>> id_by_msisdn_;
  std::map<std::string, Identity, std::less<>> tokens_;
};

/// {"clinician_id", "role", "facility_id", "msisdn"?, "pin"?, "password"?}
Result<Authenticator::Enrollment> enrollment_from_json(const nlohmann::json& doc);

}  // namespace ehr::auth
