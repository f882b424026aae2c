#pragma once

#include <memory>
#include <string>
#include <string_view>

#include "ehr/common/result.hpp"

namespace ehr::auth {

std::string sha256_hex(std::string_view data);

/// PBKDF2-HMAC-SHA256, lowercase hex.
std::string pbkdf2_hex(std::string_view secret, std::string_view salt, int iterations);

/// Constant-time comparison of equal-length strings.
bool constant_time_equal(std::string_view a, std::string_view b) noexcept;

/// Encrypt/decrypt seam applied to persisted log lines.
class LineCipher {
 public:
  virtual ~LineCipher() = default;
  virtual std::string encrypt(std::string_view plaintext) = 0;
  virtual Result<std::string> decrypt(std::string_view line) = 0;
};

/// AES-256-GCM with a random 96-bit nonce per line. Output line format:
/// "enc1:" + base64(nonce || ciphertext || tag).
class AesGcmCipher final : public LineCipher {
 public:
  /// Key material is hashed with SHA-256 to form the 256-bit key.
  explicit AesGcmCipher(std::string_view key_material);

  std::string encrypt(std::string_view plaintext) override;
  Result<std::string> decrypt(std::string_view line) override;

 private:
  std::string key_;
};

inline constexpr const char* kStoreKeyEnv = "EHR_STORE_KEY";

/// Cipher keyed from EHR_STORE_KEY, or null when the variable is unset.
std::unique_ptr<LineCipher> cipher_from_env();

}  // namespace ehr::auth
