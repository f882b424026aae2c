#include "ehr/auth/crypto.hpp"

#include <cstdlib>
#include <optional>
#include <vector>

#include <openssl/evp.h>
#include <openssl/rand.h>
#include <openssl/sha.h>

namespace ehr::auth {

namespace {

std::string to_hex(const unsigned char* data, std::size_t n) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out(n * 2, '0');
  for (std::size_t i = 0; i < n; ++i) {
    out[2 * i] = kDigits[data[i] >> 4];
    out[2 * i + 1] = kDigits[data[i] & 0x0F];
  }
  return out;
}

constexpr std::string_view kCipherPrefix = "enc1:";
constexpr int kNonceLen = 12;
constexpr int kTagLen = 16;

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

std::string base64_encode(const std::vector<unsigned char>& in) {
  std::string out(4 * ((in.size() + 2) / 3), '\0');
  const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()), in.data(),
                                static_cast<int>(in.size()));
  out.resize(static_cast<std::size_t>(n));
  return out;
}

std::optional<std::vector<unsigned char>> base64_decode(std::string_view in) {
  if (in.size() % 4 != 0) return std::nullopt;
  std::vector<unsigned char> out(3 * in.size() / 4);
  const int n = EVP_DecodeBlock(out.data(), reinterpret_cast<const unsigned char*>(in.data()),
                                static_cast<int>(in.size()));
  if (n < 0) return std::nullopt;
  std::size_t pad = 0;
  if (!in.empty() && in.back() == '=') ++pad;
  if (in.size() > 1 && in[in.size() - 2] == '=') ++pad;
  out.resize(static_cast<std::size_t>(n) - pad);
  return out;
}

}  // namespace

std::string sha256_hex(std::string_view data) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(data.data()), data.size(), digest);
  return to_hex(digest, sizeof digest);
}

std::string pbkdf2_hex(std::string_view secret, std::string_view salt, int iterations) {
  unsigned char out[32];
  PKCS5_PBKDF2_HMAC(secret.data(), static_cast<int>(secret.size()),
                    reinterpret_cast<const unsigned char*>(salt.data()),
                    static_cast<int>(salt.size()), iterations, EVP_sha256(), sizeof out, out);
  return to_hex(out, sizeof out);
}

bool constant_time_equal(std::string_view a, std::string_view b) noexcept {
  if (a.size() != b.size()) return false;
  unsigned char diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<unsigned char>(a[i] ^ b[i]);
  return diff == 0;
}

AesGcmCipher::AesGcmCipher(std::string_view key_material) {
  unsigned char digest[SHA256_DIGEST_LENGTH];
  SHA256(reinterpret_cast<const unsigned char*>(key_material.data()), key_material.size(), digest);
  key_.assign(reinterpret_cast<const char*>(digest), sizeof digest);
}

std::string AesGcmCipher::encrypt(std::string_view plaintext) {
  std::vector<unsigned char> buf(kNonceLen + plaintext.size() + kTagLen);
  RAND_bytes(buf.data(), kNonceLen);
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  const auto* key = reinterpret_cast<const unsigned char*>(key_.data());
  EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key, buf.data());
  int len = 0;
  EVP_EncryptUpdate(ctx.get(), buf.data() + kNonceLen, &len,
                    reinterpret_cast<const unsigned char*>(plaintext.data()),
                    static_cast<int>(plaintext.size()));
  int tail = 0;
  EVP_EncryptFinal_ex(ctx.get(), buf.data() + kNonceLen + len, &tail);
  EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, kTagLen,
                      buf.data() + kNonceLen + plaintext.size());
  return std::string(kCipherPrefix) + base64_encode(buf);
}

Result<std::string> AesGcmCipher::decrypt(std::string_view line) {
  if (line.substr(0, kCipherPrefix.size()) != kCipherPrefix) {
    return make_error(Errc::io_error, "line is not encrypted");
  }
  auto raw = base64_decode(line.substr(kCipherPrefix.size()));
  if (!raw || raw->size() < static_cast<std::size_t>(kNonceLen + kTagLen)) {
    return make_error(Errc::io_error, "corrupt ciphertext");
  }
  const std::size_t body = raw->size() - kNonceLen - kTagLen;
  std::string out(body, '\0');
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  const auto* key = reinterpret_cast<const unsigned char*>(key_.data());
  EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_gcm(), nullptr, key, raw->data());
  int len = 0;
  EVP_DecryptUpdate(ctx.get(), reinterpret_cast<unsigned char*>(out.data()), &len,
                    raw->data() + kNonceLen, static_cast<int>(body));
  EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, kTagLen, raw->data() + kNonceLen + body);
  int tail = 0;
  if (EVP_DecryptFinal_ex(ctx.get(), reinterpret_cast<unsigned char*>(out.data()) + len, &tail) <= 0) {
    return make_error(Errc::io_error, "authentication tag mismatch");
  }
  return out;
}

std::unique_ptr<LineCipher> cipher_from_env() {
  const char* key = std::getenv(kStoreKeyEnv);
  if (key == nullptr || *key == '\0') return nullptr;
  return std::make_unique<AesGcmCipher>(key);
}

}  // namespace ehr::auth
