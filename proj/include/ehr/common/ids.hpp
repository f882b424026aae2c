#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace ehr {

/// Generates RFC 4122 version-4 style identifiers from a seeded engine so
/// that simulated runs produce the same ids on every replay.
class IdGenerator {
 public:
  explicit IdGenerator(std::uint64_t seed) : engine_(seed) {}

  std::string next();

  /// Non-deterministic generator for production use.
  static IdGenerator from_entropy();

 private:
  std::mt19937_64 engine_;
};

/// Mixes a textual discriminator into a base seed (FNV-1a then splitmix64).
std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) noexcept;

}  // namespace ehr
