#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ehr/common/result.hpp"
#include "ehr/common/time.hpp"

namespace ehr::auth {

struct AuditEntry {
  std::uint64_t seq = 0;
  std::string actor;
  std::string action;
  std::string entity;
  Millis ts = 0;
  std::string outcome;
  std::string chain;  // lowercase hex SHA-256

  friend bool operator==(const AuditEntry&, const AuditEntry&) = default;
};

/// Chain value preceding entry 0.
inline const std::string kGenesisChain(64, '0');

/// SHA-256 over the previous chain value and the entry's canonical body.
std::string chain_hash(std::string_view prev_chain, const AuditEntry& entry);

/// Canonical single-line encoding:
/// {"seq":..,"actor":..,"action":..,"entity":..,"ts":..,"outcome":..,"chain":..}
std::string to_line(const AuditEntry& entry);

struct ChainVerdict {
  bool ok = true;
  std::uint64_t broken_at = 0;

  static ChainVerdict good() { return {}; }
  static ChainVerdict broken(std::uint64_t seq) { return {false, seq}; }
};

ChainVerdict verify_audit_chain(std::span<const AuditEntry> log);

/// Verifies raw file lines: each line must parse, be byte-identical to its
/// canonical encoding, carry the expected seq, and continue the chain.
ChainVerdict verify_audit_lines(std::span<const std::string> lines);
ChainVerdict verify_audit_file(const std::string& path);

/// Append-only, globally serialized audit trail. Optionally mirrored to a
/// file, one canonical JSON line per entry.
class AuditLog {
 public:
  AuditLog() = default;

  /// Opens (creating if absent) a file-backed log, loading existing
  /// entries. Fails if the stored chain does not verify.
  static Result<std::unique_ptr<AuditLog>> open(const std::string& path);

  Result<std::uint64_t> append(std::string_view actor, std::string_view action,
                               std::string_view entity, Millis ts, std::string_view outcome);

  std::vector<AuditEntry> entries() const;
  std::size_t size() const;

 private:
  mutable std::mutex mu_;
  std::vector<AuditEntry> entries_;
  std::optional<std::ofstream> file_;
};

}  // namespace ehr::auth
