#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "ehr/auth/crypto.hpp"
#include "ehr/core/store.hpp"

namespace ehr::core {

/// Layout of a store directory:
///   events.log        append-only change log, one event document per line
///   snapshot.json     materialized view of a log prefix
///   audit.log         hash-chained audit trail
///   credentials.json  salted credential hashes
struct StoreDir {
  std::filesystem::path root;

  std::filesystem::path events() const { return root / "events.log"; }
  std::filesystem::path snapshot() const { return root / "snapshot.json"; }
  std::filesystem::path audit() const { return root / "audit.log"; }
  std::filesystem::path credentials() const { return root / "credentials.json"; }
};

/// Line-oriented event log. With a cipher every line is encrypted;
/// without one lines are plain JSON.
class EventLogFile {
 public:
  static Result<std::unique_ptr<EventLogFile>> open(const std::filesystem::path& path,
                                                    std::shared_ptr<auth::LineCipher> cipher);

  Result<std::vector<sync::ChangeEvent>> read_all() const;
  Status append(const sync::ChangeEvent& e);

 private:
  std::filesystem::path path_;
  std::shared_ptr<auth::LineCipher> cipher_;
  std::ofstream out_;
};

Status write_snapshot(const std::filesystem::path& path, const Snapshot& snap,
                      auth::LineCipher* cipher);
Result<std::optional<Snapshot>> read_snapshot(const std::filesystem::path& path,
                                              auth::LineCipher* cipher);

/// A store bound to its directory: commits are appended to events.log
/// before they become visible, and a snapshot is rewritten every
/// `snapshot_every` events via checkpoint_if_due().
class PersistentStore {
 public:
  static Result<std::unique_ptr<PersistentStore>> open(const StoreDir& dir, StoreOptions options,
                                                       auth::AuditLog* audit,
                                                       std::shared_ptr<auth::LineCipher> cipher,
                                                       std::size_t snapshot_every = 256);

  EhrStore& store() noexcept { return *store_; }
  Status checkpoint();
  Status checkpoint_if_due();

 private:
  StoreDir dir_;
  std::shared_ptr<auth::LineCipher> cipher_;
  std::unique_ptr<EventLogFile> log_;
  std::unique_ptr<EhrStore> store_;
  std::size_t snapshot_every_ = 256;
  std::size_t last_snapshot_ = 0;
};

}  // namespace ehr::core
