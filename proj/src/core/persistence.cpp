#include "ehr/core/persistence.hpp"

namespace ehr::core {

using nlohmann::json;

namespace {

constexpr std::string_view kSnapshotFormat = "ehr-snapshot/1";

Result<std::string> decode_line(const std::string& line, auth::LineCipher* cipher) {
  if (cipher == nullptr) return line;
  return cipher->decrypt(line);
}

}  // namespace

Result<std::unique_ptr<EventLogFile>> EventLogFile::open(const std::filesystem::path& path,
                                                         std::shared_ptr<auth::LineCipher> cipher) {
  auto f = std::unique_ptr<EventLogFile>(new EventLogFile());
  f->path_ = path;
  f->cipher_ = std::move(cipher);
  f->out_.open(path, std::ios::app | std::ios::binary);
  if (!f->out_) return make_error(Errc::io_error, "cannot open " + path.string());
  return f;
}

Result<std::vector<sync::ChangeEvent>> EventLogFile::read_all() const {
  std::vector<sync::ChangeEvent> events;
  std::ifstream in(path_, std::ios::binary);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto plain = decode_line(line, cipher_.get());
    if (!plain) return make_error(Errc::io_error, "events.log line " + std::to_string(lineno) +
                                                      ": " + plain.error().detail);
    json j = json::parse(*plain, nullptr, false);
    if (j.is_discarded()) {
      return make_error(Errc::io_error, "events.log line " + std::to_string(lineno) + " is not JSON");
    }
    auto e = sync::event_from_json(j);
    if (!e) return e.error();
    events.push_back(std::move(*e));
  }
  return events;
}

Status EventLogFile::append(const sync::ChangeEvent& e) {
  const std::string plain = sync::event_to_json(e).dump();
  out_ << (cipher_ ? cipher_->encrypt(plain) : plain) << '\n';
  out_.flush();
  if (!out_) return make_error(Errc::io_error, "event log write failed");
  return Ok{};
}

Status write_snapshot(const std::filesystem::path& path, const Snapshot& snap,
                      auth::LineCipher* cipher) {
  const std::string plain =
      json{{"format", kSnapshotFormat}, {"upto", snap.upto}, {"view", snap.view}}.dump();
  const auto tmp = std::filesystem::path(path).concat(".tmp");
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    out << (cipher ? cipher->encrypt(plain) : plain) << '\n';
    if (!out) return make_error(Errc::io_error, "snapshot write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) return make_error(Errc::io_error, ec.message());
  return Ok{};
}

Result<std::optional<Snapshot>> read_snapshot(const std::filesystem::path& path,
                                              auth::LineCipher* cipher) {
  if (!std::filesystem::exists(path)) return std::optional<Snapshot>{};
  std::ifstream in(path, std::ios::binary);
  std::string line;
  std::getline(in, line);
  auto plain = decode_line(line, cipher);
  if (!plain) return plain.error();
  json j = json::parse(*plain, nullptr, false);
  if (j.is_discarded() || j.value("format", "") != kSnapshotFormat) {
    return make_error(Errc::io_error, "unreadable snapshot");
  }
  return std::optional<Snapshot>(Snapshot{j.at("upto").get<std::size_t>(), j.at("view")});
}

Result<std::unique_ptr<PersistentStore>> PersistentStore::open(
    const StoreDir& dir, StoreOptions options, auth::AuditLog* audit,
    std::shared_ptr<auth::LineCipher> cipher, std::size_t snapshot_every) {
  std::error_code ec;
  std::filesystem::create_directories(dir.root, ec);
  if (ec) return make_error(Errc::io_error, ec.message());

  auto ps = std::unique_ptr<PersistentStore>(new PersistentStore());
  ps->dir_ = dir;
  ps->cipher_ = cipher;
  ps->snapshot_every_ = snapshot_every;
  auto log = EventLogFile::open(dir.events(), cipher);
  if (!log) return log.error();
  ps->log_ = std::move(*log);
  auto events = ps->log_->read_all();
  if (!events) return events.error();
  auto snap = read_snapshot(dir.snapshot(), cipher.get());
  if (!snap) return snap.error();
  ps->last_snapshot_ = *snap ? (*snap)->upto : 0;
  ps->store_ = EhrStore::restore(std::move(options), audit, std::move(*events), *snap);
  EventLogFile* sink = ps->log_.get();
  ps->store_->set_commit_sink([sink](const sync::ChangeEvent& e) { return sink->append(e); });
  return ps;
}

Status PersistentStore::checkpoint() {
  const Snapshot snap = store_->make_snapshot();
  if (auto s = write_snapshot(dir_.snapshot(), snap, cipher_.get()); !s) return s;
  last_snapshot_ = snap.upto;
  return Ok{};
}

Status PersistentStore::checkpoint_if_due() {
  if (store_->log_size() - last_snapshot_ < snapshot_every_) return Ok{};
  return checkpoint();
}

}  // namespace ehr::core
