#include "ehr/auth/audit.hpp"

#include <filesystem>

#include <json.hpp>

#include "ehr/auth/crypto.hpp"

namespace ehr::auth {

using ordered = nlohmann::ordered_json;

namespace {

ordered body_of(const AuditEntry& e) {
  ordered j;
  j["seq"] = e.seq;
  j["actor"] = e.actor;
  j["action"] = e.action;
  j["entity"] = e.entity;
  j["ts"] = e.ts;
  j["outcome"] = e.outcome;
  return j;
}

std::optional<AuditEntry> parse_line(const std::string& line) {
  try {
    const auto j = ordered::parse(line);
    if (!j.is_object() || j.size() != 7) return std::nullopt;
    AuditEntry e;
    j.at("seq").get_to(e.seq);
    j.at("actor").get_to(e.actor);
    j.at("action").get_to(e.action);
    j.at("entity").get_to(e.entity);
    j.at("ts").get_to(e.ts);
    j.at("outcome").get_to(e.outcome);
    j.at("chain").get_to(e.chain);
    return e;
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }
}

}  // namespace

std::string chain_hash(std::string_view prev_chain, const AuditEntry& entry) {
  std::string input(prev_chain);
  input += '\n';
  input += body_of(entry).dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
  return sha256_hex(input);
}

std::string to_line(const AuditEntry& entry) {
  ordered j = body_of(entry);
  j["chain"] = entry.chain;
  return j.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace);
}

ChainVerdict verify_audit_chain(std::span<const AuditEntry> log) {
  std::string prev = kGenesisChain;
  for (std::size_t i = 0; i < log.size(); ++i) {
    const AuditEntry& e = log[i];
    if (e.seq != i || e.chain != chain_hash(prev, e)) return ChainVerdict::broken(i);
    prev = e.chain;
  }
  return ChainVerdict::good();
}

ChainVerdict verify_audit_lines(std::span<const std::string> lines) {
  std::string prev = kGenesisChain;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    auto e = parse_line(lines[i]);
    if (!e || to_line(*e) != lines[i] || e->seq != i || e->chain != chain_hash(prev, *e)) {
      return ChainVerdict::broken(i);
    }
    prev = e->chain;
  }
  return ChainVerdict::good();
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::vector<std::string> lines;
  std::ifstream in(path, std::ios::binary);
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

}  // namespace

ChainVerdict verify_audit_file(const std::string& path) {
  const auto lines = read_lines(path);
  return verify_audit_lines(lines);
}

Result<std::unique_ptr<AuditLog>> AuditLog::open(const std::string& path) {
  auto log = std::make_unique<AuditLog>();
  if (std::filesystem::exists(path)) {
    const auto lines = read_lines(path);
    if (auto v = verify_audit_lines(lines); !v.ok) {
      return make_error(Errc::io_error,
                        "audit chain broken at seq " + std::to_string(v.broken_at));
    }
    for (const auto& l : lines) log->entries_.push_back(*parse_line(l));
  }
  log->file_.emplace(path, std::ios::app | std::ios::binary);
  if (!*log->file_) return make_error(Errc::io_error, "cannot open " + path);
  return log;
}

Result<std::uint64_t> AuditLog::append(std::string_view actor, std::string_view action,
                                       std::string_view entity, Millis ts,
                                       std::string_view outcome) {
  std::lock_guard lock(mu_);
  AuditEntry e{entries_.size(), std::string(actor), std::string(action), std::string(entity),
               ts, std::string(outcome), {}};
  e.chain = chain_hash(entries_.empty() ? kGenesisChain : entries_.back().chain, e);
  if (file_) {
    *file_ << to_line(e) << '\n';
    file_->flush();
    if (!*file_) return make_error(Errc::io_error, "audit write failed");
  }
  entries_.push_back(std::move(e));
  return entries_.back().seq;
}

std::vector<AuditEntry> AuditLog::entries() const {
  std::lock_guard lock(mu_);
  return entries_;
}

std::size_t AuditLog::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

}  // namespace ehr::auth
