#include "ehr/web/api.hpp"

#include <charconv>
#include <optional>
#include <vector>

#include "ehr/analytics/aggregates.hpp"
#include "ehr/core/mutation_io.hpp"
#include "ehr/sync/replica.hpp"

namespace ehr::web {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

std::vector<std::string_view> split_path(std::string_view path) {
  std::vector<std::string_view> parts;
  while (!path.empty()) {
    if (path.front() == '/') {
      path.remove_prefix(1);
      continue;
    }
    auto slash = path.find('/');
    parts.push_back(path.substr(0, slash));
    if (slash == std::string_view::npos) break;
    path.remove_prefix(slash);
  }
  return parts;
}

std::optional<std::size_t> parse_size(std::string_view s) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
  return v;
}

Result<json> parse_object(std::string_view body) {
  json doc = json::parse(body, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    return make_error(Errc::validation, "body must be a JSON object");
  }
  return doc;
}

// Typed field readers: absent optional fields keep the default.
template <typename T>
Status read(const json& doc, const char* key, T& out, bool required) {
  auto it = doc.find(key);
  if (it == doc.end() || it->is_null()) {
    if (required) return make_error(Errc::validation, std::string("missing field ") + key);
    return Ok{};
  }
  try {
    out = it->get<T>();
  } catch (const json::exception&) {
    return make_error(Errc::validation, std::string("wrong type for field ") + key);
  }
  return Ok{};
}

ordered_json refill_json(const core::RefillRequest& r) {
  ordered_json j;
  j["rx_id"] = r.rx_id;
  j["patient_id"] = r.patient_id;
  j["requested_by"] = r.requested_by;
  j["requested_at"] = r.requested_at;
  j["refills_remaining"] = r.refills_remaining;
  j["status"] = "REFILL_REQUESTED";
  return j;
}

ordered_json audit_json(const auth::AuditEntry& e) {
  ordered_json j;
  j["seq"] = e.seq;
  j["actor"] = e.actor;
  j["action"] = e.action;
  j["entity"] = e.entity;
  j["ts"] = e.ts;
  j["outcome"] = e.outcome;
  j["chain"] = e.chain;
  return j;
}

struct Reply {
  int status;
  ordered_json body;
};

Reply fail(const Error& e) { return {http_status(e.code), error_body(e.code, e.detail)}; }
Reply fail(Errc code, std::string_view detail) { return fail(make_error(code, std::string(detail))); }

template <typename T, typename F>
Reply respond(const Result<T>& r, int status, F&& render) {
  if (!r) return fail(r.error());
  return {status, render(*r)};
}

bool valid_correlation(std::string_view id) {
  if (id.empty() || id.size() > 64) return false;
  for (char c : id) {
    bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') ||
              c == '-' || c == '_' || c == '.';
    if (!ok) return false;
  }
  return true;
}

}  // namespace

int http_status(Errc code) noexcept {
  switch (code) {
    case Errc::bad_credentials:
    case Errc::locked:
    case Errc::unknown_principal:
    case Errc::expired_token: return 401;
    case Errc::forbidden: return 403;
    case Errc::not_found:
    case Errc::unknown_patient:
    case Errc::unknown_clinician:
    case Errc::unknown_facility:
    case Errc::unknown_rx: return 404;
    case Errc::duplicate_id:
    case Errc::invalid_zone:
    case Errc::not_active:
    case Errc::no_refills_left:
    case Errc::validation:
    case Errc::clock_drift:
    case Errc::cursor_out_of_range:
    case Errc::malformed_event:
    case Errc::page_out_of_range:
    case Errc::unsuppressed_input: return 422;
    case Errc::link_down:
    case Errc::partial:
    case Errc::unknown_link: return 503;
    default: return 500;
  }
}

ordered_json error_body(Errc code, std::string_view detail) {
  ordered_json j;
  j["error"] = std::string(errc_name(code));
  j["code"] = http_status(code);
  j["detail"] = std::string(detail);
  return j;
}

Api::Api(Service& service, std::uint64_t seed) : service_(service), ids_(derive_seed(seed, "api")) {}

std::string Api::correlation_id(const ApiRequest& req) {
  if (valid_correlation(req.correlation_id)) return req.correlation_id;
  std::lock_guard lock(ids_mu_);
  return ids_.next();
}

ApiResponse Api::handle(const ApiRequest& req, Millis now) {
  ApiResponse out;
  out.correlation_id = correlation_id(req);
  const auto parts = split_path(req.path);
  const std::string& m = req.method;
  auto is = [&](std::initializer_list<std::string_view> want) {
    if (parts.size() != want.size()) return false;
    std::size_t i = 0;
    for (auto w : want) {
      if (w != "*" && parts[i] != w) return false;
      ++i;
    }
    return true;
  };
  auto set = [&](Reply r) {
    out.status = r.status;
    out.body = std::move(r.body);
    return out;
  };

  if (parts.empty() || parts[0] != "api") return set(fail(Errc::not_found, "no such endpoint"));

  if (is({"api", "login"})) {
    if (m != "POST") return set(fail(Errc::not_found, "no such endpoint"));
    auto doc = parse_object(req.body);
    if (!doc) return set(fail(doc.error()));
    std::string user, password;
    for (Status s : {read(*doc, "username", user, true), read(*doc, "password", password, true)}) {
      if (!s) return set(fail(s.error()));
    }
    auto who = service_.login_web(user, password, now);
    return set(respond(who, 200, [](const auth::Identity& id) {
      ordered_json j;
      j["token"] = id.token;
      j["clinician_id"] = id.clinician_id;
      j["role"] = std::string(core::to_string(id.role));
      j["facility_id"] = id.facility_id;
      j["expires_at"] = id.expires_at;
      return j;
    }));
  }

  // Route table. Each entry names the action used when auditing a refusal.
  enum class Route {
    get_patient, post_patient, history, post_encounter, post_prescription, refill_request,
    refill_grant, sync_push, sync_pull, aggregates, audit, none
  };
  Route route = Route::none;
  std::string_view action;
  std::string entity;
  if (m == "GET" && is({"api", "patients", "*"})) {
    route = Route::get_patient, action = "get_patient", entity = std::string(parts[2]);
  } else if (m == "POST" && is({"api", "patients"})) {
    route = Route::post_patient, action = "register_patient", entity = "patient/*";
  } else if (m == "GET" && is({"api", "patients", "*", "history"})) {
    route = Route::history, action = "patient_history", entity = std::string(parts[2]);
  } else if (m == "POST" && is({"api", "encounters"})) {
    route = Route::post_encounter, action = "record_encounter", entity = "encounter/*";
  } else if (m == "POST" && is({"api", "prescriptions"})) {
    route = Route::post_prescription, action = "add_prescription", entity = "prescription/*";
  } else if (m == "POST" && is({"api", "prescriptions", "*", "refill-request"})) {
    route = Route::refill_request, action = "request_refill", entity = std::string(parts[2]);
  } else if (m == "POST" && is({"api", "prescriptions", "*", "refill-grant"})) {
    route = Route::refill_grant, action = "grant_refill", entity = std::string(parts[2]);
  } else if (m == "POST" && is({"api", "sync", "push"})) {
    route = Route::sync_push, action = "sync.push", entity = "replica/*";
  } else if (m == "GET" && is({"api", "sync", "pull"})) {
    route = Route::sync_pull, action = "sync.pull", entity = "replica/*";
  } else if (m == "GET" && is({"api", "aggregates"})) {
    route = Route::aggregates, action = "aggregates", entity = "aggregates/*";
  } else if (m == "GET" && is({"api", "audit"})) {
    route = Route::audit, action = "audit.query", entity = "audit/*";
  }
  if (route == Route::none) return set(fail(Errc::not_found, "no such endpoint"));

  if (req.bearer_token.empty()) {
    (void)service_.record_refusal("anonymous", action, entity, now, Errc::unknown_principal);
    return set(fail(Errc::unknown_principal, "missing bearer token"));
  }
  auto who_r = service_.resolve(req.bearer_token, now);
  if (!who_r) {
    (void)service_.record_refusal("anonymous", action, entity, now, who_r.code());
    return set(fail(who_r.error()));
  }
  const auth::Identity& who = *who_r;

  // Input is parsed before the guarded call so a malformed request still
  // yields its single audit entry through the refusal path.
  auto refuse = [&](const Error& e) {
    (void)service_.record_refusal(who.clinician_id, action, entity, now, e.code);
    return set(fail(e));
  };

  switch (route) {
    case Route::get_patient:
      return set(respond(service_.get_patient(who, parts[2], now), 200,
                         [](const core::PatientRecord& p) { return ordered_json(core::to_document(p)); }));
    case Route::post_patient: {
      auto doc = parse_object(req.body);
      if (!doc) return refuse(doc.error());
      auto p = core::patient_input(*doc);
      if (!p) return refuse(p.error());
      return set(respond(service_.register_patient(who, std::move(*p), now), 201,
                         [](const std::string& id) { return ordered_json{{"patient_id", id}}; }));
    }
    case Route::history:
      return set(respond(service_.patient_history(who, parts[2], now), 200,
                         [&](const std::vector<core::HistoryEntry>& h) {
                           ordered_json j;
                           j["patient_id"] = std::string(parts[2]);
                           j["entries"] = ordered_json::array();
                           for (const auto& e : h) j["entries"].push_back(ordered_json(core::history_entry_json(e)));
                           return j;
                         }));
    case Route::post_encounter: {
      auto doc = parse_object(req.body);
      if (!doc) return refuse(doc.error());
      auto e = core::encounter_input(*doc);
      if (!e) return refuse(e.error());
      return set(respond(service_.record_encounter(who, std::move(*e), now), 201,
                         [](const std::string& id) { return ordered_json{{"encounter_id", id}}; }));
    }
    case Route::post_prescription: {
      auto doc = parse_object(req.body);
      if (!doc) return refuse(doc.error());
      auto rx = core::prescription_input(*doc);
      if (!rx) return refuse(rx.error());
      return set(respond(service_.add_prescription(who, std::move(*rx), now), 201,
                         [](const std::string& id) { return ordered_json{{"rx_id", id}}; }));
    }
    case Route::refill_request:
      return set(respond(service_.request_refill(who, parts[2], now), 200, refill_json));
    case Route::refill_grant:
      return set(respond(service_.grant_refill(who, parts[2], now), 200,
                         [](const core::Prescription& rx) { return ordered_json(core::to_document(rx)); }));
    case Route::sync_push: {
      auto doc = parse_object(req.body);
      if (!doc) return refuse(doc.error());
      auto batch = sync::batch_from_json(*doc);
      if (!batch) return refuse(batch.error());
      return set(respond(service_.sync_push(who, *batch, now), 200,
                         [](const sync::PushAck& a) { return ordered_json(sync::to_json(a)); }));
    }
    case Route::sync_pull: {
      auto it = req.query.find("cursor");
      std::optional<std::size_t> cursor =
          it == req.query.end() ? std::optional<std::size_t>(0) : parse_size(it->second);
      if (!cursor) return refuse(make_error(Errc::validation, "cursor must be a non-negative integer"));
      return set(respond(service_.sync_pull(who, *cursor, now), 200,
                         [](const sync::SyncBatch& b) { return ordered_json(sync::to_json(b)); }));
    }
    case Route::aggregates: {
      auto pit = req.query.find("period");
      auto period = pit == req.query.end() ? std::nullopt : parse_period(pit->second);
      if (!period) return refuse(make_error(Errc::validation, "period must be YYYY-MM"));
      std::optional<std::size_t> k = analytics::kDefaultSuppressionK;
      if (auto kit = req.query.find("k"); kit != req.query.end()) k = parse_size(kit->second);
      if (!k || *k < 1) return refuse(make_error(Errc::validation, "k must be a positive integer"));
      return set(respond(service_.aggregates(who, *period, *k, now), 200,
                         [](const json& doc) { return ordered_json(doc); }));
    }
    case Route::audit: {
      auto ait = req.query.find("actor");
      std::string actor = ait == req.query.end() ? std::string{} : ait->second;
      return set(respond(service_.audit_query(who, actor, now), 200,
                         [](const std::vector<auth::AuditEntry>& entries) {
                           ordered_json j;
                           j["entries"] = ordered_json::array();
                           for (const auto& e : entries) j["entries"].push_back(audit_json(e));
                           return j;
                         }));
    }
    case Route::none:
      break;
  }
  return set(fail(Errc::not_found, "no such endpoint"));
}

}  // namespace ehr::web
