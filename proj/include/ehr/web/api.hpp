#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <string_view>

#include <json.hpp>

#include "ehr/common/ids.hpp"
#include "ehr/common/result.hpp"
#include "ehr/service.hpp"

namespace ehr::web {

inline constexpr std::string_view kCorrelationHeader = "X-Correlation-Id";

struct ApiRequest {
  std::string method;
  std::string path;  // without the query string
  std::map<std::string, std::string> query;
  std::string bearer_token;
  std::string correlation_id;  // client supplied, optional
  std::string body;
};

struct ApiResponse {
  int status = 200;
  nlohmann::ordered_json body;
  std::string correlation_id;
};

/// HTTP status for an error code: 401 identity, 403 permission, 404 unknown
/// entity, 422 rejected input, 503 unreachable dependency, 500 otherwise.
int http_status(Errc code) noexcept;

/// {"error": <code name>, "code": <http status>, "detail": <text>}
nlohmann::ordered_json error_body(Errc code, std::string_view detail);

/// Transport-independent request router. Every request other than login
/// needs a bearer token and produces exactly one audit entry, including
/// requests refused for a missing or stale token.
class Api {
 public:
  Api(Service& service, std::uint64_t seed);

  ApiResponse handle(const ApiRequest& req, Millis now);

 private:
  std::string correlation_id(const ApiRequest& req);

  Service& service_;
  std::mutex ids_mu_;
  IdGenerator ids_;
};

}  // namespace ehr::web
