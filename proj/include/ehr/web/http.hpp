#pragma once

#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <thread>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/sync/replica.hpp"
#include "ehr/web/api.hpp"

namespace ehr::web {

/// HTTP/1.1 binding of Api.
class HttpServer {
 public:
  using Clock = std::function<Millis()>;

  HttpServer(Api& api, Clock clock);
  ~HttpServer();
  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds; port 0 picks an ephemeral port.
  Status listen(const std::string& host, int port);
  int port() const noexcept { return port_; }

  /// Serves until stop().
  void run();
  void start();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  int port_ = 0;
  std::thread thread_;
};

struct HttpReply {
  int status = 0;
  nlohmann::json body;
  std::string correlation_id;
};

/// Minimal JSON client for the API.
class HttpClient {
 public:
  HttpClient(std::string host, int port);
  ~HttpClient();

  void set_token(std::string token) { token_ = std::move(token); }

  /// LINK_DOWN when the server cannot be reached.
  Result<HttpReply> get(const std::string& path_and_query);
  Result<HttpReply> post(const std::string& path, const nlohmann::json& body);

  /// Logs in and keeps the bearer token.
  Result<HttpReply> login(std::string_view username, std::string_view password);

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::string token_;
};

/// Sync over the HTTP endpoints, authenticated as a facility clinician.
class HttpSyncTransport final : public sync::SyncTransport {
 public:
  explicit HttpSyncTransport(HttpClient& client) : client_(client) {}

  Result<sync::PushAck> push(const sync::SyncBatch& batch, Millis now) override;
  Result<sync::SyncBatch> pull(std::string_view replica_id, std::size_t cursor, Millis now) override;

 private:
  HttpClient& client_;
};

}  // namespace ehr::web
