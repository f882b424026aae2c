#include "ehr/web/http.hpp"

#include <httplib.h>

namespace ehr::web {
namespace {

using nlohmann::json;

constexpr const char* kJson = "application/json";

void route_all(httplib::Server& server, Api& api, const HttpServer::Clock& clock) {
  auto handler = [&api, clock](const httplib::Request& in, httplib::Response& out) {
    ApiRequest req;
    req.method = in.method;
    req.path = in.path;
    for (const auto& [k, v] : in.params) req.query.emplace(k, v);
    const std::string auth = in.get_header_value("Authorization");
    if (auth.rfind("Bearer ", 0) == 0) req.bearer_token = auth.substr(7);
    req.correlation_id = in.get_header_value(std::string(kCorrelationHeader).c_str());
    req.body = in.body;
    ApiResponse res = api.handle(req, clock());
    out.status = res.status;
    out.set_header(std::string(kCorrelationHeader).c_str(), res.correlation_id);
    out.set_content(res.body.dump(), kJson);
  };
  server.Get(R"(/.*)", handler);
  server.Post(R"(/.*)", handler);
  server.Put(R"(/.*)", handler);
  server.Delete(R"(/.*)", handler);
  server.Patch(R"(/.*)", handler);
}

Result<HttpReply> to_reply(const httplib::Result& r) {
  if (!r) return make_error(Errc::link_down, "http: " + httplib::to_string(r.error()));
  HttpReply reply;
  reply.status = r->status;
  reply.correlation_id = r->get_header_value(std::string(kCorrelationHeader).c_str());
  reply.body = json::parse(r->body, nullptr, false);
  if (reply.body.is_discarded()) return make_error(Errc::malformed_event, "response is not JSON");
  return reply;
}

Error reply_error(const HttpReply& r) {
  const json& b = r.body;
  auto name = b.is_object() ? b.value("error", std::string{}) : std::string{};
  auto detail = b.is_object() ? b.value("detail", std::string{}) : std::string{};
  Errc code = Errc::io_error;
  if (r.status == 401) code = Errc::unknown_principal;
  if (r.status == 403) code = Errc::forbidden;
  if (r.status == 404) code = Errc::not_found;
  if (r.status == 422) code = Errc::validation;
  if (r.status == 503) code = Errc::link_down;
  if (name == "CURSOR_OUT_OF_RANGE") code = Errc::cursor_out_of_range;
  if (name == "EXPIRED_TOKEN") code = Errc::expired_token;
  if (name == "MALFORMED_EVENT") code = Errc::malformed_event;
  return make_error(code, name + ": " + detail);
}

}  // namespace

struct HttpServer::Impl {
  httplib::Server server;
};

HttpServer::HttpServer(Api& api, Clock clock) : impl_(std::make_unique<Impl>()) {
  route_all(impl_->server, api, std::move(clock));
}

HttpServer::~HttpServer() { stop(); }

Status HttpServer::listen(const std::string& host, int port) {
  if (port == 0) {
    port_ = impl_->server.bind_to_any_port(host);
    if (port_ <= 0) return make_error(Errc::io_error, "cannot bind " + host);
  } else {
    if (!impl_->server.bind_to_port(host, port)) {
      return make_error(Errc::io_error, "cannot bind " + host + ":" + std::to_string(port));
    }
    port_ = port;
  }
  return Ok{};
}

void HttpServer::run() { impl_->server.listen_after_bind(); }

void HttpServer::start() {
  thread_ = std::thread([this] { run(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  if (impl_) impl_->server.stop();
  if (thread_.joinable()) thread_.join();
}

struct HttpClient::Impl {
  Impl(const std::string& host, int port) : client(host, port) {
    client.set_connection_timeout(2, 0);
    client.set_read_timeout(10, 0);
  }
  httplib::Client client;
};

HttpClient::HttpClient(std::string host, int port)
    : impl_(std::make_unique<Impl>(host, port)) {}

HttpClient::~HttpClient() = default;

Result<HttpReply> HttpClient::get(const std::string& path_and_query) {
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  return to_reply(impl_->client.Get(path_and_query, headers));
}

Result<HttpReply> HttpClient::post(const std::string& path, const json& body) {
  httplib::Headers headers;
  if (!token_.empty()) headers.emplace("Authorization", "Bearer " + token_);
  return to_reply(impl_->client.Post(path, headers, body.dump(), kJson));
}

Result<HttpReply> HttpClient::login(std::string_view username, std::string_view password) {
  auto r = post("/api/login", json{{"username", username}, {"password", password}});
  if (r && r->status == 200) token_ = r->body.value("token", std::string{});
  return r;
}

Result<sync::PushAck> HttpSyncTransport::push(const sync::SyncBatch& batch, Millis) {
  auto r = client_.post("/api/sync/push", sync::to_json(batch));
  if (!r) return r.error();
  if (r->status != 200) return reply_error(*r);
  return sync::ack_from_json(r->body);
}

Result<sync::SyncBatch> HttpSyncTransport::pull(std::string_view, std::size_t cursor, Millis) {
  auto r = client_.get("/api/sync/pull?cursor=" + std::to_string(cursor));
  if (!r) return r.error();
  if (r->status != 200) return reply_error(*r);
  return sync::batch_from_json(r->body);
}

}  // namespace ehr::web
