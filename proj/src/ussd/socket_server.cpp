#include "ehr/ussd/socket_server.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <map>

#include <openssl/evp.h>
#include <openssl/sha.h>

namespace ehr::ussd {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

constexpr std::string_view kWsGuid = "258EAFA5-E914-47DA-95CA-C5AB0DC85B11";
constexpr std::size_t kMaxHttpHeader = 16 * 1024;
constexpr std::size_t kMaxHttpBody = 64 * 1024;

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string trim(std::string_view s) {
  auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return {};
  auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

// Reads whatever is available; empty means the peer closed or we are stopping.
std::string read_some(int fd) {
  char buf[4096];
  for (;;) {
    ssize_t n = ::recv(fd, buf, sizeof buf, 0);
    if (n > 0) return std::string(buf, static_cast<std::size_t>(n));
    if (n < 0 && errno == EINTR) continue;
    return {};
  }
}

struct HttpRequest {
  std::string method;
  std::string target;
  std::map<std::string, std::string> headers;  // lower-case names
  std::string body;
};

std::string http_response(int status, std::string_view reason, std::string_view content_type,
                          std::string_view body, std::string_view extra_headers = {}) {
  std::string out = "HTTP/1.1 " + std::to_string(status) + " " + std::string(reason) + "\r\n";
  out += "Access-Control-Allow-Origin: *\r\n";
  out += "Access-Control-Allow-Methods: GET, POST, OPTIONS\r\n";
  out += "Access-Control-Allow-Headers: Content-Type\r\n";
  if (!content_type.empty()) out += "Content-Type: " + std::string(content_type) + "\r\n";
  out += "Content-Length: " + std::to_string(body.size()) + "\r\n";
  out += extra_headers;
  out += "Connection: close\r\n\r\n";
  out += body;
  return out;
}

std::string error_body(Errc code, std::string_view detail) {
  ordered_json j;
  j["error"] = std::string(errc_name(code));
  j["code"] = 400;
  j["detail"] = std::string(detail);
  return j.dump();
}

}  // namespace

// ---------------------------------------------------------------- bridge

std::string_view to_string(BridgeDirection d) noexcept {
  return d == BridgeDirection::to_gateway ? "TO_GATEWAY" : "TO_PHONE";
}

ordered_json to_json(const BridgeMessage& m) {
  ordered_json j;
  j["direction"] = std::string(to_string(m.direction));
  j["pdu"] = to_json(m.pdu);
  return j;
}

std::string to_json_text(const BridgeMessage& m) { return to_json(m).dump(); }

Result<BridgeMessage> bridge_from_json(const json& j) {
  if (!j.is_object() || j.size() != 2 || !j.contains("direction") || !j.contains("pdu")) {
    return make_error(Errc::validation, "bridge message needs exactly direction and pdu");
  }
  const auto& d = j.at("direction");
  BridgeMessage m;
  if (d == "TO_GATEWAY") {
    m.direction = BridgeDirection::to_gateway;
  } else if (d == "TO_PHONE") {
    m.direction = BridgeDirection::to_phone;
  } else {
    return make_error(Errc::validation, "unknown bridge direction");
  }
  auto pdu = pdu_from_json(j.at("pdu"));
  if (!pdu) return pdu.error();
  m.pdu = std::move(*pdu);
  return m;
}

Result<BridgeMessage> parse_bridge_text(std::string_view text) {
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded()) return make_error(Errc::validation, "bridge message is not JSON");
  return bridge_from_json(j);
}

Result<BridgeMessage> relay(Gateway& gateway, const BridgeMessage& in, Millis now) {
  if (in.direction != BridgeDirection::to_gateway) {
    return make_error(Errc::validation, "phone may only send TO_GATEWAY messages");
  }
  return BridgeMessage{BridgeDirection::to_phone, gateway.handle_pdu(in.pdu, now)};
}

// ---------------------------------------------------------------- websocket

std::string ws_accept_key(std::string_view client_key) {
  std::string material = std::string(client_key) + std::string(kWsGuid);
  unsigned char digest[SHA_DIGEST_LENGTH];
  SHA1(reinterpret_cast<const unsigned char*>(material.data()), material.size(), digest);
  unsigned char out[4 * ((SHA_DIGEST_LENGTH + 2) / 3) + 1];
  int n = EVP_EncodeBlock(out, digest, SHA_DIGEST_LENGTH);
  return std::string(reinterpret_cast<char*>(out), static_cast<std::size_t>(n));
}

std::string ws_encode(WsOpcode opcode, std::string_view payload,
                      std::optional<std::array<std::uint8_t, 4>> mask) {
  std::string out;
  out += static_cast<char>(0x80 | static_cast<std::uint8_t>(opcode));
  const std::uint8_t mask_bit = mask ? 0x80 : 0x00;
  const std::uint64_t len = payload.size();
  if (len < 126) {
    out += static_cast<char>(mask_bit | len);
  } else if (len <= 0xFFFF) {
    out += static_cast<char>(mask_bit | 126);
    out += static_cast<char>((len >> 8) & 0xFF);
    out += static_cast<char>(len & 0xFF);
  } else {
    out += static_cast<char>(mask_bit | 127);
    for (int shift = 56; shift >= 0; shift -= 8) out += static_cast<char>((len >> shift) & 0xFF);
  }
  if (!mask) return out + std::string(payload);
  for (auto b : *mask) out += static_cast<char>(b);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    out += static_cast<char>(static_cast<std::uint8_t>(payload[i]) ^ (*mask)[i % 4]);
  }
  return out;
}

std::optional<Result<WsFrame>> WsDecoder::next() {
  const auto* p = reinterpret_cast<const std::uint8_t*>(buffer_.data());
  const std::size_t avail = buffer_.size();
  if (avail < 2) return std::nullopt;
  WsFrame frame;
  frame.fin = (p[0] & 0x80) != 0;
  if (p[0] & 0x70) return Result<WsFrame>(make_error(Errc::validation, "reserved bits set"));
  frame.opcode = static_cast<WsOpcode>(p[0] & 0x0F);
  const bool masked = (p[1] & 0x80) != 0;
  std::uint64_t len = p[1] & 0x7F;
  std::size_t pos = 2;
  if (len == 126) {
    if (avail < 4) return std::nullopt;
    len = (std::uint64_t{p[2]} << 8) | p[3];
    pos = 4;
  } else if (len == 127) {
    if (avail < 10) return std::nullopt;
    len = 0;
    for (int i = 0; i < 8; ++i) len = (len << 8) | p[2 + i];
    pos = 10;
  }
  if (len > kMaxWsMessage) return Result<WsFrame>(make_error(Errc::validation, "frame too large"));
  std::array<std::uint8_t, 4> key{};
  if (masked) {
    if (avail < pos + 4) return std::nullopt;
    std::copy(p + pos, p + pos + 4, key.begin());
    pos += 4;
  }
  if (avail < pos + len) return std::nullopt;
  frame.payload.assign(buffer_, pos, static_cast<std::size_t>(len));
  if (masked) {
    for (std::size_t i = 0; i < frame.payload.size(); ++i) {
      frame.payload[i] = static_cast<char>(static_cast<std::uint8_t>(frame.payload[i]) ^ key[i % 4]);
    }
  }
  buffer_.erase(0, pos + static_cast<std::size_t>(len));
  return Result<WsFrame>(std::move(frame));
}

// ---------------------------------------------------------------- server

GatewayServer::GatewayServer(Gateway& gateway, Clock clock)
    : gateway_(gateway), clock_(std::move(clock)) {}

GatewayServer::~GatewayServer() { stop(); }

Status GatewayServer::listen(const std::string& host, int port) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(), port_text.c_str(), &hints, &res);
      rc != 0) {
    return make_error(Errc::io_error, std::string("resolve ") + host + ": " + gai_strerror(rc));
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0) {
    ::freeaddrinfo(res);
    return make_error(Errc::io_error, std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
  if (::bind(fd, res->ai_addr, res->ai_addrlen) != 0 || ::listen(fd, 64) != 0) {
    std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    ::close(fd);
    return make_error(Errc::io_error, "bind " + host + ":" + port_text + ": " + why);
  }
  ::freeaddrinfo(res);
  sockaddr_in bound{};
  socklen_t len = sizeof bound;
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
  listen_fd_ = fd;
  return Ok{};
}

void GatewayServer::run() {
  while (!stopping_) {
    pollfd pfd{listen_fd_, POLLIN, 0};
    int rc = ::poll(&pfd, 1, 100);
    if (rc <= 0) continue;
    int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) continue;
    int one = 1;
    ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
    std::lock_guard lock(conn_mu_);
    if (stopping_) {
      ::close(fd);
      break;
    }
    connections_.insert(fd);
    workers_.emplace_back([this, fd] {
      serve_connection(fd);
      std::lock_guard lock(conn_mu_);
      connections_.erase(fd);
      ::close(fd);
    });
  }
}

void GatewayServer::start() {
  accept_thread_ = std::thread([this] { run(); });
}

void GatewayServer::stop() {
  stopping_ = true;
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> workers;
  {
    std::lock_guard lock(conn_mu_);
    for (int fd : connections_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
  }
  for (auto& t : workers) {
    if (t.joinable()) t.join();
  }
  if (listen_fd_ >= 0) {
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
}

bool GatewayServer::send_all(int fd, std::string_view bytes) {
  while (!bytes.empty()) {
    ssize_t n = ::send(fd, bytes.data(), bytes.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
  return true;
}

void GatewayServer::serve_connection(int fd) {
  std::string first = read_some(fd);
  if (first.empty()) return;
  if (first[0] == '\0') {
    serve_frames(fd, std::move(first));
  } else {
    serve_http(fd, std::move(first));
  }
}

void GatewayServer::serve_frames(int fd, std::string initial) {
  FrameDecoder decoder;
  decoder.feed(initial);
  for (;;) {
    while (auto frame = decoder.next()) {
      if (!frame->ok()) return;
      UssdPdu response = gateway_.handle_pdu(frame->value(), clock_());
      if (!send_all(fd, encode_frame(response))) return;
    }
    std::string more = read_some(fd);
    if (more.empty()) return;
    decoder.feed(more);
  }
}

void GatewayServer::serve_http(int fd, std::string buffer) {
  std::size_t header_end;
  while ((header_end = buffer.find("\r\n\r\n")) == std::string::npos) {
    if (buffer.size() > kMaxHttpHeader) return;
    std::string more = read_some(fd);
    if (more.empty()) return;
    buffer += more;
  }
  HttpRequest req;
  std::string_view head(buffer.data(), header_end);
  auto line_end = head.find("\r\n");
  std::string_view request_line = head.substr(0, line_end);
  auto sp1 = request_line.find(' ');
  auto sp2 = request_line.find(' ', sp1 + 1);
  if (sp1 == std::string_view::npos || sp2 == std::string_view::npos) {
    send_all(fd, http_response(400, "Bad Request", "text/plain", "bad request line"));
    return;
  }
  req.method = std::string(request_line.substr(0, sp1));
  req.target = std::string(request_line.substr(sp1 + 1, sp2 - sp1 - 1));
  std::size_t pos = line_end == std::string_view::npos ? head.size() : line_end + 2;
  while (pos < head.size()) {
    auto next = head.find("\r\n", pos);
    if (next == std::string_view::npos) next = head.size();
    std::string_view line = head.substr(pos, next - pos);
    if (auto colon = line.find(':'); colon != std::string_view::npos) {
      req.headers[lower(trim(line.substr(0, colon)))] = trim(line.substr(colon + 1));
    }
    pos = next + 2;
  }
  std::string rest = buffer.substr(header_end + 4);

  const bool bridge = req.target == "/bridge" || req.target.rfind("/bridge?", 0) == 0;
  if (!bridge) {
    send_all(fd, http_response(404, "Not Found", "application/json",
                               error_body(Errc::not_found, "no such endpoint")));
    return;
  }
  if (req.method == "OPTIONS") {
    send_all(fd, http_response(204, "No Content", {}, {}));
    return;
  }
  if (req.method == "GET" && lower(req.headers["upgrade"]) == "websocket") {
    const std::string key = req.headers["sec-websocket-key"];
    if (key.empty()) {
      send_all(fd, http_response(400, "Bad Request", "text/plain", "missing websocket key"));
      return;
    }
    std::string handshake = "HTTP/1.1 101 Switching Protocols\r\nUpgrade: websocket\r\n"
                            "Connection: Upgrade\r\nSec-WebSocket-Accept: " +
                            ws_accept_key(key) + "\r\n\r\n";
    if (!send_all(fd, handshake)) return;
    serve_websocket(fd, std::move(rest));
    return;
  }
  if (req.method != "POST") {
    send_all(fd, http_response(405, "Method Not Allowed", "application/json",
                               error_body(Errc::validation, "use POST or a websocket upgrade")));
    return;
  }
  std::size_t length = 0;
  if (auto it = req.headers.find("content-length"); it != req.headers.end()) {
    try {
      length = std::stoul(it->second);
    } catch (...) {
      length = kMaxHttpBody + 1;
    }
  }
  if (length > kMaxHttpBody) {
    send_all(fd, http_response(413, "Payload Too Large", "application/json",
                               error_body(Errc::validation, "body too large")));
    return;
  }
  while (rest.size() < length) {
    std::string more = read_some(fd);
    if (more.empty()) return;
    rest += more;
  }
  rest.resize(length);
  auto in = parse_bridge_text(rest);
  auto out = in ? relay(gateway_, *in, clock_()) : Result<BridgeMessage>(in.error());
  if (!out) {
    send_all(fd, http_response(400, "Bad Request", "application/json",
                               error_body(out.code(), out.error().detail)));
    return;
  }
  send_all(fd, http_response(200, "OK", "application/json", to_json_text(*out)));
}

void GatewayServer::serve_websocket(int fd, std::string pending) {
  WsDecoder decoder;
  decoder.feed(pending);
  std::string message;
  for (;;) {
    while (auto frame = decoder.next()) {
      if (!frame->ok()) {
        send_all(fd, ws_encode(WsOpcode::close, std::string("\x03\xEA", 2)));  // 1002
        return;
      }
      WsFrame& f = frame->value();
      switch (f.opcode) {
        case WsOpcode::ping:
          if (!send_all(fd, ws_encode(WsOpcode::pong, f.payload))) return;
          continue;
        case WsOpcode::pong:
          continue;
        case WsOpcode::close:
          send_all(fd, ws_encode(WsOpcode::close, f.payload.substr(0, 2)));
          return;
        case WsOpcode::text:
        case WsOpcode::cont:
          message += f.payload;
          break;
        default:
          send_all(fd, ws_encode(WsOpcode::close, std::string("\x03\xEB", 2)));  // 1003
          return;
      }
      if (message.size() > kMaxWsMessage) return;
      if (!f.fin) continue;
      auto in = parse_bridge_text(message);
      message.clear();
      auto out = in ? relay(gateway_, *in, clock_()) : Result<BridgeMessage>(in.error());
      if (!out) {
        send_all(fd, ws_encode(WsOpcode::close, std::string("\x03\xEF", 2)));  // 1007
        return;
      }
      if (!send_all(fd, ws_encode(WsOpcode::text, to_json_text(*out)))) return;
    }
    std::string more = read_some(fd);
    if (more.empty()) return;
    decoder.feed(more);
  }
}

// ---------------------------------------------------------------- client

GatewayClient::~GatewayClient() { close(); }

void GatewayClient::close() {
  if (fd_ >= 0) {
    ::close(fd_);
    fd_ = -1;
  }
}

Status GatewayClient::connect(const std::string& host, int port) {
  close();
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  addrinfo* res = nullptr;
  const std::string port_text = std::to_string(port);
  if (int rc = ::getaddrinfo(host.c_str(), port_text.c_str(), &hints, &res); rc != 0) {
    return make_error(Errc::io_error, std::string("resolve ") + host + ": " + gai_strerror(rc));
  }
  int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (fd < 0 || ::connect(fd, res->ai_addr, res->ai_addrlen) != 0) {
    std::string why = std::strerror(errno);
    ::freeaddrinfo(res);
    if (fd >= 0) ::close(fd);
    return make_error(Errc::link_down, "connect " + host + ":" + port_text + ": " + why);
  }
  ::freeaddrinfo(res);
  fd_ = fd;
  return Ok{};
}

Result<UssdPdu> GatewayClient::exchange(const UssdPdu& pdu) {
  if (fd_ < 0) return make_error(Errc::link_down, "not connected");
  const std::string frame = encode_frame(pdu);
  std::string_view left = frame;
  while (!left.empty()) {
    ssize_t n = ::send(fd_, left.data(), left.size(), MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return make_error(Errc::link_down, "send failed");
    left.remove_prefix(static_cast<std::size_t>(n));
  }
  for (;;) {
    if (auto decoded = decoder_.next()) return std::move(*decoded);
    std::string more = read_some(fd_);
    if (more.empty()) return make_error(Errc::link_down, "gateway closed the connection");
    decoder_.feed(more);
  }
}

}  // namespace ehr::ussd
