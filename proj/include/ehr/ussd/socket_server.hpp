#pragma once

#include <array>
#include <atomic>
#include <cstdint>
#include <functional>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/common/time.hpp"
#include "ehr/ussd/gateway.hpp"
#include "ehr/ussd/pdu.hpp"

namespace ehr::ussd {

// ---------------------------------------------------------------- bridge

enum class BridgeDirection { to_gateway, to_phone };
std::string_view to_string(BridgeDirection d) noexcept;

/// {"direction": "TO_GATEWAY" | "TO_PHONE", "pdu": <UssdPdu document>}, no
/// other fields.
struct BridgeMessage {
  BridgeDirection direction = BridgeDirection::to_gateway;
  UssdPdu pdu;

  friend bool operator==(const BridgeMessage&, const BridgeMessage&) = default;
};

nlohmann::ordered_json to_json(const BridgeMessage& m);
std::string to_json_text(const BridgeMessage& m);
Result<BridgeMessage> bridge_from_json(const nlohmann::json& j);
Result<BridgeMessage> parse_bridge_text(std::string_view text);

/// Relays one phone-side message through the gateway and wraps the answer.
Result<BridgeMessage> relay(Gateway& gateway, const BridgeMessage& in, Millis now);

// ---------------------------------------------------------------- websocket

inline constexpr std::size_t kMaxWsMessage = 64 * 1024;

enum class WsOpcode : std::uint8_t { cont = 0x0, text = 0x1, binary = 0x2, close = 0x8, ping = 0x9, pong = 0xA };

struct WsFrame {
  bool fin = true;
  WsOpcode opcode = WsOpcode::text;
  std::string payload;
};

/// Sec-WebSocket-Accept value for a client key.
std::string ws_accept_key(std::string_view client_key);

/// Encodes one frame; clients must supply a mask, servers must not.
std::string ws_encode(WsOpcode opcode, std::string_view payload,
                      std::optional<std::array<std::uint8_t, 4>> mask = std::nullopt);

class WsDecoder {
 public:
  void feed(std::string_view bytes) { buffer_.append(bytes); }
  /// Next complete frame with the mask removed.
  std::optional<Result<WsFrame>> next();

 private:
  std::string buffer_;
};

// ---------------------------------------------------------------- server

/// Serves the gateway port. The first byte of a connection selects the
/// protocol: 0x00 starts a length-delimited PDU stream (frame lengths never
/// exceed 4096, so the high byte is zero); anything else is HTTP, where
/// "/bridge" accepts POSTed BridgeMessages or a WebSocket upgrade carrying
/// one BridgeMessage per text frame.
class GatewayServer {
 public:
  using Clock = std::function<Millis()>;

  GatewayServer(Gateway& gateway, Clock clock);
  ~GatewayServer();
  GatewayServer(const GatewayServer&) = delete;
  GatewayServer& operator=(const GatewayServer&) = delete;

  /// Binds and listens; port 0 picks an ephemeral port.
  Status listen(const std::string& host, int port);
  int port() const noexcept { return port_; }

  /// Accept loop; returns after stop().
  void run();
  void start();
  void stop();

 private:
  void serve_connection(int fd);
  void serve_frames(int fd, std::string initial);
  void serve_http(int fd, std::string initial);
  void serve_websocket(int fd, std::string pending);
  bool send_all(int fd, std::string_view bytes);

  Gateway& gateway_;
  Clock clock_;
  int listen_fd_ = -1;
  int port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex conn_mu_;
  std::set<int> connections_;
  std::vector<std::thread> workers_;
};

/// Client for the framed PDU stream.
class GatewayClient {
 public:
  GatewayClient() = default;
  ~GatewayClient();
  GatewayClient(const GatewayClient&) = delete;
  GatewayClient& operator=(const GatewayClient&) = delete;

  Status connect(const std::string& host, int port);
  Result<UssdPdu> exchange(const UssdPdu& pdu);
  void close();

 private:
  int fd_ = -1;
  FrameDecoder decoder_;
};

}  // namespace ehr::ussd
