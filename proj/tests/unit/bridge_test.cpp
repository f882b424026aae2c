#include <netinet/in.h>
#include <arpa/inet.h>
#include <sys/socket.h>
#include <unistd.h>

#include <random>

#include <gtest/gtest.h>
#include <httplib.h>

#include "ehr/ussd/socket_server.hpp"
#include "support/menu_dfs.hpp"

namespace ehr::ussd {
namespace {

using testing::kT0;

TEST(Pdu, JsonFieldOrderIsFixed) {
  UssdPdu p{"s-1", "+255700000002", PduKind::begin, "*384#"};
  EXPECT_EQ(to_json_text(p),
            R"({"session_id":"s-1","msisdn":"+255700000002","kind":"BEGIN","text":"*384#"})");
  auto back = pdu_from_json(nlohmann::json::parse(to_json_text(p)));
  ASSERT_TRUE(back);
  EXPECT_EQ(*back, p);
}

TEST(Pdu, RejectsMalformedDocuments) {
  using nlohmann::json;
  json ok = {{"session_id", "s"}, {"msisdn", "m"}, {"kind", "CONTINUE"}, {"text", "1"}};
  EXPECT_TRUE(pdu_from_json(ok));
  auto extra = ok;
  extra["x"] = 1;
  EXPECT_FALSE(pdu_from_json(extra));
  auto kind = ok;
  kind["kind"] = "RESUME";
  EXPECT_FALSE(pdu_from_json(kind));
  auto sid = ok;
  sid["session_id"] = "";
  EXPECT_FALSE(pdu_from_json(sid));
  auto number = ok;
  number["text"] = 5;
  EXPECT_FALSE(pdu_from_json(number));
  EXPECT_FALSE(pdu_from_json(json::array()));
}

TEST(Frames, SplitAndCoalescedStreamsDecode) {
  std::mt19937 rng(5);
  std::vector<UssdPdu> sent;
  std::string stream;
  for (int i = 0; i < 50; ++i) {
    UssdPdu p{"s" + std::to_string(i), "+2557", static_cast<PduKind>(i % 4), std::string(rng() % 300, 'q')};
    sent.push_back(p);
    stream += encode_frame(p);
  }
  EXPECT_EQ(stream[0], '\0');  // protocol sniffing relies on this
  FrameDecoder d;
  std::vector<UssdPdu> got;
  for (std::size_t i = 0; i < stream.size();) {
    std::size_t n = 1 + rng() % 40;
    d.feed(std::string_view(stream).substr(i, n));
    i += n;
    while (auto f = d.next()) {
      ASSERT_TRUE(f->ok());
      got.push_back(f->value());
    }
  }
  EXPECT_EQ(got, sent);
}

TEST(Frames, OversizedFrameIsAnError) {
  FrameDecoder d;
  d.feed(std::string("\x00\x00\x10\x01", 4));  // 4097 bytes
  auto f = d.next();
  ASSERT_TRUE(f);
  EXPECT_FALSE(f->ok());
}

TEST(Bridge, JsonShapeIsExactlyDirectionAndPdu) {
  BridgeMessage m{BridgeDirection::to_gateway, {"s", "+2557", PduKind::cont, "1"}};
  EXPECT_EQ(to_json_text(m),
            R"({"direction":"TO_GATEWAY","pdu":{"session_id":"s","msisdn":"+2557","kind":"CONTINUE","text":"1"}})");
  EXPECT_EQ(*parse_bridge_text(to_json_text(m)), m);
  m.direction = BridgeDirection::to_phone;
  EXPECT_EQ(*parse_bridge_text(to_json_text(m)), m);
  EXPECT_FALSE(parse_bridge_text(R"({"direction":"TO_GATEWAY","pdu":{"session_id":"s","msisdn":"m","kind":"BEGIN","text":""},"extra":1})"));
  EXPECT_FALSE(parse_bridge_text(R"({"direction":"SIDEWAYS","pdu":{"session_id":"s","msisdn":"m","kind":"BEGIN","text":""}})"));
  EXPECT_FALSE(parse_bridge_text(R"({"direction":"TO_GATEWAY"})"));
  EXPECT_FALSE(parse_bridge_text("not json"));
}

TEST(Bridge, RelayAnswersToPhoneAndRefusesReversedDirection) {
  testing::MenuEnv env;
  auto out = relay(env.gateway, {BridgeDirection::to_gateway, {"b1", "+255700000002", PduKind::begin, "*384#"}}, kT0);
  ASSERT_TRUE(out);
  EXPECT_EQ(out->direction, BridgeDirection::to_phone);
  EXPECT_EQ(out->pdu.text, "Enter PIN:");
  EXPECT_FALSE(relay(env.gateway, {BridgeDirection::to_phone, {"b1", "+255700000002", PduKind::cont, "2222"}}, kT0));
}

TEST(WebSocket, AcceptKeyMatchesTheProtocolExample) {
  EXPECT_EQ(ws_accept_key("dGhlIHNhbXBsZSBub25jZQ=="), "s3pPLMBiTxaQ9kYGzzhZRbK+xOo=");
}

TEST(WebSocket, MaskedAndUnmaskedFramesRoundTrip) {
  for (std::size_t size : {0u, 5u, 125u, 126u, 300u, 65535u, 65536u}) {
    const std::string payload(size, 'p');
    for (bool masked : {false, true}) {
      auto mask = masked ? std::optional(std::array<std::uint8_t, 4>{0x37, 0xfa, 0x21, 0x3d}) : std::nullopt;
      std::string bytes = ws_encode(WsOpcode::text, payload, mask);
      EXPECT_EQ((static_cast<unsigned char>(bytes[1]) & 0x80) != 0, masked);
      WsDecoder d;
      d.feed(bytes.substr(0, bytes.size() / 2));
      if (!bytes.empty() && bytes.size() > 2) EXPECT_FALSE(d.next());
      d.feed(bytes.substr(bytes.size() / 2));
      auto f = d.next();
      ASSERT_TRUE(f && f->ok()) << size;
      EXPECT_EQ(f->value().payload, payload);
      EXPECT_EQ(f->value().opcode, WsOpcode::text);
      EXPECT_TRUE(f->value().fin);
    }
  }
}

TEST(WebSocket, DecodesTheProtocolMaskedHelloExample) {
  WsDecoder d;
  d.feed(std::string("\x81\x85\x37\xfa\x21\x3d\x7f\x9f\x4d\x51\x58", 11));
  auto f = d.next();
  ASSERT_TRUE(f && f->ok());
  EXPECT_EQ(f->value().payload, "Hello");
  EXPECT_EQ(ws_encode(WsOpcode::text, "Hello"), std::string("\x81\x05Hello", 7));
}

// ---------------------------------------------------------------- live server

struct ServerFixture : ::testing::Test {
  testing::MenuEnv env;
  std::atomic<Millis> clock{kT0};
  GatewayServer server{env.gateway, [this] { return clock.fetch_add(kSecond); }};

  void SetUp() override {
    ASSERT_TRUE(server.listen("127.0.0.1", 0));
    server.start();
  }
  void TearDown() override { server.stop(); }
};

int connect_raw(int port) {
  int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(static_cast<std::uint16_t>(port));
  ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
    ::close(fd);
    return -1;
  }
  return fd;
}

std::string read_until(int fd, std::string_view marker, std::string& buffer) {
  while (buffer.find(marker) == std::string::npos) {
    char chunk[4096];
    ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
    if (n <= 0) break;
    buffer.append(chunk, static_cast<std::size_t>(n));
  }
  auto at = buffer.find(marker);
  if (at == std::string::npos) return std::exchange(buffer, {});
  std::string head = buffer.substr(0, at + marker.size());
  buffer.erase(0, at + marker.size());
  return head;
}

TEST_F(ServerFixture, FramedClientRunsADialogue) {
  GatewayClient client;
  ASSERT_TRUE(client.connect("127.0.0.1", server.port()));
  auto r = client.exchange({"f1", "+255700000002", PduKind::begin, "*384#"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->text, "Enter PIN:");
  r = client.exchange({"f1", "+255700000002", PduKind::cont, "2222"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->text.substr(0, 8), "EHR Menu");
  r = client.exchange({"f1", "+255700000002", PduKind::cont, "0"});
  EXPECT_EQ(r->kind, PduKind::end);
  client.close();
}

TEST_F(ServerFixture, HttpPostBridge) {
  httplib::Client http("127.0.0.1", server.port());
  BridgeMessage m{BridgeDirection::to_gateway, {"h1", "+255700000002", PduKind::begin, "*384#"}};
  auto res = http.Post("/bridge", to_json_text(m), "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  auto back = parse_bridge_text(res->body);
  ASSERT_TRUE(back);
  EXPECT_EQ(back->direction, BridgeDirection::to_phone);
  EXPECT_EQ(back->pdu.text, "Enter PIN:");

  res = http.Post("/bridge", R"({"direction":"TO_GATEWAY","pdu":{},"x":1})", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  auto err = nlohmann::json::parse(res->body);
  EXPECT_TRUE(err.contains("error") && err.contains("code") && err.contains("detail"));

  res = http.Get("/elsewhere");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 404);
  res = http.Get("/bridge");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 405);
}

TEST_F(ServerFixture, WebSocketBridge) {
  int fd = connect_raw(server.port());
  ASSERT_GE(fd, 0);
  const std::string key = "dGhlIHNhbXBsZSBub25jZQ==";
  const std::string req = "GET /bridge HTTP/1.1\r\nHost: localhost\r\nUpgrade: websocket\r\n"
                          "Connection: Upgrade\r\nSec-WebSocket-Key: " + key +
                          "\r\nSec-WebSocket-Version: 13\r\n\r\n";
  ASSERT_EQ(::send(fd, req.data(), req.size(), 0), static_cast<ssize_t>(req.size()));
  std::string buffer;
  std::string head = read_until(fd, "\r\n\r\n", buffer);
  EXPECT_EQ(head.rfind("HTTP/1.1 101", 0), 0u) << head;
  EXPECT_NE(head.find("Sec-WebSocket-Accept: s3pPLMBiTxaQ9kYGzzhZRbK+xOo="), std::string::npos);

  WsDecoder d;
  d.feed(buffer);
  auto exchange = [&](const UssdPdu& p) -> std::optional<BridgeMessage> {
    std::string frame = ws_encode(WsOpcode::text, to_json_text(BridgeMessage{BridgeDirection::to_gateway, p}),
                                  std::array<std::uint8_t, 4>{1, 2, 3, 4});
    ::send(fd, frame.data(), frame.size(), 0);
    for (;;) {
      if (auto f = d.next()) {
        if (!f->ok()) return std::nullopt;
        auto m = parse_bridge_text(f->value().payload);
        if (!m) return std::nullopt;
        return *m;
      }
      char chunk[4096];
      ssize_t n = ::recv(fd, chunk, sizeof chunk, 0);
      if (n <= 0) return std::nullopt;
      d.feed(std::string_view(chunk, static_cast<std::size_t>(n)));
    }
  };
  auto r = exchange({"w1", "+255700000002", PduKind::begin, "*384#"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->direction, BridgeDirection::to_phone);
  EXPECT_EQ(r->pdu.text, "Enter PIN:");
  r = exchange({"w1", "+255700000002", PduKind::cont, "2222"});
  ASSERT_TRUE(r);
  EXPECT_EQ(r->pdu.text.substr(0, 8), "EHR Menu");
  std::string close = ws_encode(WsOpcode::close, "", std::array<std::uint8_t, 4>{9, 9, 9, 9});
  ::send(fd, close.data(), close.size(), 0);
  ::close(fd);
}

}  // namespace
}  // namespace ehr::ussd
