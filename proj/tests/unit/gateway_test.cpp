#include <atomic>
#include <thread>

#include <gtest/gtest.h>

#include "ehr/common/utf8.hpp"
#include "ehr/ussd/gateway.hpp"
#include "support/menu_dfs.hpp"

namespace ehr::ussd {
namespace {

using testing::kT0;

constexpr std::string_view kNurse = "+255700000002";

struct GatewayFixture : ::testing::Test {
  testing::MenuEnv env;
  Gateway& gw = env.gateway;
  Millis now = kT0;

  UssdPdu send(std::string sid, std::string_view msisdn, PduKind kind, std::string text,
               Millis advance = kSecond) {
    now += advance;
    auto reply = gw.handle_pdu({std::move(sid), std::string(msisdn), kind, std::move(text)}, now);
    EXPECT_LE(utf8::length(reply.text), kMaxUssdChars);
    return reply;
  }
  UssdPdu dial(std::string sid = "s1", std::string_view msisdn = kNurse) {
    return send(std::move(sid), msisdn, PduKind::begin, "*384#");
  }
  UssdPdu cont(std::string text, std::string sid = "s1", std::string_view msisdn = kNurse) {
    return send(std::move(sid), msisdn, PduKind::cont, std::move(text));
  }
};

TEST_F(GatewayFixture, PinThenMenu) {
  auto r = dial();
  EXPECT_EQ(r.kind, PduKind::cont);
  EXPECT_EQ(r.text, "Enter PIN:");
  EXPECT_EQ(r.session_id, "s1");
  EXPECT_EQ(gw.session("s1")->state, SessionState::await_pin);
  r = cont("2222");
  EXPECT_EQ(r.kind, PduKind::cont);
  EXPECT_EQ(r.text, gw.engine().current_screen(gw.engine().start()));
  auto info = gw.session("s1");
  EXPECT_EQ(info->state, SessionState::menu);
  EXPECT_EQ(info->clinician_id, "N1");
  EXPECT_EQ(cont("1").text, "Enter patient ID:");
  EXPECT_EQ(gw.session("s1")->state, SessionState::prompt);
}

TEST_F(GatewayFixture, RefillThroughUssdReachesTheStore) {
  dial();
  cont("2222");
  cont("1");
  cont("P-002");  // only RX-5, which already has a pending request
  auto r = cont("3");
  EXPECT_EQ(r.kind, PduKind::cont);
  EXPECT_NE(r.text.find("No refillable Rx."), std::string::npos);
  cont("0");
  cont("1");
  cont("P-001");
  r = cont("3");  // RX-1 and RX-2 are refillable
  EXPECT_EQ(r.text.substr(0, 16), "Refill which Rx?");
  r = cont("1");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, "Refill requested.");
  EXPECT_EQ(env.central.store.find_prescription("RX-1")->status, core::RxStatus::refill_requested);
  EXPECT_EQ(gw.session("s1")->state, SessionState::closed);
  EXPECT_EQ(cont("1").text, kSessionExpired);
}

TEST_F(GatewayFixture, WrongPinThenLockout) {
  dial();
  EXPECT_EQ(cont("0000").text, "Wrong PIN.\nEnter PIN:");
  EXPECT_EQ(cont("0001").text, "Wrong PIN.\nEnter PIN:");
  EXPECT_EQ(cont("0002").text, "Wrong PIN.\nEnter PIN:");
  auto r = cont("2222");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, "Too many attempts. Try later.");
  // Still locked on a fresh dial until the lockout elapses.
  dial("s2");
  EXPECT_EQ(cont("2222", "s2").text, "Too many attempts. Try later.");
  now += 15 * kMinute;
  dial("s3");
  EXPECT_EQ(cont("2222", "s3").kind, PduKind::cont);
  EXPECT_EQ(gw.session("s3")->state, SessionState::menu);
}

TEST_F(GatewayFixture, RefusesUnregisteredNumbersAndWrongCodes) {
  auto r = dial("s1", "+255799999999");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, "This number is not registered for EHR access.");
  EXPECT_FALSE(gw.session("s1"));
  r = send("s2", kNurse, PduKind::begin, "*123#");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, "Unknown service code.");
  EXPECT_EQ(gw.live_sessions(), 0u);
}

TEST_F(GatewayFixture, UnknownSessionEndsWithExpiredNotice) {
  auto r = cont("1", "ghost");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, "Session expired. Dial again.");
  dial();
  r = cont("2222", "s1", "+255700000001");  // someone else's session id
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, kSessionExpired);
}

TEST_F(GatewayFixture, IdleSessionTimesOut) {
  dial();
  cont("2222");
  auto r = send("s1", kNurse, PduKind::cont, "1", 90 * kSecond);  // exactly the timeout: still alive
  EXPECT_EQ(r.kind, PduKind::cont);
  r = send("s1", kNurse, PduKind::cont, "P-001", 90 * kSecond + 1);
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, kSessionExpired);

  dial("s2");
  EXPECT_EQ(gw.expire_sessions(now + 90 * kSecond), 0u);
  EXPECT_EQ(gw.expire_sessions(now + 90 * kSecond + 1), 1u);
  EXPECT_EQ(gw.live_sessions(), 0u);
  EXPECT_EQ(cont("2222", "s2").text, kSessionExpired);
}

TEST_F(GatewayFixture, SecondBeginAbortsTheFirst) {
  dial("s1");
  cont("2222", "s1");
  dial("s2");
  EXPECT_EQ(gw.session("s1")->state, SessionState::closed);
  EXPECT_EQ(gw.live_sessions(), 1u);
  EXPECT_EQ(cont("1", "s1").text, kSessionExpired);
  EXPECT_EQ(cont("2222", "s2").kind, PduKind::cont);
}

TEST_F(GatewayFixture, AbortAndEndCloseTheSession) {
  dial();
  auto r = send("s1", kNurse, PduKind::abort, "");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(gw.session("s1")->state, SessionState::closed);
  dial("s2");
  send("s2", kNurse, PduKind::end, "");
  EXPECT_EQ(gw.live_sessions(), 0u);
}

TEST_F(GatewayFixture, OverlongInputRePrompts) {
  dial();
  auto r = cont(std::string(183, '1'));
  EXPECT_EQ(r.kind, PduKind::cont);
  EXPECT_EQ(r.text, "Input too long.\nEnter PIN:");
  cont("2222");
  r = cont(std::string(500, 'x'));
  EXPECT_EQ(r.kind, PduKind::cont);
  EXPECT_EQ(r.text.substr(0, 15), "Input too long.");
  EXPECT_EQ(gw.session("s1")->menu, gw.engine().start());
  // 182 characters is within the limit and reaches the menu engine.
  EXPECT_EQ(cont(std::string(182, 'x')).text.substr(0, 15), "Invalid choice.");
}

TEST_F(GatewayFixture, UplinkDownFailsFastWithoutWrites) {
  bool up = true;
  gw.set_uplink([&](Millis) { return up; });
  dial();
  cont("2222");
  cont("1");
  cont("P-001");
  up = false;
  const auto before = env.central.store.log_size();
  auto r = cont("3");
  EXPECT_EQ(r.kind, PduKind::cont);
  EXPECT_EQ(r.text.substr(0, 20), "Service unavailable.");
  EXPECT_EQ(env.central.store.log_size(), before);
  dial("s2");
  r = cont("2222", "s2");
  EXPECT_EQ(r.kind, PduKind::end);
  EXPECT_EQ(r.text, "Service unavailable. Try later.");
}

TEST_F(GatewayFixture, ConcurrentSessionsStayIndependent) {
  env.central.enroll("D2", core::Role::physician, "H1", "+255700000099", "9999", "x-pass");
  std::atomic<int> failures{0};
  std::atomic<Millis> clock{kT0};
  auto run = [&](std::string sid, std::string msisdn, std::string pin, std::string patient) {
    for (int round = 0; round < 30; ++round) {
      const std::string id = sid + "-" + std::to_string(round);
      auto step = [&](PduKind k, std::string text) {
        return gw.handle_pdu({id, msisdn, k, std::move(text)}, clock.fetch_add(1));
      };
      step(PduKind::begin, "*384#");
      step(PduKind::cont, pin);
      step(PduKind::cont, "1");
      auto r = step(PduKind::cont, patient);
      if (r.text.find("Patient: ") != 0) ++failures;
      r = step(PduKind::cont, "0");
      r = step(PduKind::cont, "0");
      if (r.kind != PduKind::end || r.text != "Goodbye.") ++failures;
    }
  };
  std::thread a(run, "a", std::string(kNurse), "2222", "P-001");
  std::thread b(run, "b", "+255700000001", "1111", "P-002");
  std::thread c(run, "c", "+255700000099", "9999", "P-LONG");
  a.join();
  b.join();
  c.join();
  EXPECT_EQ(failures.load(), 0);
  EXPECT_EQ(gw.live_sessions(), 0u);
}

}  // namespace
}  // namespace ehr::ussd
