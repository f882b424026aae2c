#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "ehr/cli/cli.hpp"
#include "ehr/cli/config.hpp"

namespace ehr::cli {
namespace {

namespace fs = std::filesystem;
const fs::path kSource(EHR_SOURCE_DIR);

struct CliRun {
  int code;
  std::string out;
  std::string err;
};

CliRun run(std::vector<std::string> args, std::string input = {}) {
  std::istringstream in(input);
  std::ostringstream out, err;
  int code = execute(args, in, out, err);
  return {code, out.str(), err.str()};
}

struct CliFixture : ::testing::Test {
  fs::path dir;
  void SetUp() override {
    dir = fs::temp_directory_path() /
          ("ehrctl-" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  void TearDown() override { fs::remove_all(dir); }
  std::vector<std::string> with_store(std::vector<std::string> args) {
    args.insert(args.begin(), {"--store", (dir / "store").string()});
    return args;
  }
  CliRun seed_store() { return run(with_store({"seed", "--file", (kSource / "fixtures/seed.jsonl").string()})); }
};

TEST_F(CliFixture, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}).code, kExitUsage);
  auto r = run({"frobnicate"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("usage"), std::string::npos);
  EXPECT_EQ(run({"simulate"}).code, kExitUsage);
  EXPECT_EQ(run({"ussd"}).code, kExitUsage);
  EXPECT_EQ(run(with_store({"export-aggregates", "--period", "2025-13"})).code, kExitUsage);
  EXPECT_EQ(run(with_store({"export-aggregates", "--period", "2025-01", "--k", "0"})).code, kExitUsage);
  EXPECT_EQ(run({"--help"}).code, kExitOk);
}

TEST_F(CliFixture, ConfigRejectsUnknownKeysAndBadTypes) {
  EXPECT_TRUE(config_from_json({{"http_port", 9000}, {"suppression_k", 2}}));
  EXPECT_EQ(config_from_json({{"http_port", 9000}})->http_port, 9000);
  EXPECT_FALSE(config_from_json({{"store_key", "secret"}}));
  EXPECT_FALSE(config_from_json({{"http_port", "eighty"}}));
  EXPECT_FALSE(config_from_json({{"suppression_k", 0}}));
  std::ofstream(dir / "bad.json") << R"({"colour":"blue"})";
  EXPECT_EQ(run({"--config", (dir / "bad.json").string(), "verify-audit"}).code, kExitUsage);
}

TEST_F(CliFixture, SimulateIsDeterministicAndReportsFailures) {
  const std::string fixture = (kSource / "fixtures/h1-h2-transfer.json").string();
  auto a = run({"simulate", "--scenario", fixture, "--seed", "42"});
  auto b = run({"simulate", "--scenario", fixture, "--seed", "42"});
  ASSERT_EQ(a.code, kExitOk) << a.err;
  EXPECT_EQ(a.out, b.out);
  EXPECT_FALSE(a.out.empty());
  EXPECT_NE(a.out, run({"simulate", "--scenario", fixture, "--seed", "43"}).out);

  std::ofstream(dir / "fail.json")
      << R"({"scenario":"fail","seed":1,"horizon_ms":1000,"facilities":["H1"],"links":[]})" << "\n"
      << R"({"at_ms":10,"cmd":"assert","check":"last_sync","facility":"H1","expect":"OK"})" << "\n";
  auto f = run({"simulate", "--scenario", (dir / "fail.json").string()});
  EXPECT_EQ(f.code, kExitFailure) << f.err;
  EXPECT_EQ(run({"simulate", "--scenario", (dir / "missing.json").string()}).code, kExitFailure);
}

TEST_F(CliFixture, SeedThenVerifyThenTamper) {
  auto s = seed_store();
  ASSERT_EQ(s.code, kExitOk) << s.err;
  EXPECT_EQ(s.out.rfind("seeded ", 0), 0u);
  auto again = seed_store();
  EXPECT_EQ(again.code, kExitOk);
  EXPECT_NE(again.out.find("already present"), std::string::npos);

  auto v = run(with_store({"verify-audit"}));
  ASSERT_EQ(v.code, kExitOk) << v.err;
  EXPECT_EQ(v.out.rfind("OK ", 0), 0u);

  const fs::path log = dir / "store" / "audit.log";
  std::string bytes;
  {
    std::ifstream in(log, std::ios::binary);
    bytes.assign(std::istreambuf_iterator<char>(in), {});
  }
  ASSERT_GT(bytes.size(), 100u);
  bytes[bytes.size() / 2] = bytes[bytes.size() / 2] == 'a' ? 'b' : 'a';
  std::ofstream(log, std::ios::binary | std::ios::trunc) << bytes;
  v = run({"verify-audit", "--file", log.string()});
  EXPECT_EQ(v.code, kExitFailure);
  EXPECT_EQ(v.out.rfind("BROKEN_AT ", 0), 0u) << v.out;
}

TEST_F(CliFixture, UssdSessionAndAggregateExport) {
  ASSERT_EQ(seed_store().code, kExitOk);
  auto u = run(with_store({"ussd", "--msisdn", "+255700000001"}), "4321\n1\nP-001\n0\n0\n");
  ASSERT_EQ(u.code, kExitOk) << u.err;
  EXPECT_EQ(u.out.rfind("Enter PIN:\n\n", 0), 0u);
  EXPECT_NE(u.out.find("EHR Menu"), std::string::npos);
  EXPECT_NE(u.out.find("Goodbye."), std::string::npos);

  auto refused = run(with_store({"ussd", "--msisdn", "+255799999999"}), "");
  // A refusal is an ordinary END screen; the dialogue itself ran.
  EXPECT_EQ(refused.code, kExitOk);
  EXPECT_NE(refused.out.find("not registered"), std::string::npos);

  auto e = run(with_store({"export-aggregates", "--period", "2025-01", "--k", "2"}));
  ASSERT_EQ(e.code, kExitOk) << e.err;
  auto doc = nlohmann::json::parse(e.out);
  EXPECT_EQ(doc["k"], 2);
  EXPECT_EQ(doc["period"], "2025-01");
  EXPECT_TRUE(doc["rows"].is_array());
  EXPECT_EQ(e.out.find("P-0"), std::string::npos);
  EXPECT_EQ(run(with_store({"verify-audit"})).code, kExitOk);
}

}  // namespace
}  // namespace ehr::cli
