#include <filesystem>

#include <gtest/gtest.h>

#include "ehr/netsim/scenario.hpp"
#include "ehr/netsim/world.hpp"
#include "support/world_fixture.hpp"

namespace ehr::netsim {
namespace {

const std::filesystem::path kFixtures = std::filesystem::path(EHR_SOURCE_DIR) / "fixtures";

TEST(LinkSchedule, IntervalsMustTileTheHorizon) {
  LinkSchedule l("INTERNET:H1", 1000);
  EXPECT_EQ(l.state_at(0), LinkState::up);
  EXPECT_TRUE(l.set_intervals({{0, 400, LinkState::up}, {400, 1000, LinkState::down}}));
  EXPECT_EQ(l.state_at(399), LinkState::up);
  EXPECT_EQ(l.state_at(400), LinkState::down);
  EXPECT_EQ(l.state_at(5000), LinkState::down);  // past the horizon: last state
  EXPECT_FALSE(l.set_intervals({{0, 400, LinkState::up}, {500, 1000, LinkState::down}}));
  EXPECT_FALSE(l.set_intervals({{100, 1000, LinkState::up}}));
  EXPECT_FALSE(l.set_intervals({{0, 900, LinkState::up}}));
  EXPECT_FALSE(l.set_intervals({{0, 600, LinkState::up}, {500, 1000, LinkState::down}}));
  l.set_from(700, LinkState::up);
  EXPECT_EQ(l.state_at(699), LinkState::down);
  EXPECT_EQ(l.state_at(700), LinkState::up);
  EXPECT_EQ(l.up_transitions(), std::vector<Millis>{700});
}

TEST(World, DeliverReportsArrivalDropOrUnknownLink) {
  World w(WorldConfig{.seed = 1, .horizon_ms = 1000});
  LinkSchedule l("INTERNET:H1", 1000, LinkState::up, 30);
  ASSERT_TRUE(l.set_intervals({{0, 500, LinkState::up}, {500, 1000, LinkState::down}}));
  w.add_link(l);
  auto d = w.deliver("hello", "INTERNET:H1", 100);
  ASSERT_TRUE(d);
  EXPECT_TRUE(d->delivered);
  EXPECT_EQ(d->at, 130);
  d = w.deliver("hello", "INTERNET:H1", 500);
  ASSERT_TRUE(d);
  EXPECT_FALSE(d->delivered);
  auto u = w.deliver("hello", "INTERNET:NOPE", 100);
  ASSERT_FALSE(u);
  EXPECT_EQ(u.code(), Errc::unknown_link);
  ASSERT_EQ(w.trace().size(), 2u);  // unknown links leave no trace line
  EXPECT_NE(w.trace()[0].find("\"DELIVERED\""), std::string::npos);
  EXPECT_NE(w.trace()[1].find("\"DROPPED\""), std::string::npos);
}

TEST(World, JitterStaysWithinBoundsAndIsSeeded) {
  auto arrivals = [](std::uint64_t seed) {
    World w(WorldConfig{.seed = seed, .horizon_ms = 1000});
    w.add_link(LinkSchedule("L", 1000, LinkState::up, 10, 3, 25));
    std::vector<Millis> out;
    for (int i = 0; i < 200; ++i) out.push_back(w.deliver("m", "L", i)->at - i);
    return out;
  };
  auto a = arrivals(9);
  for (Millis latency : a) {
    EXPECT_GE(latency, 10);
    EXPECT_LE(latency, 35);
  }
  EXPECT_EQ(a, arrivals(9));
  EXPECT_NE(a, arrivals(10));
}

TEST(World, EventsRunInTimeThenInsertionOrder) {
  World w(WorldConfig{.seed = 1, .horizon_ms = 1000});
  std::vector<std::string> order;
  w.schedule(50, [&](World&) { order.push_back("b1"); });
  w.schedule(10, [&](World&) { order.push_back("a"); });
  w.schedule(50, [&](World& world) {
    order.push_back("b2");
    world.schedule(50, [&](World&) { order.push_back("b3"); });  // same time, runs after
    world.schedule(20, [&](World&) { order.push_back("late"); });  // past: runs next
  });
  w.schedule(90, [&](World&) { order.push_back("c"); });
  w.advance(60);
  EXPECT_EQ(w.now(), 60);
  EXPECT_EQ(w.pending_events(), 1u);
  w.advance(100);
  EXPECT_EQ(order, (std::vector<std::string>{"a", "b1", "b2", "b3", "late", "c"}));
}

struct PowerWorld : ::testing::Test {
  World w{WorldConfig{.seed = 3, .horizon_ms = 100'000}};
  core::Encounter visit(std::string id) {
    core::Encounter e;
    e.encounter_id = std::move(id);
    e.patient_id = "P-001";
    e.facility_id = "H1";
    e.clinician_id = "N1";
    e.occurred_at = w.wall(w.now());
    return e;
  }
  void SetUp() override {
    testing::seed_reference(w.central(), w.wall(0));
    w.central().register_patient("setup", testing::patient("P-001"), w.wall(0)).value();
    w.add_replica("H1");
    ASSERT_TRUE(w.provision_replicas());
  }
};

TEST_F(PowerWorld, PowerCutTakesTheLinkDownAndDropsUnsyncedState) {
  ASSERT_TRUE(w.write("H1", "N1", core::RecordEncounter{visit("E-1")}));
  ASSERT_TRUE(w.sync_facility("H1"));
  w.advance(1000);
  ASSERT_TRUE(w.write("H1", "N1", core::RecordEncounter{visit("E-2")}));  // never synced
  w.power_cut("H1", 5000);
  EXPECT_FALSE(w.powered("H1"));
  EXPECT_EQ(*w.link_state(internet_link("H1"), 2000), LinkState::down);
  auto r = w.write("H1", "N1", core::RecordEncounter{visit("E-3")});
  ASSERT_FALSE(r);
  EXPECT_EQ(r.code(), Errc::link_down);
  EXPECT_EQ(w.sync_facility("H1").code(), Errc::link_down);
  w.advance(6000);
  EXPECT_TRUE(w.powered("H1"));
  EXPECT_EQ(*w.link_state(internet_link("H1"), 6000), LinkState::up);
  auto* rep = w.replica("H1");
  EXPECT_TRUE(rep->store().find_encounter("E-1"));
  ASSERT_TRUE(w.sync_facility("H1"));
  EXPECT_TRUE(w.converged());
}

TEST_F(PowerWorld, GatewayUplinkIsIndependentOfFacilityInternet) {
  ASSERT_TRUE(w.set_link(internet_link("H1"), LinkState::down));
  EXPECT_EQ(*w.link_state(kGatewayUplink, 0), LinkState::up);
  ASSERT_TRUE(w.set_link(std::string(kGatewayUplink), LinkState::down));
  EXPECT_EQ(*w.link_state(kGatewayUplink, w.now()), LinkState::down);
}

// ---------------------------------------------------------------- fixtures

class FixtureRun : public ::testing::TestWithParam<std::string> {};

TEST_P(FixtureRun, PassesAndReplaysByteForByte) {
  auto scenario = load_scenario(kFixtures / GetParam());
  ASSERT_TRUE(scenario) << scenario.error().to_string();
  auto first = run_scenario(*scenario);
  ASSERT_TRUE(first) << first.error().to_string();
  for (const auto& a : first->assertions) EXPECT_TRUE(a.passed) << a.check << ": " << a.detail;
  EXPECT_GT(first->assertions.size(), 3u);
  auto second = run_scenario(*scenario);
  ASSERT_TRUE(second);
  EXPECT_EQ(first->trace_text(), second->trace_text());
  auto other = run_scenario(*scenario, scenario->seed + 1);
  ASSERT_TRUE(other);
  EXPECT_EQ(other->failures(), 0u);
}

INSTANTIATE_TEST_SUITE_P(Fixtures, FixtureRun,
                         ::testing::Values("h1-h2-transfer.json", "ussd-during-outage.json",
                                           "inter-city-travel.json"),
                         [](const auto& info) {
                           std::string name = info.param.substr(0, info.param.find('.'));
                           for (char& c : name) {
                             if (c == '-') c = '_';
                           }
                           return name;
                         });

TEST(Fixtures, JitteredTraceDependsOnTheSeed) {
  auto scenario = load_scenario(kFixtures / "h1-h2-transfer.json");
  ASSERT_TRUE(scenario);
  EXPECT_NE(run_scenario(*scenario, 1)->trace_text(), run_scenario(*scenario, 2)->trace_text());
}

TEST(Fixtures, TransferShowsMissingBeforeAndPresentAfter) {
  auto scenario = load_scenario(kFixtures / "h1-h2-transfer.json");
  ASSERT_TRUE(scenario);
  std::unique_ptr<World> world;
  auto r = run_scenario(*scenario, std::nullopt, world);
  ASSERT_TRUE(r);
  EXPECT_TRUE(world->replica("H2")->store().find_encounter("E-H1-0001"));
  EXPECT_TRUE(world->converged());
}

TEST(Scenario, RejectsMalformedScripts) {
  EXPECT_FALSE(parse_scenario(""));
  EXPECT_FALSE(parse_scenario("{\"scenario\":\"x\"}\nnot json"));
  const std::string header = R"({"scenario":"x","seed":1,"horizon_ms":1000,"facilities":["H1"],"links":[]})";
  EXPECT_TRUE(parse_scenario(header));
  EXPECT_FALSE(parse_scenario(header + "\n{\"at_ms\":5,\"cmd\":\"teleport\"}"));
  EXPECT_FALSE(parse_scenario(header + "\n{\"at_ms\":5,\"cmd\":\"sync\",\"facility\":\"H1\"}\n"
                                        "{\"at_ms\":4,\"cmd\":\"sync\",\"facility\":\"H1\"}"));
}

}  // namespace
}  // namespace ehr::netsim
