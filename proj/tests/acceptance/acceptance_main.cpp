// Acceptance run: one PASS/FAIL line per criterion, non-zero exit on any FAIL.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <random>
#include <sstream>

#include <unistd.h>

#include "ehr/analytics/aggregates.hpp"
#include "ehr/cli/cli.hpp"
#include "ehr/netsim/scenario.hpp"
#include "ehr/netsim/world.hpp"
#include "ehr/web/api.hpp"
#include "support/menu_dfs.hpp"
#include "support/random_events.hpp"
#include "support/random_store.hpp"
#include "support/world_fixture.hpp"

namespace {

using namespace ehr;
using nlohmann::json;
namespace fs = std::filesystem;

const fs::path kFixtures = fs::path(EHR_SOURCE_DIR) / "fixtures";

struct Verdict {
  bool pass = true;
  std::string detail;

  void fail(const std::string& why) {
    if (pass) detail = why;
    pass = false;
  }
};

// ---------------------------------------------------------------- convergence

/// One random world: three replicas, random internet schedules, fifty mixed
/// operations (writes at replicas and central, syncs), then every link up
/// and two sync passes.
struct WorldStats {
  std::size_t writes = 0;
  std::size_t writes_ok = 0;
  std::size_t syncs = 0;
  std::size_t syncs_ok = 0;
};

bool random_world_converges(std::uint64_t seed, std::string& why, WorldStats& stats) {
  constexpr Millis kHorizon = 120 * kSecond;
  std::mt19937_64 rng(seed);
  netsim::WorldConfig config;
  config.seed = seed;
  config.horizon_ms = kHorizon;
  netsim::World w(config);
  testing::seed_reference(w.central(), w.wall(0));
  w.central().apply("setup", core::RegisterFacility{{"H3", "Moshi Dispensary", "Z1", core::Modality::mes}}, w.wall(0)).value();
  const std::vector<std::string> facilities{"H1", "H2", "H3"};
  const std::vector<std::string> patients{"P-1", "P-2", "P-3"};
  for (const auto& p : patients) w.central().register_patient("setup", testing::patient(p), w.wall(0)).value();
  for (const auto& f : facilities) w.add_replica(f);
  if (!w.provision_replicas()) {
    why = "provisioning failed";
    return false;
  }

  for (const auto& f : facilities) {
    std::vector<netsim::Interval> intervals;
    Millis t = 0;
    auto state = rng() % 2 ? netsim::LinkState::up : netsim::LinkState::down;
    while (t < kHorizon) {
      Millis end = std::min(kHorizon, t + 1000 + static_cast<Millis>(rng() % 30'000));
      intervals.push_back({t, end, state});
      state = state == netsim::LinkState::up ? netsim::LinkState::down : netsim::LinkState::up;
      t = end;
    }
    if (!w.link(netsim::internet_link(f))->set_intervals(intervals)) {
      why = "bad schedule";
      return false;
    }
  }

  std::vector<Millis> times(50);
  for (auto& t : times) t = static_cast<Millis>(rng() % kHorizon);
  std::sort(times.begin(), times.end());
  for (std::size_t i = 0; i < times.size(); ++i) {
    const std::uint64_t pick = rng();
    const std::uint64_t extra = rng();
    w.schedule(times[i], [i, pick, extra, &facilities, &patients](netsim::World& world) {
      const std::size_t site_index = extra % 4;
      const std::string site = site_index == 3 ? "central" : facilities[site_index];
      const std::string& patient = patients[(extra >> 8) % patients.size()];
      const std::string id = std::to_string(i);
      core::Mutation m;
      switch (pick % 8) {
        case 0: {
          (void)world.sync_facility(facilities[(extra >> 16) % 3]);
          return;
        }
        case 1: {
          core::UpdatePatient u;
          u.patient_id = patient;
          u.name = "Name " + id;
          m = u;
          break;
        }
        case 2: {
          core::UpdatePatient u;
          u.patient_id = patient;
          u.zone_id = (extra >> 20) % 2 ? "Z1" : "Z2";
          u.allergies = std::set<std::string>{"A" + std::to_string((extra >> 24) % 3)};
          m = u;
          break;
        }
        case 3: {
          core::Prescription rx;
          rx.rx_id = "RX-" + id;
          rx.patient_id = patient;
          rx.prescriber_id = "D1";
          rx.drug_code = "AMOX500";
          rx.dose = "500mg";
          rx.refills_remaining = static_cast<int>((extra >> 28) % 3);
          m = core::AddPrescription{rx};
          break;
        }
        case 4:
          m = core::RequestRefill{"RX-" + std::to_string((extra >> 12) % (i + 1))};
          break;
        case 5:
          m = core::VoidEncounter{"E-" + std::to_string((extra >> 12) % (i + 1))};
          break;
        case 6: {
          core::PatientRecord p = testing::patient("P-N" + id, "New " + id, "Z2");
          m = core::RegisterPatient{p};
          break;
        }
        default: {
          core::Encounter e;
          e.encounter_id = "E-" + id;
          e.patient_id = patient;
          e.facility_id = site == "central" ? "H1" : site;
          e.clinician_id = "D1";
          e.diagnosis_codes = {"B54"};
          m = core::RecordEncounter{e};
        }
      }
      (void)world.write(site, "D1", m);
    });
  }
  w.advance(kHorizon);
  for (const auto& f : facilities) (void)w.set_link(netsim::internet_link(f), netsim::LinkState::up);
  for (int pass = 0; pass < 2; ++pass) {
    for (const auto& f : facilities) {
      if (auto r = w.sync_facility(f); !r) {
        why = "final sync of " + f + " failed: " + r.error().to_string();
        return false;
      }
    }
  }
  for (const auto& line : w.trace()) {
    const auto j = json::parse(line);
    const bool ok = j.value("outcome", "") == "OK";
    if (j["ev"] == "write") ++stats.writes, stats.writes_ok += ok;
    if (j["ev"] == "sync") ++stats.syncs, stats.syncs_ok += ok;
  }
  const auto central = w.central().view_snapshot();
  for (const auto& f : facilities) {
    if (!(w.replica(f)->store().view_snapshot() == central)) {
      why = "replica " + f + " differs from central";
      return false;
    }
  }
  return w.converged();
}

Verdict convergence() {
  Verdict v;
  const auto start = std::chrono::steady_clock::now();
  int ok = 0;
  WorldStats stats;
  for (std::uint64_t seed = 1; seed <= 200; ++seed) {
    std::string why;
    if (random_world_converges(seed, why, stats)) {
      ++ok;
    } else {
      v.fail("seed " + std::to_string(seed) + ": " + why);
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  if (secs >= 60.0) v.fail("took " + std::to_string(secs) + " s");
  std::ostringstream d;
  d << ok << "/200 runs converged in " << static_cast<int>(secs * 1000) << " ms (" << stats.writes_ok
    << "/" << stats.writes << " writes committed, " << stats.syncs_ok << "/" << stats.syncs
    << " syncs completed)";
  if (v.pass) v.detail = d.str();
  return v;
}

// ---------------------------------------------------------------- fixtures

Verdict transfer_fixture() {
  Verdict v;
  auto scenario = netsim::load_scenario(kFixtures / "h1-h2-transfer.json");
  if (!scenario) {
    v.fail(scenario.error().to_string());
    return v;
  }
  auto a = netsim::run_scenario(*scenario);
  auto b = netsim::run_scenario(*scenario);
  if (!a || !b) {
    v.fail("scenario did not run");
    return v;
  }
  bool missing_before = false;
  bool present_after = false;
  for (const auto& x : a->assertions) {
    if (!x.passed) v.fail("line " + std::to_string(x.line) + " " + x.check + ": " + x.detail);
    auto cmd = std::find_if(scenario->commands.begin(), scenario->commands.end(),
                            [&](const auto& c) { return c.line == x.line; });
    const bool at_h2 = cmd != scenario->commands.end() && cmd->args.value("at", "") == "H2" &&
                       cmd->args.value("entity_id", cmd->args.value("id", "")) == "E-H1-0001";
    if (!at_h2 || !x.passed) continue;
    if (x.detail == "expected MISSING, got MISSING") missing_before = true;
    if (x.detail == "expected PRESENT, got PRESENT" && missing_before) present_after = true;
  }
  if (!missing_before) v.fail("no MISSING check before the heal");
  if (!present_after) v.fail("no PRESENT check after the heal");
  if (a->trace_text() != b->trace_text()) v.fail("trace differs between identical runs");
  if (v.pass) v.detail = std::to_string(a->assertions.size()) + " assertions, trace " +
                         std::to_string(a->trace_text().size()) + " bytes reproduced";
  return v;
}

Verdict outage_fixture() {
  Verdict v;
  auto scenario = netsim::load_scenario(kFixtures / "ussd-during-outage.json");
  if (!scenario) {
    v.fail(scenario.error().to_string());
    return v;
  }
  std::unique_ptr<netsim::World> world;
  auto r = netsim::run_scenario(*scenario, std::nullopt, world);
  if (!r) {
    v.fail(r.error().to_string());
    return v;
  }
  for (const auto& x : r->assertions) {
    if (!x.passed) v.fail(x.check + ": " + x.detail);
  }
  for (Millis t = 0; t < scenario->horizon_ms; t += 500) {
    if (*world->link_state(netsim::internet_link("H1"), t) != netsim::LinkState::down) {
      v.fail("facility internet up at " + std::to_string(t));
      break;
    }
  }
  const auto* phone = world->phone_session("S1");
  if (!phone) {
    v.fail("no USSD session");
    return v;
  }
  if (phone->exchanges > 8) v.fail(std::to_string(phone->exchanges) + " exchanges");
  if (phone->max_chars > ussd::kMaxUssdChars) v.fail("screen of " + std::to_string(phone->max_chars) + " chars");
  if (phone->last_text != "Refill requested." || !phone->closed) v.fail("dialogue ended with: " + phone->last_text);
  auto rx = world->central().find_prescription("RX-0001");
  if (!rx || rx->status != core::RxStatus::refill_requested) v.fail("refill not visible at central");
  if (v.pass) {
    v.detail = std::to_string(phone->exchanges) + " exchanges, longest screen " +
               std::to_string(phone->max_chars) + " chars";
  }
  return v;
}

// ---------------------------------------------------------------- menu

Verdict menu_walk() {
  Verdict v;
  const auto report = testing::explore_menu(40);
  if (report.truncated) v.fail(std::to_string(report.truncated) + " states cut at the depth limit");
  if (report.over_budget) v.fail(std::to_string(report.over_budget) + " over-budget screens: " + report.problems.front());
  if (report.internal_errors) v.fail(std::to_string(report.internal_errors) + " internal errors: " + report.problems.front());
  if (v.pass) {
    v.detail = std::to_string(report.states) + " states, " + std::to_string(report.screens) +
               " screens, longest " + std::to_string(report.max_chars) + " chars";
  }
  return v;
}

// ---------------------------------------------------------------- security

Verdict security() {
  Verdict v;
  testing::Central central;
  central.store.register_patient("setup", testing::patient("P-001"), testing::kT0).value();
  core::Prescription rx;
  rx.rx_id = "RX-1";
  rx.patient_id = "P-001";
  rx.prescriber_id = "D1";
  rx.drug_code = "AMOX500";
  rx.dose = "500mg";
  rx.refills_remaining = 2;
  central.store.add_prescription("setup", rx, testing::kT0).value();
  web::Api api(central.service, 1);
  Millis now = testing::kT0;
  std::size_t guarded_ops = 0;
  const std::size_t audit_start = central.audit.size();
  auto call = [&](std::string method, std::string path, std::string token, json body) {
    now += kSecond;
    ++guarded_ops;  // login included: every authentication attempt is audited
    return api.handle({std::move(method), std::move(path), {}, std::move(token), {},
                       body.is_null() ? std::string{} : body.dump()},
                      now);
  };

  // Unauthenticated mutations over HTTP.
  const std::string stale = call("POST", "/api/login", {}, {{"username", "D1"}, {"password", "doctor-pass"}}).body["token"];
  now += 9 * kHour;
  const std::vector<std::pair<std::string, json>> mutations{
      {"/api/patients", {{"name", "X Y"}, {"birth_date", "1990-01-01"}, {"sex", "M"}, {"zone_id", "Z1"}}},
      {"/api/encounters", {{"patient_id", "P-001"}}},
      {"/api/prescriptions", {{"patient_id", "P-001"}, {"drug_code", "ALU"}, {"dose", "1"}}},
      {"/api/prescriptions/RX-1/refill-request", json::object()},
      {"/api/prescriptions/RX-1/refill-grant", json::object()},
      {"/api/sync/push", {{"replica_id", "H1"}, {"cursor", 0}, {"events", json::array()}}},
  };
  std::size_t attempts = 0, rejected = 0;
  const auto log_before = central.store.log_size();
  for (const auto& [path, body] : mutations) {
    for (const std::string& token : {std::string{}, std::string("not-a-token"), stale}) {
      ++attempts;
      auto r = call("POST", path, token, body);
      if (r.status == 401 || r.status == 403) ++rejected;
    }
  }
  // Wrong role is a refusal too.
  const std::string pharm = call("POST", "/api/login", {}, {{"username", "R1"}, {"password", "pharm-pass"}}).body["token"];
  for (const auto& path : {"/api/encounters", "/api/prescriptions", "/api/patients"}) {
    ++attempts;
    auto body = std::find_if(mutations.begin(), mutations.end(), [&](auto& m) { return m.first == path; })->second;
    if (auto r = call("POST", path, pharm, body); r.status == 403) ++rejected;
  }

  // Unauthenticated mutations over USSD: unregistered numbers, PIN-less
  // sessions and unknown sessions never reach a write.
  ussd::Gateway gw(central.service);
  auto pdu = [&](std::string sid, std::string msisdn, ussd::PduKind kind, std::string text) {
    now += kSecond;
    return gw.handle_pdu({std::move(sid), std::move(msisdn), kind, std::move(text)}, now);
  };
  ++attempts;
  if (auto r = pdu("u1", "+255799999999", ussd::PduKind::begin, "*384#"); r.kind == ussd::PduKind::end) ++rejected;
  ++attempts;
  if (auto r = pdu("ghost", "+255700000002", ussd::PduKind::cont, "3"); r.kind == ussd::PduKind::end) ++rejected;
  if (central.store.log_size() != log_before) v.fail("an unauthenticated mutation was committed");
  if (rejected != attempts) v.fail(std::to_string(attempts - rejected) + " unauthenticated mutations accepted");

  // Three strikes over USSD locks both channels for fifteen minutes.
  pdu("u2", "+255700000002", ussd::PduKind::begin, "*384#");
  for (int i = 0; i < 3; ++i) {
    ++guarded_ops;
    pdu("u2", "+255700000002", ussd::PduKind::cont, "999" + std::to_string(i));
  }
  ++guarded_ops;
  auto locked = pdu("u2", "+255700000002", ussd::PduKind::cont, "2222");
  if (locked.kind != ussd::PduKind::end || locked.text != "Too many attempts. Try later.") v.fail("USSD lockout missing");
  if (call("POST", "/api/login", {}, {{"username", "N1"}, {"password", "nurse-pass"}}).status != 401) v.fail("web login not locked");
  now += 15 * kMinute;
  if (call("POST", "/api/login", {}, {{"username", "N1"}, {"password", "nurse-pass"}}).status != 200) v.fail("lockout did not lift");

  // A mixed batch of authorized operations.
  const std::string nurse = call("POST", "/api/login", {}, {{"username", "N1"}, {"password", "nurse-pass"}}).body["token"];
  call("GET", "/api/patients/P-001", nurse, nullptr);
  call("GET", "/api/patients/P-001/history", nurse, nullptr);
  call("POST", "/api/encounters", nurse, {{"patient_id", "P-001"}, {"kind", "NOTE"}, {"note", "ok"}});
  call("POST", "/api/prescriptions/RX-1/refill-request", nurse, json::object());
  call("GET", "/api/aggregates", nurse, nullptr);

  const std::size_t audit_delta = central.audit.size() - audit_start;
  if (audit_delta != guarded_ops) {
    v.fail("audit entries " + std::to_string(audit_delta) + " != guarded ops " + std::to_string(guarded_ops));
  }

  // verify-audit on a clean file, then on single-byte tampers.
  const fs::path dir = fs::temp_directory_path() / ("ehr-acceptance-" + std::to_string(::getpid()));
  fs::create_directories(dir);
  const fs::path log = dir / "audit.log";
  std::string clean;
  for (const auto& e : central.audit.entries()) clean += auth::to_line(e) + "\n";
  std::ofstream(log, std::ios::binary | std::ios::trunc) << clean;
  auto verify = [&]() {
    std::istringstream in;
    std::ostringstream out, err;
    int code = cli::execute({"verify-audit", "--file", log.string()}, in, out, err);
    return std::make_pair(code, out.str());
  };
  auto [code, text] = verify();
  if (code != cli::kExitOk || text.rfind("OK ", 0) != 0) v.fail("clean log did not verify: " + text);
  std::mt19937_64 rng(20);
  int located = 0;
  for (int i = 0; i < 20; ++i) {
    std::string bytes = clean;
    const std::size_t pos = rng() % bytes.size();
    bytes[pos] = static_cast<char>(bytes[pos] ^ (1 + rng() % 255));
    std::ofstream(log, std::ios::binary | std::ios::trunc) << bytes;
    auto [c, t] = verify();
    if (c == cli::kExitFailure && t.rfind("BROKEN_AT ", 0) == 0) ++located;
  }
  fs::remove_all(dir);
  if (located != 20) v.fail(std::to_string(located) + "/20 tampers reported");

  if (v.pass) {
    v.detail = std::to_string(rejected) + "/" + std::to_string(attempts) + " refused, " +
               std::to_string(audit_delta) + " audit entries for " + std::to_string(guarded_ops) +
               " guarded ops, 20/20 tampers reported";
  }
  return v;
}

// ---------------------------------------------------------------- suppression

Verdict suppression() {
  Verdict v;
  const Period periods[] = {{2025, 1}, {2025, 2}, {2025, 3}};
  std::size_t rows_checked = 0;
  for (std::uint64_t seed = 1; seed <= 1000 && v.pass; ++seed) {
    testing::RandomStore rs(seed * 7919);
    const auto view = rs.store.view_snapshot();
    const auto population = analytics::zone_populations(view);
    for (std::size_t k : {std::size_t{2}, std::size_t{5}, std::size_t{10}}) {
      const Period& p = periods[seed % 3];
      auto rows = analytics::suppress_small_zones(analytics::build_aggregates(view, p), view, k);
      if (!rows) {
        v.fail("suppression failed: " + rows.error().to_string());
        break;
      }
      if (*rows != rs.expected(p, k)) v.fail("seed " + std::to_string(seed) + " k " + std::to_string(k) + ": oracle mismatch");
      auto doc = analytics::export_anonymized(*rows, view, p, k);
      if (!doc) {
        v.fail("export failed: " + doc.error().to_string());
        break;
      }
      for (const auto& r : (*doc)["rows"]) {
        ++rows_checked;
        const auto zone = r["zone_id"].get<std::string>();
        auto it = population.find(zone);
        if (r["count"].get<std::size_t>() < k || it == population.end() || it->second < k) {
          v.fail("k-violation in zone " + zone);
        }
      }
      const std::string text = doc->dump();
      for (const auto& id : rs.identifiers) {
        if (text.find(id) != std::string::npos) v.fail("identifier " + id + " exported");
      }
    }
  }
  if (v.pass) v.detail = "3000 exports, " + std::to_string(rows_checked) + " rows, no violations";
  return v;
}

// ---------------------------------------------------------------- determinism

Verdict determinism() {
  Verdict v;
  std::mt19937_64 rng(6);
  std::size_t sets = 0, orders = 0;
  for (int round = 0; round < 300 && v.pass; ++round) {
    auto events = testing::random_events(rng, 1 + round % 6);
    std::vector<std::size_t> order(events.size());
    std::iota(order.begin(), order.end(), 0);
    const json expected = testing::oracle_materialize(events);
    ++sets;
    do {
      ++orders;
      core::EntityView once, twice;
      for (std::size_t i : order) once.apply(events[i]);
      for (std::size_t i : order) {
        twice.apply(events[i]);
        twice.apply(events[order[(i * 7 + 3) % order.size()]]);  // interleaved re-application
      }
      for (std::size_t i : order) twice.apply(events[i]);
      if (once.materialize() != expected || twice.materialize() != expected) {
        v.fail("round " + std::to_string(round) + ": order-dependent state");
        break;
      }
    } while (std::next_permutation(order.begin(), order.end()));
  }
  if (v.pass) v.detail = std::to_string(sets) + " event sets, " + std::to_string(orders) + " orders";
  return v;
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    Verdict (*run)();
  };
  const Criterion criteria[] = {
      {"convergence", convergence},         {"h1-h2-transfer", transfer_fixture},
      {"ussd-during-outage", outage_fixture}, {"menu-dfs", menu_walk},
      {"security", security},               {"suppression", suppression},
      {"determinism", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v.fail(std::string("exception: ") + e.what());
    }
    std::cout << (v.pass ? "PASS " : "FAIL ") << c.name << ": " << v.detail << std::endl;
    if (!v.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
