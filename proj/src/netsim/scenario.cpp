#include "ehr/netsim/scenario.hpp"

#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "ehr/auth/audit.hpp"
#include "ehr/core/mutation_io.hpp"
#include "ehr/sync/change_event.hpp"

namespace ehr::netsim {
namespace {

using nlohmann::json;
using nlohmann::ordered_json;

Error script_error(std::size_t line, std::string detail) {
  return make_error(Errc::validation, "line " + std::to_string(line) + ": " + detail);
}

std::optional<LinkState> parse_state(const json& v) {
  if (v == "UP") return LinkState::up;
  if (v == "DOWN") return LinkState::down;
  return std::nullopt;
}

std::string str(const json& args, const char* key, std::string fallback = {}) {
  auto it = args.find(key);
  return it != args.end() && it->is_string() ? it->get<std::string>() : fallback;
}

bool entity_present(core::EhrStore& store, sync::EntityKind kind, const std::string& id) {
  using sync::EntityKind;
  switch (kind) {
    case EntityKind::zone: return store.find_zone(id).has_value();
    case EntityKind::facility: return store.find_facility(id).has_value();
    case EntityKind::clinician: return store.find_clinician(id).has_value();
    case EntityKind::patient: return store.find_patient(id).has_value();
    case EntityKind::encounter: return store.find_encounter(id).has_value();
    case EntityKind::prescription: return store.find_prescription(id).has_value();
  }
  return false;
}

class Runner {
 public:
  Runner(World& world, ScenarioResult& result) : world_(world), result_(result) {}

  void execute(const ScenarioCommand& c) {
    const json& a = c.args;
    if (c.cmd == "link") {
      auto state = parse_state(a.value("state", json()));
      auto s = state ? world_.set_link(str(a, "link"), *state)
                     : Status(make_error(Errc::validation, "bad state"));
      if (!s) note_error(c, s.error());
    } else if (c.cmd == "power_cut") {
      world_.power_cut(str(a, "facility"), a.value("duration_ms", Millis{0}));
    } else if (c.cmd == "write") {
      auto m = core::mutation_from_json(a.value("mutation", json()));
      if (!m) {
        note_error(c, m.error());
        return;
      }
      (void)world_.write(str(a, "at"), str(a, "actor", "system"), *m);
    } else if (c.cmd == "sync") {
      const std::string fac = str(a, "facility");
      auto r = world_.sync_facility(fac);
      last_sync_[fac] = r ? "OK" : std::string(errc_name(r.code()));
    } else if (c.cmd == "ussd_dial") {
      const std::string session = str(a, "session");
      world_.ussd_send(session, str(a, "msisdn"), ussd::PduKind::begin,
                       str(a, "text", world_.config().gateway.shortcode));
    } else if (c.cmd == "ussd_input" || c.cmd == "ussd_abort") {
      const std::string session = str(a, "session");
      const PhoneSession* phone = world_.phone_session(session);
      if (!phone) {
        note_error(c, make_error(Errc::not_found, "no phone session " + session));
        return;
      }
      world_.ussd_send(session, phone->msisdn,
                       c.cmd == "ussd_input" ? ussd::PduKind::cont : ussd::PduKind::abort,
                       str(a, "text"));
    } else if (c.cmd == "assert") {
      check(c);
    }
  }

 private:
  void note_error(const ScenarioCommand& c, const Error& e) {
    world_.record(ordered_json{{"t", world_.now()}, {"ev", "error"}, {"cmd", c.cmd},
                               {"line", c.line}, {"error", std::string(errc_name(e.code))},
                               {"detail", e.detail}});
  }

  core::EhrStore* store_at(const std::string& at) {
    if (at == "central") return &world_.central();
    auto* r = world_.replica(at);
    return r ? &r->store() : nullptr;
  }

  void check(const ScenarioCommand& c) {
    const json& a = c.args;
    const std::string what = str(a, "check");
    bool passed = false;
    std::string detail;

    auto presence = [&](bool present) {
      const std::string expect = str(a, "expect", "PRESENT");
      const std::string got = present ? "PRESENT" : "MISSING";
      passed = got == expect;
      detail = "expected " + expect + ", got " + got;
    };
    auto session = [&]() -> const PhoneSession* {
      const PhoneSession* p = world_.phone_session(str(a, "session"));
      if (!p) detail = "no such session";
      return p;
    };

    if (what == "history") {
      if (auto* store = store_at(str(a, "at"))) {
        const std::string wanted = str(a, "entity_id");
        bool found = false;
        for (const auto& e : store->history_of(str(a, "patient_id"))) {
          found = found || core::entry_id(e) == wanted;
        }
        presence(found);
      } else {
        detail = "unknown store " + str(a, "at");
      }
    } else if (what == "entity") {
      auto kind = sync::parse_kind(str(a, "kind"));
      auto* store = store_at(str(a, "at"));
      if (kind && store) {
        presence(entity_present(*store, *kind, str(a, "id")));
      } else {
        detail = "unknown kind or store";
      }
    } else if (what == "rx_status") {
      auto* store = store_at(str(a, "at"));
      auto rx = store ? store->find_prescription(str(a, "rx_id")) : std::nullopt;
      const std::string got = rx ? std::string(core::to_string(rx->status)) : "MISSING";
      passed = got == str(a, "expect");
      detail = "expected " + str(a, "expect") + ", got " + got;
    } else if (what == "converged") {
      passed = world_.converged();
      detail = passed ? "all replicas equal central" : "replica views differ from central";
    } else if (what == "last_sync") {
      auto it = last_sync_.find(str(a, "facility"));
      const std::string got = it == last_sync_.end() ? "NONE" : it->second;
      passed = got == str(a, "expect");
      detail = "expected " + str(a, "expect") + ", got " + got;
    } else if (what == "ussd_screen") {
      if (const auto* p = session()) {
        const std::string want = str(a, "contains");
        passed = p->last_text.find(want) != std::string::npos;
        detail = passed ? "screen contains \"" + want + "\"" : "screen was \"" + p->last_text + "\"";
      }
    } else if (what == "ussd_closed") {
      if (const auto* p = session()) {
        const bool want = a.value("expect", true);
        passed = p->closed == want;
        detail = std::string("closed=") + (p->closed ? "true" : "false");
      }
    } else if (what == "ussd_exchanges") {
      if (const auto* p = session()) {
        const auto max = a.value("max", std::size_t{0});
        passed = p->exchanges <= max;
        detail = std::to_string(p->exchanges) + " exchanges, limit " + std::to_string(max);
      }
    } else if (what == "ussd_max_chars") {
      if (const auto* p = session()) {
        const auto max = a.value("max", std::size_t{0});
        passed = p->max_chars <= max;
        detail = "longest screen " + std::to_string(p->max_chars) + " chars, limit " +
                 std::to_string(max);
      }
    } else if (what == "audit_verifies") {
      const auto entries = world_.audit().entries();
      const auto verdict = auth::verify_audit_chain(entries);
      passed = verdict.ok;
      detail = passed ? std::to_string(entries.size()) + " entries verified"
                      : "broken at " + std::to_string(verdict.broken_at);
    } else {
      detail = "unknown check " + what;
    }

    result_.assertions.push_back(AssertionOutcome{world_.now(), c.line, what, passed, detail});
    ordered_json line;
    line["t"] = world_.now();
    line["ev"] = "assert";
    line["check"] = what;
    line["line"] = c.line;
    line["outcome"] = passed ? "PASS" : "FAIL";
    line["detail"] = detail;
    world_.record(std::move(line));
  }

  World& world_;
  ScenarioResult& result_;
  std::map<std::string, std::string> last_sync_;
};

}  // namespace

Result<Scenario> parse_scenario(std::string_view text) {
  Scenario s;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t number = 0;
  bool have_header = false;
  Millis last_at = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) return script_error(number, "not a JSON object");
    if (!have_header) {
      have_header = true;
      try {
        s.name = doc.value("scenario", std::string{});
        s.seed = doc.value("seed", std::uint64_t{0});
        s.horizon_ms = doc.at("horizon_ms").get<Millis>();
      } catch (const json::exception& e) {
        return script_error(number, std::string("bad header: ") + e.what());
      }
      if (s.horizon_ms <= 0) return script_error(number, "horizon_ms must be positive");
      s.header = std::move(doc);
      continue;
    }
    ScenarioCommand c;
    c.line = number;
    if (!doc.contains("at_ms") || !doc["at_ms"].is_number_integer() || !doc.contains("cmd") ||
        !doc["cmd"].is_string()) {
      return script_error(number, "command needs integer at_ms and string cmd");
    }
    c.at_ms = doc["at_ms"].get<Millis>();
    c.cmd = doc["cmd"].get<std::string>();
    static const std::set<std::string> known{"link",      "power_cut",  "write",      "sync",
                                             "ussd_dial", "ussd_input", "ussd_abort", "assert"};
    if (!known.count(c.cmd)) return script_error(number, "unknown command " + c.cmd);
    if (c.at_ms < last_at) return script_error(number, "commands must be sorted by at_ms");
    if (c.at_ms > s.horizon_ms) return script_error(number, "command past the horizon");
    last_at = c.at_ms;
    c.args = std::move(doc);
    s.commands.push_back(std::move(c));
  }
  if (!have_header) return make_error(Errc::validation, "empty scenario");
  return s;
}

Result<Scenario> load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return make_error(Errc::io_error, "cannot open " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_scenario(text.str());
}

std::size_t ScenarioResult::failures() const {
  std::size_t n = 0;
  for (const auto& a : assertions) n += a.passed ? 0 : 1;
  return n;
}

std::string ScenarioResult::trace_text() const {
  std::string out;
  for (const auto& l : trace) {
    out += l;
    out += '\n';
  }
  return out;
}

Status ScenarioResult::verdict() const {
  for (const auto& a : assertions) {
    if (!a.passed) {
      return make_error(Errc::assertion_failed, "at " + std::to_string(a.at_ms) + " ms (line " +
                                                    std::to_string(a.line) + ", " + a.check +
                                                    "): " + a.detail);
    }
  }
  return Ok{};
}

Result<ScenarioResult> run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed) {
  std::unique_ptr<World> world;
  return run_scenario(scenario, seed, world);
}

Result<ScenarioResult> run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed,
                                    std::unique_ptr<World>& world_out) {
  const json& h = scenario.header;
  WorldConfig config;
  ScenarioResult result;
  try {
    config.seed = seed.value_or(scenario.seed);
    config.horizon_ms = scenario.horizon_ms;
    config.default_latency_ms = h.value("latency_ms", Millis{20});
    config.sync_on_link_up = h.value("sync_on_link_up", false);
    config.sync_interval_ms = h.value("sync_interval_ms", Millis{0});
    config.epoch_ms = h.value("epoch_ms", config.epoch_ms);
    if (h.contains("session_timeout_s")) {
      config.gateway.session_timeout = h.at("session_timeout_s").get<Millis>() * kSecond;
    }
    if (h.contains("shortcode")) config.gateway.shortcode = h.at("shortcode").get<std::string>();
  } catch (const json::exception& e) {
    return make_error(Errc::validation, std::string("bad header: ") + e.what());
  }
  result.seed = config.seed;
  world_out = std::make_unique<World>(config);
  World& world = *world_out;

  world.record(ordered_json{{"t", 0}, {"ev", "start"}, {"scenario", scenario.name},
                            {"seed", config.seed}, {"horizon_ms", config.horizon_ms}});
  try {
    for (const auto& f : h.value("facilities", json::array())) world.add_replica(f.get<std::string>());
    for (const auto& l : h.value("links", json::array())) {
      LinkSchedule schedule(l.at("link").get<std::string>(), config.horizon_ms, LinkState::up,
                            l.value("base_latency_ms", config.default_latency_ms),
                            l.value("jitter_seed", std::uint64_t{0}), l.value("jitter_ms", Millis{0}));
      if (l.contains("intervals")) {
        std::vector<Interval> intervals;
        for (const auto& iv : l.at("intervals")) {
          auto state = parse_state(iv.at("state"));
          if (!state) return make_error(Errc::validation, "link state must be UP or DOWN");
          intervals.push_back(Interval{iv.at("from_ms").get<Millis>(), iv.at("to_ms").get<Millis>(), *state});
        }
        if (auto s = schedule.set_intervals(std::move(intervals)); !s) return s.error();
      }
      world.add_link(std::move(schedule));
    }
    for (const auto& item : h.value("setup", json::array())) {
      if (item.contains("mutation")) {
        auto m = core::mutation_from_json(item.at("mutation"));
        if (!m) return make_error(m.code(), "setup: " + m.error().detail);
        auto r = world.write("central", "setup", *m);
        if (!r) return make_error(r.code(), "setup: " + r.error().detail);
      } else if (item.contains("enroll")) {
        auto e = auth::enrollment_from_json(item.at("enroll"));
        if (!e) return e.error();
        if (auto s = world.authenticator().enroll(*e); !s) return s.error();
      } else {
        return make_error(Errc::validation, "setup items need mutation or enroll");
      }
    }
  } catch (const json::exception& e) {
    return make_error(Errc::validation, std::string("bad header: ") + e.what());
  }
  if (auto s = world.provision_replicas(); !s) return s.error();
  world.arm_auto_sync();

  Runner runner(world, result);
  for (const auto& c : scenario.commands) {
    world.schedule(c.at_ms, [&runner, &c](World&) { runner.execute(c); });
  }
  world.advance(config.horizon_ms);

  result.trace = world.trace();
  ordered_json end;
  end["t"] = world.now();
  end["ev"] = "end";
  end["assertions"] = result.assertions.size();
  end["failed"] = result.failures();
  result.trace.push_back(end.dump());
  return result;
}

}  // namespace ehr::netsim
