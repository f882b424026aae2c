#include "ehr/cli/cli.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <random>
#include <thread>

#include <CLI11.hpp>

#include "ehr/analytics/aggregates.hpp"
#include "ehr/auth/audit.hpp"
#include "ehr/auth/authenticator.hpp"
#include "ehr/auth/crypto.hpp"
#include "ehr/cli/config.hpp"
#include "ehr/core/mutation_io.hpp"
#include "ehr/core/persistence.hpp"
#include "ehr/netsim/scenario.hpp"
#include "ehr/service.hpp"
#include "ehr/ussd/gateway.hpp"
#include "ehr/ussd/socket_server.hpp"
#include "ehr/web/api.hpp"
#include "ehr/web/http.hpp"

namespace ehr::cli {
namespace {

using nlohmann::json;

constexpr const char* kSynopsis =
    "usage: ehrctl [--config FILE] [--store DIR] <verb> [options]\n"
    "verbs:\n"
    "  serve                                   run the web API and the USSD gateway\n"
    "  seed [--file FILE]                      load reference and patient data\n"
    "  simulate --scenario FILE [--seed N]     run a network scenario, write its trace\n"
    "  ussd --msisdn M                         terminal USSD session through the gateway\n"
    "  export-aggregates --period P [--k K]    anonymized zone aggregates as JSON\n"
    "  verify-audit [--file FILE]              check the audit hash chain\n";

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

std::uint64_t entropy_seed() {
  std::random_device rd;
  return (std::uint64_t{rd()} << 32) ^ rd();
}

/// Central store, audit trail and credentials opened from a store directory.
struct Backend {
  core::StoreDir dir;
  std::unique_ptr<auth::AuditLog> audit;
  std::unique_ptr<core::PersistentStore> persistent;
  std::unique_ptr<auth::Authenticator> auth;
  std::unique_ptr<Service> service;

  core::EhrStore& store() { return persistent->store(); }

  Status save_credentials() {
    const auto tmp = dir.credentials().string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::trunc);
      if (!out) return make_error(Errc::io_error, "cannot write " + tmp);
      out << auth->export_credentials().dump(2) << '\n';
      if (!out) return make_error(Errc::io_error, "cannot write " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, dir.credentials(), ec);
    if (ec) return make_error(Errc::io_error, ec.message());
    return Ok{};
  }
};

Result<std::unique_ptr<Backend>> open_backend(const Config& config, std::uint64_t seed) {
  auto b = std::make_unique<Backend>();
  b->dir.root = config.store_dir;
  std::error_code ec;
  std::filesystem::create_directories(b->dir.root, ec);
  if (ec) return make_error(Errc::io_error, "cannot create " + config.store_dir + ": " + ec.message());

  auto audit = auth::AuditLog::open(b->dir.audit().string());
  if (!audit) return audit.error();
  b->audit = std::move(*audit);

  std::shared_ptr<auth::LineCipher> cipher = auth::cipher_from_env();
  auto store = core::PersistentStore::open(
      b->dir, core::StoreOptions{"central", derive_seed(seed, "central")}, b->audit.get(), cipher);
  if (!store) return store.error();
  b->persistent = std::move(*store);

  b->auth = std::make_unique<auth::Authenticator>(*b->audit, auth::AuthPolicy{},
                                                  derive_seed(seed, "auth"));
  if (std::filesystem::exists(b->dir.credentials())) {
    std::ifstream in(b->dir.credentials());
    json doc = json::parse(in, nullptr, false);
    if (doc.is_discarded()) return make_error(Errc::io_error, "credentials file is not JSON");
    if (auto s = b->auth->import_credentials(doc); !s) return s.error();
  }
  b->service = std::make_unique<Service>(b->store(), *b->auth, *b->audit);
  return b;
}

int fail(std::ostream& err, const Error& e) {
  err << "error: " << e.to_string() << '\n';
  return kExitFailure;
}

// ---------------------------------------------------------------- verbs

int run_serve(const Config& config, const std::string& host, int duration_s, const std::string& menu,
              std::ostream& out, std::ostream& err) {
  auto backend = open_backend(config, entropy_seed());
  if (!backend) return fail(err, backend.error());
  Backend& b = **backend;

  auto tree = menu.empty() ? Result<ussd::MenuTree>(ussd::MenuTree::shipped())
                           : ussd::MenuTree::from_file(menu);
  if (!tree) return fail(err, tree.error());

  ussd::Gateway gateway(*b.service,
                        ussd::GatewayConfig{config.shortcode, config.session_timeout_s * kSecond},
                        std::move(*tree));
  web::Api api(*b.service, entropy_seed());
  auto clock = [] { return system_now_ms(); };

  web::HttpServer http(api, clock);
  if (auto s = http.listen(host, config.http_port); !s) return fail(err, s.error());
  ussd::GatewayServer gw(gateway, clock);
  if (auto s = gw.listen(host, config.gateway_port); !s) return fail(err, s.error());
  http.start();
  gw.start();
  out << "web api on http://" << host << ":" << http.port() << "/api\n"
      << "ussd gateway on " << host << ":" << gw.port() << " (bridge at /bridge)" << std::endl;

  g_stop = false;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const auto started = std::chrono::steady_clock::now();
  while (!g_stop) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    gateway.expire_sessions(system_now_ms());
    {
      std::lock_guard lock(b.service->mutex());
      (void)b.persistent->checkpoint_if_due();
    }
    if (duration_s > 0 && std::chrono::steady_clock::now() - started >= std::chrono::seconds(duration_s)) {
      break;
    }
  }
  gw.stop();
  http.stop();
  std::lock_guard lock(b.service->mutex());
  if (auto s = b.persistent->checkpoint(); !s) return fail(err, s.error());
  if (auto s = b.save_credentials(); !s) return fail(err, s.error());
  out << "stopped" << std::endl;
  return kExitOk;
}

int run_seed(const Config& config, const std::string& file, std::uint64_t seed, std::ostream& out,
             std::ostream& err) {
  std::ifstream in(file);
  if (!in) return fail(err, make_error(Errc::io_error, "cannot open " + file));
  auto backend = open_backend(config, seed);
  if (!backend) return fail(err, backend.error());
  Backend& b = **backend;

  std::size_t mutations = 0, enrolled = 0, skipped = 0, number = 0;
  std::string line;
  while (std::getline(in, line)) {
    ++number;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json doc = json::parse(line, nullptr, false);
    if (doc.is_discarded() || !doc.is_object()) {
      return fail(err, make_error(Errc::validation, file + ":" + std::to_string(number) + ": not JSON"));
    }
    Status s = Ok{};
    if (doc.contains("mutation")) {
      auto m = core::mutation_from_json(doc["mutation"]);
      if (!m) {
        s = m.error();
      } else if (auto r = b.store().apply("seed", *m, system_now_ms()); !r) {
        s = r.error();
      } else {
        ++mutations;
      }
    } else if (doc.contains("enroll")) {
      auto e = auth::enrollment_from_json(doc["enroll"]);
      if (!e) {
        s = e.error();
      } else if (auto r = b.auth->enroll(*e); !r) {
        s = r.error();
      } else {
        ++enrolled;
      }
    } else {
      s = make_error(Errc::validation, "expected mutation or enroll");
    }
    if (!s) {
      // Re-seeding an existing store is not an error.
      if (s.code() == Errc::duplicate_id) {
        ++skipped;
        continue;
      }
      return fail(err, make_error(s.code(), file + ":" + std::to_string(number) + ": " + s.error().detail));
    }
  }
  if (auto s = b.persistent->checkpoint(); !s) return fail(err, s.error());
  if (auto s = b.save_credentials(); !s) return fail(err, s.error());
  out << "seeded " << mutations << " records, " << enrolled << " credentials";
  if (skipped) out << ", " << skipped << " already present";
  out << '\n';
  return kExitOk;
}

int run_simulate(const std::string& scenario_file, std::optional<std::uint64_t> seed,
                 const std::string& trace_file, std::ostream& out, std::ostream& err) {
  auto scenario = netsim::load_scenario(scenario_file);
  if (!scenario) return fail(err, scenario.error());
  auto result = netsim::run_scenario(*scenario, seed);
  if (!result) return fail(err, result.error());
  const std::string trace = result->trace_text();
  if (trace_file.empty()) {
    out << trace;
  } else {
    std::ofstream f(trace_file, std::ios::binary | std::ios::trunc);
    f << trace;
    if (!f) return fail(err, make_error(Errc::io_error, "cannot write " + trace_file));
  }
  err << "scenario " << scenario->name << " seed " << result->seed << ": "
      << result->assertions.size() << " assertions, " << result->failures() << " failed\n";
  if (auto v = result->verdict(); !v) return fail(err, v.error());
  return kExitOk;
}

int run_ussd(const Config& config, const std::string& msisdn, const std::string& session,
             const std::string& dial, const std::string& connect, const std::string& menu,
             std::istream& in, std::ostream& out, std::ostream& err) {
  const std::string dialed = dial.empty() ? config.shortcode : dial;
  std::function<Result<ussd::UssdPdu>(const ussd::UssdPdu&)> exchange;
  std::unique_ptr<Backend> backend;
  std::unique_ptr<ussd::Gateway> gateway;
  ussd::GatewayClient client;

  if (!connect.empty()) {
    auto colon = connect.rfind(':');
    int port = 0;
    try {
      port = colon == std::string::npos ? config.gateway_port : std::stoi(connect.substr(colon + 1));
    } catch (...) {
      return fail(err, make_error(Errc::validation, "bad --connect " + connect));
    }
    const std::string host = colon == std::string::npos ? connect : connect.substr(0, colon);
    if (auto s = client.connect(host, port); !s) return fail(err, s.error());
    exchange = [&](const ussd::UssdPdu& p) { return client.exchange(p); };
  } else {
    auto b = open_backend(config, entropy_seed());
    if (!b) return fail(err, b.error());
    backend = std::move(*b);
    auto tree = menu.empty() ? Result<ussd::MenuTree>(ussd::MenuTree::shipped())
                             : ussd::MenuTree::from_file(menu);
    if (!tree) return fail(err, tree.error());
    gateway = std::make_unique<ussd::Gateway>(
        *backend->service, ussd::GatewayConfig{config.shortcode, config.session_timeout_s * kSecond},
        std::move(*tree));
    exchange = [&](const ussd::UssdPdu& p) -> Result<ussd::UssdPdu> {
      return gateway->handle_pdu(p, system_now_ms());
    };
  }

  int code = kExitOk;
  ussd::UssdPdu request{session, msisdn, ussd::PduKind::begin, dialed};
  for (;;) {
    auto response = exchange(request);
    if (!response) {
      code = fail(err, response.error());
      break;
    }
    out << response->text << "\n\n" << std::flush;
    if (response->kind == ussd::PduKind::end || response->kind == ussd::PduKind::abort) break;
    std::string line;
    if (!std::getline(in, line)) {
      (void)exchange(ussd::UssdPdu{session, msisdn, ussd::PduKind::abort, ""});
      break;
    }
    if (!line.empty() && line.back() == '\r') line.pop_back();
    request = ussd::UssdPdu{session, msisdn, ussd::PduKind::cont, line};
  }
  if (backend) {
    std::lock_guard lock(backend->service->mutex());
    if (auto s = backend->persistent->checkpoint(); !s) return fail(err, s.error());
    if (auto s = backend->save_credentials(); !s) return fail(err, s.error());
  }
  return code;
}

int run_export(const Config& config, const std::string& period_text, std::size_t k,
               std::ostream& out, std::ostream& err) {
  auto period = parse_period(period_text);
  if (!period) {
    err << "error: --period must be YYYY-MM\n" << kSynopsis;
    return kExitUsage;
  }
  if (k < 1) {
    err << "error: --k must be at least 1\n" << kSynopsis;
    return kExitUsage;
  }
  auto backend = open_backend(config, entropy_seed());
  if (!backend) return fail(err, backend.error());
  Backend& b = **backend;
  const auto view = b.store().view_snapshot();
  auto rows = analytics::suppress_small_zones(analytics::build_aggregates(view, *period), view, k);
  Result<json> doc = rows ? analytics::export_anonymized(*rows, view, *period, k) : Result<json>(rows.error());
  const std::string entity = "aggregates/" + format_period(*period);
  (void)b.audit->append("operator", "aggregates.export", entity, system_now_ms(),
                        doc ? "OK" : errc_name(doc.code()));
  if (!doc) return fail(err, doc.error());
  out << doc->dump(2) << '\n';
  return kExitOk;
}

int run_verify_audit(const Config& config, const std::string& file, std::ostream& out,
                     std::ostream& err) {
  const std::string path = file.empty() ? core::StoreDir{config.store_dir}.audit().string() : file;
  std::ifstream in(path, std::ios::binary);
  if (!in) return fail(err, make_error(Errc::io_error, "cannot open " + path));
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  const auto verdict = auth::verify_audit_lines(lines);
  if (!verdict.ok) {
    out << "BROKEN_AT " << verdict.broken_at << '\n';
    return kExitFailure;
  }
  out << "OK " << lines.size() << " entries\n";
  return kExitOk;
}

}  // namespace

int execute(const std::vector<std::string>& args, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Offline-first EHR operator tool", "ehrctl"};
  app.fallthrough();
  app.require_subcommand(1);

  std::string config_file, store_dir, shortcode, menu;
  std::optional<int> http_port, gateway_port, timeout_s;
  app.add_option("--config", config_file, "config file (JSON)");
  app.add_option("--store", store_dir, "store directory (overrides config)");
  app.add_option("--http-port", http_port, "web API port (overrides config)");
  app.add_option("--gateway-port", gateway_port, "USSD gateway port (overrides config)");
  app.add_option("--shortcode", shortcode, "USSD shortcode (overrides config)");
  app.add_option("--session-timeout", timeout_s, "USSD idle timeout in seconds (overrides config)");
  app.add_option("--menu", menu, "menu tree file (default: shipped tree)");

  auto* serve = app.add_subcommand("serve", "run the web API and the USSD gateway");
  std::string host = "127.0.0.1";
  int duration_s = 0;
  serve->add_option("--host", host, "listen address");
  serve->add_option("--duration", duration_s, "stop after this many seconds (0: until signalled)");

  auto* seed = app.add_subcommand("seed", "load reference and patient data");
  std::string seed_file = "fixtures/seed.jsonl";
  std::uint64_t seed_value = 1;
  seed->add_option("--file", seed_file, "JSON lines of {mutation} and {enroll} records");
  seed->add_option("--seed", seed_value, "id generator seed");

  auto* simulate = app.add_subcommand("simulate", "run a network scenario and write its trace");
  std::string scenario_file, trace_file;
  std::optional<std::uint64_t> sim_seed;
  simulate->add_option("--scenario", scenario_file, "scenario script")->required();
  simulate->add_option("--seed", sim_seed, "seed (overrides the script's)");
  simulate->add_option("--trace", trace_file, "trace output file (default: stdout)");

  auto* ussd_cmd = app.add_subcommand("ussd", "terminal USSD session through the gateway");
  std::string msisdn, session = "cli-session", dial, connect;
  ussd_cmd->add_option("--msisdn", msisdn, "phone number")->required();
  ussd_cmd->add_option("--session", session, "session id");
  ussd_cmd->add_option("--dial", dial, "dialed string (default: the shortcode)");
  ussd_cmd->add_option("--connect", connect, "HOST:PORT of a running gateway (default: in-process)");

  auto* exp = app.add_subcommand("export-aggregates", "anonymized zone aggregates as JSON");
  std::string period;
  std::optional<long long> k;
  exp->add_option("--period", period, "YYYY-MM")->required();
  exp->add_option("--k", k, "suppression threshold (overrides config)");

  auto* verify = app.add_subcommand("verify-audit", "check the audit hash chain");
  std::string audit_file;
  verify->add_option("--file", audit_file, "audit log (default: <store>/audit.log)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help() << '\n' << kSynopsis;
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n' << kSynopsis;
    return kExitUsage;
  }

  Config config;
  if (!config_file.empty()) {
    auto loaded = load_config(config_file);
    if (!loaded) {
      err << "error: " << loaded.error().to_string() << '\n' << kSynopsis;
      return kExitUsage;
    }
    config = *loaded;
  }
  if (!store_dir.empty()) config.store_dir = store_dir;
  if (http_port) config.http_port = *http_port;
  if (gateway_port) config.gateway_port = *gateway_port;
  if (!shortcode.empty()) config.shortcode = shortcode;
  if (timeout_s) config.session_timeout_s = *timeout_s;
  if (k) {
    if (*k < 1) {
      err << "error: --k must be at least 1\n" << kSynopsis;
      return kExitUsage;
    }
    config.suppression_k = static_cast<std::size_t>(*k);
  }
  if (auto s = validate(config); !s) {
    err << "error: " << s.error().to_string() << '\n' << kSynopsis;
    return kExitUsage;
  }

  try {
    if (*serve) return run_serve(config, host, duration_s, menu, out, err);
    if (*seed) return run_seed(config, seed_file, seed_value, out, err);
    if (*simulate) return run_simulate(scenario_file, sim_seed, trace_file, out, err);
    if (*ussd_cmd) return run_ussd(config, msisdn, session, dial, connect, menu, in, out, err);
    if (*exp) return run_export(config, period, config.suppression_k, out, err);
    if (*verify) return run_verify_audit(config, audit_file, out, err);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  err << kSynopsis;
  return kExitUsage;
}

}  // namespace ehr::cli
