#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "ehr/common/result.hpp"
#include "ehr/netsim/world.hpp"

namespace ehr::netsim {

struct ScenarioCommand {
  Millis at_ms = 0;
  std::string cmd;
  nlohmann::json args;
  std::size_t line = 0;  // 1-based source line
};

/// A scenario script: JSON lines. The first line is the header
///   {"scenario", "seed", "horizon_ms", "latency_ms"?, "sync_on_link_up"?,
///    "sync_interval_ms"?, "epoch_ms"?, "session_timeout_s"?, "facilities": [...],
///    "links": [{"link", "base_latency_ms"?, "jitter_ms"?, "jitter_seed"?,
///               "intervals": [{"from_ms", "to_ms", "state"}]}],
///    "setup": [{"mutation": {...}} | {"enroll": {...}}]}
/// and every further line is {"at_ms", "cmd", ...} with at_ms
/// non-decreasing. Commands: link, power_cut, write, sync, ussd_dial,
/// ussd_input, ussd_abort, assert.
struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  Millis horizon_ms = 0;
  nlohmann::json header;
  std::vector<ScenarioCommand> commands;
};

Result<Scenario> parse_scenario(std::string_view text);
Result<Scenario> load_scenario(const std::filesystem::path& path);

struct AssertionOutcome {
  Millis at_ms = 0;
  std::size_t line = 0;
  std::string check;
  bool passed = false;
  std::string detail;
};

struct ScenarioResult {
  std::uint64_t seed = 0;
  std::vector<std::string> trace;
  std::vector<AssertionOutcome> assertions;

  std::size_t failures() const;
  std::string trace_text() const;
  /// ASSERTION_FAILED naming the first failed assertion, if any.
  Status verdict() const;
};

/// Runs the script in a fresh world. `seed` overrides the header seed.
/// Failed assertions are reported in the result, not as an error; errors
/// are reserved for scripts that cannot be set up.
Result<ScenarioResult> run_scenario(const Scenario& scenario,
                                    std::optional<std::uint64_t> seed = std::nullopt);

/// Same, keeping the world for inspection after the run.
Result<ScenarioResult> run_scenario(const Scenario& scenario, std::optional<std::uint64_t> seed,
                                    std::unique_ptr<World>& world_out);

}  // namespace ehr::netsim
