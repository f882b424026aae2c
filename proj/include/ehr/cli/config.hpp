#pragma once

#include <cstddef>
#include <filesystem>
#include <string>

#include <json.hpp>

#include "ehr/common/result.hpp"

namespace ehr::cli {

/// Operator configuration. File form (UTF-8 JSON, all keys optional):
///   {"store_dir", "http_port", "gateway_port", "shortcode",
///    "session_timeout_s", "suppression_k"}
/// The at-rest encryption key is never part of it; it comes from the
/// EHR_STORE_KEY environment variable.
struct Config {
  std::string store_dir = "ehr-store";
  int http_port = 8080;
  int gateway_port = 8384;
  std::string shortcode = "*384#";
  int session_timeout_s = 90;
  std::size_t suppression_k = 5;
};

/// Unknown keys and ill-typed values are INVALID_CONFIG.
Result<Config> config_from_json(const nlohmann::json& doc, Config base = {});
Result<Config> load_config(const std::filesystem::path& path);
Status validate(const Config& c);

}  // namespace ehr::cli
