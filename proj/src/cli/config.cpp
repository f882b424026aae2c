#include "ehr/cli/config.hpp"

#include <fstream>
#include <set>

namespace ehr::cli {

using nlohmann::json;

Result<Config> config_from_json(const json& doc, Config c) {
  if (!doc.is_object()) return make_error(Errc::invalid_config, "config must be a JSON object");
  static const std::set<std::string> keys{"store_dir",    "http_port",         "gateway_port",
                                          "shortcode",    "session_timeout_s", "suppression_k"};
  for (const auto& [k, v] : doc.items()) {
    if (!keys.count(k)) return make_error(Errc::invalid_config, "unknown config key " + k);
  }
  try {
    c.store_dir = doc.value("store_dir", c.store_dir);
    c.http_port = doc.value("http_port", c.http_port);
    c.gateway_port = doc.value("gateway_port", c.gateway_port);
    c.shortcode = doc.value("shortcode", c.shortcode);
    c.session_timeout_s = doc.value("session_timeout_s", c.session_timeout_s);
    if (doc.contains("suppression_k")) {
      const auto& k = doc.at("suppression_k");
      if (!k.is_number_integer() || k.get<long long>() < 1) {
        return make_error(Errc::invalid_config, "suppression_k must be a positive integer");
      }
      c.suppression_k = k.get<std::size_t>();
    }
  } catch (const json::exception& e) {
    return make_error(Errc::invalid_config, e.what());
  }
  if (auto s = validate(c); !s) return s.error();
  return c;
}

Result<Config> load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) return make_error(Errc::io_error, "cannot open config " + path.string());
  json doc = json::parse(in, nullptr, false);
  if (doc.is_discarded()) return make_error(Errc::invalid_config, "config is not valid JSON");
  return config_from_json(doc);
}

Status validate(const Config& c) {
  auto port_ok = [](int p) { return p >= 0 && p <= 65535; };
  if (c.store_dir.empty()) return make_error(Errc::invalid_config, "store_dir must not be empty");
  if (!port_ok(c.http_port) || !port_ok(c.gateway_port)) {
    return make_error(Errc::invalid_config, "ports must be within 0..65535");
  }
  if (c.shortcode.empty()) return make_error(Errc::invalid_config, "shortcode must not be empty");
  if (c.session_timeout_s < 1) return make_error(Errc::invalid_config, "session_timeout_s must be >= 1");
  if (c.suppression_k < 1) return make_error(Errc::invalid_config, "suppression_k must be >= 1");
  return Ok{};
}

}  // namespace ehr::cli
