#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>

#include "palp/assessment.hpp"

namespace palp {

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;

  std::string to_string() const { return host + ":" + std::to_string(port); }
  friend bool operator==(const Endpoint&, const Endpoint&) = default;
};

// "host:port" or ":port". Throws Error(InvalidConfig).
Endpoint parse_endpoint(const std::string& text);

struct ListenConfig {
  Endpoint http{"127.0.0.1", 8080};
  Endpoint websocket{"127.0.0.1", 8081};
  Endpoint ingest{"127.0.0.1", 8082};

  friend bool operator==(const ListenConfig&, const ListenConfig&) = default;
};

struct EngineConfig {
  AssessmentConfig assessment;  // segmentation, penalty slope, OSCE cut points
  std::string reference_model_path;
  std::string calibration_path;
  std::string record_dir;        // empty: recordings kept in memory only
  ListenConfig listen;

  void validate() const;
};

// Parses the JSON config document; keys absent from it keep their defaults
// and unknown keys are rejected. Throws Error(InvalidConfig).
EngineConfig engine_config_from_json(const std::string& text, EngineConfig base = {});
EngineConfig load_engine_config(const std::filesystem::path& path);
std::string engine_config_to_json(const EngineConfig& cfg);

// PALP_HTTP_ADDR, PALP_WS_ADDR and PALP_INGEST_ADDR override the listen
// addresses. The lookup is injectable for tests.
using EnvLookup = std::function<std::optional<std::string>(const char*)>;
void apply_env_overrides(EngineConfig& cfg, const EnvLookup& lookup);
std::optional<std::string> process_env(const char* name);

}  // namespace palp
