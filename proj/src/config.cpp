#include "palp/config.hpp"

#include <cstdlib>
#include <set>

#include <json.hpp>

#include "palp/error.hpp"
#include "palp/io.hpp"
#include "palp/report.hpp"

namespace palp {

using nlohmann::json;

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, _] : obj.items()) {
    if (known.count(key) == 0) {
      throw Error(ErrorCode::InvalidConfig, "unknown key '" + key + "' in " + where);
    }
  }
}

}  // namespace

Endpoint parse_endpoint(const std::string& text) {
  const auto colon = text.rfind(':');
  if (colon == std::string::npos) {
    throw Error(ErrorCode::InvalidConfig, "address '" + text + "' must be host:port");
  }
  Endpoint e;
  if (colon > 0) e.host = text.substr(0, colon);
  const std::string port = text.substr(colon + 1);
  char* end = nullptr;
  const long v = std::strtol(port.c_str(), &end, 10);
  if (port.empty() || *end != '\0' || v < 0 || v > 65535) {
    throw Error(ErrorCode::InvalidConfig, "bad port in address '" + text + "'");
  }
  e.port = static_cast<std::uint16_t>(v);
  return e;
}

void EngineConfig::validate() const { assessment.validate(); }

EngineConfig engine_config_from_json(const std::string& text, EngineConfig cfg) {
  try {
    const json doc = json::parse(text);
    if (!doc.is_object()) throw Error(ErrorCode::InvalidConfig, "config must be a JSON object");
    reject_unknown(doc,
                   {"segmentation", "assessment", "quartet_bound", "reference_model",
                    "calibration", "record_dir", "listen"},
                   "config");
    if (doc.contains("segmentation")) {
      reject_unknown(doc["segmentation"],
                     {"onset_threshold", "release_threshold", "min_press_ms", "min_gap_ms",
                      "median_window", "quartet_bound"},
                     "segmentation");
      from_json(doc["segmentation"], cfg.assessment.segmentation);
    }
    if (doc.contains("quartet_bound")) {
      cfg.assessment.segmentation.quartet_bound = doc["quartet_bound"].get<double>();
    }
    if (doc.contains("assessment")) {
      const json& a = doc["assessment"];
      reject_unknown(a, {"penalty_slope", "osce"}, "assessment");
      cfg.assessment.penalty_slope = a.value("penalty_slope", cfg.assessment.penalty_slope);
      if (a.contains("osce")) {
        reject_unknown(a["osce"], {"borderline", "pass", "good", "excellent"}, "assessment.osce");
        from_json(a["osce"], cfg.assessment.osce);
      }
    }
    cfg.reference_model_path = doc.value("reference_model", cfg.reference_model_path);
    cfg.calibration_path = doc.value("calibration", cfg.calibration_path);
    cfg.record_dir = doc.value("record_dir", cfg.record_dir);
    if (doc.contains("listen")) {
      const json& l = doc["listen"];
      reject_unknown(l, {"http", "websocket", "ingest"}, "listen");
      if (l.contains("http")) cfg.listen.http = parse_endpoint(l["http"].get<std::string>());
      if (l.contains("websocket")) {
        cfg.listen.websocket = parse_endpoint(l["websocket"].get<std::string>());
      }
      if (l.contains("ingest")) cfg.listen.ingest = parse_endpoint(l["ingest"].get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

EngineConfig load_engine_config(const std::filesystem::path& path) {
  return engine_config_from_json(read_text_file(path));
}

std::string engine_config_to_json(const EngineConfig& cfg) {
  json doc;
  doc["segmentation"] = cfg.assessment.segmentation;
  doc["assessment"] = {{"penalty_slope", cfg.assessment.penalty_slope},
                       {"osce", cfg.assessment.osce}};
  doc["reference_model"] = cfg.reference_model_path;
  doc["calibration"] = cfg.calibration_path;
  doc["record_dir"] = cfg.record_dir;
  doc["listen"] = {{"http", cfg.listen.http.to_string()},
                   {"websocket", cfg.listen.websocket.to_string()},
                   {"ingest", cfg.listen.ingest.to_string()}};
  return doc.dump(2);
}

void apply_env_overrides(EngineConfig& cfg, const EnvLookup& lookup) {
  if (auto v = lookup("PALP_HTTP_ADDR")) cfg.listen.http = parse_endpoint(*v);
  if (auto v = lookup("PALP_WS_ADDR")) cfg.listen.websocket = parse_endpoint(*v);
  if (auto v = lookup("PALP_INGEST_ADDR")) cfg.listen.ingest = parse_endpoint(*v);
}

std::optional<std::string> process_env(const char* name) {
  if (const char* v = std::getenv(name)) return std::string(v);
  return std::nullopt;
}

}  // namespace palp
