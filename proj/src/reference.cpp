#include "palp/reference.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <json.hpp>

#include "palp/error.hpp"
#include "palp/io.hpp"

namespace palp {

using nlohmann::json;

namespace {

// Incremental mean over sorted values: independent of input order, and exact
// when every value is identical.
std::optional<double> stable_mean(std::vector<double> values) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  double mean = 0.0;
  std::size_t k = 0;
  for (double v : values) {
    ++k;
    mean += (v - mean) / static_cast<double>(k);
  }
  return mean;
}

double interpolate(double raw, std::span<const CalibrationKnot> knots) {
  // validate() guarantees at least two knots.
  std::size_t hi = 1;
  while (hi + 1 < knots.size() && raw > knots[hi].arb) ++hi;
  const CalibrationKnot& a = knots[hi - 1];
  const CalibrationKnot& b = knots[hi];
  const double slope = (b.newtons - a.newtons) / (b.arb - a.arb);
  return a.newtons + (raw - a.arb) * slope;
}

json opt_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

std::optional<double> opt_from(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return std::nullopt;
  return j[key].get<double>();
}

json knots_json(const std::vector<CalibrationKnot>& knots) {
  json arr = json::array();
  for (const auto& k : knots) arr.push_back({k.arb, k.newtons});
  return arr;
}

std::vector<CalibrationKnot> knots_from(const json& arr) {
  if (!arr.is_array()) throw Error(ErrorCode::InvalidCalibration, "knot list must be an array");
  std::vector<CalibrationKnot> knots;
  for (const auto& k : arr) {
    if (!k.is_array() || k.size() != 2) {
      throw Error(ErrorCode::InvalidCalibration, "knot must be [arb, newtons]");
    }
    knots.push_back({k[0].get<double>(), k[1].get<double>()});
  }
  return knots;
}

}  // namespace

void CalibrationTable::validate(std::span<const CalibrationKnot> knots) {
  if (knots.size() < 2) {
    throw Error(ErrorCode::InvalidCalibration, "calibration needs at least two knots");
  }
  if (knots.front().arb != 0.0 || knots.front().newtons != 0.0) {
    throw Error(ErrorCode::InvalidCalibration, "calibration must start at (0, 0)");
  }
  for (std::size_t i = 1; i < knots.size(); ++i) {
    if (!(knots[i].arb > knots[i - 1].arb)) {
      throw Error(ErrorCode::InvalidCalibration, "knots must be strictly increasing in arb");
    }
    if (!(knots[i].newtons >= knots[i - 1].newtons) || !std::isfinite(knots[i].newtons)) {
      throw Error(ErrorCode::InvalidCalibration, "calibration must be monotone nondecreasing");
    }
  }
}

void CalibrationTable::set(SensorId sensor, std::vector<CalibrationKnot> knots) {
  validate(knots);
  per_sensor_[sensor] = std::move(knots);
}

void CalibrationTable::set_fallback(std::vector<CalibrationKnot> knots) {
  validate(knots);
  fallback_ = std::move(knots);
}

bool CalibrationTable::has(SensorId sensor) const {
  return fallback_.has_value() || per_sensor_.count(sensor) != 0;
}

const std::vector<CalibrationKnot>& CalibrationTable::knots(SensorId sensor) const {
  if (auto it = per_sensor_.find(sensor); it != per_sensor_.end()) return it->second;
  if (fallback_) return *fallback_;
  throw Error(ErrorCode::NoTableForSensor,
              "no calibration for sensor " + std::string(to_string(sensor)));
}

double calibrate(double raw, const CalibrationTable& table, SensorId sensor) {
  return interpolate(raw, table.knots(sensor));
}

std::uint32_t ReferenceModel::session_count() const {
  std::uint32_t n = 0;
  for (const auto& t : tasks) n += t.session_count;
  return n;
}

ReferenceModel build_reference(std::span<const SegmentedTask> expert_tasks,
                               const ReferenceConfig& cfg,
                               const CalibrationTable* calibration) {
  ReferenceModel model;
  model.calibrated = calibration != nullptr;

  for (TaskKind task : kAllTasks) {
    TaskReference& ref = model.tasks[static_cast<std::size_t>(task)];
    ref.task = task;
    PerSensor<std::vector<double>> peak_means;
    PerSensor<std::vector<double>> engaged_means;
    PerSensor<std::vector<double>> newton_means;
    ref.min_press_count = std::numeric_limits<std::uint32_t>::max();

    for (const SegmentedTask& st : expert_tasks) {
      if (st.info.task != task) continue;
      ++ref.session_count;
      const auto count = static_cast<std::uint32_t>(st.events.size());
      ref.min_press_count = std::min(ref.min_press_count, count);
      ref.max_press_count = std::max(ref.max_press_count, count);

      PerSensor<std::vector<double>> peaks;
      PerSensor<std::vector<double>> levels;
      PerSensor<std::vector<double>> newtons;
      for (const PressEvent& e : st.events) {
        ref.max_peak_arb = std::max(ref.max_peak_arb, e.peak_raw);
        peaks[e.sensor].push_back(e.peak_raw);
        levels[e.sensor].push_back(e.mean_raw());
        if (calibration != nullptr && calibration->has(e.sensor)) {
          newtons[e.sensor].push_back(calibrate(e.peak_raw, *calibration, e.sensor));
        }
      }
      for (SensorId id : kAllSensors) {
        if (auto m = stable_mean(peaks[id])) peak_means[id].push_back(*m);
        if (auto m = stable_mean(levels[id])) engaged_means[id].push_back(*m);
        if (auto m = stable_mean(newtons[id])) newton_means[id].push_back(*m);
      }

      ContributingSession cs;
      cs.session_id = st.info.session_id;
      cs.participant_id = st.info.participant_id;
      cs.task = task;
      cs.press_count = count;
      if (auto it = cfg.expertise.find(st.info.participant_id); it != cfg.expertise.end()) {
        cs.expertise = it->second;
      }
      model.sessions.push_back(std::move(cs));
    }

    if (ref.session_count == 0) {
      throw Error(ErrorCode::NoExpertData,
                  "no expert session for task " + std::string(to_string(task)));
    }
    for (SensorId id : kAllSensors) {
      ref.sensors[id].mean_peak_arb = stable_mean(peak_means[id]);
      ref.sensors[id].mean_engaged_arb = stable_mean(engaged_means[id]);
      ref.sensors[id].mean_peak_newtons = stable_mean(newton_means[id]);
    }
  }

  std::sort(model.sessions.begin(), model.sessions.end(),
            [](const ContributingSession& a, const ContributingSession& b) {
              if (a.task != b.task) return a.task < b.task;
              if (a.session_id != b.session_id) return a.session_id < b.session_id;
              return a.participant_id < b.participant_id;
            });

  const double deep_max = model.task(TaskKind::Deep).max_peak_arb;
  model.observed_bound_arb = std::ceil(deep_max / 50.0) * 50.0;
  if (cfg.quartet_bound_override) {
    model.quartet_bound = *cfg.quartet_bound_override;
  } else if (model.observed_bound_arb > 0.0) {
    model.quartet_bound = std::min(model.observed_bound_arb, kDefaultQuartetBound);
  }
  if (cfg.safe_threshold_override) model.safe_threshold_newtons = *cfg.safe_threshold_override;
  if (!(model.quartet_bound > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "quartet bound must be positive");
  }
  if (!(model.safe_threshold_newtons <= model.deep_index_mean_newtons)) {
    throw Error(ErrorCode::InvalidConfig,
                "safe threshold must not exceed the deep-palpation mean force");
  }
  return model;
}

ReferenceModel build_reference(std::span<const Session> expert_sessions,
                               const SegmentationConfig& seg, const ReferenceConfig& cfg,
                               const CalibrationTable* calibration) {
  std::vector<SegmentedTask> tasks;
  tasks.reserve(expert_sessions.size());
  for (const Session& s : expert_sessions) tasks.push_back(segment_task(s, seg));
  return build_reference(tasks, cfg, calibration);
}

ExceededFlag safe_threshold_check(double peak_newtons, double threshold_newtons) {
  return ExceededFlag{peak_newtons > threshold_newtons, peak_newtons, threshold_newtons};
}

ExceededFlag safe_threshold_check(double peak_newtons, const ReferenceModel& model) {
  return safe_threshold_check(peak_newtons, model.safe_threshold_newtons);
}

std::string reference_to_json(const ReferenceModel& model) {
  json doc = json::object();
  doc["format"] = "palp-reference";
  doc["version"] = kReferenceSchemaVersion;
  doc["observed_bound_arb"] = model.observed_bound_arb;
  doc["quartet_bound"] = model.quartet_bound;
  doc["safe_threshold_newtons"] = model.safe_threshold_newtons;
  doc["superficial_index_mean_newtons"] = model.superficial_index_mean_newtons;
  doc["deep_index_mean_newtons"] = model.deep_index_mean_newtons;
  doc["report_basis"] = model.report_basis;
  doc["calibrated"] = model.calibrated;
  json tasks = json::object();
  for (const auto& t : model.tasks) {
    json jt = json::object();
    jt["session_count"] = t.session_count;
    jt["min_press_count"] = t.min_press_count;
    jt["max_press_count"] = t.max_press_count;
    jt["max_peak_arb"] = t.max_peak_arb;
    json sensors = json::object();
    for (SensorId id : kAllSensors) {
      const auto& s = t.sensors[id];
      sensors[std::string(to_string(id))] = {
          {"mean_peak_arb", opt_json(s.mean_peak_arb)},
          {"mean_engaged_arb", opt_json(s.mean_engaged_arb)},
          {"mean_peak_newtons", opt_json(s.mean_peak_newtons)},
      };
    }
    jt["sensors"] = std::move(sensors);
    tasks[std::string(to_string(t.task))] = std::move(jt);
  }
  doc["tasks"] = std::move(tasks);
  json sessions = json::array();
  for (const auto& s : model.sessions) {
    sessions.push_back({{"session_id", s.session_id},
                        {"participant_id", s.participant_id},
                        {"task", to_string(s.task)},
                        {"expertise", s.expertise},
                        {"press_count", s.press_count}});
  }
  doc["sessions"] = std::move(sessions);
  return doc.dump(2);
}

ReferenceModel reference_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "palp-reference") {
      throw Error(ErrorCode::ParseError, "not a palp reference model");
    }
    if (doc.value("version", 0) != kReferenceSchemaVersion) {
      throw Error(ErrorCode::SchemaVersionMismatch, "unsupported reference model version");
    }
    ReferenceModel m;
    m.observed_bound_arb = doc.at("observed_bound_arb").get<double>();
    m.quartet_bound = doc.at("quartet_bound").get<double>();
    m.safe_threshold_newtons = doc.at("safe_threshold_newtons").get<double>();
    m.superficial_index_mean_newtons = doc.at("superficial_index_mean_newtons").get<double>();
    m.deep_index_mean_newtons = doc.at("deep_index_mean_newtons").get<double>();
    m.report_basis = doc.at("report_basis").get<std::string>();
    m.calibrated = doc.at("calibrated").get<bool>();
    for (TaskKind task : kAllTasks) {
      const json& jt = doc.at("tasks").at(std::string(to_string(task)));
      TaskReference& t = m.tasks[static_cast<std::size_t>(task)];
      t.task = task;
      t.session_count = jt.at("session_count").get<std::uint32_t>();
      t.min_press_count = jt.at("min_press_count").get<std::uint32_t>();
      t.max_press_count = jt.at("max_press_count").get<std::uint32_t>();
      t.max_peak_arb = jt.at("max_peak_arb").get<std::uint16_t>();
      for (SensorId id : kAllSensors) {
        const json& js = jt.at("sensors").at(std::string(to_string(id)));
        t.sensors[id].mean_peak_arb = opt_from(js, "mean_peak_arb");
        t.sensors[id].mean_engaged_arb = opt_from(js, "mean_engaged_arb");
        t.sensors[id].mean_peak_newtons = opt_from(js, "mean_peak_newtons");
      }
    }
    for (const json& js : doc.at("sessions")) {
      ContributingSession s;
      s.session_id = js.at("session_id").get<std::string>();
      s.participant_id = js.at("participant_id").get<std::string>();
      const auto task = task_from_string(js.at("task").get<std::string>());
      if (!task) throw Error(ErrorCode::ParseError, "unknown task in reference sessions");
      s.task = *task;
      s.expertise = js.at("expertise").get<std::string>();
      s.press_count = js.at("press_count").get<std::uint32_t>();
      m.sessions.push_back(std::move(s));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("reference model: ") + e.what());
  }
}

void save_reference(const std::filesystem::path& path, const ReferenceModel& model) {
  write_text_file(path, reference_to_json(model) + "\n");
}

ReferenceModel load_reference(const std::filesystem::path& path) {
  return reference_from_json(read_text_file(path));
}

std::string calibration_to_json(const CalibrationTable& table) {
  json doc = json::object();
  doc["format"] = "palp-calibration";
  doc["version"] = 1;
  json sensors = json::object();
  for (const auto& [id, knots] : table.per_sensor()) {
    sensors[std::string(to_string(id))] = knots_json(knots);
  }
  doc["sensors"] = std::move(sensors);
  if (table.fallback()) doc["default"] = knots_json(*table.fallback());
  return doc.dump(2);
}

CalibrationTable calibration_from_json(const std::string& text) {
  try {
    const json doc = json::parse(text);
    if (doc.value("format", "") != "palp-calibration") {
      throw Error(ErrorCode::ParseError, "not a palp calibration file");
    }
    if (doc.value("version", 0) != 1) {
      throw Error(ErrorCode::SchemaVersionMismatch, "unsupported calibration version");
    }
    CalibrationTable table;
    if (doc.contains("sensors")) {
      for (const auto& [name, knots] : doc["sensors"].items()) {
        const auto id = sensor_from_string(name);
        if (!id) throw Error(ErrorCode::InvalidCalibration, "unknown sensor " + name);
        table.set(*id, knots_from(knots));
      }
    }
    if (doc.contains("default")) table.set_fallback(knots_from(doc["default"]));
    return table;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("calibration: ") + e.what());
  }
}

CalibrationTable load_calibration(const std::filesystem::path& path) {
  return calibration_from_json(read_text_file(path));
}

}  // namespace palp
