#include "palp/report.hpp"

#include <cstdio>
#include <sstream>

#include "palp/error.hpp"

namespace palp {

using nlohmann::json;

namespace {

template <typename E, typename Parse>
E enum_from(const json& j, Parse parse, const char* what) {
  const auto v = parse(j.get<std::string>());
  if (!v) throw Error(ErrorCode::ParseError, std::string("unknown ") + what + " " + j.dump());
  return *v;
}

SensorId sensor_from(const json& j) {
  return enum_from<SensorId>(j, sensor_from_string, "sensor");
}

std::optional<Criterion> criterion_from_string(std::string_view s) {
  for (auto c : {Criterion::WrongUse, Criterion::CorrectUse, Criterion::ForceTransition}) {
    if (to_string(c) == s) return c;
  }
  return std::nullopt;
}

template <typename T>
json per_sensor_json(const PerSensor<T>& values) {
  json o = json::object();
  for (SensorId id : kAllSensors) o[std::string(to_string(id))] = values[id];
  return o;
}

template <typename T>
PerSensor<T> per_sensor_from(const json& o) {
  PerSensor<T> values;
  for (SensorId id : kAllSensors) values[id] = o.at(std::string(to_string(id))).get<T>();
  return values;
}

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

void to_json(json& j, const SegmentationConfig& cfg) {
  j = json{{"onset_threshold", cfg.onset_threshold},
           {"release_threshold", cfg.release_threshold},
           {"min_press_ms", cfg.min_press_ms},
           {"min_gap_ms", cfg.min_gap_ms},
           {"median_window", cfg.median_window},
           {"quartet_bound", cfg.quartet_bound}};
}

void from_json(const json& j, SegmentationConfig& cfg) {
  cfg.onset_threshold = j.value("onset_threshold", cfg.onset_threshold);
  cfg.release_threshold = j.value("release_threshold", cfg.release_threshold);
  cfg.min_press_ms = j.value("min_press_ms", cfg.min_press_ms);
  cfg.min_gap_ms = j.value("min_gap_ms", cfg.min_gap_ms);
  cfg.median_window = j.value("median_window", cfg.median_window);
  cfg.quartet_bound = j.value("quartet_bound", cfg.quartet_bound);
}

void to_json(json& j, const PressEvent& e) {
  j = json{{"sensor", to_string(e.sensor)},
           {"onset_ms", e.onset_ms},
           {"release_ms", e.release_ms},
           {"duration_ms", e.duration_ms},
           {"peak_raw", e.peak_raw},
           {"peak_quartet", to_string(e.peak_quartet)},
           {"samples", e.samples},
           {"raw_sum", e.raw_sum}};
}

void from_json(const json& j, PressEvent& e) {
  e.sensor = sensor_from(j.at("sensor"));
  e.onset_ms = j.at("onset_ms").get<std::uint32_t>();
  e.release_ms = j.at("release_ms").get<std::uint32_t>();
  e.duration_ms = j.at("duration_ms").get<std::uint32_t>();
  e.peak_raw = j.at("peak_raw").get<std::uint16_t>();
  e.peak_quartet = enum_from<ForceQuartet>(j.at("peak_quartet"), quartet_from_string, "quartet");
  e.samples = j.at("samples").get<std::uint32_t>();
  e.raw_sum = j.at("raw_sum").get<std::uint64_t>();
}

void to_json(json& j, const OsceThresholds& t) {
  j = json{{"borderline", t.borderline}, {"pass", t.pass}, {"good", t.good},
           {"excellent", t.excellent}};
}

void from_json(const json& j, OsceThresholds& t) {
  t.borderline = j.value("borderline", t.borderline);
  t.pass = j.value("pass", t.pass);
  t.good = j.value("good", t.good);
  t.excellent = j.value("excellent", t.excellent);
}

void to_json(json& j, const SessionInfo& info) {
  j = json{{"session_id", info.session_id},
           {"participant_id", info.participant_id},
           {"cohort", to_string(info.cohort)},
           {"task", to_string(info.task)},
           {"patient_ref", info.patient_ref},
           {"sample_rate_hz", info.sample_rate_hz}};
}

void from_json(const json& j, SessionInfo& info) {
  info.session_id = j.at("session_id").get<std::string>();
  info.participant_id = j.value("participant_id", std::string());
  info.cohort = enum_from<Cohort>(j.value("cohort", json("CT")), cohort_from_string, "cohort");
  info.task = enum_from<TaskKind>(j.at("task"), task_from_string, "task");
  info.patient_ref = j.value("patient_ref", std::string());
  info.sample_rate_hz = j.value("sample_rate_hz", 50.0);
}

void to_json(json& j, const CompetencyReport& r) {
  json tasks = json::array();
  for (const TaskAssessment& ta : r.tasks) {
    json scores = json::array();
    for (const CriterionScore& s : ta.scores) {
      json js{{"criterion", to_string(s.criterion)}, {"points", s.points}};
      js["violation"] = s.violation ? json{{"magnitude", s.violation->magnitude},
                                           {"description", s.violation->description}}
                                    : json(nullptr);
      scores.push_back(std::move(js));
    }
    json flagged = json::array();
    for (const auto& a : ta.over_threshold) {
      flagged.push_back({{"sensor", to_string(a.sensor)},
                         {"onset_ms", a.onset_ms},
                         {"peak_newtons", a.peak_newtons}});
    }
    tasks.push_back({{"task", to_string(ta.info.task)},
                     {"session", ta.info},
                     {"frame_count", ta.frame_count},
                     {"pc_total", ta.contributions.total},
                     {"press_counts", per_sensor_json(ta.press_counts)},
                     {"contributions", per_sensor_json(ta.contributions.percent)},
                     {"events", ta.events},
                     {"scores", std::move(scores)},
                     {"over_threshold", std::move(flagged)}});
  }
  const Provenance& p = r.provenance;
  j = json{{"format", "palp-report"},
           {"version", kReportSchemaVersion},
           {"participant_id", r.participant_id},
           {"tasks", std::move(tasks)},
           {"criteria",
            {{"wrong_use", r.wrong_use},
             {"correct_use", r.correct_use},
             {"force_transition", r.force_transition}}},
           {"total", r.total},
           {"osce", to_string(r.osce)},
           {"provenance",
            {{"engine_version", p.engine_version},
             {"segmentation", p.segmentation},
             {"penalty_slope", p.penalty_slope},
             {"osce_thresholds", p.osce_thresholds},
             {"codec_errors", p.codec_errors},
             {"calibrated", p.calibrated},
             {"safe_threshold_newtons", p.safe_threshold_newtons}}}};
}

void from_json(const json& j, CompetencyReport& r) {
  if (j.value("format", "") != "palp-report") {
    throw Error(ErrorCode::ParseError, "not a palp report");
  }
  if (j.value("version", 0) != kReportSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                "report version " + j.value("version", json(nullptr)).dump() +
                    " is not supported");
  }
  r = CompetencyReport{};
  r.participant_id = j.at("participant_id").get<std::string>();
  for (const json& jt : j.at("tasks")) {
    TaskAssessment ta;
    ta.info = jt.at("session").get<SessionInfo>();
    ta.frame_count = jt.at("frame_count").get<std::size_t>();
    ta.contributions.total = jt.at("pc_total").get<std::uint32_t>();
    ta.press_counts = per_sensor_from<std::uint32_t>(jt.at("press_counts"));
    ta.contributions.percent = per_sensor_from<double>(jt.at("contributions"));
    ta.events = jt.at("events").get<std::vector<PressEvent>>();
    for (const json& js : jt.at("scores")) {
      CriterionScore s;
      s.criterion = enum_from<Criterion>(js.at("criterion"), criterion_from_string, "criterion");
      s.task = ta.info.task;
      s.points = js.at("points").get<double>();
      if (!js.at("violation").is_null()) {
        s.violation = Violation{js["violation"].at("magnitude").get<double>(),
                                js["violation"].at("description").get<std::string>()};
      }
      ta.scores.push_back(std::move(s));
    }
    for (const json& ja : jt.at("over_threshold")) {
      ta.over_threshold.push_back({sensor_from(ja.at("sensor")),
                                   ja.at("onset_ms").get<std::uint32_t>(),
                                   ja.at("peak_newtons").get<double>()});
    }
    r.tasks.push_back(std::move(ta));
  }
  const json& c = j.at("criteria");
  r.wrong_use = c.at("wrong_use").get<double>();
  r.correct_use = c.at("correct_use").get<double>();
  r.force_transition = c.at("force_transition").get<double>();
  r.total = j.at("total").get<double>();
  r.osce = enum_from<OsceRating>(j.at("osce"), osce_from_string, "OSCE rating");
  const json& p = j.at("provenance");
  r.provenance.engine_version = p.at("engine_version").get<std::string>();
  r.provenance.segmentation = p.at("segmentation").get<SegmentationConfig>();
  r.provenance.penalty_slope = p.at("penalty_slope").get<double>();
  r.provenance.osce_thresholds = p.at("osce_thresholds").get<OsceThresholds>();
  r.provenance.codec_errors = p.at("codec_errors").get<std::uint64_t>();
  r.provenance.calibrated = p.at("calibrated").get<bool>();
  r.provenance.safe_threshold_newtons = p.at("safe_threshold_newtons").get<double>();
}

std::string report_to_json(const CompetencyReport& report) {
  return json(report).dump(2);
}

CompetencyReport report_from_json(const std::string& text) {
  try {
    return json::parse(text).get<CompetencyReport>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::ParseError, std::string("report: ") + e.what());
  }
}

std::string render_text(const CompetencyReport& r) {
  std::ostringstream out;
  out << "Palpation competency report\n";
  out << "Participant: " << r.participant_id << "\n\n";
  for (const TaskAssessment& ta : r.tasks) {
    out << "== " << to_string(ta.info.task) << " palpation (session " << ta.info.session_id
        << ", " << ta.frame_count << " frames) ==\n";
    out << "  Presses: " << ta.contributions.total << " total\n";
    out << "  sensor  presses  contribution  max peak  mean duration\n";
    for (SensorId id : kAllSensors) {
      std::uint16_t peak = 0;
      std::uint64_t dur = 0;
      std::uint32_t n = 0;
      for (const PressEvent& e : ta.events) {
        if (e.sensor != id) continue;
        peak = std::max(peak, e.peak_raw);
        dur += e.duration_ms;
        ++n;
      }
      char line[128];
      std::snprintf(line, sizeof line, "  %-6s  %7u  %11s%%  %8s  %13s%s\n",
                    std::string(to_string(id)).c_str(), ta.press_counts[id],
                    fixed(ta.contributions[id]).c_str(), n ? std::to_string(peak).c_str() : "-",
                    n ? (fixed(static_cast<double>(dur) / n, 0) + " ms").c_str() : "-",
                    is_error_sensor(id) ? "  (error sensor)" : "");
      out << line;
    }
    out << "  Criteria:\n";
    for (const CriterionScore& s : ta.scores) {
      out << "    " << to_string(s.criterion) << ": " << fixed(s.points) << " / 10";
      if (s.violation) out << "  [" << s.violation->description << "]";
      out << "\n";
    }
    for (const auto& a : ta.over_threshold) {
      out << "  ! " << to_string(a.sensor) << " press at " << a.onset_ms << " ms peaked at "
          << fixed(a.peak_newtons) << " N (safe threshold "
          << fixed(r.provenance.safe_threshold_newtons) << " N)\n";
    }
    out << "\n";
  }
  out << "Wrong use of hand:     " << fixed(r.wrong_use) << " / 10\n";
  out << "Correct use of hand:   " << fixed(r.correct_use) << " / 10\n";
  out << "Force transition:      " << fixed(r.force_transition) << " / 10\n";
  out << "Total:                 " << fixed(r.total) << " / 30\n";
  out << "OSCE rating:           " << to_string(r.osce) << "\n";
  if (r.provenance.codec_errors > 0) {
    out << "Warning: " << r.provenance.codec_errors << " corrupted frames were discarded\n";
  }
  out << "Engine: " << r.provenance.engine_version << "\n";
  return out.str();
}

}  // namespace palp
