#include "palp/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "palp/error.hpp"
#include "palp/version.hpp"

namespace palp {

namespace {

// Shares are ratios of counts; boundary values reconstructed from them may
// carry an ulp of rounding, so comparisons allow this much slack.
constexpr double kBoundaryEps = 1e-9;

std::string format_percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", v);
  return buf;
}

std::string task_label(TaskKind t) { return std::string(to_string(t)); }

CriterionScore make_score(Criterion c, TaskKind task, double v, double slope,
                          std::string description) {
  CriterionScore s;
  s.criterion = c;
  s.task = task;
  s.points = penalized_points(v, slope);
  s.violation = Violation{v, std::move(description)};
  return s;
}

}  // namespace

std::string_view to_string(Criterion c) {
  switch (c) {
    case Criterion::WrongUse: return "wrong_use";
    case Criterion::CorrectUse: return "correct_use";
    case Criterion::ForceTransition: return "force_transition";
  }
  return "unknown";
}

std::string_view to_string(OsceRating r) {
  switch (r) {
    case OsceRating::Fail: return "Fail";
    case OsceRating::Borderline: return "Borderline";
    case OsceRating::Pass: return "Pass";
    case OsceRating::Good: return "Good";
    case OsceRating::Excellent: return "Excellent";
  }
  return "unknown";
}

std::optional<OsceRating> osce_from_string(std::string_view name) {
  for (auto r : {OsceRating::Fail, OsceRating::Borderline, OsceRating::Pass, OsceRating::Good,
                 OsceRating::Excellent}) {
    if (to_string(r) == name) return r;
  }
  return std::nullopt;
}

ContributionMap sensor_contributions(const PressStats& stats) {
  if (stats.total == 0) {
    throw Error(ErrorCode::EmptySession, "no presses recorded; session cannot be assessed");
  }
  ContributionMap c;
  c.total = stats.total;
  for (SensorId id : kAllSensors) {
    c.percent[id] = static_cast<double>(stats.counts[id]) * 100.0 / stats.total;
  }
  return c;
}

double penalized_points(double violation, double slope) {
  return std::max(0.0, kCriterionMaxPoints - slope * violation);
}

CriterionScore criterion_wrong_use(const ContributionMap& c, TaskKind task,
                                   double penalty_slope) {
  const double thenar = c[SensorId::E1] + c[SensorId::E2];
  const double hypothenar = c[SensorId::E3];
  const bool thenar_ok = thenar <= kThenarMaxPercent + kBoundaryEps;
  const bool hypothenar_ok = hypothenar <= kHypothenarMaxPercent + kBoundaryEps;
  if (thenar_ok && hypothenar_ok) {
    return CriterionScore{Criterion::WrongUse, task, kCriterionMaxPoints, std::nullopt};
  }
  const double v = (thenar_ok ? 0.0 : thenar - kThenarMaxPercent) +
                   (hypothenar_ok ? 0.0 : hypothenar - kHypothenarMaxPercent);
  std::string what;
  if (!thenar_ok) what += "thenar (E1+E2) share " + format_percent(thenar) + " exceeds 20%";
  if (!hypothenar_ok) {
    if (!what.empty()) what += "; ";
    what += "hypothenar (E3) share " + format_percent(hypothenar) + " exceeds 10%";
  }
  return make_score(Criterion::WrongUse, task, v, penalty_slope, std::move(what));
}

CriterionScore criterion_correct_use(const ContributionMap& c, TaskKind task,
                                     double penalty_slope) {
  if (task == TaskKind::Liver) {
    double focus = 0.0;
    for (SensorId id : kLiverFocusSensors) focus += c[id];
    if (focus >= kLiverFocusMinPercent - kBoundaryEps) {
      return CriterionScore{Criterion::CorrectUse, task, kCriterionMaxPoints, std::nullopt};
    }
    return make_score(Criterion::CorrectUse, task, kLiverFocusMinPercent - focus,
                      penalty_slope,
                      "index radial-border/tip/base share " + format_percent(focus) +
                          " is below 50%");
  }

  const double mean =
      (c[SensorId::T1] + c[SensorId::T2] + c[SensorId::T3]) / 3.0;
  double worst = 0.0;
  SensorId worst_id = SensorId::T1;
  for (SensorId id : kFingertipSensors) {
    const double dev = std::abs(c[id] - mean);
    if (dev > worst) {
      worst = dev;
      worst_id = id;
    }
  }
  if (worst <= kFingertipTolerancePercent + kBoundaryEps) {
    return CriterionScore{Criterion::CorrectUse, task, kCriterionMaxPoints, std::nullopt};
  }
  return make_score(Criterion::CorrectUse, task, worst - kFingertipTolerancePercent,
                    penalty_slope,
                    "fingertip " + std::string(to_string(worst_id)) + " deviates " +
                        format_percent(worst) + " from the fingertip mean (limit 20%)");
}

CriterionScore criterion_force_transition(std::span<const PressEvent> events, TaskKind task) {
  if (!has_force_transition(task)) {
    throw Error(ErrorCode::NotApplicable, "force transition is not assessed for the liver task");
  }
  std::size_t scored = 0;
  std::size_t correct = 0;
  for (const PressEvent& e : events) {
    if (!is_permitted_sensor(e.sensor)) continue;
    ++scored;
    const bool light = e.peak_quartet == ForceQuartet::Q1 || e.peak_quartet == ForceQuartet::Q2;
    if (task == TaskKind::Superficial ? light : !light) ++correct;
  }
  if (scored == 0) {
    throw Error(ErrorCode::EmptySession,
                task_label(task) + " session has no presses on permitted sensors");
  }
  CriterionScore s;
  s.criterion = Criterion::ForceTransition;
  s.task = task;
  s.points = kCriterionMaxPoints * static_cast<double>(correct) / static_cast<double>(scored);
  if (correct < scored) {
    const double wrong = 100.0 * static_cast<double>(scored - correct) / scored;
    s.violation = Violation{
        wrong, format_percent(wrong) + " of presses peaked outside the " +
                   (task == TaskKind::Superficial ? std::string("very light/light")
                                                  : std::string("medium/hard")) +
                   " quartets"};
  }
  return s;
}

void OsceThresholds::validate() const {
  if (!(0.0 <= borderline && borderline <= pass && pass <= good && good <= excellent &&
        excellent <= kMaxTotal)) {
    throw Error(ErrorCode::InvalidConfig, "OSCE cut points must be nondecreasing within [0, 30]");
  }
}

OsceRating osce_rating(double total, const OsceThresholds& t) {
  if (!(total >= 0.0 && total <= kMaxTotal)) {
    throw Error(ErrorCode::OutOfRange, "total score must lie in [0, 30]");
  }
  if (total >= t.excellent) return OsceRating::Excellent;
  if (total >= t.good) return OsceRating::Good;
  if (total >= t.pass) return OsceRating::Pass;
  if (total >= t.borderline) return OsceRating::Borderline;
  return OsceRating::Fail;
}

void AssessmentConfig::validate() const {
  segmentation.validate();
  osce.validate();
  if (!(penalty_slope >= 0.0) || !std::isfinite(penalty_slope)) {
    throw Error(ErrorCode::InvalidConfig, "penalty_slope must be finite and nonnegative");
  }
}

const CriterionScore* TaskAssessment::score(Criterion c) const {
  for (const auto& s : scores) {
    if (s.criterion == c) return &s;
  }
  return nullptr;
}

const TaskAssessment& CompetencyReport::task(TaskKind t) const {
  for (const auto& ta : tasks) {
    if (ta.info.task == t) return ta;
  }
  throw Error(ErrorCode::MissingTask, "report has no " + task_label(t) + " task");
}

CompetencyReport assess_segmented(std::span<const SegmentedTask> tasks,
                                  const AssessmentConfig& cfg, const SafetyContext& safety,
                                  std::uint64_t codec_errors) {
  cfg.validate();
  std::array<const SegmentedTask*, 3> by_task{};
  for (const SegmentedTask& t : tasks) {
    auto& slot = by_task[static_cast<std::size_t>(t.info.task)];
    if (slot != nullptr) {
      throw Error(ErrorCode::DuplicateTask,
                  "more than one " + task_label(t.info.task) + " session supplied");
    }
    slot = &t;
  }
  for (TaskKind k : kAllTasks) {
    if (by_task[static_cast<std::size_t>(k)] == nullptr) {
      throw Error(ErrorCode::MissingTask, "missing " + task_label(k) + " session");
    }
  }

  CompetencyReport report;
  report.participant_id = by_task[0]->info.participant_id;
  report.provenance.engine_version = kEngineVersion;
  report.provenance.segmentation = cfg.segmentation;
  report.provenance.penalty_slope = cfg.penalty_slope;
  report.provenance.osce_thresholds = cfg.osce;
  report.provenance.codec_errors = codec_errors;
  report.provenance.calibrated = safety.calibration != nullptr;
  report.provenance.safe_threshold_newtons = safety.safe_threshold_newtons;

  double wrong_sum = 0.0;
  double correct_sum = 0.0;
  double transition_sum = 0.0;
  int transition_tasks = 0;

  for (TaskKind k : kAllTasks) {
    const SegmentedTask& st = *by_task[static_cast<std::size_t>(k)];
    TaskAssessment ta;
    ta.info = st.info;
    ta.frame_count = st.frame_count;
    ta.events = st.events;
    const PressStats stats = press_stats(ta.events);
    ta.press_counts = stats.counts;
    try {
      ta.contributions = sensor_contributions(stats);
    } catch (const Error&) {
      throw Error(ErrorCode::EmptySession,
                  task_label(k) + " session has no presses; cannot assess");
    }
    ta.scores.push_back(criterion_wrong_use(ta.contributions, k, cfg.penalty_slope));
    ta.scores.push_back(criterion_correct_use(ta.contributions, k, cfg.penalty_slope));
    wrong_sum += ta.scores[0].points;
    correct_sum += ta.scores[1].points;
    if (has_force_transition(k)) {
      ta.scores.push_back(criterion_force_transition(ta.events, k));
      transition_sum += ta.scores[2].points;
      ++transition_tasks;
    }
    if (safety.calibration != nullptr) {
      for (const PressEvent& e : ta.events) {
        if (!safety.calibration->has(e.sensor)) continue;
        const double n = calibrate(e.peak_raw, *safety.calibration, e.sensor);
        if (safe_threshold_check(n, safety.safe_threshold_newtons).exceeded) {
          ta.over_threshold.push_back({e.sensor, e.onset_ms, n});
        }
      }
    }
    report.tasks.push_back(std::move(ta));
  }

  report.wrong_use = wrong_sum / 3.0;
  report.correct_use = correct_sum / 3.0;
  report.force_transition = transition_sum / transition_tasks;
  report.total = report.wrong_use + report.correct_use + report.force_transition;
  report.osce = osce_rating(report.total, cfg.osce);
  return report;
}

CompetencyReport assess(std::span<const Session> sessions, const AssessmentConfig& cfg,
                        const SafetyContext& safety) {
  cfg.validate();
  std::vector<SegmentedTask> tasks;
  tasks.reserve(sessions.size());
  for (const Session& s : sessions) tasks.push_back(segment_task(s, cfg.segmentation));
  return assess_segmented(tasks, cfg, safety);
}

namespace {

BatchOutcome assess_one(const std::vector<Session>& sessions, const AssessmentConfig& cfg) {
  BatchOutcome out;
  try {
    out.report = assess(sessions, cfg);
  } catch (const std::exception& e) {
    out.error = e.what();
  }
  return out;
}

}  // namespace

std::vector<BatchOutcome> assess_many(std::span<const std::vector<Session>> participants,
                                      const AssessmentConfig& cfg) {
  std::vector<BatchOutcome> out(participants.size());
  const auto n = static_cast<long>(participants.size());
#pragma omp parallel for schedule(dynamic)
  for (long i = 0; i < n; ++i) {
    out[static_cast<std::size_t>(i)] = assess_one(participants[static_cast<std::size_t>(i)], cfg);
  }
  return out;
}

std::vector<BatchOutcome> assess_many_serial(std::span<const std::vector<Session>> participants,
                                             const AssessmentConfig& cfg) {
  std::vector<BatchOutcome> out;
  out.reserve(participants.size());
  for (const auto& p : participants) out.push_back(assess_one(p, cfg));
  return out;
}

}  // namespace palp
