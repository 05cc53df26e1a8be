#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "palp/reference.hpp"
#include "palp/segmentation.hpp"
#include "palp/telemetry.hpp"

namespace palp {

inline constexpr double kCriterionMaxPoints = 10.0;
inline constexpr double kMaxTotal = 30.0;

// Rubric bounds, in percentage points of contribution share.
inline constexpr double kThenarMaxPercent = 20.0;
inline constexpr double kHypothenarMaxPercent = 10.0;
inline constexpr double kFingertipTolerancePercent = 20.0;
inline constexpr double kLiverFocusMinPercent = 50.0;

struct ContributionMap {
  PerSensor<double> percent;
  std::uint32_t total = 0;

  double operator[](SensorId id) const { return percent[id]; }

  friend bool operator==(const ContributionMap&, const ContributionMap&) = default;
};

// C_sensor = PC_sensor / PC_total * 100. Throws Error(EmptySession) when
// nothing was pressed: an empty recording cannot be scored.
ContributionMap sensor_contributions(const PressStats& stats);

enum class Criterion : std::uint8_t { WrongUse, CorrectUse, ForceTransition };

std::string_view to_string(Criterion c);

struct Violation {
  double magnitude = 0.0;  // percentage points
  std::string description;

  friend bool operator==(const Violation&, const Violation&) = default;
};

struct CriterionScore {
  Criterion criterion = Criterion::WrongUse;
  TaskKind task = TaskKind::Superficial;
  double points = kCriterionMaxPoints;
  std::optional<Violation> violation;

  friend bool operator==(const CriterionScore&, const CriterionScore&) = default;
};

// points = max(0, 10 - slope * v) where v is the violation in percentage
// points. A slope of 1 is the default.
double penalized_points(double violation, double slope);

CriterionScore criterion_wrong_use(const ContributionMap& c, TaskKind task,
                                   double penalty_slope = 1.0);

CriterionScore criterion_correct_use(const ContributionMap& c, TaskKind task,
                                     double penalty_slope = 1.0);

// Only presses on permitted sensors are scored; error-sensor presses are
// already charged by the wrong-use criterion. Throws NotApplicable for the
// liver task and EmptySession when no permitted press exists.
CriterionScore criterion_force_transition(std::span<const PressEvent> events, TaskKind task);

enum class OsceRating : std::uint8_t { Fail, Borderline, Pass, Good, Excellent };

std::string_view to_string(OsceRating r);
std::optional<OsceRating> osce_from_string(std::string_view name);

// Lower cut points of Borderline, Pass, Good and Excellent.
struct OsceThresholds {
  double borderline = 15.0;
  double pass = 18.0;
  double good = 22.0;
  double excellent = 26.0;

  void validate() const;

  friend bool operator==(const OsceThresholds&, const OsceThresholds&) = default;
};

// Throws Error(OutOfRange) outside [0, 30].
OsceRating osce_rating(double total, const OsceThresholds& thresholds = {});

struct AssessmentConfig {
  SegmentationConfig segmentation;
  double penalty_slope = 1.0;
  OsceThresholds osce;

  void validate() const;
};

// Optional force annotations; the rubric itself never needs Newtons.
struct SafetyContext {
  const CalibrationTable* calibration = nullptr;
  double safe_threshold_newtons = kSmallFemaleSafeThresholdNewtons;
};

struct SafetyAnnotation {
  SensorId sensor = SensorId::T1;
  std::uint32_t onset_ms = 0;
  double peak_newtons = 0.0;

  friend bool operator==(const SafetyAnnotation&, const SafetyAnnotation&) = default;
};

struct TaskAssessment {
  SessionInfo info;
  std::size_t frame_count = 0;
  std::vector<PressEvent> events;
  PerSensor<std::uint32_t> press_counts;
  ContributionMap contributions;
  std::vector<CriterionScore> scores;          // WrongUse, CorrectUse[, ForceTransition]
  std::vector<SafetyAnnotation> over_threshold;  // empty without calibration

  const CriterionScore* score(Criterion c) const;

  friend bool operator==(const TaskAssessment&, const TaskAssessment&) = default;
};

struct Provenance {
  std::string engine_version;
  SegmentationConfig segmentation;
  double penalty_slope = 1.0;
  OsceThresholds osce_thresholds;
  std::uint64_t codec_errors = 0;
  bool calibrated = false;
  double safe_threshold_newtons = kSmallFemaleSafeThresholdNewtons;

  friend bool operator==(const Provenance&, const Provenance&) = default;
};

inline constexpr int kReportSchemaVersion = 1;

struct CompetencyReport {
  std::string participant_id;
  std::vector<TaskAssessment> tasks;  // superficial, deep, liver
  double wrong_use = 0.0;             // criterion averages
  double correct_use = 0.0;
  double force_transition = 0.0;
  double total = 0.0;
  OsceRating osce = OsceRating::Fail;
  Provenance provenance;

  const TaskAssessment& task(TaskKind t) const;

  friend bool operator==(const CompetencyReport&, const CompetencyReport&) = default;
};

// Scores already-segmented tasks: exactly one per TaskKind. Throws
// MissingTask, DuplicateTask, or EmptySession naming the task.
CompetencyReport assess_segmented(std::span<const SegmentedTask> tasks,
                                  const AssessmentConfig& cfg,
                                  const SafetyContext& safety = {},
                                  std::uint64_t codec_errors = 0);

// Segments each session, then scores it.
CompetencyReport assess(std::span<const Session> sessions, const AssessmentConfig& cfg,
                        const SafetyContext& safety = {});

// Scores many participants; one OpenMP iteration per participant. Errors are
// captured per participant instead of aborting the batch.
struct BatchOutcome {
  std::optional<CompetencyReport> report;
  std::optional<std::string> error;
};

std::vector<BatchOutcome> assess_many(std::span<const std::vector<Session>> participants,
                                      const AssessmentConfig& cfg);
std::vector<BatchOutcome> assess_many_serial(std::span<const std::vector<Session>> participants,
                                             const AssessmentConfig& cfg);

}  // namespace palp
