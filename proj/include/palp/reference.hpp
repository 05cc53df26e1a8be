#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "palp/segmentation.hpp"
#include "palp/telemetry.hpp"

namespace palp {

// Published index-fingertip force levels, stored as constants because the
// glove calibration curve behind them is not available.
inline constexpr double kSuperficialIndexMeanNewtons = 1.25;
inline constexpr double kDeepIndexMeanNewtons = 2.37;
inline constexpr double kSmallFemaleSafeThresholdNewtons = 1.65;

struct CalibrationKnot {
  double arb = 0.0;
  double newtons = 0.0;

  friend bool operator==(const CalibrationKnot&, const CalibrationKnot&) = default;
};

// Per-sensor piecewise-linear arb -> Newton maps. Each knot list starts at
// (0, 0), is strictly increasing in arb and nondecreasing in Newtons. A
// fallback list, when present, serves sensors without their own.
class CalibrationTable {
 public:
  void set(SensorId sensor, std::vector<CalibrationKnot> knots);
  void set_fallback(std::vector<CalibrationKnot> knots);

  bool has(SensorId sensor) const;
  const std::vector<CalibrationKnot>& knots(SensorId sensor) const;

  const std::map<SensorId, std::vector<CalibrationKnot>>& per_sensor() const { return per_sensor_; }
  const std::optional<std::vector<CalibrationKnot>>& fallback() const { return fallback_; }

  // Throws Error(InvalidCalibration).
  static void validate(std::span<const CalibrationKnot> knots);

 private:
  std::map<SensorId, std::vector<CalibrationKnot>> per_sensor_;
  std::optional<std::vector<CalibrationKnot>> fallback_;
};

// Linear interpolation between knots; above the top knot the last segment is
// extended. Throws Error(NoTableForSensor).
double calibrate(double raw, const CalibrationTable& table, SensorId sensor);

struct SensorReference {
  std::optional<double> mean_peak_arb;
  std::optional<double> mean_engaged_arb;  // mean raw level while pressing
  std::optional<double> mean_peak_newtons;

  friend bool operator==(const SensorReference&, const SensorReference&) = default;
};

struct TaskReference {
  TaskKind task = TaskKind::Superficial;
  std::uint32_t session_count = 0;
  std::uint32_t min_press_count = 0;
  std::uint32_t max_press_count = 0;
  std::uint16_t max_peak_arb = 0;
  PerSensor<SensorReference> sensors;

  friend bool operator==(const TaskReference&, const TaskReference&) = default;
};

struct ContributingSession {
  std::string session_id;
  std::string participant_id;
  TaskKind task = TaskKind::Superficial;
  std::string expertise;  // e.g. journeyman / master; kept as metadata only
  std::uint32_t press_count = 0;

  friend bool operator==(const ContributingSession&, const ContributingSession&) = default;
};

inline constexpr int kReferenceSchemaVersion = 1;

struct ReferenceModel {
  std::array<TaskReference, 3> tasks;  // indexed by TaskKind
  double observed_bound_arb = 0.0;     // max deep peak rounded up to 50
  double quartet_bound = kDefaultQuartetBound;
  double safe_threshold_newtons = kSmallFemaleSafeThresholdNewtons;
  double superficial_index_mean_newtons = kSuperficialIndexMeanNewtons;
  double deep_index_mean_newtons = kDeepIndexMeanNewtons;
  std::string report_basis = "press_peak";  // which mean feeds reports
  bool calibrated = false;
  std::vector<ContributingSession> sessions;  // sorted by task, then id

  const TaskReference& task(TaskKind t) const { return tasks[static_cast<std::size_t>(t)]; }
  std::uint32_t session_count() const;

  friend bool operator==(const ReferenceModel&, const ReferenceModel&) = default;
};

struct ReferenceConfig {
  std::optional<double> quartet_bound_override;
  std::optional<double> safe_threshold_override;
  std::map<std::string, std::string> expertise;  // participant_id -> label
};

// Two-level average of per-press peaks: within each session, then
// unweighted across sessions. Throws Error(NoExpertData) naming the task
// when a task has no sessions.
ReferenceModel build_reference(std::span<const SegmentedTask> expert_tasks,
                               const ReferenceConfig& cfg = {},
                               const CalibrationTable* calibration = nullptr);

ReferenceModel build_reference(std::span<const Session> expert_sessions,
                               const SegmentationConfig& seg,
                               const ReferenceConfig& cfg = {},
                               const CalibrationTable* calibration = nullptr);

struct ExceededFlag {
  bool exceeded = false;
  double peak_newtons = 0.0;
  double threshold_newtons = 0.0;
};

ExceededFlag safe_threshold_check(double peak_newtons, const ReferenceModel& model);
ExceededFlag safe_threshold_check(double peak_newtons, double threshold_newtons);

// JSON documents; see docs/file-formats.md.
std::string reference_to_json(const ReferenceModel& model);
ReferenceModel reference_from_json(const std::string& text);
void save_reference(const std::filesystem::path& path, const ReferenceModel& model);
ReferenceModel load_reference(const std::filesystem::path& path);

std::string calibration_to_json(const CalibrationTable& table);
CalibrationTable calibration_from_json(const std::string& text);
CalibrationTable load_calibration(const std::filesystem::path& path);

}  // namespace palp
