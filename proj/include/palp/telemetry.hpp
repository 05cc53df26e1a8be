#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "palp/sensor.hpp"

namespace palp {

inline constexpr std::uint16_t kMaxRaw = 1023;  // 10-bit force readings

struct Orientation {
  double roll_deg = 0.0;
  double pitch_deg = 0.0;  // dorsal flexion positive, volar negative
  double yaw_deg = 0.0;    // radial flexion positive, ulnar negative

  friend bool operator==(const Orientation&, const Orientation&) = default;
};

struct MarkerPosition {
  double x_mm = 0.0;
  double y_mm = 0.0;
  double z_mm = 0.0;

  friend bool operator==(const MarkerPosition&, const MarkerPosition&) = default;
};

using Markers = std::array<MarkerPosition, 4>;

struct SensorFrame {
  std::uint32_t seq = 0;
  std::uint32_t timestamp_ms = 0;
  std::array<std::uint16_t, kSensorCount> force_raw{};
  Orientation orientation;
  std::optional<Markers> markers;  // camera-side extension, carried but unprocessed
  std::uint8_t flags = 0;

  std::uint16_t force(SensorId id) const { return force_raw[index_of(id)]; }

  friend bool operator==(const SensorFrame&, const SensorFrame&) = default;
};

enum class TaskKind : std::uint8_t { Superficial, Deep, Liver };

inline constexpr std::array<TaskKind, 3> kAllTasks = {
    TaskKind::Superficial, TaskKind::Deep, TaskKind::Liver};

constexpr bool has_force_transition(TaskKind task) noexcept {
  return task != TaskKind::Liver;
}

enum class Cohort : std::uint8_t { CT, SVT, VT, Expert };

std::string_view to_string(TaskKind task);
std::string_view to_string(Cohort cohort);
std::optional<TaskKind> task_from_string(std::string_view name);
std::optional<Cohort> cohort_from_string(std::string_view name);

struct SessionInfo {
  std::string session_id;
  std::string participant_id;
  Cohort cohort = Cohort::CT;
  TaskKind task = TaskKind::Superficial;
  std::string patient_ref;
  double sample_rate_hz = 50.0;

  friend bool operator==(const SessionInfo&, const SessionInfo&) = default;
};

struct Session {
  SessionInfo info;
  std::vector<SensorFrame> frames;

  friend bool operator==(const Session&, const Session&) = default;
};

// Force bands over the 600-unit rubric bound, 150 units wide.
enum class ForceQuartet : std::uint8_t { Q1, Q2, Q3, Q4 };

enum class FeedbackColor : std::uint8_t { Green, Amber, Red };

inline constexpr double kDefaultQuartetBound = 600.0;

std::string_view to_string(ForceQuartet q);
std::string_view to_string(FeedbackColor c);
std::optional<ForceQuartet> quartet_from_string(std::string_view name);

// Lower-inclusive bins of width bound/4; anything at or above 3/4 of the bound
// (including values past the bound) is Q4.
ForceQuartet classify_force_level(double raw, double bound = kDefaultQuartetBound);

constexpr FeedbackColor quartet_to_color(ForceQuartet q) noexcept {
  switch (q) {
    case ForceQuartet::Q1:
    case ForceQuartet::Q2:
      return FeedbackColor::Green;
    case ForceQuartet::Q3:
      return FeedbackColor::Amber;
    case ForceQuartet::Q4:
      break;
  }
  return FeedbackColor::Red;
}

// Wrist range-of-motion check. Advisory only: frames are never rejected.
struct PlausibilityFlag {
  bool roll_ok = true;
  bool pitch_ok = true;
  bool yaw_ok = true;

  bool plausible() const noexcept { return roll_ok && pitch_ok && yaw_ok; }
};

struct RangeOfMotion {
  static constexpr double kPitchMin = -44.0;  // volar flexion
  static constexpr double kPitchMax = 78.0;   // dorsal flexion
  static constexpr double kYawMin = -28.0;    // ulnar flexion
  static constexpr double kYawMax = 17.0;     // radial flexion
  static constexpr double kRollMin = -180.0;
  static constexpr double kRollMax = 180.0;
};

PlausibilityFlag validate_orientation(const Orientation& o);

enum class Gender : std::uint8_t { Female, Male };
enum class BodyCategory : std::uint8_t { Small, Medium, Large };

struct PatientProfile {
  Gender gender = Gender::Female;
  double height_m = 0.0;
  double weight_kg = 0.0;
  double waist_cm = 0.0;
  double hip_cm = 0.0;
  BodyCategory body_category = BodyCategory::Medium;
};

struct HealthMetrics {
  double bmi = 0.0;
  double bai_percent = 0.0;
  double whr = 0.0;
};

HealthMetrics compute_health_metrics(const PatientProfile& p);

enum class BmiCategory : std::uint8_t { Underweight, Healthy, Overweight };

struct CategoryReport {
  BmiCategory bmi = BmiCategory::Healthy;
  bool bai_healthy = true;
  bool whr_at_risk = false;
};

CategoryReport classify_health_metrics(const HealthMetrics& m, Gender gender);

std::string_view to_string(BmiCategory c);

}  // namespace palp
