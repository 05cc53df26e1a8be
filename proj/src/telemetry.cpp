#include "palp/telemetry.hpp"

#include <cmath>

#include "palp/error.hpp"

namespace palp {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::NonPositiveAnthropometric: return "NonPositiveAnthropometric";
    case ErrorCode::FieldOutOfRange: return "FieldOutOfRange";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case ErrorCode::OutOfOrderSample: return "OutOfOrderSample";
    case ErrorCode::EmptySession: return "EmptySession";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::MissingTask: return "MissingTask";
    case ErrorCode::DuplicateTask: return "DuplicateTask";
    case ErrorCode::OutOfRange: return "OutOfRange";
    case ErrorCode::NoExpertData: return "NoExpertData";
    case ErrorCode::NoTableForSensor: return "NoTableForSensor";
    case ErrorCode::InvalidCalibration: return "InvalidCalibration";
    case ErrorCode::InfeasibleProfile: return "InfeasibleProfile";
    case ErrorCode::DuplicateSession: return "DuplicateSession";
    case ErrorCode::UnknownSession: return "UnknownSession";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::Io: return "Io";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::string_view, kSensorCount> kSensorNames = {
    "T1", "T2", "T3", "S1", "S2", "S3", "B1", "B2", "B3", "E1", "E2", "E3"};

bool in_closed(double v, double lo, double hi) { return v >= lo && v <= hi; }

}  // namespace

std::string_view to_string(SensorId id) { return kSensorNames[index_of(id)]; }

std::optional<SensorId> sensor_from_string(std::string_view name) {
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    if (kSensorNames[i] == name) return kAllSensors[i];
  }
  return std::nullopt;
}

std::string_view to_string(TaskKind task) {
  switch (task) {
    case TaskKind::Superficial: return "superficial";
    case TaskKind::Deep: return "deep";
    case TaskKind::Liver: return "liver";
  }
  return "unknown";
}

std::optional<TaskKind> task_from_string(std::string_view name) {
  for (TaskKind t : kAllTasks) {
    if (to_string(t) == name) return t;
  }
  return std::nullopt;
}

std::string_view to_string(Cohort cohort) {
  switch (cohort) {
    case Cohort::CT: return "CT";
    case Cohort::SVT: return "SVT";
    case Cohort::VT: return "VT";
    case Cohort::Expert: return "Expert";
  }
  return "unknown";
}

std::optional<Cohort> cohort_from_string(std::string_view name) {
  for (Cohort c : {Cohort::CT, Cohort::SVT, Cohort::VT, Cohort::Expert}) {
    if (to_string(c) == name) return c;
  }
  return std::nullopt;
}

std::string_view to_string(ForceQuartet q) {
  switch (q) {
    case ForceQuartet::Q1: return "Q1";
    case ForceQuartet::Q2: return "Q2";
    case ForceQuartet::Q3: return "Q3";
    case ForceQuartet::Q4: return "Q4";
  }
  return "unknown";
}

std::optional<ForceQuartet> quartet_from_string(std::string_view name) {
  for (auto q : {ForceQuartet::Q1, ForceQuartet::Q2, ForceQuartet::Q3,
                 ForceQuartet::Q4}) {
    if (to_string(q) == name) return q;
  }
  return std::nullopt;
}

std::string_view to_string(FeedbackColor c) {
  switch (c) {
    case FeedbackColor::Green: return "green";
    case FeedbackColor::Amber: return "amber";
    case FeedbackColor::Red: return "red";
  }
  return "unknown";
}

ForceQuartet classify_force_level(double raw, double bound) {
  const double width = bound / 4.0;
  if (raw < width) return ForceQuartet::Q1;
  if (raw < 2.0 * width) return ForceQuartet::Q2;
  if (raw < 3.0 * width) return ForceQuartet::Q3;
  return ForceQuartet::Q4;
}

PlausibilityFlag validate_orientation(const Orientation& o) {
  using R = RangeOfMotion;
  return PlausibilityFlag{
      in_closed(o.roll_deg, R::kRollMin, R::kRollMax),
      in_closed(o.pitch_deg, R::kPitchMin, R::kPitchMax),
      in_closed(o.yaw_deg, R::kYawMin, R::kYawMax),
  };
}

HealthMetrics compute_health_metrics(const PatientProfile& p) {
  if (!(p.height_m > 0.0) || !(p.weight_kg > 0.0) || !(p.waist_cm > 0.0) ||
      !(p.hip_cm > 0.0)) {
    throw Error(ErrorCode::NonPositiveAnthropometric,
                "patient anthropometrics must be strictly positive");
  }
  HealthMetrics m;
  m.bmi = p.weight_kg / (p.height_m * p.height_m);
  m.whr = p.waist_cm / p.hip_cm;
  m.bai_percent = p.hip_cm / std::pow(p.height_m, 1.5) - 18.0;
  return m;
}

CategoryReport classify_health_metrics(const HealthMetrics& m, Gender gender) {
  CategoryReport r;
  if (m.bmi < 18.5) {
    r.bmi = BmiCategory::Underweight;
  } else if (m.bmi > 25.0) {
    r.bmi = BmiCategory::Overweight;
  } else {
    r.bmi = BmiCategory::Healthy;
  }
  if (gender == Gender::Female) {
    r.bai_healthy = in_closed(m.bai_percent, 21.0, 33.0);
    r.whr_at_risk = m.whr > 0.85;
  } else {
    r.bai_healthy = in_closed(m.bai_percent, 8.0, 21.0);
    r.whr_at_risk = m.whr > 1.0;
  }
  return r;
}

std::string_view to_string(BmiCategory c) {
  switch (c) {
    case BmiCategory::Underweight: return "underweight";
    case BmiCategory::Healthy: return "healthy";
    case BmiCategory::Overweight: return "overweight";
  }
  return "unknown";
}

}  // namespace palp
