#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string_view>

namespace palp {

// The twelve contact sites on the palpating hand. The numeric order is the
// channel order on the wire and in session files.
enum class SensorId : std::uint8_t {
  T1, T2, T3,  // index / middle / ring fingertips
  S1, S2, S3,  // radial border of the index finger
  B1, B2, B3,  // index / middle / ring finger bases
  E1, E2,      // thenar eminence
  E3,          // hypothenar eminence
};

inline constexpr std::size_t kSensorCount = 12;

inline constexpr std::array<SensorId, kSensorCount> kAllSensors = {
    SensorId::T1, SensorId::T2, SensorId::T3, SensorId::S1,
    SensorId::S2, SensorId::S3, SensorId::B1, SensorId::B2,
    SensorId::B3, SensorId::E1, SensorId::E2, SensorId::E3};

inline constexpr std::array<SensorId, 3> kFingertipSensors = {
    SensorId::T1, SensorId::T2, SensorId::T3};

inline constexpr std::array<SensorId, 3> kErrorSensors = {
    SensorId::E1, SensorId::E2, SensorId::E3};

inline constexpr std::array<SensorId, 5> kLiverFocusSensors = {
    SensorId::S1, SensorId::S2, SensorId::S3, SensorId::T1, SensorId::B1};

constexpr std::size_t index_of(SensorId id) noexcept {
  return static_cast<std::size_t>(id);
}

constexpr bool is_error_sensor(SensorId id) noexcept {
  return id == SensorId::E1 || id == SensorId::E2 || id == SensorId::E3;
}

constexpr bool is_permitted_sensor(SensorId id) noexcept {
  return !is_error_sensor(id);
}

std::string_view to_string(SensorId id);
std::optional<SensorId> sensor_from_string(std::string_view name);

// Fixed-size per-sensor table indexed by SensorId.
template <typename T>
class PerSensor {
 public:
  PerSensor() = default;
  explicit PerSensor(const T& fill) { values_.fill(fill); }

  T& operator[](SensorId id) { return values_[index_of(id)]; }
  const T& operator[](SensorId id) const { return values_[index_of(id)]; }

  auto begin() { return values_.begin(); }
  auto end() { return values_.end(); }
  auto begin() const { return values_.begin(); }
  auto end() const { return values_.end(); }

  std::array<T, kSensorCount>& raw() { return values_; }
  const std::array<T, kSensorCount>& raw() const { return values_; }

  friend bool operator==(const PerSensor&, const PerSensor&) = default;

 private:
  std::array<T, kSensorCount> values_{};
};

}  // namespace palp
