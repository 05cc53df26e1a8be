#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "palp/telemetry.hpp"

namespace palp::sim {

enum class Archetype : std::uint8_t {
  IdealSuperficial,
  IdealDeep,
  IdealLiver,
  Tutor1Deep,  // few, long, hard presses
  Tutor2Deep,  // many presses of moderate, even force
  Tutor3Deep,
  Tutor4Deep,  // light presses close to superficial levels
  ErrorHeavy,  // leans on the thenar eminence
  Custom,
};

std::string_view to_string(Archetype a);
// Accepts both "ideal-deep" and "IdealDeep" spellings.
std::optional<Archetype> archetype_from_string(std::string_view name);

// One explicitly placed half-sine press.
struct PlannedPress {
  SensorId sensor = SensorId::T1;
  std::uint16_t peak_raw = 0;
  std::uint32_t duration_ms = 0;
  std::uint32_t gap_after_ms = 0;
};

struct SimProfile {
  Archetype archetype = Archetype::Custom;
  PerSensor<std::uint32_t> press_count;
  PerSensor<ForceQuartet> quartet;     // peak target per sensor
  std::uint32_t press_min_ms = 400;    // multiples of 40 keep the peak on a sample
  std::uint32_t press_max_ms = 640;
  std::uint32_t gap_min_ms = 200;
  std::uint32_t gap_max_ms = 400;
  std::uint32_t lead_in_ms = 200;
  std::uint32_t session_length_ms = 0;  // 0 sizes the session to fit
  std::uint16_t noise_max = 8;          // idle-channel noise, below the release threshold
  std::vector<PlannedPress> presses;    // when set, replaces the drawn schedule

  std::uint32_t total_presses() const;
};

// Parameters of a named archetype for a task. Tutor and ideal archetypes are
// task-specific by name; ErrorHeavy picks peak quartets suited to the task.
SimProfile profile_for(Archetype archetype, TaskKind task);

// Deterministic in (profile, task, seed). Frames are 20 ms apart; every press
// is detected once by the default segmentation config with the profile's
// quartet. Throws Error(InfeasibleProfile).
Session generate_session(const SimProfile& profile, TaskKind task, std::uint64_t seed);

// The press schedule generate_session would lay down, with absolute onsets.
struct ScheduledPress {
  PlannedPress press;
  std::uint32_t onset_ms = 0;
};
std::vector<ScheduledPress> schedule_presses(const SimProfile& profile, std::uint64_t seed);

using FrameSink = std::function<void(std::span<const std::uint8_t>)>;

// Emits each frame as wire bytes, paced so frame k leaves at
// start + (t_k - t_0) * speed_factor. speed_factor 0 sends as fast as
// possible. Returns the number of frames sent; stops early if cancel is set.
std::size_t stream_session(const Session& session, double speed_factor, const FrameSink& sink,
                           const std::atomic<bool>* cancel = nullptr);

SimProfile profile_from_json(const std::string& text);
std::string profile_to_json(const SimProfile& profile);

}  // namespace palp::sim
