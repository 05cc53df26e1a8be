#pragma once

#include <cstdint>
#include <deque>
#include <span>
#include <vector>

#include "palp/sensor.hpp"
#include "palp/telemetry.hpp"

namespace palp {

struct SegmentationConfig {
  double onset_threshold = 40.0;   // enter a press at filtered >= onset
  double release_threshold = 25.0; // leave it at filtered < release
  std::uint32_t min_press_ms = 100;
  std::uint32_t min_gap_ms = 50;   // closer presses are merged
  std::size_t median_window = 5;   // odd sample count
  double quartet_bound = kDefaultQuartetBound;

  // Throws Error(InvalidConfig).
  void validate() const;

  friend bool operator==(const SegmentationConfig&, const SegmentationConfig&) = default;
};

struct Sample {
  std::uint32_t t_ms = 0;
  std::uint16_t raw = 0;
};

struct PressEvent {
  SensorId sensor = SensorId::T1;
  std::uint32_t onset_ms = 0;
  std::uint32_t release_ms = 0;
  std::uint16_t peak_raw = 0;  // max raw (unfiltered) sample in [onset, release]
  ForceQuartet peak_quartet = ForceQuartet::Q1;
  std::uint32_t duration_ms = 0;
  std::uint32_t samples = 0;   // raw samples in [onset, release]
  std::uint64_t raw_sum = 0;

  double mean_raw() const noexcept {
    return samples == 0 ? 0.0 : static_cast<double>(raw_sum) / samples;
  }

  friend bool operator==(const PressEvent&, const PressEvent&) = default;
};

// Batch segmentation of one sensor's trace: median prefilter with edge
// replication, two-threshold hysteresis, merging of presses separated by less
// than min_gap_ms, then removal of presses shorter than min_press_ms (or whose
// raw peak never reached the onset threshold). Repeated timestamps keep the
// first sample. Throws EmptyTrace or NonMonotonicTimestamps.
std::vector<PressEvent> segment_presses(SensorId sensor, std::span<const Sample> trace,
                                        const SegmentationConfig& cfg);

// Streaming form of segment_presses for one sensor. Pushing a whole trace and
// calling finalize() yields exactly the batch result. A press still open at
// finalize() is closed at the last timestamp.
class PressSegmenter {
 public:
  PressSegmenter(SensorId sensor, const SegmentationConfig& cfg);

  // Throws Error(OutOfOrderSample) if t_ms goes backwards.
  std::vector<PressEvent> push_sample(Sample s);
  std::vector<PressEvent> finalize();

  bool in_press() const noexcept { return state_ == State::InPress; }

 private:
  enum class State { Idle, InPress, Pending };

  struct Accum {
    std::uint32_t onset_ms = 0;
    std::uint32_t release_ms = 0;
    std::uint16_t peak = 0;
    std::uint32_t samples = 0;
    std::uint64_t sum = 0;

    void add(const Sample& s) {
      if (s.raw > peak) peak = s.raw;
      ++samples;
      sum += s.raw;
    }
  };

  void process(const Sample& s, double filtered, std::vector<PressEvent>& out);
  void emit(std::vector<PressEvent>& out);
  void drain_filter(std::vector<PressEvent>& out);

  SensorId sensor_;
  SegmentationConfig cfg_;
  std::size_t half_;
  std::deque<std::uint16_t> window_;
  std::deque<Sample> pending_;
  bool seen_ = false;
  std::uint32_t last_t_ = 0;
  std::uint32_t last_processed_t_ = 0;
  State state_ = State::Idle;
  Accum cur_;
  Accum gap_;
};

struct SessionSegmentation {
  PerSensor<std::vector<PressEvent>> per_sensor;

  // All events ordered by onset, then by sensor.
  std::vector<PressEvent> events() const;
};

std::vector<Sample> sensor_trace(std::span<const SensorFrame> frames, SensorId sensor);

// Segments all twelve channels, one OpenMP task per sensor.
SessionSegmentation segment_session(const Session& session, const SegmentationConfig& cfg);

// Single-threaded reference for segment_session.
SessionSegmentation segment_session_serial(const Session& session,
                                           const SegmentationConfig& cfg);

struct PressStats {
  PerSensor<std::uint32_t> counts;
  std::uint32_t total = 0;
  PerSensor<std::vector<std::uint16_t>> peaks;
  PerSensor<std::vector<std::uint32_t>> durations_ms;
};

PressStats press_stats(std::span<const PressEvent> events);

// One recorded task reduced to what scoring and model building consume.
struct SegmentedTask {
  SessionInfo info;
  std::size_t frame_count = 0;
  std::vector<PressEvent> events;  // ordered by onset, then sensor
};

SegmentedTask segment_task(const Session& session, const SegmentationConfig& cfg);

}  // namespace palp
