#include "palp/segmentation.hpp"

#include <algorithm>
#include <exception>
#include <string>

#include "palp/error.hpp"

namespace palp {

namespace {

std::uint16_t median_of(std::vector<std::uint16_t>& scratch) {
  const auto mid = scratch.begin() + static_cast<std::ptrdiff_t>(scratch.size() / 2);
  std::nth_element(scratch.begin(), mid, scratch.end());
  return *mid;
}

bool keep(const PressEvent& e, const SegmentationConfig& cfg) {
  return e.duration_ms >= cfg.min_press_ms && e.peak_raw >= cfg.onset_threshold;
}

std::vector<Sample> dedupe(SensorId sensor, std::span<const Sample> trace) {
  if (trace.empty()) {
    throw Error(ErrorCode::EmptyTrace,
                "empty trace for sensor " + std::string(to_string(sensor)));
  }
  std::vector<Sample> out;
  out.reserve(trace.size());
  out.push_back(trace.front());
  for (std::size_t i = 1; i < trace.size(); ++i) {
    if (trace[i].t_ms < out.back().t_ms) {
      throw Error(ErrorCode::NonMonotonicTimestamps,
                  "timestamp " + std::to_string(trace[i].t_ms) + " after " +
                      std::to_string(out.back().t_ms) + " on sensor " +
                      std::string(to_string(sensor)));
    }
    if (trace[i].t_ms > out.back().t_ms) out.push_back(trace[i]);
  }
  return out;
}

}  // namespace

void SegmentationConfig::validate() const {
  if (!(release_threshold < onset_threshold)) {
    throw Error(ErrorCode::InvalidConfig, "release_threshold must be below onset_threshold");
  }
  if (min_press_ms == 0) throw Error(ErrorCode::InvalidConfig, "min_press_ms must be positive");
  if (median_window == 0 || median_window % 2 == 0) {
    throw Error(ErrorCode::InvalidConfig, "median_window must be odd and at least 1");
  }
  if (!(quartet_bound > 0.0)) {
    throw Error(ErrorCode::InvalidConfig, "quartet_bound must be positive");
  }
}

std::vector<PressEvent> segment_presses(SensorId sensor, std::span<const Sample> trace,
                                        const SegmentationConfig& cfg) {
  cfg.validate();
  const std::vector<Sample> x = dedupe(sensor, trace);
  const std::size_t n = x.size();
  const auto half = static_cast<std::ptrdiff_t>(cfg.median_window / 2);

  std::vector<std::uint16_t> filtered(n);
  std::vector<std::uint16_t> scratch(cfg.median_window);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::ptrdiff_t k = -half; k <= half; ++k) {
      const auto j = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(i) + k, 0,
                                                static_cast<std::ptrdiff_t>(n) - 1);
      scratch[static_cast<std::size_t>(k + half)] = x[static_cast<std::size_t>(j)].raw;
    }
    filtered[i] = median_of(scratch);
  }

  // Closed index intervals [first, last] of the hysteresis automaton.
  struct Span {
    std::size_t first;
    std::size_t last;
  };
  std::vector<Span> spans;
  bool active = false;
  std::size_t start = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!active && filtered[i] >= cfg.onset_threshold) {
      active = true;
      start = i;
    } else if (active && filtered[i] < cfg.release_threshold) {
      active = false;
      spans.push_back({start, i});
    }
  }
  if (active) spans.push_back({start, n - 1});

  std::vector<Span> merged;
  for (const Span& s : spans) {
    if (!merged.empty() && x[s.first].t_ms - x[merged.back().last].t_ms < cfg.min_gap_ms) {
      merged.back().last = s.last;
    } else {
      merged.push_back(s);
    }
  }

  std::vector<PressEvent> events;
  for (const Span& s : merged) {
    PressEvent e;
    e.sensor = sensor;
    e.onset_ms = x[s.first].t_ms;
    e.release_ms = x[s.last].t_ms;
    e.duration_ms = e.release_ms - e.onset_ms;
    for (std::size_t i = s.first; i <= s.last; ++i) {
      e.peak_raw = std::max(e.peak_raw, x[i].raw);
      e.raw_sum += x[i].raw;
      ++e.samples;
    }
    e.peak_quartet = classify_force_level(e.peak_raw, cfg.quartet_bound);
    if (keep(e, cfg)) events.push_back(e);
  }
  return events;
}

PressSegmenter::PressSegmenter(SensorId sensor, const SegmentationConfig& cfg)
    : sensor_(sensor), cfg_(cfg), half_(cfg.median_window / 2) {
  cfg_.validate();
}

std::vector<PressEvent> PressSegmenter::push_sample(Sample s) {
  std::vector<PressEvent> out;
  if (seen_) {
    if (s.t_ms < last_t_) {
      throw Error(ErrorCode::OutOfOrderSample,
                  "sample at " + std::to_string(s.t_ms) + " ms after " +
                      std::to_string(last_t_) + " ms on sensor " +
                      std::string(to_string(sensor_)));
    }
    if (s.t_ms == last_t_) return out;
  } else {
    window_.assign(half_, s.raw);  // left edge replication
    seen_ = true;
  }
  last_t_ = s.t_ms;
  window_.push_back(s.raw);
  pending_.push_back(s);
  drain_filter(out);
  return out;
}

std::vector<PressEvent> PressSegmenter::finalize() {
  std::vector<PressEvent> out;
  if (!seen_) return out;
  // Right edge replication flushes the filter delay.
  const std::uint16_t last_raw = window_.back();
  while (!pending_.empty()) {
    window_.push_back(last_raw);
    drain_filter(out);
  }
  if (state_ == State::InPress) {
    cur_.release_ms = last_processed_t_;
    emit(out);
  } else if (state_ == State::Pending) {
    emit(out);
  }
  state_ = State::Idle;
  window_.clear();
  seen_ = false;
  return out;
}

void PressSegmenter::drain_filter(std::vector<PressEvent>& out) {
  const std::size_t width = 2 * half_ + 1;
  std::vector<std::uint16_t> scratch;
  while (window_.size() >= width && !pending_.empty()) {
    scratch.assign(window_.begin(), window_.begin() + static_cast<std::ptrdiff_t>(width));
    const Sample s = pending_.front();
    pending_.pop_front();
    window_.pop_front();
    process(s, median_of(scratch), out);
  }
}

void PressSegmenter::process(const Sample& s, double filtered, std::vector<PressEvent>& out) {
  last_processed_t_ = s.t_ms;
  switch (state_) {
    case State::Idle:
      if (filtered >= cfg_.onset_threshold) {
        cur_ = Accum{};
        cur_.onset_ms = s.t_ms;
        cur_.add(s);
        state_ = State::InPress;
      }
      break;
    case State::InPress:
      cur_.add(s);
      if (filtered < cfg_.release_threshold) {
        cur_.release_ms = s.t_ms;
        gap_ = Accum{};
        state_ = State::Pending;
      }
      break;
    case State::Pending:
      if (filtered >= cfg_.onset_threshold) {
        if (s.t_ms - cur_.release_ms < cfg_.min_gap_ms) {
          cur_.peak = std::max(cur_.peak, gap_.peak);
          cur_.samples += gap_.samples;
          cur_.sum += gap_.sum;
        } else {
          emit(out);
          cur_ = Accum{};
          cur_.onset_ms = s.t_ms;
        }
        cur_.add(s);
        state_ = State::InPress;
      } else {
        gap_.add(s);
        if (s.t_ms - cur_.release_ms >= cfg_.min_gap_ms) {
          emit(out);
          state_ = State::Idle;
        }
      }
      break;
  }
}

void PressSegmenter::emit(std::vector<PressEvent>& out) {
  PressEvent e;
  e.sensor = sensor_;
  e.onset_ms = cur_.onset_ms;
  e.release_ms = cur_.release_ms;
  e.duration_ms = cur_.release_ms - cur_.onset_ms;
  e.peak_raw = cur_.peak;
  e.peak_quartet = classify_force_level(cur_.peak, cfg_.quartet_bound);
  e.samples = cur_.samples;
  e.raw_sum = cur_.sum;
  if (keep(e, cfg_)) out.push_back(e);
}

std::vector<PressEvent> SessionSegmentation::events() const {
  std::vector<PressEvent> all;
  for (const auto& list : per_sensor) all.insert(all.end(), list.begin(), list.end());
  std::stable_sort(all.begin(), all.end(), [](const PressEvent& a, const PressEvent& b) {
    if (a.onset_ms != b.onset_ms) return a.onset_ms < b.onset_ms;
    return index_of(a.sensor) < index_of(b.sensor);
  });
  return all;
}

std::vector<Sample> sensor_trace(std::span<const SensorFrame> frames, SensorId sensor) {
  std::vector<Sample> trace;
  trace.reserve(frames.size());
  for (const auto& f : frames) trace.push_back({f.timestamp_ms, f.force(sensor)});
  return trace;
}

SessionSegmentation segment_session(const Session& session, const SegmentationConfig& cfg) {
  cfg.validate();
  SessionSegmentation result;
  std::array<std::exception_ptr, kSensorCount> errors{};
  const auto count = static_cast<int>(kSensorCount);
#pragma omp parallel for schedule(static)
  for (int i = 0; i < count; ++i) {
    const SensorId id = kAllSensors[static_cast<std::size_t>(i)];
    try {
      const auto trace = sensor_trace(session.frames, id);
      result.per_sensor[id] = segment_presses(id, trace, cfg);
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return result;
}

SessionSegmentation segment_session_serial(const Session& session,
                                           const SegmentationConfig& cfg) {
  cfg.validate();
  SessionSegmentation result;
  for (SensorId id : kAllSensors) {
    const auto trace = sensor_trace(session.frames, id);
    result.per_sensor[id] = segment_presses(id, trace, cfg);
  }
  return result;
}

SegmentedTask segment_task(const Session& session, const SegmentationConfig& cfg) {
  SegmentedTask t;
  t.info = session.info;
  t.frame_count = session.frames.size();
  if (!session.frames.empty()) t.events = segment_session(session, cfg).events();
  return t;
}

PressStats press_stats(std::span<const PressEvent> events) {
  PressStats stats;
  for (const auto& e : events) {
    ++stats.counts[e.sensor];
    ++stats.total;
    stats.peaks[e.sensor].push_back(e.peak_raw);
    stats.durations_ms[e.sensor].push_back(e.duration_ms);
  }
  return stats;
}

}  // namespace palp
