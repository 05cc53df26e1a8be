#include "palp/simulator.hpp"

#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include <json.hpp>

#include "palp/error.hpp"
#include "palp/wire.hpp"

namespace palp::sim {

using nlohmann::json;

namespace {

constexpr std::uint32_t kFramePeriodMs = 20;

// Detection margins against the default segmentation config (onset 40,
// min_press 100 ms, min_gap 50 ms, 5-sample median).
constexpr double kDetectOnset = 40.0;
constexpr double kMinDetectedMs = 140.0;
constexpr std::uint32_t kMinGapMs = 100;

struct Band {
  std::uint16_t lo;
  std::uint16_t hi;
};

// Peak targets sit well inside each 150-unit quartet.
Band band_for(ForceQuartet q) {
  switch (q) {
    case ForceQuartet::Q1: return {70, 130};
    case ForceQuartet::Q2: return {170, 280};
    case ForceQuartet::Q3: return {320, 430};
    case ForceQuartet::Q4: break;
  }
  return {470, 580};
}

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Plain modulo keeps the stream identical across standard libraries.
  std::uint64_t between(std::uint64_t lo, std::uint64_t hi) {
    return lo + engine_() % (hi - lo + 1);
  }

 private:
  std::mt19937_64 engine_;
};

std::uint32_t pick_step(Rng& rng, std::uint32_t lo, std::uint32_t hi, std::uint32_t step) {
  if (hi <= lo) return lo;
  const std::uint32_t steps = (hi - lo) / step;
  return lo + step * static_cast<std::uint32_t>(rng.between(0, steps));
}

double round_centi(double v) { return std::round(v * 100.0) / 100.0; }

void check_press(const PlannedPress& p) {
  const std::string where = "press on " + std::string(to_string(p.sensor));
  if (p.peak_raw > kMaxRaw) {
    throw Error(ErrorCode::InfeasibleProfile, where + ": peak above 1023");
  }
  if (p.peak_raw < 60) {
    throw Error(ErrorCode::InfeasibleProfile, where + ": peak too low to be detected");
  }
  const double above = p.duration_ms * (1.0 - 2.0 * std::asin(kDetectOnset / p.peak_raw) /
                                                  std::numbers::pi);
  if (above < kMinDetectedMs) {
    throw Error(ErrorCode::InfeasibleProfile, where + ": too short to be detected as a press");
  }
  if (p.gap_after_ms < kMinGapMs) {
    throw Error(ErrorCode::InfeasibleProfile, where + ": gap too short to separate presses");
  }
}

void set_fingertips(SimProfile& p, std::uint32_t count, ForceQuartet q) {
  for (SensorId id : kFingertipSensors) {
    p.press_count[id] = count;
    p.quartet[id] = q;
  }
}

}  // namespace

std::string_view to_string(Archetype a) {
  switch (a) {
    case Archetype::IdealSuperficial: return "ideal-superficial";
    case Archetype::IdealDeep: return "ideal-deep";
    case Archetype::IdealLiver: return "ideal-liver";
    case Archetype::Tutor1Deep: return "tutor1-deep";
    case Archetype::Tutor2Deep: return "tutor2-deep";
    case Archetype::Tutor3Deep: return "tutor3-deep";
    case Archetype::Tutor4Deep: return "tutor4-deep";
    case Archetype::ErrorHeavy: return "error-heavy";
    case Archetype::Custom: return "custom";
  }
  return "unknown";
}

std::optional<Archetype> archetype_from_string(std::string_view name) {
  static constexpr std::pair<std::string_view, Archetype> kCamel[] = {
      {"IdealSuperficial", Archetype::IdealSuperficial},
      {"IdealDeep", Archetype::IdealDeep},
      {"IdealLiver", Archetype::IdealLiver},
      {"Tutor1Deep", Archetype::Tutor1Deep},
      {"Tutor2Deep", Archetype::Tutor2Deep},
      {"Tutor3Deep", Archetype::Tutor3Deep},
      {"Tutor4Deep", Archetype::Tutor4Deep},
      {"ErrorHeavy", Archetype::ErrorHeavy},
      {"Custom", Archetype::Custom},
  };
  for (const auto& [camel, a] : kCamel) {
    if (name == camel || name == to_string(a)) return a;
  }
  return std::nullopt;
}

std::uint32_t SimProfile::total_presses() const {
  if (!presses.empty()) return static_cast<std::uint32_t>(presses.size());
  std::uint32_t n = 0;
  for (auto c : press_count) n += c;
  return n;
}

SimProfile profile_for(Archetype archetype, TaskKind task) {
  SimProfile p;
  p.archetype = archetype;
  p.quartet = PerSensor<ForceQuartet>(ForceQuartet::Q2);
  switch (archetype) {
    case Archetype::IdealSuperficial:
      set_fingertips(p, 4, ForceQuartet::Q2);
      p.press_count[SensorId::S1] = 1;
      p.press_count[SensorId::B1] = 1;
      p.quartet[SensorId::S1] = ForceQuartet::Q1;
      p.quartet[SensorId::B1] = ForceQuartet::Q1;
      break;
    case Archetype::IdealDeep:
      set_fingertips(p, 4, ForceQuartet::Q3);
      p.press_count[SensorId::S1] = 1;
      p.press_count[SensorId::B1] = 1;
      p.quartet[SensorId::S1] = ForceQuartet::Q4;
      p.quartet[SensorId::B1] = ForceQuartet::Q4;
      break;
    case Archetype::IdealLiver:
      for (SensorId id : kLiverFocusSensors) {
        p.press_count[id] = 3;
        p.quartet[id] = ForceQuartet::Q3;
      }
      p.press_count[SensorId::T2] = 1;
      p.press_count[SensorId::T3] = 1;
      break;
    case Archetype::Tutor1Deep:
      set_fingertips(p, 2, ForceQuartet::Q4);
      p.press_min_ms = 1600;
      p.press_max_ms = 2000;
      p.gap_min_ms = 600;
      p.gap_max_ms = 800;
      break;
    case Archetype::Tutor2Deep:
      set_fingertips(p, 7, ForceQuartet::Q3);
      p.press_min_ms = 600;
      p.press_max_ms = 800;
      break;
    case Archetype::Tutor3Deep:
      set_fingertips(p, 4, ForceQuartet::Q4);
      p.quartet[SensorId::T2] = ForceQuartet::Q3;
      p.press_min_ms = 400;
      p.press_max_ms = 520;
      p.gap_min_ms = 160;
      p.gap_max_ms = 240;
      break;
    case Archetype::Tutor4Deep:
      set_fingertips(p, 3, ForceQuartet::Q2);
      p.press_min_ms = 400;
      p.press_max_ms = 480;
      p.gap_min_ms = 160;
      p.gap_max_ms = 240;
      break;
    case Archetype::ErrorHeavy: {
      const ForceQuartet q = task == TaskKind::Deep ? ForceQuartet::Q3 : ForceQuartet::Q2;
      set_fingertips(p, 3, q);
      for (SensorId id : kErrorSensors) p.quartet[id] = q;
      p.press_count[SensorId::E1] = 3;
      p.press_count[SensorId::E2] = 3;
      p.press_count[SensorId::E3] = 1;
      break;
    }
    case Archetype::Custom:
      break;
  }
  return p;
}

std::vector<ScheduledPress> schedule_presses(const SimProfile& profile, std::uint64_t seed) {
  if (profile.press_min_ms > profile.press_max_ms || profile.gap_min_ms > profile.gap_max_ms) {
    throw Error(ErrorCode::InfeasibleProfile, "duration ranges are inverted");
  }
  if (profile.noise_max >= 25) {
    throw Error(ErrorCode::InfeasibleProfile, "noise must stay below the release threshold");
  }
  Rng rng(seed);
  std::vector<PlannedPress> plan = profile.presses;
  if (plan.empty()) {
    // Round-robin over sensors so each sensor's presses spread over the session.
    PerSensor<std::uint32_t> left = profile.press_count;
    bool any = true;
    while (any) {
      any = false;
      for (SensorId id : kAllSensors) {
        if (left[id] == 0) continue;
        --left[id];
        any = true;
        const Band band = band_for(profile.quartet[id]);
        PlannedPress p;
        p.sensor = id;
        p.duration_ms = pick_step(rng, profile.press_min_ms, profile.press_max_ms, 40);
        p.peak_raw = static_cast<std::uint16_t>(rng.between(band.lo, band.hi));
        p.gap_after_ms = pick_step(rng, profile.gap_min_ms, profile.gap_max_ms, kFramePeriodMs);
        plan.push_back(p);
      }
    }
  }

  std::vector<ScheduledPress> out;
  out.reserve(plan.size());
  std::uint32_t t = profile.lead_in_ms;
  for (const PlannedPress& p : plan) {
    check_press(p);
    out.push_back({p, t});
    t += p.duration_ms + p.gap_after_ms;
  }
  if (profile.session_length_ms != 0 && t > profile.session_length_ms) {
    throw Error(ErrorCode::InfeasibleProfile,
                std::to_string(plan.size()) + " presses need " + std::to_string(t) +
                    " ms but the session is " + std::to_string(profile.session_length_ms) +
                    " ms long");
  }
  return out;
}

Session generate_session(const SimProfile& profile, TaskKind task, std::uint64_t seed) {
  const std::vector<ScheduledPress> schedule = schedule_presses(profile, seed);
  std::uint32_t end = profile.lead_in_ms;
  for (const auto& s : schedule) {
    end = std::max(end, s.onset_ms + s.press.duration_ms + s.press.gap_after_ms);
  }
  end = std::max(end, profile.session_length_ms);
  end += kFramePeriodMs - end % kFramePeriodMs;

  Session session;
  session.info.session_id = std::string(to_string(profile.archetype)) + "-" +
                            std::string(to_string(task)) + "-" + std::to_string(seed);
  session.info.participant_id = "sim";
  session.info.cohort = (profile.archetype >= Archetype::Tutor1Deep &&
                         profile.archetype <= Archetype::Tutor4Deep)
                            ? Cohort::Expert
                            : Cohort::CT;
  session.info.task = task;
  session.info.patient_ref = "sim-patient";
  session.info.sample_rate_hz = 1000.0 / kFramePeriodMs;

  Rng noise(seed ^ 0x9E3779B97F4A7C15ULL);
  std::size_t next = 0;  // first press that may still be active
  std::uint32_t seq = 0;
  for (std::uint32_t t = 0; t <= end; t += kFramePeriodMs) {
    SensorFrame f;
    f.seq = seq++;
    f.timestamp_ms = t;
    std::array<bool, kSensorCount> active{};
    while (next < schedule.size() &&
           schedule[next].onset_ms + schedule[next].press.duration_ms < t) {
      ++next;
    }
    for (std::size_t k = next; k < schedule.size() && schedule[k].onset_ms < t; ++k) {
      const ScheduledPress& s = schedule[k];
      if (t >= s.onset_ms + s.press.duration_ms) continue;
      const double phase = std::numbers::pi * (t - s.onset_ms) / s.press.duration_ms;
      const auto v = static_cast<std::uint16_t>(std::lround(s.press.peak_raw * std::sin(phase)));
      const std::size_t ch = index_of(s.press.sensor);
      f.force_raw[ch] = std::max(f.force_raw[ch], v);
      active[ch] = true;
    }
    for (std::size_t ch = 0; ch < kSensorCount; ++ch) {
      const auto n = static_cast<std::uint16_t>(noise.between(0, profile.noise_max));
      if (!active[ch]) f.force_raw[ch] = n;
    }
    const double secs = t / 1000.0;
    f.orientation.roll_deg = round_centi(5.0 * std::sin(2.0 * std::numbers::pi * secs / 7.0));
    f.orientation.pitch_deg = round_centi(10.0 + 3.0 * std::sin(2.0 * std::numbers::pi * secs / 5.0));
    f.orientation.yaw_deg = round_centi(-2.0 + 1.5 * std::cos(2.0 * std::numbers::pi * secs / 9.0));
    session.frames.push_back(f);
  }
  return session;
}

std::size_t stream_session(const Session& session, double speed_factor, const FrameSink& sink,
                           const std::atomic<bool>* cancel) {
  using clock = std::chrono::steady_clock;
  if (session.frames.empty()) return 0;
  const auto start = clock::now();
  const std::uint32_t t0 = session.frames.front().timestamp_ms;
  std::size_t sent = 0;
  for (const SensorFrame& f : session.frames) {
    if (cancel != nullptr && cancel->load(std::memory_order_relaxed)) break;
    if (speed_factor > 0.0) {
      const auto due = start + std::chrono::duration_cast<clock::duration>(
                                   std::chrono::duration<double, std::milli>(
                                       (f.timestamp_ms - t0) * speed_factor));
      std::this_thread::sleep_until(due);
    }
    const wire::FrameBytes bytes = wire::encode_frame(f);
    sink(bytes);
    ++sent;
  }
  return sent;
}

std::string profile_to_json(const SimProfile& p) {
  json j = json::object();
  j["archetype"] = to_string(p.archetype);
  json counts = json::object();
  json quartets = json::object();
  for (SensorId id : kAllSensors) {
    if (p.press_count[id] == 0) continue;
    counts[std::string(to_string(id))] = p.press_count[id];
    quartets[std::string(to_string(id))] = to_string(p.quartet[id]);
  }
  j["press_count"] = std::move(counts);
  j["quartet"] = std::move(quartets);
  j["press_ms"] = {p.press_min_ms, p.press_max_ms};
  j["gap_ms"] = {p.gap_min_ms, p.gap_max_ms};
  j["lead_in_ms"] = p.lead_in_ms;
  j["session_length_ms"] = p.session_length_ms;
  j["noise_max"] = p.noise_max;
  if (!p.presses.empty()) {
    json presses = json::array();
    for (const auto& pp : p.presses) {
      presses.push_back({{"sensor", to_string(pp.sensor)},
                         {"peak_raw", pp.peak_raw},
                         {"duration_ms", pp.duration_ms},
                         {"gap_after_ms", pp.gap_after_ms}});
    }
    j["presses"] = std::move(presses);
  }
  return j.dump(2);
}

SimProfile profile_from_json(const std::string& text) {
  try {
    const json j = json::parse(text);
    SimProfile p;
    p.quartet = PerSensor<ForceQuartet>(ForceQuartet::Q2);
    if (j.contains("archetype")) {
      const auto a = archetype_from_string(j["archetype"].get<std::string>());
      if (!a) throw Error(ErrorCode::InvalidConfig, "unknown archetype");
      p.archetype = *a;
    }
    auto sensor = [](const std::string& name) {
      const auto id = sensor_from_string(name);
      if (!id) throw Error(ErrorCode::InvalidConfig, "unknown sensor " + name);
      return *id;
    };
    if (j.contains("press_count")) {
      for (const auto& [name, v] : j["press_count"].items()) {
        p.press_count[sensor(name)] = v.get<std::uint32_t>();
      }
    }
    if (j.contains("quartet")) {
      for (const auto& [name, v] : j["quartet"].items()) {
        const auto q = quartet_from_string(v.get<std::string>());
        if (!q) throw Error(ErrorCode::InvalidConfig, "unknown quartet " + v.dump());
        p.quartet[sensor(name)] = *q;
      }
    }
    if (j.contains("press_ms")) {
      p.press_min_ms = j["press_ms"].at(0).get<std::uint32_t>();
      p.press_max_ms = j["press_ms"].at(1).get<std::uint32_t>();
    }
    if (j.contains("gap_ms")) {
      p.gap_min_ms = j["gap_ms"].at(0).get<std::uint32_t>();
      p.gap_max_ms = j["gap_ms"].at(1).get<std::uint32_t>();
    }
    p.lead_in_ms = j.value("lead_in_ms", p.lead_in_ms);
    p.session_length_ms = j.value("session_length_ms", p.session_length_ms);
    p.noise_max = j.value("noise_max", p.noise_max);
    if (j.contains("presses")) {
      for (const auto& jp : j["presses"]) {
        PlannedPress pp;
        pp.sensor = sensor(jp.at("sensor").get<std::string>());
        pp.peak_raw = jp.at("peak_raw").get<std::uint16_t>();
        pp.duration_ms = jp.at("duration_ms").get<std::uint32_t>();
        pp.gap_after_ms = jp.value("gap_after_ms", 300u);
        p.presses.push_back(pp);
      }
    }
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::InvalidConfig, std::string("simulator profile: ") + e.what());
  }
}

}  // namespace palp::sim
