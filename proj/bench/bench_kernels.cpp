// Serial vs OpenMP timings for the two parallel kernels:
//   segment_session   one task per sensor
//   assess_many       one iteration per participant
//
// usage: palp_bench [participants] [repeats]

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <vector>

#include <omp.h>

#include "palp/assessment.hpp"
#include "palp/segmentation.hpp"
#include "palp/simulator.hpp"

namespace {

using Clock = std::chrono::steady_clock;

template <typename F>
double median_ms(int repeats, F&& f) {
  std::vector<double> ms;
  for (int i = 0; i < repeats; ++i) {
    const auto t0 = Clock::now();
    f();
    ms.push_back(std::chrono::duration<double, std::milli>(Clock::now() - t0).count());
  }
  std::sort(ms.begin(), ms.end());
  return ms[ms.size() / 2];
}

// A five-minute, 50 Hz deep-palpation recording.
palp::Session long_session(std::uint64_t seed) {
  auto profile = palp::sim::profile_for(palp::sim::Archetype::Tutor2Deep, palp::TaskKind::Deep);
  profile.session_length_ms = 300'000;
  return palp::sim::generate_session(profile, palp::TaskKind::Deep, seed);
}

std::vector<palp::Session> participant(std::uint64_t seed) {
  using palp::sim::Archetype;
  using palp::TaskKind;
  return {
      palp::sim::generate_session(palp::sim::profile_for(Archetype::IdealSuperficial, TaskKind::Superficial),
                                  TaskKind::Superficial, seed),
      palp::sim::generate_session(palp::sim::profile_for(Archetype::IdealDeep, TaskKind::Deep),
                                  TaskKind::Deep, seed),
      palp::sim::generate_session(palp::sim::profile_for(Archetype::IdealLiver, TaskKind::Liver),
                                  TaskKind::Liver, seed),
  };
}

}  // namespace

int main(int argc, char** argv) {
  const int participants = argc > 1 ? std::atoi(argv[1]) : 64;
  const int repeats = argc > 2 ? std::atoi(argv[2]) : 5;
  const palp::AssessmentConfig cfg;

  std::printf("threads: %d\n", omp_get_max_threads());
  std::printf("%-28s %12s %12s %8s\n", "kernel", "serial ms", "openmp ms", "speedup");

  const palp::Session s = long_session(1);
  const double seg_serial = median_ms(repeats, [&] {
    volatile auto n = palp::segment_session_serial(s, cfg.segmentation).per_sensor[palp::SensorId::T1].size();
    (void)n;
  });
  const double seg_omp = median_ms(repeats, [&] {
    volatile auto n = palp::segment_session(s, cfg.segmentation).per_sensor[palp::SensorId::T1].size();
    (void)n;
  });
  std::printf("%-28s %12.2f %12.2f %8.2f\n", "segment_session (15k frames)", seg_serial, seg_omp,
              seg_serial / seg_omp);

  std::vector<std::vector<palp::Session>> batch;
  for (int i = 0; i < participants; ++i) batch.push_back(participant(static_cast<std::uint64_t>(i)));
  const double many_serial = median_ms(repeats, [&] {
    volatile auto n = palp::assess_many_serial(batch, cfg).size();
    (void)n;
  });
  const double many_omp = median_ms(repeats, [&] {
    volatile auto n = palp::assess_many(batch, cfg).size();
    (void)n;
  });
  char label[64];
  std::snprintf(label, sizeof label, "assess_many (%d x 3 tasks)", participants);
  std::printf("%-28s %12.2f %12.2f %8.2f\n", label, many_serial, many_omp, many_serial / many_omp);

  // The parallel and serial kernels must agree.
  const auto a = palp::assess_many_serial(batch, cfg);
  const auto b = palp::assess_many(batch, cfg);
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].report != b[i].report) {
      std::printf("MISMATCH at participant %zu\n", i);
      return 1;
    }
  }
  return 0;
}
