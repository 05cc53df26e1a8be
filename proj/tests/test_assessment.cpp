#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "palp/assessment.hpp"
#include "palp/error.hpp"
#include "palp/report.hpp"
#include "test_util.hpp"

using namespace palp;
using palp::testing::ideal_triplet;

namespace {

ContributionMap shares(std::initializer_list<std::pair<SensorId, double>> values) {
  ContributionMap c;
  for (auto [id, v] : values) c.percent[id] = v;
  c.total = 100;
  return c;
}

PressEvent event(SensorId sensor, std::uint32_t onset, std::uint16_t peak) {
  PressEvent e;
  e.sensor = sensor;
  e.onset_ms = onset;
  e.release_ms = onset + 300;
  e.duration_ms = 300;
  e.peak_raw = peak;
  e.peak_quartet = classify_force_level(peak);
  e.samples = 16;
  e.raw_sum = 16ull * peak / 2;
  return e;
}

// One press per listed sensor, 500 ms apart, all at the given peak.
std::vector<PressEvent> presses(std::initializer_list<std::pair<SensorId, int>> counts,
                                std::uint16_t peak) {
  std::vector<PressEvent> out;
  std::uint32_t t = 0;
  for (auto [id, n] : counts) {
    for (int i = 0; i < n; ++i, t += 500) out.push_back(event(id, t, peak));
  }
  return out;
}

SegmentedTask task_of(TaskKind k, std::vector<PressEvent> events) {
  SegmentedTask t;
  t.info.session_id = std::string(to_string(k));
  t.info.participant_id = "p";
  t.info.task = k;
  t.frame_count = 100;
  std::sort(events.begin(), events.end(), [](const PressEvent& a, const PressEvent& b) {
    return a.onset_ms != b.onset_ms ? a.onset_ms < b.onset_ms : a.sensor < b.sensor;
  });
  t.events = std::move(events);
  return t;
}

std::vector<SegmentedTask> clean_tasks() {
  return {
      task_of(TaskKind::Superficial, presses({{SensorId::T1, 3}, {SensorId::T2, 3}, {SensorId::T3, 3}}, 200)),
      task_of(TaskKind::Deep, presses({{SensorId::T1, 3}, {SensorId::T2, 3}, {SensorId::T3, 3}}, 500)),
      task_of(TaskKind::Liver, presses({{SensorId::S1, 3}, {SensorId::T1, 2}, {SensorId::B2, 2}}, 350)),
  };
}

double wrong_use_points(const ContributionMap& c) {
  return criterion_wrong_use(c, TaskKind::Deep).points;
}

ContributionMap contributions_of(const std::vector<PressEvent>& ev) {
  return sensor_contributions(press_stats(ev));
}

}  // namespace

TEST_CASE("contributions from press counts") {
  PressStats s;
  s.counts[SensorId::T1] = 5;
  s.total = 5;
  auto c = sensor_contributions(s);
  CHECK(c[SensorId::T1] == 100.0);
  CHECK(c[SensorId::T2] == 0.0);

  s.counts[SensorId::T2] = 5;
  s.counts[SensorId::T3] = 10;
  s.total = 20;
  c = sensor_contributions(s);
  CHECK(c[SensorId::T1] == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(c[SensorId::T2] == doctest::Approx(25.0).epsilon(1e-12));
  CHECK(c[SensorId::T3] == doctest::Approx(50.0).epsilon(1e-12));

  PressStats u;
  for (SensorId id : kAllSensors) u.counts[id] = 7;
  u.total = 84;
  c = sensor_contributions(u);
  for (SensorId id : kAllSensors) CHECK(std::abs(c[id] - 100.0 / 12.0) < 1e-12);

  try {
    sensor_contributions(PressStats{});
    FAIL("expected EmptySession");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySession);
  }
}

TEST_CASE("contributions sum to 100") {
  std::mt19937_64 rng(3);
  std::uniform_int_distribution<std::uint32_t> n(0, 40);
  for (int trial = 0; trial < 500; ++trial) {
    PressStats s;
    for (SensorId id : kAllSensors) {
      s.counts[id] = n(rng);
      s.total += s.counts[id];
    }
    if (s.total == 0) continue;
    const auto c = sensor_contributions(s);
    double sum = 0.0;
    for (SensorId id : kAllSensors) sum += c[id];
    CHECK(std::abs(sum - 100.0) <= 1e-9);
  }
}

TEST_CASE("wrong use") {
  auto s = criterion_wrong_use(shares({{SensorId::E1, 15}, {SensorId::E2, 4}}), TaskKind::Deep);
  CHECK(std::abs(s.points - 10.0) <= 1e-9);
  CHECK_FALSE(s.violation);

  s = criterion_wrong_use(shares({{SensorId::E1, 12}, {SensorId::E2, 8}, {SensorId::E3, 10}}),
                          TaskKind::Deep);
  CHECK(std::abs(s.points - 10.0) <= 1e-9);
  CHECK_FALSE(s.violation);

  s = criterion_wrong_use(shares({{SensorId::E1, 35}}), TaskKind::Deep);
  CHECK(std::abs(s.points - 0.0) <= 1e-9);
  REQUIRE(s.violation);
  CHECK(s.violation->magnitude == doctest::Approx(15.0));

  s = criterion_wrong_use(shares({{SensorId::E1, 22}, {SensorId::E3, 13}}), TaskKind::Superficial);
  CHECK(s.points == doctest::Approx(10.0 - 2.0 - 3.0));
  CHECK(s.violation->description.find("thenar") != std::string::npos);
  CHECK(s.violation->description.find("hypothenar") != std::string::npos);
}

TEST_CASE("wrong use boundaries reconstructed from counts") {
  // 1 of 5 presses on the thenar pair and 1 of 10 on E3 land exactly on the limits.
  auto c = contributions_of(presses({{SensorId::E1, 1}, {SensorId::T1, 4}}, 300));
  CHECK(wrong_use_points(c) == 10.0);
  c = contributions_of(presses({{SensorId::E3, 1}, {SensorId::T1, 9}}, 300));
  CHECK(wrong_use_points(c) == 10.0);
  c = contributions_of(presses({{SensorId::E1, 1}, {SensorId::E2, 1}, {SensorId::E3, 1}, {SensorId::T1, 7}}, 300));
  CHECK(wrong_use_points(c) == 10.0);
}

TEST_CASE("correct use, fingertips") {
  auto s = criterion_correct_use(
      shares({{SensorId::T1, 40}, {SensorId::T2, 30}, {SensorId::T3, 20}}), TaskKind::Superficial);
  CHECK(std::abs(s.points - 10.0) <= 1e-9);

  s = criterion_correct_use(
      shares({{SensorId::T1, 60}, {SensorId::T2, 10}, {SensorId::T3, 10}}), TaskKind::Superficial);
  const double mu = 80.0 / 3.0;
  const double v = (60.0 - mu) - 20.0;
  CHECK(std::abs(s.points - std::max(0.0, 10.0 - v)) <= 1e-9);
  CHECK(s.points == 0.0);
  REQUIRE(s.violation);
  CHECK(std::abs(s.violation->magnitude - 40.0 / 3.0) <= 1e-9);

  // deviation of exactly 20 passes, 21 does not
  s = criterion_correct_use(shares({{SensorId::T1, 50}, {SensorId::T2, 20}, {SensorId::T3, 20}}),
                            TaskKind::Deep);
  CHECK(s.points == 10.0);
  s = criterion_correct_use(
      shares({{SensorId::T1, 51}, {SensorId::T2, 19.5}, {SensorId::T3, 19.5}}), TaskKind::Deep);
  CHECK(s.points == doctest::Approx(9.0));
}

TEST_CASE("correct use, liver focus") {
  auto s = criterion_correct_use(
      shares({{SensorId::S1, 20}, {SensorId::S2, 10}, {SensorId::T1, 15}, {SensorId::B1, 10}}),
      TaskKind::Liver);
  CHECK(std::abs(s.points - 10.0) <= 1e-9);

  s = criterion_correct_use(shares({{SensorId::S3, 30}, {SensorId::B1, 15}, {SensorId::T2, 55}}),
                            TaskKind::Liver);
  CHECK(std::abs(s.points - 5.0) <= 1e-9);
  CHECK(std::abs(s.violation->magnitude - 5.0) <= 1e-9);

  s = criterion_correct_use(shares({{SensorId::S1, 50}}), TaskKind::Liver);
  CHECK(s.points == 10.0);
  s = criterion_correct_use(shares({{SensorId::T2, 100}}), TaskKind::Liver);
  CHECK(s.points == 0.0);
}

TEST_CASE("fingertip symmetry") {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> share(0.0, 60.0);
  for (int trial = 0; trial < 300; ++trial) {
    std::array<double, 3> t{share(rng), share(rng), share(rng)};
    const auto base = criterion_correct_use(
        shares({{SensorId::T1, t[0]}, {SensorId::T2, t[1]}, {SensorId::T3, t[2]}}),
        TaskKind::Deep);
    std::sort(t.begin(), t.end());
    do {
      const auto p = criterion_correct_use(
          shares({{SensorId::T1, t[0]}, {SensorId::T2, t[1]}, {SensorId::T3, t[2]}}),
          TaskKind::Deep);
      CHECK(std::abs(p.points - base.points) <= 1e-9);
    } while (std::next_permutation(t.begin(), t.end()));
  }
}

TEST_CASE("force transition") {
  auto light = presses({{SensorId::T1, 4}, {SensorId::S2, 3}}, 200);
  CHECK(criterion_force_transition(light, TaskKind::Superficial).points == 10.0);
  CHECK_FALSE(criterion_force_transition(light, TaskKind::Superficial).violation);

  auto deep = presses({{SensorId::T1, 8}}, 480);
  auto soft = presses({{SensorId::T2, 2}}, 100);
  deep.insert(deep.end(), soft.begin(), soft.end());
  auto s = criterion_force_transition(deep, TaskKind::Deep);
  CHECK(std::abs(s.points - 8.0) <= 1e-9);
  REQUIRE(s.violation);
  CHECK(s.violation->magnitude == doctest::Approx(20.0));

  const auto hard = presses({{SensorId::T1, 5}}, 700);
  CHECK(criterion_force_transition(hard, TaskKind::Superficial).points == 0.0);

  // error-sensor presses are not scored here
  auto mixed = presses({{SensorId::T1, 2}, {SensorId::E1, 5}}, 200);
  CHECK(criterion_force_transition(mixed, TaskKind::Superficial).points == 10.0);

  try {
    criterion_force_transition(light, TaskKind::Liver);
    FAIL("expected NotApplicable");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NotApplicable);
  }
  try {
    criterion_force_transition(presses({{SensorId::E2, 3}}, 200), TaskKind::Deep);
    FAIL("expected EmptySession");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySession);
  }
}

TEST_CASE("osce rating") {
  CHECK(osce_rating(30.0) == OsceRating::Excellent);
  CHECK(osce_rating(0.0) == OsceRating::Fail);
  CHECK(osce_rating(19.5) == OsceRating::Pass);
  CHECK(osce_rating(14.999) == OsceRating::Fail);
  CHECK(osce_rating(15.0) == OsceRating::Borderline);
  CHECK(osce_rating(18.0) == OsceRating::Pass);
  CHECK(osce_rating(22.0) == OsceRating::Good);
  CHECK(osce_rating(23.15) == OsceRating::Good);
  CHECK(osce_rating(26.0) == OsceRating::Excellent);
  CHECK_THROWS_AS(osce_rating(30.01), Error);
  CHECK_THROWS_AS(osce_rating(-0.5), Error);
  CHECK_THROWS_AS(osce_rating(std::nan("")), Error);

  OsceRating prev = OsceRating::Fail;
  for (int i = 0; i <= 3000; ++i) {
    const auto r = osce_rating(i / 100.0);
    CHECK(r >= prev);
    prev = r;
  }
  for (auto r : {OsceRating::Fail, OsceRating::Borderline, OsceRating::Pass, OsceRating::Good,
                 OsceRating::Excellent}) {
    CHECK(osce_from_string(to_string(r)) == r);
  }
  OsceThresholds bad;
  bad.pass = 10.0;
  CHECK_THROWS_AS(bad.validate(), Error);
}

TEST_CASE("penalty slope scales the deduction") {
  CHECK(penalized_points(3.0, 1.0) == 7.0);
  CHECK(penalized_points(3.0, 2.0) == 4.0);
  CHECK(penalized_points(30.0, 1.0) == 0.0);
  CHECK(penalized_points(0.0, 5.0) == 10.0);
  auto s = criterion_wrong_use(shares({{SensorId::E3, 12}}), TaskKind::Deep, 0.5);
  CHECK(s.points == doctest::Approx(9.0));
}

TEST_CASE("ideal simulator triplet scores full marks") {
  const auto r = assess(ideal_triplet(1), AssessmentConfig{});
  CHECK(r.total == 30.0);
  CHECK(r.osce == OsceRating::Excellent);
  CHECK(r.wrong_use == 10.0);
  CHECK(r.correct_use == 10.0);
  CHECK(r.force_transition == 10.0);
  REQUIRE(r.tasks.size() == 3);
  CHECK(r.tasks[0].scores.size() == 3);
  CHECK(r.tasks[1].scores.size() == 3);
  CHECK(r.tasks[2].scores.size() == 2);
  CHECK(r.participant_id == "p1");
  for (const auto& t : r.tasks) {
    for (const auto& s : t.scores) CHECK_FALSE(s.violation);
  }
}

TEST_CASE("liver task without focus presses") {
  auto tasks = clean_tasks();
  tasks[2] = task_of(TaskKind::Liver, presses({{SensorId::T2, 3}, {SensorId::B3, 2}}, 350));
  const auto r = assess_segmented(tasks, AssessmentConfig{});
  CHECK(r.task(TaskKind::Liver).score(Criterion::CorrectUse)->points == 0.0);
  CHECK(std::abs(r.correct_use - 20.0 / 3.0) <= 1e-9);
  CHECK(std::abs(r.total - (10.0 + 20.0 / 3.0 + 10.0)) <= 1e-9);
}

TEST_CASE("aggregation averages three tasks and two for force transition") {
  auto tasks = clean_tasks();
  CHECK(assess_segmented(tasks, AssessmentConfig{}).total == 30.0);
  // deep: 5 of 9 permitted presses too light
  tasks[1] = task_of(TaskKind::Deep, [] {
    auto ev = presses({{SensorId::T1, 3}, {SensorId::T2, 3}, {SensorId::T3, 3}}, 500);
    for (int i = 0; i < 5; ++i) {
      ev[static_cast<std::size_t>(i)].peak_raw = 200;
      ev[static_cast<std::size_t>(i)].peak_quartet = ForceQuartet::Q2;
    }
    return ev;
  }());
  const auto r = assess_segmented(tasks, AssessmentConfig{});
  const double deep_ft = 10.0 * 4.0 / 9.0;
  CHECK(std::abs(r.force_transition - (10.0 + deep_ft) / 2.0) <= 1e-9);
  CHECK(std::abs(r.total - (10.0 + 10.0 + (10.0 + deep_ft) / 2.0)) <= 1e-9);
  CHECK(r.osce == osce_rating(r.total));
}

TEST_CASE("task errors") {
  auto tasks = clean_tasks();
  auto check_code = [](std::span<const SegmentedTask> t, ErrorCode code, std::string_view word) {
    try {
      assess_segmented(t, AssessmentConfig{});
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.code() == code);
      CHECK(std::string(e.what()).find(word) != std::string::npos);
    }
  };
  check_code(std::span(tasks).first(2), ErrorCode::MissingTask, "liver");
  auto dup = tasks;
  dup.push_back(tasks[0]);
  check_code(dup, ErrorCode::DuplicateTask, "superficial");
  auto empty = tasks;
  empty[1].events.clear();
  check_code(empty, ErrorCode::EmptySession, "deep");
}

TEST_CASE("assessment is deterministic") {
  const auto a = assess(ideal_triplet(9), AssessmentConfig{});
  const auto b = assess(ideal_triplet(9), AssessmentConfig{});
  CHECK(a == b);
  CHECK(report_to_json(a) == report_to_json(b));
}

TEST_CASE("points and totals stay in range") {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> n(0, 6), peak(50, 900);
  for (int trial = 0; trial < 300; ++trial) {
    std::vector<SegmentedTask> tasks;
    for (TaskKind k : kAllTasks) {
      std::vector<PressEvent> ev;
      std::uint32_t t = 0;
      for (SensorId id : kAllSensors) {
        for (int i = n(rng); i > 0; --i, t += 500) {
          ev.push_back(event(id, t, static_cast<std::uint16_t>(peak(rng))));
        }
      }
      ev.push_back(event(SensorId::S1, t, 300));
      tasks.push_back(task_of(k, ev));
    }
    const auto r = assess_segmented(tasks, AssessmentConfig{});
    CHECK(r.total >= 0.0);
    CHECK(r.total <= 30.0);
    bool all_pass = true;
    for (const auto& ta : r.tasks) {
      for (const auto& s : ta.scores) {
        CHECK(s.points >= 0.0);
        CHECK(s.points <= 10.0);
        CHECK((s.points == 10.0) == !s.violation.has_value());
        all_pass = all_pass && !s.violation;
      }
    }
    CHECK((r.total == 30.0) == all_pass);
    CHECK(std::abs(r.total - (r.wrong_use + r.correct_use + r.force_transition)) <= 1e-12);
  }
}

TEST_CASE("thenar presses never raise wrong use while the E3 share is within bounds") {
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<std::uint32_t> n(0, 12);
  std::bernoulli_distribution pick(0.5);
  for (int trial = 0; trial < 2000; ++trial) {
    PressStats s;
    for (SensorId id : kAllSensors) {
      s.counts[id] = is_error_sensor(id) ? n(rng) / 3 : n(rng);
      s.total += s.counts[id];
    }
    if (s.total == 0) continue;
    const auto before = sensor_contributions(s);
    if (before[SensorId::E3] > kHypothenarMaxPercent) continue;
    s.counts[pick(rng) ? SensorId::E1 : SensorId::E2] += 1;
    s.total += 1;
    CHECK(wrong_use_points(sensor_contributions(s)) <= wrong_use_points(before));
  }
}

TEST_CASE("E3 presses never raise wrong use while the thenar share is within bounds") {
  std::mt19937_64 rng(22);
  std::uniform_int_distribution<std::uint32_t> n(0, 12);
  for (int trial = 0; trial < 2000; ++trial) {
    PressStats s;
    for (SensorId id : kAllSensors) {
      s.counts[id] = is_error_sensor(id) ? n(rng) / 3 : n(rng);
      s.total += s.counts[id];
    }
    if (s.total == 0) continue;
    const auto before = sensor_contributions(s);
    if (before[SensorId::E1] + before[SensorId::E2] > kThenarMaxPercent) continue;
    s.counts[SensorId::E3] += 1;
    s.total += 1;
    CHECK(wrong_use_points(sensor_contributions(s)) <= wrong_use_points(before));
  }
}

TEST_CASE("an error press can dilute a different failing error share") {
  // 3 of 10 on the thenar pair fail by 10 points; one E3 press brings it to 27.27%.
  auto before = contributions_of(presses({{SensorId::T1, 7}, {SensorId::E1, 3}}, 300));
  auto after = contributions_of(presses({{SensorId::T1, 7}, {SensorId::E1, 3}, {SensorId::E3, 1}}, 300));
  CHECK(wrong_use_points(before) == 0.0);
  CHECK(wrong_use_points(after) == doctest::Approx(10.0 - (300.0 / 11.0 - 20.0)));
  CHECK(wrong_use_points(after) > wrong_use_points(before));

  // 2 of 10 on E3 fail by 10 points; one thenar press brings E3 to 18.18%.
  before = contributions_of(presses({{SensorId::T1, 8}, {SensorId::E3, 2}}, 300));
  after = contributions_of(presses({{SensorId::T1, 8}, {SensorId::E3, 2}, {SensorId::E1, 1}}, 300));
  CHECK(wrong_use_points(before) == 0.0);
  CHECK(wrong_use_points(after) == doctest::Approx(10.0 - (200.0 / 11.0 - 10.0)));
}

TEST_CASE("an error press can shrink fingertip deviations and raise the total") {
  // Fingertips 6/2/2: T1 deviates 26.67 points. One E3 press scales every
  // share by 10/11, so the deviation drops to 24.24 while E3 stays at 9.09%.
  auto tasks = clean_tasks();
  tasks[0] = task_of(TaskKind::Superficial,
                     presses({{SensorId::T1, 6}, {SensorId::T2, 2}, {SensorId::T3, 2}}, 200));
  const auto before = assess_segmented(tasks, AssessmentConfig{});
  auto ev = tasks[0].events;
  ev.push_back(event(SensorId::E3, 100000, 200));
  tasks[0] = task_of(TaskKind::Superficial, ev);
  const auto after = assess_segmented(tasks, AssessmentConfig{});

  const double cu_before = 10.0 - (60.0 - 100.0 / 3.0 - 20.0);
  const double cu_after = 10.0 - ((600.0 - 1000.0 / 3.0) / 11.0 - 20.0);
  CHECK(before.task(TaskKind::Superficial).score(Criterion::CorrectUse)->points ==
        doctest::Approx(cu_before));
  CHECK(after.task(TaskKind::Superficial).score(Criterion::CorrectUse)->points ==
        doctest::Approx(cu_after));
  CHECK(after.task(TaskKind::Superficial).score(Criterion::WrongUse)->points == 10.0);
  CHECK(after.total > before.total);
}

TEST_CASE("parallel batch equals serial batch") {
  std::vector<std::vector<Session>> participants;
  for (int i = 0; i < 6; ++i) participants.push_back(ideal_triplet(100 + i, "p" + std::to_string(i)));
  participants.push_back({participants[0][0]});  // missing tasks
  const auto par = assess_many(participants, AssessmentConfig{});
  const auto ser = assess_many_serial(participants, AssessmentConfig{});
  REQUIRE(par.size() == ser.size());
  for (std::size_t i = 0; i < par.size(); ++i) {
    CHECK(par[i].report == ser[i].report);
    CHECK(par[i].error == ser[i].error);
  }
  CHECK(par.back().error.has_value());
  CHECK(par[0].report->total == 30.0);
}

TEST_CASE("calibrated assessments annotate presses above the safe threshold") {
  CalibrationTable table;
  table.set_fallback({{0, 0}, {600, 3.0}});
  SafetyContext safety{&table, kSmallFemaleSafeThresholdNewtons};
  auto tasks = clean_tasks();
  const auto r = assess_segmented(tasks, AssessmentConfig{}, safety);
  CHECK(r.provenance.calibrated);
  CHECK(r.task(TaskKind::Superficial).over_threshold.empty());  // 200 arb is 1.0 N
  CHECK(r.task(TaskKind::Deep).over_threshold.size() == 9);      // 500 arb is 2.5 N
  CHECK(r.task(TaskKind::Liver).over_threshold.size() == 7);     // 350 arb is 1.75 N
}
