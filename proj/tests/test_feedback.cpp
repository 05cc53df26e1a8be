#include <doctest.h>

#include <algorithm>
#include <chrono>
#include <map>
#include <mutex>
#include <thread>

#include "palp/error.hpp"
#include "palp/feedback.hpp"
#include "palp/report.hpp"
#include "palp/session_file.hpp"
#include "palp/wire.hpp"
#include "test_util.hpp"

using namespace palp;
using namespace palp::feedback;
using palp::testing::frame_at;

namespace {

SessionInfo info_for(const std::string& id, TaskKind task, const std::string& participant = "p1") {
  SessionInfo i;
  i.session_id = id;
  i.participant_id = participant;
  i.task = task;
  i.cohort = Cohort::VT;
  i.patient_ref = "actor-2";
  return i;
}

std::vector<MessagePtr> drain(Subscription& sub) {
  std::vector<MessagePtr> out;
  while (auto m = sub.try_pop()) out.push_back(*m);
  return out;
}

std::size_t count_kind(const std::vector<MessagePtr>& msgs, MessageKind k) {
  return static_cast<std::size_t>(
      std::count_if(msgs.begin(), msgs.end(), [k](const MessagePtr& m) { return m->kind == k; }));
}

void stream_into(FeedbackService& svc, const std::string& handle, const Session& s) {
  sim::stream_session(s, 0.0, [&](std::span<const std::uint8_t> b) { svc.ingest(handle, b); });
}

// Feeds the triplet, finalizes, and returns the live report plus handles.
CompetencyReport live_report(FeedbackService& svc, const std::vector<Session>& triplet) {
  std::vector<std::string> handles;
  for (const Session& s : triplet) {
    handles.push_back(svc.open_session(s.info));
    stream_into(svc, handles.back(), s);
  }
  return svc.finalize_participant(handles);
}

}  // namespace

TEST_CASE("a hard press turns the sensor red") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  const auto h = svc.open_session(info_for("s1", TaskKind::Deep));
  svc.ingest_frame(h, frame_at(0, 0, {{SensorId::T1, 500}}));
  const auto msgs = drain(*sub);
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0]->kind == MessageKind::TaskStarted);
  CHECK(msgs[1]->kind == MessageKind::Snapshot);
  const auto& snap = std::get<SnapshotPayload>(msgs[1]->payload);
  CHECK(snap.color[SensorId::T1] == FeedbackColor::Red);
  CHECK(snap.color[SensorId::T2] == FeedbackColor::Green);
  CHECK(snap.raw[SensorId::T1] == 500);

  const auto j = message_to_json(*msgs[1]);
  CHECK(j["type"] == "snapshot");
  CHECK(j["session_id"] == "s1");
  CHECK(j["sensors"]["T1"]["raw"] == 500);
  CHECK(j["sensors"]["T1"]["color"] == std::string(to_string(FeedbackColor::Red)));

  const auto live = svc.live_state(h);
  REQUIRE(live);
  CHECK(live->sensors[SensorId::T1].quartet == ForceQuartet::Q4);
  CHECK(live->frames == 1);
}

TEST_CASE("corrupted frames are counted and skipped") {
  FeedbackService svc;
  const auto h = svc.open_session(info_for("s1", TaskKind::Deep));
  std::vector<std::uint8_t> bytes;
  for (std::uint32_t i = 0; i < 3; ++i) {
    auto b = wire::encode_frame(frame_at(i, i * 20));
    if (i == 1) b[15] ^= 0x01;
    bytes.insert(bytes.end(), b.begin(), b.end());
  }
  const auto r = svc.ingest(h, bytes);
  CHECK(r.frames == 2);
  CHECK(r.codec_errors == 1);
  CHECK(svc.session(h)->frames == 2);
  CHECK(svc.session(h)->codec_errors == 1);
}

TEST_CASE("out-of-order frames are counted, not recorded") {
  FeedbackService svc;
  const auto h = svc.open_session(info_for("s1", TaskKind::Deep));
  svc.ingest_frame(h, frame_at(0, 100));
  const auto r = svc.ingest_frame(h, frame_at(1, 80));
  CHECK(r.frames == 0);
  CHECK(r.codec_errors == 1);
  svc.ingest_frame(h, frame_at(2, 120));
  CHECK(svc.finalize_task(h).frames.size() == 2);
}

TEST_CASE("one press yields exactly one press message") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  const auto h = svc.open_session(info_for("s1", TaskKind::Superficial));
  const std::uint16_t trace[] = {0, 0, 0, 80, 160, 200, 160, 80, 0, 0, 0, 0, 0, 0};
  std::uint32_t seq = 0;
  for (auto v : trace) svc.ingest_frame(h, frame_at(seq, seq * 20, {{SensorId::S2, v}})), ++seq;
  auto msgs = drain(*sub);
  CHECK(count_kind(msgs, MessageKind::PressCompleted) == 1);
  svc.finalize_task(h);
  msgs = drain(*sub);
  CHECK(count_kind(msgs, MessageKind::PressCompleted) == 0);
  CHECK(count_kind(msgs, MessageKind::TaskFinalized) == 1);
  const auto& task = std::get<TaskPayload>(msgs.back()->payload);
  CHECK(task.presses == 1);
  CHECK(task.frames == std::size(trace));
}

TEST_CASE("press still open at finalize is reported on finalize") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  const auto h = svc.open_session(info_for("s1", TaskKind::Superficial));
  for (std::uint32_t i = 0; i < 12; ++i) {
    svc.ingest_frame(h, frame_at(i, i * 20, {{SensorId::T1, static_cast<std::uint16_t>(i < 2 ? 0 : 300)}}));
  }
  CHECK(count_kind(drain(*sub), MessageKind::PressCompleted) == 0);
  svc.finalize_task(h);
  const auto msgs = drain(*sub);
  REQUIRE(count_kind(msgs, MessageKind::PressCompleted) == 1);
  const auto press = std::find_if(msgs.begin(), msgs.end(), [](const MessagePtr& m) {
    return m->kind == MessageKind::PressCompleted;
  });
  CHECK(std::get<PressPayload>((*press)->payload).press.release_ms == 220);
}

TEST_CASE("calibrated press messages carry newtons and the safety flag") {
  CalibrationTable cal;
  cal.set_fallback({{0, 0}, {600, 3.0}});
  ServiceOptions opts;
  opts.calibration = &cal;
  FeedbackService svc(opts);
  auto sub = svc.subscribe();
  const auto h = svc.open_session(info_for("s1", TaskKind::Deep));
  sim::SimProfile p;
  p.presses = {{SensorId::T1, 474, 400, 300}, {SensorId::T2, 250, 400, 300}};
  stream_into(svc, h, sim::generate_session(p, TaskKind::Deep, 1));
  svc.finalize_task(h);
  std::vector<PressPayload> presses;
  for (const auto& m : drain(*sub)) {
    if (m->kind == MessageKind::PressCompleted) presses.push_back(std::get<PressPayload>(m->payload));
  }
  REQUIRE(presses.size() == 2);
  CHECK(*presses[0].peak_newtons == doctest::Approx(2.37));
  CHECK(presses[0].over_safe_threshold);
  CHECK(*presses[1].peak_newtons == doctest::Approx(1.25));
  CHECK_FALSE(presses[1].over_safe_threshold);
}

TEST_CASE("session lifecycle errors") {
  FeedbackService svc;
  const auto h = svc.open_session(info_for("dup", TaskKind::Deep));
  try {
    svc.open_session(info_for("dup", TaskKind::Deep));
    FAIL("expected DuplicateSession");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::DuplicateSession);
  }
  try {
    svc.ingest_frame("nope", frame_at(0, 0));
    FAIL("expected UnknownSession");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::UnknownSession);
  }
  CHECK_THROWS_AS(svc.open_session(info_for("bad id/../x", TaskKind::Deep)), Error);
  CHECK_THROWS_AS(svc.open_session(info_for("", TaskKind::Deep)), Error);
  svc.finalize_task(h);
  CHECK_THROWS_AS(svc.ingest_frame(h, frame_at(0, 0)), Error);
  CHECK_FALSE(svc.session(h)->open);
  // a finished id may be reused
  CHECK_NOTHROW(svc.open_session(info_for("dup", TaskKind::Deep)));
}

TEST_CASE("empty task surfaces in the report message") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  auto triplet = palp::testing::ideal_triplet(2);
  std::vector<std::string> handles;
  for (const Session& s : triplet) handles.push_back(svc.open_session(s.info));
  stream_into(svc, handles[0], triplet[0]);
  stream_into(svc, handles[2], triplet[2]);
  svc.ingest_frame(handles[1], frame_at(0, 0));  // deep task: one idle frame
  try {
    svc.finalize_participant(handles);
    FAIL("expected EmptySession");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::EmptySession);
  }
  const auto msgs = drain(*sub);
  REQUIRE(msgs.back()->kind == MessageKind::Report);
  const auto& rep = std::get<ReportPayload>(msgs.back()->payload);
  CHECK_FALSE(rep.report);
  REQUIRE(rep.error);
  CHECK(rep.error->code == ErrorCode::EmptySession);
  CHECK(rep.error->message.find("deep") != std::string::npos);
  const auto j = message_to_json(*msgs.back());
  CHECK(j["error"]["code"] == "EmptySession");
  CHECK(j["report"].is_null());
  CHECK_FALSE(svc.report("p1"));
}

TEST_CASE("missing task") {
  FeedbackService svc;
  auto triplet = palp::testing::ideal_triplet(2);
  std::vector<std::string> handles;
  for (std::size_t i = 0; i < 2; ++i) {
    handles.push_back(svc.open_session(triplet[i].info));
    stream_into(svc, handles.back(), triplet[i]);
  }
  try {
    svc.finalize_participant(handles);
    FAIL("expected MissingTask");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::MissingTask);
  }
}

TEST_CASE("ideal triplet live report") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  const auto r = live_report(svc, palp::testing::ideal_triplet(4));
  CHECK(r.total == 30.0);
  CHECK(r.osce == OsceRating::Excellent);
  REQUIRE(svc.report("p1"));
  CHECK(*svc.report("p1") == r);
  const auto msgs = drain(*sub);
  CHECK(count_kind(msgs, MessageKind::TaskStarted) == 3);
  CHECK(count_kind(msgs, MessageKind::TaskFinalized) == 3);
  CHECK(count_kind(msgs, MessageKind::Report) == 1);
  CHECK(std::get<ReportPayload>(msgs.back()->payload).report->total == 30.0);
}

TEST_CASE("live ingestion matches batch assessment of the recording") {
  for (std::uint64_t seed : {1u, 8u}) {
    auto triplet = palp::testing::ideal_triplet(seed);
    triplet[1] = palp::testing::simulated(sim::Archetype::Tutor2Deep, TaskKind::Deep, seed);
    triplet[1].info.participant_id = "p1";
    triplet[2] = palp::testing::simulated(sim::Archetype::ErrorHeavy, TaskKind::Liver, seed);
    triplet[2].info.participant_id = "p1";

    palp::testing::TempDir dir;
    ServiceOptions opts;
    opts.record_dir = dir.path();
    FeedbackService svc(opts);
    const auto live = live_report(svc, triplet);

    std::vector<Session> recorded;
    for (const Session& s : triplet) {
      const auto summary = svc.session(s.info.session_id);
      REQUIRE(summary->recording);
      recorded.push_back(read_session(*summary->recording));
      CHECK(recorded.back() == s);
      CHECK(*svc.recorded(s.info.session_id) == s);
    }
    const auto batch = assess(recorded, AssessmentConfig{});
    CHECK(batch == live);
    CHECK(report_to_json(batch) == report_to_json(live));
  }
}

TEST_CASE("per-session message sequence numbers") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  const auto a = svc.open_session(info_for("a", TaskKind::Deep));
  const auto b = svc.open_session(info_for("b", TaskKind::Deep));
  for (std::uint32_t i = 0; i < 20; ++i) {
    svc.ingest_frame(a, frame_at(i, i * 20));
    svc.ingest_frame(b, frame_at(i, i * 20));
  }
  std::map<std::string, std::uint64_t> last;
  for (const auto& m : drain(*sub)) {
    if (last.count(m->session_id)) CHECK(m->seq == last[m->session_id] + 1);
    last[m->session_id] = m->seq;
  }
  CHECK(last.size() == 2);
}

TEST_CASE("snapshots are throttled by the session clock") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  const auto h = svc.open_session(info_for("s1", TaskKind::Deep));
  for (std::uint32_t i = 0; i < 100; ++i) svc.ingest_frame(h, frame_at(i, i * 20));  // 2 s at 50 Hz
  const auto msgs = drain(*sub);
  std::vector<std::uint32_t> times;
  for (const auto& m : msgs) {
    if (m->kind == MessageKind::Snapshot) times.push_back(std::get<SnapshotPayload>(m->payload).t_ms);
  }
  CHECK(times.size() == 34);  // t = 0, 60, 120, ... 1980
  for (std::size_t i = 1; i < times.size(); ++i) CHECK(times[i] - times[i - 1] >= 50);
}

TEST_CASE("session filters") {
  FeedbackService svc;
  auto only_a = svc.subscribe(std::string("a"));
  auto all = svc.subscribe();
  const auto a = svc.open_session(info_for("a", TaskKind::Deep));
  const auto b = svc.open_session(info_for("b", TaskKind::Deep));
  svc.ingest_frame(a, frame_at(0, 0));
  svc.ingest_frame(b, frame_at(0, 0));
  svc.publish_heartbeat();
  const auto got = drain(*only_a);
  CHECK(got.size() == 3);
  for (const auto& m : got) CHECK((m->session_id == "a" || m->kind == MessageKind::Heartbeat));
  CHECK(drain(*all).size() == 5);
  svc.unsubscribe(only_a);
  CHECK(only_a->closed());
  svc.ingest_frame(a, frame_at(1, 100));
  CHECK(only_a->size() == 0);
}

TEST_CASE("full queues drop snapshots only") {
  Subscription sub(4);
  auto msg = [](MessageKind k, std::uint64_t seq) {
    auto m = std::make_shared<FeedbackMessage>();
    m->kind = k;
    m->seq = seq;
    return MessagePtr(m);
  };
  for (std::uint64_t i = 0; i < 4; ++i) sub.push(msg(MessageKind::Snapshot, i));
  sub.push(msg(MessageKind::PressCompleted, 4));
  CHECK(sub.dropped() == 1);
  CHECK(sub.size() == 4);
  for (std::uint64_t i = 5; i < 9; ++i) sub.push(msg(MessageKind::PressCompleted, i));
  CHECK(sub.size() == 5);  // only press messages are left
  sub.push(msg(MessageKind::Snapshot, 9));
  CHECK(sub.dropped() == 5);
  std::vector<std::uint64_t> seqs;
  while (auto m = sub.try_pop()) {
    CHECK((*m)->kind == MessageKind::PressCompleted);
    seqs.push_back((*m)->seq);
  }
  CHECK(seqs == std::vector<std::uint64_t>{4, 5, 6, 7, 8});
}

TEST_CASE("slow subscribers keep every non-snapshot message") {
  ServiceOptions opts;
  opts.subscriber_capacity = 8;
  FeedbackService svc(opts);
  auto slow = svc.subscribe();
  const auto s = palp::testing::simulated(sim::Archetype::Tutor2Deep, TaskKind::Deep, 3);
  const auto h = svc.open_session(s.info);
  stream_into(svc, h, s);
  svc.finalize_task(h);
  const auto msgs = drain(*slow);
  CHECK(slow->dropped() > 0);
  CHECK(count_kind(msgs, MessageKind::PressCompleted) == 21);
  CHECK(count_kind(msgs, MessageKind::TaskStarted) == 1);
  CHECK(count_kind(msgs, MessageKind::TaskFinalized) == 1);
}

TEST_CASE("notify hook fires on push and pop wakes on close") {
  Subscription sub(2);
  int calls = 0;
  sub.set_notify([&] { ++calls; });
  auto m = std::make_shared<FeedbackMessage>();
  sub.push(m);
  CHECK(calls == 1);
  CHECK(sub.pop(std::chrono::milliseconds(10)).has_value());
  std::thread closer([&] {
    std::this_thread::sleep_for(std::chrono::milliseconds(20));
    sub.close();
  });
  const auto start = std::chrono::steady_clock::now();
  CHECK_FALSE(sub.pop(std::chrono::seconds(5)).has_value());
  CHECK(std::chrono::steady_clock::now() - start < std::chrono::seconds(2));
  closer.join();
}

TEST_CASE("frame to snapshot latency at 50 Hz") {
  FeedbackService svc;
  auto sub = svc.subscribe();
  sim::SimProfile p;
  p.presses = {{SensorId::T1, 300, 400, 300}, {SensorId::T2, 500, 400, 300}};
  p.session_length_ms = 2000;
  const Session s = sim::generate_session(p, TaskKind::Deep, 1);
  const auto h = svc.open_session(s.info);

  using Clock = std::chrono::steady_clock;
  std::mutex mu;
  std::map<std::uint32_t, Clock::time_point> sent;
  std::vector<double> latencies;
  std::atomic<bool> done{false};
  std::thread reader([&] {
    while (!done || sub->size() > 0) {
      auto m = sub->pop(std::chrono::milliseconds(20));
      if (!m || (*m)->kind != MessageKind::Snapshot) continue;
      const auto now = Clock::now();
      std::lock_guard lock(mu);
      const auto t = std::get<SnapshotPayload>((*m)->payload).t_ms;
      latencies.push_back(std::chrono::duration<double, std::milli>(now - sent.at(t)).count());
    }
  });
  std::size_t k = 0;
  sim::stream_session(s, 1.0, [&](std::span<const std::uint8_t> b) {
    {
      std::lock_guard lock(mu);
      sent[s.frames[k++].timestamp_ms] = Clock::now();
    }
    svc.ingest(h, b);
  });
  done = true;
  reader.join();
  REQUIRE(latencies.size() >= 20);
  CHECK(*std::max_element(latencies.begin(), latencies.end()) < 50.0);
}
