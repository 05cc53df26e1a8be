#include <doctest.h>

#include <random>
#include <sstream>

#include "palp/error.hpp"
#include "palp/session_file.hpp"
#include "test_util.hpp"

using namespace palp;

namespace {

Session sample_session(std::size_t frames, std::uint64_t seed = 1) {
  Session s;
  s.info = {"s-1", "p-7", Cohort::SVT, TaskKind::Deep, "large-male", 50.0};
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> angle(-40.0, 40.0);
  for (std::size_t i = 0; i < frames; ++i) {
    auto f = palp::testing::random_wire_frame(rng);
    f.seq = static_cast<std::uint32_t>(i);
    f.timestamp_ms = static_cast<std::uint32_t>(i * 20);
    f.orientation = {angle(rng), angle(rng), angle(rng)};  // arbitrary doubles
    s.frames.push_back(f);
  }
  return s;
}

Session read_back(const std::string& text) {
  std::istringstream in(text);
  return read_session(in);
}

std::string written(const Session& s) {
  std::ostringstream out;
  write_session(out, s);
  return out.str();
}

}  // namespace

TEST_CASE("empty session is a header line only") {
  const Session s = sample_session(0);
  const std::string text = written(s);
  CHECK(std::count(text.begin(), text.end(), '\n') == 1);
  CHECK(text.find("\"format\":\"palp-session\"") != std::string::npos);
  CHECK(read_back(text) == s);
}

TEST_CASE("round trip preserves frames exactly") {
  for (std::size_t n : {1u, 3u, 250u}) {
    const Session s = sample_session(n, n);
    CHECK(read_back(written(s)) == s);
  }
}

TEST_CASE("markers and flags survive") {
  Session s = sample_session(2);
  s.frames[0].markers = Markers{{{1, 2, 3}, {4, 5, 6}, {7, 8, 9}, {-1.5, 0, 2.25}}};
  s.frames[0].flags = 3;
  s.frames[1].flags = 0;
  const std::string text = written(s);
  CHECK(read_back(text) == s);
  // flags are omitted when zero
  const auto last = text.substr(text.rfind('{'));
  CHECK(last.find("flags") == std::string::npos);
}

TEST_CASE("frame record keys") {
  SensorFrame f;
  f.seq = 4;
  f.timestamp_ms = 80;
  f.force_raw[0] = 500;
  const std::string line = session_frame_line(f);
  CHECK(line == R"({"f":[500,0,0,0,0,0,0,0,0,0,0,0],"rpy":[0.0,0.0,0.0],"seq":4,"t_ms":80})");
}

TEST_CASE("truncated last line names its line number") {
  const Session s = sample_session(3);
  std::string text = written(s);
  text.resize(text.size() - 10);  // cut into the third frame record (line 4)
  try {
    read_back(text);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 4);
    CHECK(std::string(e.what()).find("line 4") != std::string::npos);
  }
}

TEST_CASE("final record without newline is rejected") {
  const Session s = sample_session(2);
  std::string text = written(s);
  text.pop_back();
  CHECK_THROWS_AS(read_back(text), ParseError);
}

TEST_CASE("malformed records") {
  const std::string header = session_header_line(sample_session(0).info) + "\n";
  CHECK_THROWS_AS(read_back(""), ParseError);
  CHECK_THROWS_AS(read_back("{\"format\":\"other\",\"version\":1}\n"), ParseError);
  CHECK_THROWS_AS(read_back(header + "{\"seq\":0}\n"), ParseError);
  CHECK_THROWS_AS(
      read_back(header + R"({"seq":0,"t_ms":0,"f":[1,2,3],"rpy":[0,0,0]})" + "\n"), ParseError);
  CHECK_THROWS_AS(
      read_back(header + R"({"seq":0,"t_ms":0,"f":[1024,0,0,0,0,0,0,0,0,0,0,0],"rpy":[0,0,0]})" +
                "\n"),
      ParseError);
  try {
    read_back(header + R"({"seq":0,"t_ms":0,"f":[0,0,0,0,0,0,0,0,0,0,0,0],"rpy":[0,0,0]})" +
              "\nnot json\n");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 3);
  }
}

TEST_CASE("unknown schema version") {
  std::string header = session_header_line(sample_session(0).info);
  header.replace(header.find("\"version\":1"), 11, "\"version\":2");
  try {
    read_back(header + "\n");
    FAIL("expected SchemaVersionMismatch");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::SchemaVersionMismatch);
  }
}

TEST_CASE("streaming reader yields frames one at a time") {
  const Session s = sample_session(5);
  std::istringstream in(written(s));
  SessionReader reader(in);
  CHECK(reader.info() == s.info);
  std::size_t n = 0;
  while (auto f = reader.next()) {
    CHECK(*f == s.frames[n]);
    ++n;
  }
  CHECK(n == 5);
}

TEST_CASE("file writer appends records") {
  palp::testing::TempDir dir;
  const Session s = sample_session(4);
  const auto path = dir / "live.palp.jsonl";
  {
    SessionWriter w(path, s.info);
    for (const auto& f : s.frames) w.append(f);
  }
  CHECK(read_session(path) == s);
  const auto whole = dir / "whole.palp.jsonl";
  write_session(whole, s);
  CHECK(read_session(whole) == s);
  CHECK_THROWS_AS(read_session(dir / "missing.palp.jsonl"), Error);
}
