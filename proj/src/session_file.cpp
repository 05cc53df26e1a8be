#include "palp/session_file.hpp"

#include <json.hpp>

#include "palp/error.hpp"

namespace palp {

using nlohmann::json;

namespace {

SessionInfo parse_header(const std::string& line) {
  json h;
  try {
    h = json::parse(line);
  } catch (const json::exception& e) {
    throw ParseError(1, std::string("malformed header: ") + e.what());
  }
  if (!h.is_object() || h.value("format", "") != kSessionFormatTag) {
    throw ParseError(1, "not a palp session file");
  }
  if (!h.contains("version") || !h["version"].is_number_integer()) {
    throw ParseError(1, "header lacks an integer version");
  }
  if (h["version"].get<int>() != kSessionSchemaVersion) {
    throw Error(ErrorCode::SchemaVersionMismatch,
                "session schema version " + h["version"].dump() +
                    " is not supported (expected " +
                    std::to_string(kSessionSchemaVersion) + ")");
  }
  try {
    SessionInfo info;
    info.session_id = h.at("session_id").get<std::string>();
    info.participant_id = h.at("participant_id").get<std::string>();
    const auto cohort = cohort_from_string(h.at("cohort").get<std::string>());
    const auto task = task_from_string(h.at("task").get<std::string>());
    if (!cohort) throw ParseError(1, "unknown cohort");
    if (!task) throw ParseError(1, "unknown task");
    info.cohort = *cohort;
    info.task = *task;
    info.patient_ref = h.at("patient_ref").get<std::string>();
    info.sample_rate_hz = h.at("sample_rate_hz").get<double>();
    return info;
  } catch (const json::exception& e) {
    throw ParseError(1, std::string("bad header field: ") + e.what());
  }
}

SensorFrame parse_frame(const std::string& line, std::size_t line_no) {
  try {
    const json r = json::parse(line);
    SensorFrame f;
    f.seq = r.at("seq").get<std::uint32_t>();
    f.timestamp_ms = r.at("t_ms").get<std::uint32_t>();
    const auto& forces = r.at("f");
    if (!forces.is_array() || forces.size() != kSensorCount) {
      throw ParseError(line_no, "expected 12 force values");
    }
    for (std::size_t i = 0; i < kSensorCount; ++i) {
      const int v = forces[i].get<int>();
      if (v < 0 || v > kMaxRaw) throw ParseError(line_no, "force value out of range");
      f.force_raw[i] = static_cast<std::uint16_t>(v);
    }
    const auto& rpy = r.at("rpy");
    if (!rpy.is_array() || rpy.size() != 3) {
      throw ParseError(line_no, "expected 3 orientation values");
    }
    f.orientation = {rpy[0].get<double>(), rpy[1].get<double>(), rpy[2].get<double>()};
    if (r.contains("flags")) f.flags = r["flags"].get<std::uint8_t>();
    if (r.contains("markers")) {
      const auto& m = r["markers"];
      if (!m.is_array() || m.size() != 4) throw ParseError(line_no, "expected 4 markers");
      Markers markers;
      for (std::size_t i = 0; i < 4; ++i) {
        if (!m[i].is_array() || m[i].size() != 3) {
          throw ParseError(line_no, "marker must be [x, y, z]");
        }
        markers[i] = {m[i][0].get<double>(), m[i][1].get<double>(), m[i][2].get<double>()};
      }
      f.markers = markers;
    }
    return f;
  } catch (const json::exception& e) {
    throw ParseError(line_no, std::string("malformed frame record: ") + e.what());
  }
}

}  // namespace

std::string session_header_line(const SessionInfo& info) {
  json h = json::object();
  h["format"] = kSessionFormatTag;
  h["version"] = kSessionSchemaVersion;
  h["session_id"] = info.session_id;
  h["participant_id"] = info.participant_id;
  h["cohort"] = to_string(info.cohort);
  h["task"] = to_string(info.task);
  h["patient_ref"] = info.patient_ref;
  h["sample_rate_hz"] = info.sample_rate_hz;
  return h.dump();
}

std::string session_frame_line(const SensorFrame& frame) {
  json r = json::object();
  r["seq"] = frame.seq;
  r["t_ms"] = frame.timestamp_ms;
  r["f"] = frame.force_raw;
  r["rpy"] = {frame.orientation.roll_deg, frame.orientation.pitch_deg,
              frame.orientation.yaw_deg};
  if (frame.flags != 0) r["flags"] = frame.flags;
  if (frame.markers) {
    json m = json::array();
    for (const auto& p : *frame.markers) m.push_back({p.x_mm, p.y_mm, p.z_mm});
    r["markers"] = std::move(m);
  }
  return r.dump();
}

void write_session(std::ostream& out, const Session& session) {
  out << session_header_line(session.info) << '\n';
  for (const auto& f : session.frames) out << session_frame_line(f) << '\n';
}

void write_session(const std::filesystem::path& path, const Session& session) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  write_session(out, session);
  if (!out) throw Error(ErrorCode::Io, "failed writing " + path.string());
}

SessionWriter::SessionWriter(const std::filesystem::path& path, const SessionInfo& info)
    : out_(path, std::ios::binary) {
  if (!out_) throw Error(ErrorCode::Io, "cannot open " + path.string() + " for writing");
  out_ << session_header_line(info) << '\n';
}

void SessionWriter::append(const SensorFrame& frame) {
  out_ << session_frame_line(frame) << '\n';
}

void SessionWriter::flush() { out_.flush(); }

SessionReader::SessionReader(std::istream& in) : in_(in) {
  std::string line;
  if (!std::getline(in_, line)) throw ParseError(1, "missing header record");
  line_ = 1;
  info_ = parse_header(line);
}

std::optional<SensorFrame> SessionReader::next() {
  std::string line;
  while (std::getline(in_, line)) {
    ++line_;
    if (line.empty()) continue;
    if (in_.eof()) {
      // The writer terminates every record with a newline; a final record
      // without one was cut short.
      throw ParseError(line_, "truncated record (missing newline)");
    }
    return parse_frame(line, line_);
  }
  return std::nullopt;
}

Session read_session(std::istream& in) {
  SessionReader reader(in);
  Session s;
  s.info = reader.info();
  while (auto f = reader.next()) s.frames.push_back(*f);
  return s;
}

Session read_session(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path.string());
  return read_session(in);
}

}  // namespace palp
