#pragma once

#include <filesystem>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <string>

#include "palp/telemetry.hpp"

namespace palp {

// Line-delimited session records (".palp.jsonl"): one header object, then one
// object per frame {seq, t_ms, f:[12], rpy:[3]} with optional "flags" and
// "markers" keys. Frames are appended one line at a time, so a reader can
// stream a file without loading it whole.
inline constexpr const char* kSessionFormatTag = "palp-session";
inline constexpr int kSessionSchemaVersion = 1;
inline constexpr const char* kSessionFileExtension = ".palp.jsonl";

std::string session_header_line(const SessionInfo& info);
std::string session_frame_line(const SensorFrame& frame);

void write_session(std::ostream& out, const Session& session);
void write_session(const std::filesystem::path& path, const Session& session);

// Appends frames as they arrive; used by the live recorder.
class SessionWriter {
 public:
  SessionWriter(const std::filesystem::path& path, const SessionInfo& info);
  void append(const SensorFrame& frame);
  void flush();

 private:
  std::ofstream out_;
};

// Streaming reader. The header is parsed on construction; ParseError carries
// the 1-based line number of the offending record.
class SessionReader {
 public:
  explicit SessionReader(std::istream& in);

  const SessionInfo& info() const noexcept { return info_; }
  std::optional<SensorFrame> next();

 private:
  std::istream& in_;
  SessionInfo info_;
  std::size_t line_ = 0;
};

Session read_session(std::istream& in);
Session read_session(const std::filesystem::path& path);

}  // namespace palp
