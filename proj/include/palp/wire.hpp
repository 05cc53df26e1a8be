#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "palp/telemetry.hpp"

namespace palp::wire {

// Fixed 42-byte little-endian frame:
//
//   offset  size  field
//        0     2  sync 0xA5 0x5A
//        2     1  version (1)
//        3     2  seq (low 16 bits of the frame counter)
//        5     4  timestamp_ms
//        9    24  force[12], u16, values above 1023 are invalid
//       33     6  roll, pitch, yaw as i16 centidegrees
//       39     1  flags
//       40     2  CRC-16/CCITT-FALSE over bytes [0, 40)
inline constexpr std::size_t kFrameSize = 42;
inline constexpr std::uint8_t kSync0 = 0xA5;
inline constexpr std::uint8_t kSync1 = 0x5A;
inline constexpr std::uint8_t kVersion = 1;

using FrameBytes = std::array<std::uint8_t, kFrameSize>;

// Poly 0x1021, init 0xFFFF, no reflection, no final xor.
std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data);
std::uint16_t crc16_ccitt_false(std::string_view text);

// Throws Error(FieldOutOfRange) for forces above 1023 or angles that do not
// fit an i16 in centidegrees. Angles are rounded to the nearest centidegree.
FrameBytes encode_frame(const SensorFrame& frame);

enum class DecodeStatus : std::uint8_t {
  Ok,
  BadSync,
  BadLength,
  BadCrc,
  BadVersion,
  BadField,  // CRC-valid frame with a force value above 1023
};

std::string_view to_string(DecodeStatus status);

struct DecodeResult {
  DecodeStatus status = DecodeStatus::BadLength;
  SensorFrame frame;

  bool ok() const noexcept { return status == DecodeStatus::Ok; }
};

// Decodes exactly one frame. The CRC is checked before sync and version so any
// single-bit corruption of a valid frame reports BadCrc. The decoded seq is the
// 16-bit wire value; markers are never present.
DecodeResult decode_frame(std::span<const std::uint8_t> bytes);

struct DecodeStats {
  std::uint64_t frames = 0;
  std::uint64_t skipped_bytes = 0;  // garbage discarded while hunting for sync
  std::uint64_t bad_sync = 0;       // runs of garbage
  std::uint64_t bad_crc = 0;
  std::uint64_t bad_version = 0;
  std::uint64_t bad_field = 0;

  std::uint64_t errors() const noexcept {
    return bad_sync + bad_crc + bad_version + bad_field;
  }
};

// Incremental single-consumer parser for a byte stream. Resynchronizes on the
// sync pattern after garbage or a rejected frame and unwraps the 16-bit wire
// sequence number into a monotonically increasing 32-bit counter.
class StreamDecoder {
 public:
  std::vector<SensorFrame> push(std::span<const std::uint8_t> bytes);

  const DecodeStats& stats() const noexcept { return stats_; }
  std::size_t buffered() const noexcept { return buffer_.size() - pos_; }

 private:
  std::uint32_t unwrap(std::uint32_t seq16);
  void compact();

  std::vector<std::uint8_t> buffer_;
  std::size_t pos_ = 0;
  bool in_garbage_ = false;
  bool have_seq_ = false;
  std::uint32_t last_seq16_ = 0;
  std::uint32_t seq_epoch_ = 0;
  DecodeStats stats_;
};

}  // namespace palp::wire
