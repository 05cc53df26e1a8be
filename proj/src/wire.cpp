#include "palp/wire.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "palp/error.hpp"

namespace palp::wire {

namespace {

constexpr std::array<std::uint16_t, 256> make_crc_table() {
  std::array<std::uint16_t, 256> table{};
  for (std::uint32_t i = 0; i < 256; ++i) {
    std::uint16_t crc = static_cast<std::uint16_t>(i << 8);
    for (int bit = 0; bit < 8; ++bit) {
      crc = (crc & 0x8000) ? static_cast<std::uint16_t>((crc << 1) ^ 0x1021)
                           : static_cast<std::uint16_t>(crc << 1);
    }
    table[i] = crc;
  }
  return table;
}

constexpr auto kCrcTable = make_crc_table();

void put_u16(std::uint8_t* out, std::uint16_t v) {
  out[0] = static_cast<std::uint8_t>(v & 0xFF);
  out[1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32(std::uint8_t* out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint16_t get_u16(const std::uint8_t* in) {
  return static_cast<std::uint16_t>(in[0] | (in[1] << 8));
}

std::uint32_t get_u32(const std::uint8_t* in) {
  return static_cast<std::uint32_t>(in[0]) |
         (static_cast<std::uint32_t>(in[1]) << 8) |
         (static_cast<std::uint32_t>(in[2]) << 16) |
         (static_cast<std::uint32_t>(in[3]) << 24);
}

std::int16_t to_centidegrees(double deg, const char* name) {
  const double cd = std::round(deg * 100.0);
  if (!std::isfinite(cd) || cd < std::numeric_limits<std::int16_t>::min() ||
      cd > std::numeric_limits<std::int16_t>::max()) {
    throw Error(ErrorCode::FieldOutOfRange,
                std::string(name) + " does not fit the i16 centidegree range");
  }
  return static_cast<std::int16_t>(cd);
}

constexpr std::size_t kCrcOffset = kFrameSize - 2;

}  // namespace

std::uint16_t crc16_ccitt_false(std::span<const std::uint8_t> data) {
  std::uint16_t crc = 0xFFFF;
  for (std::uint8_t byte : data) {
    crc = static_cast<std::uint16_t>((crc << 8) ^ kCrcTable[((crc >> 8) ^ byte) & 0xFF]);
  }
  return crc;
}

std::uint16_t crc16_ccitt_false(std::string_view text) {
  return crc16_ccitt_false(std::span<const std::uint8_t>(
      reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

FrameBytes encode_frame(const SensorFrame& frame) {
  FrameBytes out{};
  out[0] = kSync0;
  out[1] = kSync1;
  out[2] = kVersion;
  put_u16(&out[3], static_cast<std::uint16_t>(frame.seq & 0xFFFF));
  put_u32(&out[5], frame.timestamp_ms);
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    if (frame.force_raw[i] > kMaxRaw) {
      throw Error(ErrorCode::FieldOutOfRange,
                  "force on " + std::string(to_string(kAllSensors[i])) +
                      " exceeds 1023");
    }
    put_u16(&out[9 + 2 * i], frame.force_raw[i]);
  }
  put_u16(&out[33], static_cast<std::uint16_t>(
                        to_centidegrees(frame.orientation.roll_deg, "roll")));
  put_u16(&out[35], static_cast<std::uint16_t>(
                        to_centidegrees(frame.orientation.pitch_deg, "pitch")));
  put_u16(&out[37], static_cast<std::uint16_t>(
                        to_centidegrees(frame.orientation.yaw_deg, "yaw")));
  out[39] = frame.flags;
  put_u16(&out[kCrcOffset],
          crc16_ccitt_false(std::span<const std::uint8_t>(out.data(), kCrcOffset)));
  return out;
}

std::string_view to_string(DecodeStatus status) {
  switch (status) {
    case DecodeStatus::Ok: return "Ok";
    case DecodeStatus::BadSync: return "BadSync";
    case DecodeStatus::BadLength: return "BadLength";
    case DecodeStatus::BadCrc: return "BadCrc";
    case DecodeStatus::BadVersion: return "BadVersion";
    case DecodeStatus::BadField: return "BadField";
  }
  return "Unknown";
}

DecodeResult decode_frame(std::span<const std::uint8_t> bytes) {
  DecodeResult r;
  if (bytes.size() != kFrameSize) {
    r.status = DecodeStatus::BadLength;
    return r;
  }
  const std::uint8_t* b = bytes.data();
  if (crc16_ccitt_false(bytes.first(kCrcOffset)) != get_u16(b + kCrcOffset)) {
    r.status = DecodeStatus::BadCrc;
    return r;
  }
  if (b[0] != kSync0 || b[1] != kSync1) {
    r.status = DecodeStatus::BadSync;
    return r;
  }
  if (b[2] != kVersion) {
    r.status = DecodeStatus::BadVersion;
    return r;
  }
  SensorFrame& f = r.frame;
  f.seq = get_u16(b + 3);
  f.timestamp_ms = get_u32(b + 5);
  for (std::size_t i = 0; i < kSensorCount; ++i) {
    f.force_raw[i] = get_u16(b + 9 + 2 * i);
    if (f.force_raw[i] > kMaxRaw) {
      r.status = DecodeStatus::BadField;
      return r;
    }
  }
  f.orientation.roll_deg = static_cast<std::int16_t>(get_u16(b + 33)) / 100.0;
  f.orientation.pitch_deg = static_cast<std::int16_t>(get_u16(b + 35)) / 100.0;
  f.orientation.yaw_deg = static_cast<std::int16_t>(get_u16(b + 37)) / 100.0;
  f.flags = b[39];
  r.status = DecodeStatus::Ok;
  return r;
}

std::vector<SensorFrame> StreamDecoder::push(std::span<const std::uint8_t> bytes) {
  buffer_.insert(buffer_.end(), bytes.begin(), bytes.end());
  std::vector<SensorFrame> out;

  while (pos_ < buffer_.size()) {
    // Hunt for the sync pattern.
    std::size_t sync = pos_;
    while (sync + 1 < buffer_.size() &&
           !(buffer_[sync] == kSync0 && buffer_[sync + 1] == kSync1)) {
      ++sync;
    }
    const bool found = sync + 1 < buffer_.size();
    // A trailing lone 0xA5 may be the first half of a sync pattern.
    const std::size_t discard =
        found ? sync - pos_
              : (buffer_.back() == kSync0 ? buffer_.size() - 1 - pos_
                                          : buffer_.size() - pos_);
    if (discard > 0) {
      if (!in_garbage_) ++stats_.bad_sync;
      in_garbage_ = true;
      stats_.skipped_bytes += discard;
      pos_ += discard;
    }
    if (!found || buffer_.size() - pos_ < kFrameSize) break;

    const DecodeResult r =
        decode_frame(std::span<const std::uint8_t>(buffer_.data() + pos_, kFrameSize));
    if (r.ok()) {
      SensorFrame frame = r.frame;
      frame.seq = unwrap(frame.seq);
      out.push_back(frame);
      ++stats_.frames;
      pos_ += kFrameSize;
      in_garbage_ = false;
      continue;
    }
    switch (r.status) {
      case DecodeStatus::BadCrc: ++stats_.bad_crc; break;
      case DecodeStatus::BadVersion: ++stats_.bad_version; break;
      case DecodeStatus::BadField: ++stats_.bad_field; break;
      default: break;
    }
    // Skip this sync pattern and hunt again; the bytes up to the next sync
    // belong to the same rejected frame rather than a new garbage run.
    pos_ += 1;
    in_garbage_ = true;
    ++stats_.skipped_bytes;
  }
  compact();
  return out;
}

std::uint32_t StreamDecoder::unwrap(std::uint32_t seq16) {
  if (have_seq_ && seq16 < last_seq16_ && last_seq16_ - seq16 > 0x8000) {
    ++seq_epoch_;
  }
  have_seq_ = true;
  last_seq16_ = seq16;
  return (seq_epoch_ << 16) | seq16;
}

void StreamDecoder::compact() {
  if (pos_ == 0) return;
  if (pos_ >= buffer_.size()) {
    buffer_.clear();
    pos_ = 0;
    return;
  }
  if (pos_ > 4096 || pos_ * 2 > buffer_.size()) {
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(pos_));
    pos_ = 0;
  }
}

}  // namespace palp::wire
