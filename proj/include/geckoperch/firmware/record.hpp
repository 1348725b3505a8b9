// Copyright 2026 The geckoperch Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>

#include <boost/crc.hpp>

namespace geckoperch::firmware {

constexpr std::size_t kRecordSize = 35;
constexpr std::size_t kRecordCrcOffset = 33;

using RecordBytes = std::array<std::uint8_t, kRecordSize>;

// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
inline std::uint16_t crc16_ccitt(std::span<const std::uint8_t> data) {
  boost::crc_ccitt_type crc;
  crc.process_bytes(data.data(), data.size());
  return static_cast<std::uint16_t>(crc.checksum());
}

// One logged tick. Little-endian on the wire, 35 bytes:
//
//   off  size  field
//    0    4    seq
//    4    4    timestamp_ms
//    8    2    experiment_id
//   10    2    tof_mm
//   12    1    tof_valid
//   13    8    servo_current_mA[4]
//   21    8    servo_command[4]   (load A, load B, release, wrist)
//   29    2    status
//   31    2    grasp_delay_ms
//   33    2    crc16 over bytes 0..32
struct ExperimentRecord {
  std::uint32_t seq = 0;
  std::uint32_t timestamp_ms = 0;
  std::uint16_t experiment_id = 0;
  std::uint16_t tof_mm = 0;
  std::uint8_t tof_valid = 0;
  std::array<std::uint16_t, 4> servo_current_mA{};
  std::array<std::uint16_t, 4> servo_command{};
  std::uint16_t status = 0;
  std::uint16_t grasp_delay_ms = 0;
  std::uint16_t crc16 = 0;

  bool operator==(const ExperimentRecord&) const = default;
};

namespace detail {

class RecordWriter {
 public:
  explicit RecordWriter(RecordBytes& out) : out_(out) {}
  void u8(std::uint8_t v) { out_[pos_++] = v; }
  void u16(std::uint16_t v) {
    u8(static_cast<std::uint8_t>(v & 0xFF));
    u8(static_cast<std::uint8_t>(v >> 8));
  }
  void u32(std::uint32_t v) {
    u16(static_cast<std::uint16_t>(v & 0xFFFF));
    u16(static_cast<std::uint16_t>(v >> 16));
  }

 private:
  RecordBytes& out_;
  std::size_t pos_ = 0;
};

class RecordReader {
 public:
  explicit RecordReader(std::span<const std::uint8_t, kRecordSize> in) : in_(in) {}
  std::uint8_t u8() { return in_[pos_++]; }
  std::uint16_t u16() {
    const std::uint16_t lo = u8();
    return static_cast<std::uint16_t>(lo | (u8() << 8));
  }
  std::uint32_t u32() {
    const std::uint32_t lo = u16();
    return lo | (std::uint32_t{u16()} << 16);
  }

 private:
  std::span<const std::uint8_t, kRecordSize> in_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Serializes every field except crc16, then writes the CRC of bytes 0..32.
inline RecordBytes encode_record(const ExperimentRecord& r) {
  RecordBytes out{};
  detail::RecordWriter w(out);
  w.u32(r.seq);
  w.u32(r.timestamp_ms);
  w.u16(r.experiment_id);
  w.u16(r.tof_mm);
  w.u8(r.tof_valid);
  for (auto c : r.servo_current_mA) w.u16(c);
  for (auto c : r.servo_command) w.u16(c);
  w.u16(r.status);
  w.u16(r.grasp_delay_ms);
  w.u16(crc16_ccitt(std::span(out).first(kRecordCrcOffset)));
  return out;
}

// Field decode; crc16 is returned as stored. Check it with record_crc_ok().
inline ExperimentRecord decode_record(std::span<const std::uint8_t, kRecordSize> bytes) {
  detail::RecordReader rd(bytes);
  ExperimentRecord r;
  r.seq = rd.u32();
  r.timestamp_ms = rd.u32();
  r.experiment_id = rd.u16();
  r.tof_mm = rd.u16();
  r.tof_valid = rd.u8();
  for (auto& c : r.servo_current_mA) c = rd.u16();
  for (auto& c : r.servo_command) c = rd.u16();
  r.status = rd.u16();
  r.grasp_delay_ms = rd.u16();
  r.crc16 = rd.u16();
  return r;
}

inline bool record_crc_ok(std::span<const std::uint8_t, kRecordSize> bytes) {
  const std::uint16_t stored =
      static_cast<std::uint16_t>(bytes[kRecordCrcOffset] | (bytes[kRecordCrcOffset + 1] << 8));
  return crc16_ccitt(bytes.first(kRecordCrcOffset)) == stored;
}

// Fills in crc16 so the record equals its own decode(encode(...)).
inline ExperimentRecord sealed(ExperimentRecord r) {
  r.crc16 = decode_record(encode_record(r)).crc16;
  return r;
}

}  // namespace geckoperch::firmware
