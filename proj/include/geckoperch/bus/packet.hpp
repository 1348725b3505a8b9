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

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace geckoperch::bus {

// Frame layout: [0xFF][0xFF][ID][LENGTH][INSTRUCTION|ERROR][PARAM...][CHECKSUM]
// LENGTH counts the instruction byte, the params and the checksum.
constexpr std::uint8_t kSyncByte = 0xFF;
constexpr std::uint8_t kBroadcastId = 0xFE;
constexpr std::uint8_t kMaxUnicastId = 0xFD;
constexpr std::size_t kMaxParams = 250;
constexpr std::size_t kFrameOverhead = 6;

enum class Instruction : std::uint8_t {
  kPing = 0x01,
  kRead = 0x02,
  kWrite = 0x03,
};

inline bool is_instruction(std::uint8_t code) {
  return code == 0x01 || code == 0x02 || code == 0x03;
}

// Status packet error bits.
namespace error_bits {
constexpr std::uint8_t kInstruction = 1u << 0;
constexpr std::uint8_t kChecksum = 1u << 1;
constexpr std::uint8_t kAddressRange = 1u << 2;
}  // namespace error_bits

class EncodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Complement of the low byte of the byte-sum. `body` runs from the id byte
// through the last parameter byte.
inline std::uint8_t compute_checksum(std::span<const std::uint8_t> body) {
  unsigned sum = 0;
  for (std::uint8_t b : body) sum += b;
  return static_cast<std::uint8_t>(~sum & 0xFFu);
}

// Request from the bus master.
struct Packet {
  std::uint8_t device_id = 0;
  Instruction instruction = Instruction::kPing;
  std::vector<std::uint8_t> params;

  bool operator==(const Packet&) const = default;

  static Packet ping(std::uint8_t id) { return {id, Instruction::kPing, {}}; }

  static Packet read(std::uint8_t id, std::uint8_t address, std::uint8_t length) {
    return {id, Instruction::kRead, {address, length}};
  }

  static Packet write(std::uint8_t id, std::uint8_t address,
                      std::span<const std::uint8_t> payload) {
    Packet p{id, Instruction::kWrite, {address}};
    p.params.insert(p.params.end(), payload.begin(), payload.end());
    return p;
  }
};

// Device reply. The instruction slot of the frame carries the error flags.
struct StatusPacket {
  std::uint8_t device_id = 0;
  std::uint8_t error_flags = 0;
  std::vector<std::uint8_t> params;

  bool operator==(const StatusPacket&) const = default;
  bool ok() const { return error_flags == 0; }
};

// Generic frame before the instruction byte is interpreted.
struct Frame {
  std::uint8_t device_id = 0;
  std::uint8_t code = 0;
  std::vector<std::uint8_t> params;
};

inline std::vector<std::uint8_t> encode_frame(std::uint8_t device_id, std::uint8_t code,
                                              std::span<const std::uint8_t> params) {
  if (params.size() > kMaxParams) {
    throw EncodeError("params length " + std::to_string(params.size()) + " exceeds " +
                      std::to_string(kMaxParams));
  }
  if (device_id == kSyncByte) throw EncodeError("device id 0xFF collides with sync byte");

  std::vector<std::uint8_t> out;
  out.reserve(params.size() + kFrameOverhead);
  out.push_back(kSyncByte);
  out.push_back(kSyncByte);
  out.push_back(device_id);
  out.push_back(static_cast<std::uint8_t>(params.size() + 2));
  out.push_back(code);
  out.insert(out.end(), params.begin(), params.end());
  out.push_back(compute_checksum(std::span(out).subspan(2)));
  return out;
}

inline std::vector<std::uint8_t> encode_packet(const Packet& p) {
  return encode_frame(p.device_id, static_cast<std::uint8_t>(p.instruction), p.params);
}

inline std::vector<std::uint8_t> encode_status(const StatusPacket& s) {
  return encode_frame(s.device_id, s.error_flags, s.params);
}

enum class DecodeStatus {
  kOk,
  kNeedMoreBytes,
  kChecksumError,
  kInvalidInstruction,
};

struct FrameDecode {
  DecodeStatus status = DecodeStatus::kNeedMoreBytes;
  Frame frame;
  std::size_t start = 0;     // offset of the first sync byte
  std::size_t consumed = 0;  // bytes the caller may drop from the stream
};

// Scans `stream` for the first complete frame. Garbage before a sync pair is
// skipped. A frame with a bad checksum is consumed and reported. When no
// complete frame is present, `consumed` covers only bytes that can never
// start a frame.
inline FrameDecode decode_frame(std::span<const std::uint8_t> stream) {
  FrameDecode out;
  const std::size_t n = stream.size();
  std::size_t i = 0;
  while (true) {
    while (i + 1 < n && !(stream[i] == kSyncByte && stream[i + 1] == kSyncByte)) ++i;
    if (i + 1 >= n) {
      // A lone trailing 0xFF may be the first half of a sync pair.
      out.consumed = (n > 0 && stream[n - 1] == kSyncByte) ? n - 1 : n;
      return out;
    }
    // Runs of 0xFF: the id byte can never be 0xFF, so the frame starts at the
    // last pair.
    while (i + 2 < n && stream[i + 2] == kSyncByte) ++i;
    if (i + 4 > n) {
      out.consumed = i;
      return out;
    }
    const std::uint8_t length = stream[i + 3];
    if (length < 2) {
      i += 1;
      continue;
    }
    const std::size_t total = std::size_t{length} + 4;
    if (i + total > n) {
      out.consumed = i;
      return out;
    }
    auto body = stream.subspan(i + 2, std::size_t{length} + 1);
    const std::uint8_t checksum = stream[i + total - 1];
    out.start = i;
    out.consumed = i + total;
    out.frame.device_id = stream[i + 2];
    out.frame.code = stream[i + 4];
    out.frame.params.assign(stream.begin() + static_cast<std::ptrdiff_t>(i + 5),
                            stream.begin() + static_cast<std::ptrdiff_t>(i + total - 1));
    out.status = compute_checksum(body) == checksum ? DecodeStatus::kOk
                                                    : DecodeStatus::kChecksumError;
    return out;
  }
}

struct PacketDecode {
  DecodeStatus status = DecodeStatus::kNeedMoreBytes;
  Packet packet;
  std::uint8_t device_id = 0;  // valid whenever a frame boundary was found
  std::size_t consumed = 0;
};

inline PacketDecode decode_packet(std::span<const std::uint8_t> stream) {
  FrameDecode f = decode_frame(stream);
  PacketDecode out;
  out.status = f.status;
  out.consumed = f.consumed;
  out.device_id = f.frame.device_id;
  if (f.status != DecodeStatus::kOk) return out;
  if (!is_instruction(f.frame.code)) {
    out.status = DecodeStatus::kInvalidInstruction;
    return out;
  }
  out.packet.device_id = f.frame.device_id;
  out.packet.instruction = static_cast<Instruction>(f.frame.code);
  out.packet.params = std::move(f.frame.params);
  return out;
}

// Strict parse of a buffer that must hold exactly one frame, as delivered by
// one half-duplex reply window. Leading garbage or trailing bytes reject it.
inline std::optional<Frame> parse_exact_frame(std::span<const std::uint8_t> buffer) {
  FrameDecode f = decode_frame(buffer);
  if (f.status != DecodeStatus::kOk || f.start != 0 || f.consumed != buffer.size()) {
    return std::nullopt;
  }
  return std::move(f.frame);
}

inline std::optional<Packet> parse_exact_packet(std::span<const std::uint8_t> buffer) {
  auto f = parse_exact_frame(buffer);
  if (!f || !is_instruction(f->code)) return std::nullopt;
  return Packet{f->device_id, static_cast<Instruction>(f->code), std::move(f->params)};
}

inline std::optional<StatusPacket> parse_exact_status(std::span<const std::uint8_t> buffer) {
  auto f = parse_exact_frame(buffer);
  if (!f) return std::nullopt;
  return StatusPacket{f->device_id, f->code, std::move(f->params)};
}

}  // namespace geckoperch::bus
