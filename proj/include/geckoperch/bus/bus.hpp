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

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "geckoperch/bus/packet.hpp"
#include "geckoperch/bus/register_file.hpp"

namespace geckoperch::bus {

// A device answering the servo protocol at its own id.
class Device {
 public:
  virtual ~Device() = default;

  virtual std::uint8_t id() const = 0;
  virtual RegisterFile& registers() = 0;

  // Register-backed PING/READ/WRITE handling shared by every device.
  virtual StatusPacket handle(const Packet& request) {
    StatusPacket reply{id(), 0, {}};
    switch (request.instruction) {
      case Instruction::kPing:
        if (!request.params.empty()) reply.error_flags = error_bits::kInstruction;
        break;
      case Instruction::kRead: {
        if (request.params.size() != 2) {
          reply.error_flags = error_bits::kInstruction;
          break;
        }
        RegisterRead r = registers().read(request.params[0], request.params[1]);
        reply.error_flags = r.error_flags;
        reply.params = std::move(r.bytes);
        break;
      }
      case Instruction::kWrite:
        if (request.params.size() < 2) {
          reply.error_flags = error_bits::kInstruction;
          break;
        }
        reply.error_flags = registers().write(request.params[0],
                                              std::span(request.params).subspan(1));
        break;
    }
    return reply;
  }
};

// Inert joint servo: a small control table with a writable goal position
// mirrored into the present position.
class StubServo final : public Device {
 public:
  static constexpr std::size_t kModelNumber = 0x00;
  static constexpr std::size_t kId = 0x03;
  static constexpr std::size_t kGoalPosition = 0x1E;
  static constexpr std::size_t kPresentPosition = 0x24;
  static constexpr std::size_t kTableSize = 0x32;

  explicit StubServo(std::uint8_t id) : id_(id), table_(kTableSize) {
    table_.store_u16(kModelNumber, 0x0406);
    table_.store_u8(kId, id);
    table_.set_access(kGoalPosition, 2, Access::kReadWrite);
    table_.set_write_hook([this](std::size_t, std::span<const std::uint8_t>) -> std::uint8_t {
      table_.store_u16(kPresentPosition, table_.load_u16(kGoalPosition));
      return 0;
    });
  }

  std::uint8_t id() const override { return id_; }
  RegisterFile& registers() override { return table_; }

 private:
  std::uint8_t id_;
  RegisterFile table_;
};

enum class Direction { kRequest, kReply };

// Half-duplex bus shared by the gripper and the arm servos. Devices are not
// owned; they must outlive the bus. One transaction is in flight at a time.
class Bus {
 public:
  // Mutates bytes on the wire; clearing the buffer models a lost frame.
  using LineFault = std::function<void(Direction, std::vector<std::uint8_t>&)>;

  void attach(Device& device) {
    const std::uint8_t id = device.id();
    if (id > kMaxUnicastId) throw std::invalid_argument("device id outside unicast range");
    if (!devices_.emplace(id, &device).second) {
      throw std::invalid_argument("duplicate device id on bus");
    }
  }

  void detach(std::uint8_t id) { devices_.erase(id); }

  bool has_device(std::uint8_t id) const { return devices_.count(id) != 0; }

  void set_line_fault(LineFault fault) { fault_ = std::move(fault); }

  // Byte-level transaction. An empty reply means nothing answered before the
  // reply window closed (timeout).
  std::vector<std::uint8_t> transact_bytes(std::vector<std::uint8_t> request) {
    ++transactions_;
    if (fault_) fault_(Direction::kRequest, request);

    std::vector<std::uint8_t> reply;
    PacketDecode d = decode_packet(request);
    switch (d.status) {
      case DecodeStatus::kNeedMoreBytes:
        break;
      case DecodeStatus::kChecksumError:
      case DecodeStatus::kInvalidInstruction:
        if (auto it = devices_.find(d.device_id); it != devices_.end()) {
          const std::uint8_t flags = d.status == DecodeStatus::kChecksumError
                                         ? error_bits::kChecksum
                                         : error_bits::kInstruction;
          reply = encode_status({d.device_id, flags, {}});
        }
        break;
      case DecodeStatus::kOk:
        if (d.packet.device_id == kBroadcastId) {
          if (d.packet.instruction == Instruction::kWrite) {
            for (auto& [id, device] : devices_) device->handle(d.packet);
          }
        } else if (auto it = devices_.find(d.packet.device_id); it != devices_.end()) {
          reply = encode_status(it->second->handle(d.packet));
        }
        break;
    }

    if (fault_ && !reply.empty()) fault_(Direction::kReply, reply);
    if (reply.empty()) ++timeouts_;
    return reply;
  }

  // Packet-level transaction. nullopt on timeout, on broadcast, or when the
  // reply fails the exact-frame check.
  std::optional<StatusPacket> transact(const Packet& request) {
    std::vector<std::uint8_t> reply = transact_bytes(encode_packet(request));
    if (reply.empty()) return std::nullopt;
    return parse_exact_status(reply);
  }

  std::uint64_t transactions() const { return transactions_; }
  std::uint64_t timeouts() const { return timeouts_; }

 private:
  std::map<std::uint8_t, Device*> devices_;
  LineFault fault_;
  std::uint64_t transactions_ = 0;
  std::uint64_t timeouts_ = 0;
};

}  // namespace geckoperch::bus
