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
#include <string>
#include <string_view>

#include "geckoperch/bus/bus.hpp"
#include "geckoperch/bus/register_file.hpp"
#include "geckoperch/firmware/gripper_firmware.hpp"

namespace geckoperch::firmware {

constexpr std::uint8_t kDefaultGripperId = 0x20;
constexpr std::uint16_t kGripperModelNumber = 0x4743;  // "GC"
constexpr std::uint8_t kGripperFirmwareVersion = 0x03;

// Control table of the gripper's virtual-servo face.
namespace reg {
constexpr std::size_t kModelNumber = 0x00;       // u16 RO
constexpr std::size_t kFirmwareVersion = 0x02;   // u8  RO
constexpr std::size_t kId = 0x03;                // u8  RO
constexpr std::size_t kStatus = 0x30;            // u16 RO
constexpr std::size_t kLogFlags = 0x32;          // u8  RO
constexpr std::size_t kGraspDelay = 0x34;        // u16 RO
constexpr std::size_t kActiveExperiment = 0x36;  // u16 RO
constexpr std::size_t kReadExperiment = 0x38;    // u16 RO
constexpr std::size_t kReadIndex = 0x3A;         // u16 RO
constexpr std::size_t kReadCount = 0x3C;         // u16 RO
constexpr std::size_t kCommand = 0x40;           // u8  RW
constexpr std::size_t kCommandParam = 0x41;      // u16 RW, little-endian
constexpr std::size_t kRecord = 0x50;            // 35 bytes RO
constexpr std::size_t kTableSize = kRecord + kRecordSize;
}  // namespace reg

struct RegisterDoc {
  std::size_t address;
  std::size_t width;
  std::string_view access;
  std::string_view name;
  std::string_view meaning;
};

inline constexpr std::array<RegisterDoc, 13> kRegisterMap{{
    {reg::kModelNumber, 2, "R", "MODEL_NUMBER", "Device model, 0x4743"},
    {reg::kFirmwareVersion, 1, "R", "FIRMWARE_VERSION", "Firmware revision"},
    {reg::kId, 1, "R", "ID", "Bus id (default 0x20)"},
    {reg::kStatus, 2, "R",
     "STATUS", "bit0 pair A engaged, bit1 pair B engaged, bit2 wrist locked, bit3 auto mode, "
     "bit4 experiment logging; bits 5-15 zero"},
    {reg::kLogFlags, 1, "R", "LOG_FLAGS",
     "bit0 end of file (last seek clamped), bit1 experiment file open for reading"},
    {reg::kGraspDelay, 2, "R", "GRASP_DELAY", "Current grasp delay in ms"},
    {reg::kActiveExperiment, 2, "R", "ACTIVE_EXPERIMENT", "Experiment being logged, 0 = none"},
    {reg::kReadExperiment, 2, "R", "READ_EXPERIMENT", "Experiment open for reading, 0 = none"},
    {reg::kReadIndex, 2, "R", "READ_INDEX", "Record index under the read cursor"},
    {reg::kReadCount, 2, "R", "READ_COUNT", "Records in the file open for reading"},
    {reg::kCommand, 1, "RW", "COMMAND",
     "Writing this byte executes the command code with the parameter at 0x41"},
    {reg::kCommandParam, 2, "RW", "COMMAND_PARAM", "Command parameter, little-endian"},
    {reg::kRecord, kRecordSize, "R", "RECORD",
     "Record under the read cursor (35 bytes); zeros when no file is open"},
}};

// Markdown document of the control table and command codes.
inline std::string register_map_markdown() {
  auto hex = [](std::size_t v, int digits) {
    static constexpr char kDigits[] = "0123456789ABCDEF";
    std::string s = "0x";
    for (int i = digits - 1; i >= 0; --i) s.push_back(kDigits[(v >> (4 * i)) & 0xF]);
    return s;
  };

  std::string md;
  md += "# Gripper register map\n\n";
  md += "The gripper answers the servo bus at id 0x20 (configurable). Frames are\n";
  md += "`FF FF <id> <len> <instr|error> <params...> <checksum>` where `len` = params + 2 and\n";
  md += "`checksum` = ~(id + len + instr + params) & 0xFF. Instructions: PING 0x01,\n";
  md += "READ 0x02 (params: address, length), WRITE 0x03 (params: address, data...).\n";
  md += "Status error bits: bit0 instruction, bit1 checksum, bit2 address out of range\n";
  md += "(also returned for writes that touch a read-only byte). Table size is " +
        hex(reg::kTableSize, 2) + " bytes.\n\n";
  md += "| Address | Width | Access | Name | Meaning |\n";
  md += "|---------|-------|--------|------|---------|\n";
  for (const auto& r : kRegisterMap) {
    md += "| " + hex(r.address, 2) + " | " + std::to_string(r.width) + " | " +
          std::string(r.access) + " | " + std::string(r.name) + " | " + std::string(r.meaning) +
          " |\n";
  }
  md += "\nUnlisted addresses below the table size are reserved, read as zero and are\n";
  md += "read-only.\n\n";
  md += "## Command codes (written to COMMAND)\n\n";
  md += "| Code | Command | Parameter |\n";
  md += "|------|---------|-----------|\n";
  for (const auto& c : kCommandTable) {
    std::string param = c.takes_param ? "u16" : "-";
    if (c.is_query) param = "query; read STATUS or RECORD instead";
    md += "| " + hex(static_cast<std::size_t>(c.code), 2) + " | " + std::string(c.name) + " | " +
          param + " |\n";
  }
  md += "\nUnknown codes are refused with the instruction error bit.\n";
  return md;
}

// Bus face of the gripper firmware. Live registers are refreshed before
// every bus read; a write touching COMMAND executes it.
class GripperDevice final : public bus::Device {
 public:
  explicit GripperDevice(GripperFirmware& firmware, std::uint8_t id = kDefaultGripperId)
      : firmware_(firmware), id_(id), table_(reg::kTableSize) {
    table_.store_u16(reg::kModelNumber, kGripperModelNumber);
    table_.store_u8(reg::kFirmwareVersion, kGripperFirmwareVersion);
    table_.store_u8(reg::kId, id_);
    table_.set_access(reg::kCommand, 3, bus::Access::kReadWrite);
    table_.set_read_hook([this](std::size_t, std::size_t) { refresh(); });
    table_.set_write_hook([this](std::size_t address, std::span<const std::uint8_t> data) {
      return on_write(address, data.size());
    });
    refresh();
  }

  std::uint8_t id() const override { return id_; }
  bus::RegisterFile& registers() override { return table_; }

  void refresh() {
    table_.store_u16(reg::kStatus, firmware_.status());
    table_.store_u8(reg::kLogFlags, firmware_.log_flags());
    table_.store_u16(reg::kGraspDelay, firmware_.state().grasp_delay_ms);
    table_.store_u16(reg::kActiveExperiment, firmware_.state().current_experiment);
    const auto& cursor = firmware_.read_cursor();
    table_.store_u16(reg::kReadExperiment, cursor ? cursor->experiment : 0);
    table_.store_u16(reg::kReadIndex, cursor ? static_cast<std::uint16_t>(cursor->index) : 0);
    table_.store_u16(reg::kReadCount,
                     cursor ? static_cast<std::uint16_t>(
                                  firmware_.log().record_count(cursor->experiment))
                            : 0);
    table_.store(reg::kRecord, firmware_.current_record());
  }

 private:
  std::uint8_t on_write(std::size_t address, std::size_t length) {
    if (address > reg::kCommand || address + length <= reg::kCommand) return 0;
    const CommandResult r = firmware_.execute_command(table_.load_u8(reg::kCommand),
                                                      table_.load_u16(reg::kCommandParam));
    refresh();
    return r.error_flags;
  }

  GripperFirmware& firmware_;
  std::uint8_t id_;
  bus::RegisterFile table_;
};

}  // namespace geckoperch::firmware
