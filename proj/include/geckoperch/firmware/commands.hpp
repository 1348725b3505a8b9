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

#include <algorithm>
#include <array>
#include <cctype>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace geckoperch::firmware {

// Gripper command set. Codes are the bytes written to the command register.
// STATUS and RECORD are queries answered through their own registers.
enum class CommandCode : std::uint8_t {
  kOpen = 0x01,
  kClose = 0x02,
  kToggleAuto = 0x03,
  kMark = 0x04,
  kEngage = 0x05,
  kDisengage = 0x06,
  kLock = 0x07,
  kUnlock = 0x08,
  kEnableAuto = 0x09,
  kDisableAuto = 0x0A,
  kSetDelay = 0x0B,
  kStatus = 0x0C,
  kRecord = 0x0D,
  kOpenExp = 0x0E,
  kCloseExp = 0x0F,
  kNextRecord = 0x10,
};

struct CommandInfo {
  CommandCode code;
  std::string_view name;
  bool takes_param;
  bool is_query;
};

inline constexpr std::array<CommandInfo, 16> kCommandTable{{
    {CommandCode::kOpen, "OPEN", false, false},
    {CommandCode::kClose, "CLOSE", false, false},
    {CommandCode::kToggleAuto, "TOGGLE AUTO", false, false},
    {CommandCode::kMark, "MARK", true, false},
    {CommandCode::kEngage, "ENGAGE", false, false},
    {CommandCode::kDisengage, "DISENGAGE", false, false},
    {CommandCode::kLock, "LOCK", false, false},
    {CommandCode::kUnlock, "UNLOCK", false, false},
    {CommandCode::kEnableAuto, "ENABLE AUTO", false, false},
    {CommandCode::kDisableAuto, "DISABLE AUTO", false, false},
    {CommandCode::kSetDelay, "SET DELAY", true, false},
    {CommandCode::kStatus, "STATUS", false, true},
    {CommandCode::kRecord, "RECORD", false, true},
    {CommandCode::kOpenExp, "OPEN EXP", true, false},
    {CommandCode::kCloseExp, "CLOSE EXP", false, false},
    {CommandCode::kNextRecord, "NEXT RECORD", true, false},
}};

inline const CommandInfo& command_info(CommandCode code) {
  return kCommandTable[static_cast<std::size_t>(code) - 1];
}

inline std::string_view command_name(CommandCode code) { return command_info(code).name; }

inline std::optional<CommandCode> command_from_byte(std::uint8_t code) {
  if (code < 0x01 || code > 0x10) return std::nullopt;
  return static_cast<CommandCode>(code);
}

// Case-insensitive; '_' and '-' are accepted in place of spaces.
inline std::optional<CommandCode> command_from_name(std::string_view name) {
  std::string norm;
  norm.reserve(name.size());
  for (char c : name) {
    if (c == '_' || c == '-') c = ' ';
    norm.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  }
  auto it = std::find_if(kCommandTable.begin(), kCommandTable.end(),
                         [&](const CommandInfo& info) { return info.name == norm; });
  if (it == kCommandTable.end()) return std::nullopt;
  return it->code;
}

}  // namespace geckoperch::firmware
