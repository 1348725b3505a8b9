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
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "geckoperch/bus/bus.hpp"
#include "geckoperch/firmware/commands.hpp"
#include "geckoperch/firmware/gripper_device.hpp"
#include "geckoperch/firmware/gripper_firmware.hpp"
#include "geckoperch/firmware/record.hpp"

namespace geckoperch::pac {

class CommandError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// High-level gripper command as issued from the robot's mid-level processor.
struct HostCommand {
  firmware::CommandCode code = firmware::CommandCode::kStatus;
  std::optional<std::uint16_t> param;

  // Validates the name and the parameter arity; throws CommandError.
  static HostCommand parse(std::string_view name, std::optional<std::int64_t> param) {
    auto code = firmware::command_from_name(name);
    if (!code) throw CommandError("unknown command '" + std::string(name) + "'");
    const auto& info = firmware::command_info(*code);
    if (info.takes_param && !param) {
      throw CommandError(std::string(info.name) + " requires a parameter");
    }
    if (!info.takes_param && param) {
      throw CommandError(std::string(info.name) + " takes no parameter");
    }
    if (param && (*param < 0 || *param > 0xFFFF)) {
      throw CommandError(std::string(info.name) + " parameter out of range 0..65535");
    }
    HostCommand cmd{*code, std::nullopt};
    if (param) cmd.param = static_cast<std::uint16_t>(*param);
    return cmd;
  }

  std::string_view name() const { return firmware::command_name(code); }
};

enum class DispatchError { kNone, kInvalidCommand, kDelivery, kDevice };

inline std::string_view to_string(DispatchError e) {
  switch (e) {
    case DispatchError::kNone:
      return "none";
    case DispatchError::kInvalidCommand:
      return "invalid-command";
    case DispatchError::kDelivery:
      return "delivery-error";
    case DispatchError::kDevice:
      return "device-error";
  }
  return "unknown";
}

struct DispatchResult {
  DispatchError error = DispatchError::kNone;
  std::uint8_t error_flags = 0;
  std::vector<std::uint8_t> data;  // STATUS / RECORD payload
  int attempts = 0;
  std::string message;

  bool ok() const { return error == DispatchError::kNone; }
};

struct SlowDripResult {
  enum class Status { kOk, kLoggingActive, kDeliveryError };

  Status status = Status::kOk;
  std::uint16_t experiment = 0;
  std::vector<firmware::RecordBytes> records;
  std::vector<std::size_t> crc_errors;  // indices of records failing their crc16

  std::vector<std::uint8_t> bytes() const {
    std::vector<std::uint8_t> out;
    out.reserve(records.size() * firmware::kRecordSize);
    for (const auto& r : records) out.insert(out.end(), r.begin(), r.end());
    return out;
  }
};

// Perching-arm controller side of the gripper link: turns host commands into
// bus transactions against the gripper's virtual servo.
class PacBridge {
 public:
  static constexpr int kMaxAttempts = 2;  // one retry after a timeout

  explicit PacBridge(bus::Bus& bus, std::uint8_t gripper_id = firmware::kDefaultGripperId)
      : bus_(bus), gripper_id_(gripper_id) {}

  DispatchResult dispatch(const HostCommand& cmd) {
    namespace reg = firmware::reg;
    if (cmd.code == firmware::CommandCode::kStatus) {
      return transact(bus::Packet::read(gripper_id_, reg::kStatus, 2));
    }
    if (cmd.code == firmware::CommandCode::kRecord) {
      return transact(bus::Packet::read(gripper_id_, reg::kRecord, firmware::kRecordSize));
    }
    const std::uint16_t p = cmd.param.value_or(0);
    const std::array<std::uint8_t, 3> payload{static_cast<std::uint8_t>(cmd.code),
                                              static_cast<std::uint8_t>(p & 0xFF),
                                              static_cast<std::uint8_t>(p >> 8)};
    return transact(bus::Packet::write(gripper_id_, reg::kCommand, payload));
  }

  // Validating entry point; bad names or arity never reach the bus.
  DispatchResult dispatch(std::string_view name, std::optional<std::int64_t> param) {
    try {
      return dispatch(HostCommand::parse(name, param));
    } catch (const CommandError& e) {
      DispatchResult r;
      r.error = DispatchError::kInvalidCommand;
      r.message = e.what();
      return r;
    }
  }

  std::optional<std::uint16_t> read_status() {
    DispatchResult r = dispatch(HostCommand{firmware::CommandCode::kStatus, std::nullopt});
    if (!r.ok() || r.data.size() != 2) return std::nullopt;
    return static_cast<std::uint16_t>(r.data[0] | (r.data[1] << 8));
  }

  std::optional<std::uint8_t> read_log_flags() {
    DispatchResult r = transact(bus::Packet::read(gripper_id_, firmware::reg::kLogFlags, 1));
    if (!r.ok() || r.data.size() != 1) return std::nullopt;
    return r.data[0];
  }

  // Pulls one experiment file off the gripper a record at a time:
  // OPEN EXP, then RECORD / NEXT RECORD(1) until the end flag, then CLOSE EXP.
  SlowDripResult slow_drip(std::uint16_t experiment) {
    using firmware::CommandCode;
    SlowDripResult out;
    out.experiment = experiment;

    auto status = read_status();
    if (!status) {
      out.status = SlowDripResult::Status::kDeliveryError;
      return out;
    }
    if (*status & firmware::status_bits::kExperimentActive) {
      out.status = SlowDripResult::Status::kLoggingActive;
      return out;
    }

    auto fail = [&] {
      out.status = SlowDripResult::Status::kDeliveryError;
      dispatch(HostCommand{CommandCode::kCloseExp, std::nullopt});
      return out;
    };

    if (!dispatch(HostCommand{CommandCode::kOpenExp, experiment}).ok()) return fail();
    auto flags = read_log_flags();
    if (!flags) return fail();
    const bool open = *flags & firmware::log_flag_bits::kFileOpen;
    bool end = *flags & firmware::log_flag_bits::kEndOfFile;

    while (open && !end) {
      DispatchResult rec = dispatch(HostCommand{CommandCode::kRecord, std::nullopt});
      if (!rec.ok() || rec.data.size() != firmware::kRecordSize) return fail();
      firmware::RecordBytes bytes{};
      std::copy(rec.data.begin(), rec.data.end(), bytes.begin());
      if (!firmware::record_crc_ok(bytes)) out.crc_errors.push_back(out.records.size());
      out.records.push_back(bytes);

      if (!dispatch(HostCommand{CommandCode::kNextRecord, 1}).ok()) return fail();
      flags = read_log_flags();
      if (!flags) return fail();
      end = *flags & firmware::log_flag_bits::kEndOfFile;
    }

    if (!dispatch(HostCommand{CommandCode::kCloseExp, std::nullopt}).ok()) {
      out.status = SlowDripResult::Status::kDeliveryError;
    }
    return out;
  }

  std::uint8_t gripper_id() const { return gripper_id_; }

 private:
  DispatchResult transact(const bus::Packet& request) {
    DispatchResult r;
    for (r.attempts = 1; r.attempts <= kMaxAttempts; ++r.attempts) {
      auto reply = bus_.transact(request);
      if (!reply) continue;
      r.error_flags = reply->error_flags;
      r.data = std::move(reply->params);
      if (!reply->ok()) {
        r.error = DispatchError::kDevice;
        r.message = "device reported error flags " + std::to_string(reply->error_flags);
      }
      return r;
    }
    r.attempts = kMaxAttempts;
    r.error = DispatchError::kDelivery;
    r.message = "no reply from device after retry";
    return r;
  }

  bus::Bus& bus_;
  std::uint8_t gripper_id_;
};

}  // namespace geckoperch::pac
