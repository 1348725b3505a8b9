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
#include <cmath>
#include <cstdint>
#include <deque>
#include <optional>

#include "geckoperch/bus/packet.hpp"
#include "geckoperch/firmware/commands.hpp"
#include "geckoperch/firmware/experiment_log.hpp"
#include "geckoperch/firmware/record.hpp"
#include "geckoperch/firmware/time_to_contact.hpp"

namespace geckoperch::firmware {

namespace status_bits {
constexpr std::uint16_t kPairA = 1u << 0;
constexpr std::uint16_t kPairB = 1u << 1;
constexpr std::uint16_t kWristLocked = 1u << 2;
constexpr std::uint16_t kAutoMode = 1u << 3;
constexpr std::uint16_t kExperimentActive = 1u << 4;
}  // namespace status_bits

namespace log_flag_bits {
constexpr std::uint8_t kEndOfFile = 1u << 0;
constexpr std::uint8_t kFileOpen = 1u << 1;
}  // namespace log_flag_bits

// How the grasp delay enters the auto-grasp trigger.
//   kPostContact: fire at predicted contact + delay.
//   kSettle: hold off the estimate for `delay` after arming, then fire at
//            the predicted contact.
enum class DelayMode { kPostContact, kSettle };

struct FirmwareConfig {
  std::int64_t tick_ms = 50;
  std::uint16_t grasp_delay_ms = 250;
  double arm_threshold_mm = 40.0;
  // Finite-difference baseline: the oldest valid reading within this many
  // ticks is differenced against the current one.
  int velocity_window_ticks = 10;
  std::int64_t wrist_ramp_ms = 500;
  std::int64_t release_pulse_ms = 100;
  DelayMode delay_mode = DelayMode::kPostContact;
};

// Servo command positions, 10-bit servo units.
namespace servo_position {
constexpr std::uint16_t kLoadSlack = 200;
constexpr std::uint16_t kLoadTension = 820;
constexpr std::uint16_t kReleaseRest = 300;
constexpr std::uint16_t kReleasePulse = 700;
constexpr std::uint16_t kWristFree = 200;
constexpr std::uint16_t kWristLocked = 900;
}  // namespace servo_position

enum ServoChannel : std::size_t { kLoadA = 0, kLoadB = 1, kRelease = 2, kWrist = 3 };

enum class AutoPhase { kIdle, kArmed, kScheduled };

struct WristAction {
  bool lock = false;
  std::int64_t at_ms = 0;
};

struct GripperState {
  std::array<bool, 2> adhesive_engaged{};
  bool wrist_locked = false;
  bool auto_mode = false;
  std::uint16_t grasp_delay_ms = 250;
  std::uint16_t current_experiment = 0;  // 0 = not logging
  AutoPhase auto_phase = AutoPhase::kIdle;
  std::int64_t auto_fire_ms = 0;  // meaningful while kScheduled
  std::optional<WristAction> pending_wrist;
  std::array<std::uint16_t, 4> servo_commands{servo_position::kLoadSlack,
                                              servo_position::kLoadSlack,
                                              servo_position::kReleaseRest,
                                              servo_position::kWristFree};
};

inline std::uint16_t status_register(const GripperState& s) {
  std::uint16_t v = 0;
  if (s.adhesive_engaged[0]) v |= status_bits::kPairA;
  if (s.adhesive_engaged[1]) v |= status_bits::kPairB;
  if (s.wrist_locked) v |= status_bits::kWristLocked;
  if (s.auto_mode) v |= status_bits::kAutoMode;
  if (s.current_experiment != 0) v |= status_bits::kExperimentActive;
  return v;
}

struct ReadCursor {
  std::uint16_t experiment = 0;
  std::size_t index = 0;
  bool end = false;
};

struct CommandResult {
  std::uint8_t error_flags = 0;
  bool ok() const { return error_flags == 0; }
};

// Gripper control program. Advanced only by tick() and execute_command();
// commands act at the time of the most recent tick.
class GripperFirmware {
 public:
  explicit GripperFirmware(FirmwareConfig config = {}) : config_(config) {
    state_.grasp_delay_ms = config_.grasp_delay_ms;
  }

  CommandResult execute_command(std::uint8_t code, std::uint16_t param = 0) {
    auto cmd = command_from_byte(code);
    if (!cmd) return {bus::error_bits::kInstruction};
    return execute_command(*cmd, param);
  }

  CommandResult execute_command(CommandCode code, std::uint16_t param = 0) {
    switch (code) {
      case CommandCode::kOpen:
        disengage();
        set_auto(false);
        schedule_wrist(false);
        break;
      case CommandCode::kClose:
        engage();
        schedule_wrist(true);
        break;
      case CommandCode::kToggleAuto:
        set_auto(!state_.auto_mode);
        break;
      case CommandCode::kMark:
        state_.current_experiment = 0;
        if (param != 0) {
          log_.start(param);
          state_.current_experiment = param;
          // Truncating the file under an open cursor rewinds it.
          if (cursor_ && cursor_->experiment == param) cursor_ = ReadCursor{param, 0, true};
        }
        break;
      case CommandCode::kEngage:
        engage();
        break;
      case CommandCode::kDisengage:
        disengage();
        break;
      case CommandCode::kLock:
        state_.pending_wrist.reset();
        move_wrist(true);
        break;
      case CommandCode::kUnlock:
        state_.pending_wrist.reset();
        move_wrist(false);
        break;
      case CommandCode::kEnableAuto:
        set_auto(true);
        break;
      case CommandCode::kDisableAuto:
        set_auto(false);
        break;
      case CommandCode::kSetDelay:
        state_.grasp_delay_ms = param;
        break;
      case CommandCode::kStatus:
      case CommandCode::kRecord:
        break;
      case CommandCode::kOpenExp:
        cursor_.reset();
        if (log_.has(param)) cursor_ = ReadCursor{param, 0, log_.record_count(param) == 0};
        break;
      case CommandCode::kCloseExp:
        cursor_.reset();
        break;
      case CommandCode::kNextRecord:
        if (cursor_) seek(param);
        break;
    }
    refresh_auto_phase();
    return {};
  }

  // One control-loop pass. Returns the record appended to the open
  // experiment, if logging.
  std::optional<ExperimentRecord> tick(const TofSample& tof,
                                       const std::array<std::uint16_t, 4>& currents_mA,
                                       std::int64_t now_ms) {
    now_ms_ = now_ms;

    if (state_.pending_wrist && now_ms_ >= state_.pending_wrist->at_ms) {
      const bool lock = state_.pending_wrist->lock;
      state_.pending_wrist.reset();
      move_wrist(lock);
    }

    if (state_.auto_mode) update_auto(tof);
    update_servos();

    if (state_.current_experiment == 0) return std::nullopt;
    ExperimentRecord r;
    r.seq = static_cast<std::uint32_t>(log_.record_count(state_.current_experiment));
    r.timestamp_ms = static_cast<std::uint32_t>(now_ms_);
    r.experiment_id = state_.current_experiment;
    r.tof_mm = static_cast<std::uint16_t>(std::clamp(std::lround(tof.distance_mm), 0L, 0xFFFFL));
    r.tof_valid = tof.valid ? 1 : 0;
    r.servo_current_mA = currents_mA;
    r.servo_command = state_.servo_commands;
    r.status = status();
    r.grasp_delay_ms = state_.grasp_delay_ms;
    const RecordBytes bytes = encode_record(r);
    log_.append(state_.current_experiment, bytes);
    return decode_record(bytes);
  }

  const GripperState& state() const { return state_; }
  const FirmwareConfig& config() const { return config_; }
  std::uint16_t status() const { return status_register(state_); }
  std::int64_t now_ms() const { return now_ms_; }

  std::uint8_t log_flags() const {
    if (!cursor_) return 0;
    return static_cast<std::uint8_t>(log_flag_bits::kFileOpen |
                                     (cursor_->end ? log_flag_bits::kEndOfFile : 0));
  }

  const std::optional<ReadCursor>& read_cursor() const { return cursor_; }

  // Record under the read cursor; zeros when no file is open or it is empty.
  RecordBytes current_record() const {
    if (!cursor_ || log_.record_count(cursor_->experiment) == 0) return RecordBytes{};
    return log_.record(cursor_->experiment, cursor_->index);
  }

  std::optional<std::int64_t> last_auto_fire_ms() const { return last_auto_fire_ms_; }

  std::optional<std::int64_t> scheduled_fire_ms() const {
    if (state_.auto_phase != AutoPhase::kScheduled) return std::nullopt;
    return state_.auto_fire_ms;
  }

  ExperimentLog& log() { return log_; }
  const ExperimentLog& log() const { return log_; }

 private:
  bool any_engaged() const { return state_.adhesive_engaged[0] || state_.adhesive_engaged[1]; }

  void engage() { state_.adhesive_engaged = {true, true}; }

  void disengage() {
    if (any_engaged()) release_pulse_until_ms_ = now_ms_ + config_.release_pulse_ms;
    state_.adhesive_engaged = {false, false};
  }

  void set_auto(bool on) {
    state_.auto_mode = on;
    state_.auto_phase = AutoPhase::kIdle;
    history_.clear();
    armed_at_ms_.reset();
  }

  // Armed only while auto mode is on and nothing is gripped. A pending
  // trigger survives until it fires or auto mode is dropped.
  void refresh_auto_phase() {
    if (!state_.auto_mode) {
      state_.auto_phase = AutoPhase::kIdle;
    } else if (any_engaged()) {
      state_.auto_phase = AutoPhase::kIdle;
    } else if (state_.auto_phase == AutoPhase::kIdle) {
      state_.auto_phase = AutoPhase::kArmed;
      history_.clear();
      armed_at_ms_.reset();
    }
  }

  void schedule_wrist(bool lock) {
    state_.pending_wrist = WristAction{lock, now_ms_ + state_.grasp_delay_ms};
  }

  void move_wrist(bool lock) {
    state_.wrist_locked = lock;
    wrist_ramp_from_ = state_.servo_commands[kWrist];
    wrist_ramp_start_ms_ = now_ms_;
  }

  void seek(std::uint16_t count) {
    const std::size_t n = log_.record_count(cursor_->experiment);
    if (n == 0) {
      cursor_->end = true;
      return;
    }
    const std::size_t last = n - 1;
    if (cursor_->index + count > last) {
      cursor_->index = last;
      cursor_->end = true;
    } else {
      cursor_->index += count;
    }
  }

  void update_auto(const TofSample& tof) {
    const std::int64_t window_ms = config_.velocity_window_ticks * config_.tick_ms;
    while (!history_.empty() && now_ms_ - history_.front().timestamp_ms > window_ms) {
      history_.pop_front();
    }

    if (state_.auto_phase == AutoPhase::kArmed && tof.valid &&
        tof.distance_mm < config_.arm_threshold_mm && !history_.empty() && settled()) {
      const TofSample& oldest = history_.front();
      const double dt_s = static_cast<double>(now_ms_ - oldest.timestamp_ms) / 1000.0;
      if (auto ttc = estimate_time_to_contact(oldest.distance_mm, tof.distance_mm, dt_s)) {
        const std::int64_t extra =
            config_.delay_mode == DelayMode::kPostContact ? state_.grasp_delay_ms : 0;
        state_.auto_fire_ms = now_ms_ + std::llround(*ttc * 1000.0) + extra;
        state_.auto_phase = AutoPhase::kScheduled;
      }
    }
    if (tof.valid) history_.push_back(tof);

    if (state_.auto_phase == AutoPhase::kScheduled && now_ms_ >= state_.auto_fire_ms) {
      last_auto_fire_ms_ = now_ms_;
      engage();
      schedule_wrist(true);
      refresh_auto_phase();
    }
  }

  bool settled() {
    if (config_.delay_mode != DelayMode::kSettle) return true;
    if (!armed_at_ms_) armed_at_ms_ = now_ms_;
    return now_ms_ - *armed_at_ms_ >= state_.grasp_delay_ms;
  }

  void update_servos() {
    auto& cmd = state_.servo_commands;
    cmd[kLoadA] = state_.adhesive_engaged[0] ? servo_position::kLoadTension
                                              : servo_position::kLoadSlack;
    cmd[kLoadB] = state_.adhesive_engaged[1] ? servo_position::kLoadTension
                                              : servo_position::kLoadSlack;
    cmd[kRelease] = now_ms_ < release_pulse_until_ms_ ? servo_position::kReleasePulse
                                                      : servo_position::kReleaseRest;

    const double target = state_.wrist_locked ? servo_position::kWristLocked
                                              : servo_position::kWristFree;
    const double frac =
        config_.wrist_ramp_ms <= 0
            ? 1.0
            : std::clamp(static_cast<double>(now_ms_ - wrist_ramp_start_ms_) /
                             static_cast<double>(config_.wrist_ramp_ms),
                         0.0, 1.0);
    cmd[kWrist] = static_cast<std::uint16_t>(
        std::lround(wrist_ramp_from_ + (target - wrist_ramp_from_) * frac));
  }

  FirmwareConfig config_;
  GripperState state_;
  ExperimentLog log_;
  std::optional<ReadCursor> cursor_;
  std::deque<TofSample> history_;
  std::optional<std::int64_t> last_auto_fire_ms_;
  std::optional<std::int64_t> armed_at_ms_;
  std::int64_t now_ms_ = 0;
  std::int64_t release_pulse_until_ms_ = -1;
  double wrist_ramp_from_ = servo_position::kWristFree;
  std::int64_t wrist_ramp_start_ms_ = 0;
};

}  // namespace geckoperch::firmware
