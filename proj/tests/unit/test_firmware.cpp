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

#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "geckoperch/firmware/gripper_device.hpp"
#include "geckoperch/firmware/gripper_firmware.hpp"
#include "oracles.hpp"

using namespace geckoperch::firmware;

namespace {

constexpr std::array<std::uint16_t, 4> kIdleCurrents{10, 10, 10, 10};

void tick_to(GripperFirmware& fw, std::int64_t t_ms, double tof_mm = 150.0) {
  fw.tick(TofSample::measured(tof_mm, t_ms), kIdleCurrents, t_ms);
}

// Drives the firmware along gap(t) with exact distances, one tick per 50 ms,
// and returns the time of the first engage.
std::optional<std::int64_t> fly(GripperFirmware& fw, const oracle::Approach& a,
                                std::int64_t until_ms) {
  for (std::int64_t t = 0; t <= until_ms; t += 50) {
    fw.tick(TofSample::measured(std::max(0.0, a.gap(t / 1000.0)), t), kIdleCurrents, t);
    if (fw.state().adhesive_engaged[0]) return t;
  }
  return std::nullopt;
}

}  // namespace

TEST(Commands, TableCoversSixteenCodes) {
  for (std::uint8_t code = 1; code <= 16; ++code) {
    auto c = command_from_byte(code);
    ASSERT_TRUE(c);
    EXPECT_EQ(command_from_name(command_name(*c)), c);
  }
  EXPECT_FALSE(command_from_byte(0));
  EXPECT_FALSE(command_from_byte(17));
  EXPECT_EQ(command_from_name("enable_auto"), CommandCode::kEnableAuto);
  EXPECT_EQ(command_from_name("next-record"), CommandCode::kNextRecord);
  EXPECT_FALSE(command_from_name("FLY"));
}

TEST(Firmware, BootStatusIsZero) {
  GripperFirmware fw;
  EXPECT_EQ(fw.status(), 0x0000);
  EXPECT_EQ(fw.state().grasp_delay_ms, 250);
}

TEST(Firmware, CloseEngagesThenLocksWristAfterDefaultDelay) {
  GripperFirmware fw;
  tick_to(fw, 1000);
  fw.execute_command(CommandCode::kClose);
  EXPECT_EQ(fw.status(), 0x0003);
  tick_to(fw, 1200);
  EXPECT_EQ(fw.status(), 0x0003);
  tick_to(fw, 1250);
  EXPECT_EQ(fw.status(), 0x0007);
}

TEST(Firmware, WristRampsOverHalfASecond) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kLock);
  tick_to(fw, 0);
  EXPECT_EQ(fw.state().servo_commands[kWrist], servo_position::kWristFree);
  tick_to(fw, 250);
  EXPECT_EQ(fw.state().servo_commands[kWrist],
            (servo_position::kWristFree + servo_position::kWristLocked) / 2);
  tick_to(fw, 500);
  EXPECT_EQ(fw.state().servo_commands[kWrist], servo_position::kWristLocked);
}

TEST(Firmware, DisableAutoKeepsGrasp) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  fw.execute_command(CommandCode::kEngage);
  fw.execute_command(CommandCode::kDisableAuto);
  EXPECT_EQ(fw.status(), 0x0003);
}

TEST(Firmware, EngageAndDisengageHaveNoSideEffects) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  fw.execute_command(CommandCode::kEngage);
  EXPECT_EQ(fw.status(), 0x000B);
  fw.execute_command(CommandCode::kEngage);
  EXPECT_EQ(fw.status(), 0x000B);
  fw.execute_command(CommandCode::kDisengage);
  EXPECT_EQ(fw.status(), 0x0008);
  EXPECT_FALSE(fw.state().pending_wrist);
}

TEST(Firmware, OpenThenDisengageIsNoOp) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kClose);
  tick_to(fw, 500);
  fw.execute_command(CommandCode::kOpen);
  tick_to(fw, 1000);
  const auto before = fw.state();
  const auto status = fw.status();
  fw.execute_command(CommandCode::kDisengage);
  EXPECT_EQ(fw.status(), status);
  EXPECT_EQ(fw.state().servo_commands, before.servo_commands);
  EXPECT_EQ(status, 0x0000);
}

TEST(Firmware, DisengageFiresReleasePulse) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEngage);
  tick_to(fw, 0);
  fw.execute_command(CommandCode::kDisengage);
  tick_to(fw, 50);
  EXPECT_EQ(fw.state().servo_commands[kRelease], servo_position::kReleasePulse);
  tick_to(fw, 100);
  EXPECT_EQ(fw.state().servo_commands[kRelease], servo_position::kReleaseRest);
}

TEST(Firmware, EnableAutoAndMarkGive0x0018) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  fw.execute_command(CommandCode::kMark, 3);
  EXPECT_EQ(fw.status(), 0x0018);
}

TEST(Firmware, MarkZeroWithNothingOpenIsNoOp) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kMark, 0);
  EXPECT_EQ(fw.status(), 0x0000);
  EXPECT_EQ(fw.state().current_experiment, 0);
}

TEST(Firmware, MarkWhileLoggingSwitchesExperiment) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kMark, 1);
  tick_to(fw, 0);
  tick_to(fw, 50);
  fw.execute_command(CommandCode::kMark, 2);
  tick_to(fw, 100);
  EXPECT_EQ(fw.log().record_count(1), 2u);
  EXPECT_EQ(fw.log().record_count(2), 1u);
  EXPECT_EQ(fw.state().current_experiment, 2);
}

TEST(Firmware, UnknownCodeIsInstructionError) {
  GripperFirmware fw;
  EXPECT_EQ(fw.execute_command(std::uint8_t{0x11}).error_flags,
            geckoperch::bus::error_bits::kInstruction);
  EXPECT_EQ(fw.execute_command(std::uint8_t{0x00}).error_flags,
            geckoperch::bus::error_bits::kInstruction);
  EXPECT_TRUE(fw.execute_command(std::uint8_t{0x0C}).ok());
}

TEST(Firmware, SetDelayDrivesTimedWrist) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kSetDelay, 600);
  fw.execute_command(CommandCode::kClose);
  tick_to(fw, 550);
  EXPECT_EQ(fw.status() & status_bits::kWristLocked, 0);
  tick_to(fw, 600);
  EXPECT_NE(fw.status() & status_bits::kWristLocked, 0);
}

TEST(Firmware, LockCancelsPendingUnlock) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kLock);
  fw.execute_command(CommandCode::kOpen);
  fw.execute_command(CommandCode::kLock);
  tick_to(fw, 1000);
  EXPECT_NE(fw.status() & status_bits::kWristLocked, 0);
}

TEST(TimeToContact, Examples) {
  auto ttc = estimate_time_to_contact(40.0, 38.0, 0.05);
  ASSERT_TRUE(ttc);
  EXPECT_NEAR(*ttc, 0.95, 1e-12);
  EXPECT_FALSE(estimate_time_to_contact(30.0, 32.0, 0.05));
  EXPECT_FALSE(estimate_time_to_contact(30.0, 30.0, 0.05));
  ttc = estimate_time_to_contact(25.0, 20.0, 0.05);
  ASSERT_TRUE(ttc);
  EXPECT_NEAR(*ttc, 0.2, 1e-12);
  EXPECT_FALSE(estimate_time_to_contact(40.0, 38.0, 0.0));
}

TEST(TofSample, RangeWindow) {
  EXPECT_TRUE(TofSample::measured(50.0, 0).valid);
  EXPECT_TRUE(TofSample::measured(5.0, 0).valid);
  EXPECT_TRUE(TofSample::measured(100.0, 0).valid);
  EXPECT_FALSE(TofSample::measured(150.0, 0).valid);
  EXPECT_FALSE(TofSample::measured(4.9, 0).valid);
  EXPECT_FALSE(TofSample::invalid(0).valid);
}

TEST(AutoGrasp, FortyMillimetresPerSecondFiresAtContactPlusDelay) {
  // gap(t) = 60 - 40 t mm: crosses 40 mm at 0.5 s, contact at 1.5 s.
  const oracle::Approach a{60.0, 40.0};
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  auto fired = fly(fw, a, 3000);
  ASSERT_TRUE(fired);
  EXPECT_EQ(*fired, 1750);
  EXPECT_EQ(*fired - 500, 1000 + 250);
  EXPECT_EQ(fw.last_auto_fire_ms(), 1750);
  tick_to(fw, 2000, 0.0);
  EXPECT_EQ(fw.status(), 0x000F);
}

TEST(AutoGrasp, TriggerAccuracyAcrossSpeeds) {
  for (double v = 10.0; v <= 100.0; v += 5.0) {
    for (double d0 : {60.0, 73.0, 95.0}) {
      const oracle::Approach a{d0, v};
      GripperFirmware fw;
      fw.execute_command(CommandCode::kEnableAuto);
      auto fired = fly(fw, a, 20000);
      ASSERT_TRUE(fired) << v;
      const double expected_ms = a.contact_s() * 1000.0 + 250.0;
      EXPECT_LE(std::abs(static_cast<double>(*fired) - expected_ms), 50.0) << v << " " << d0;
    }
  }
}

TEST(AutoGrasp, SettleModeFiresAtPredictedContact) {
  FirmwareConfig cfg;
  cfg.delay_mode = DelayMode::kSettle;
  for (double v : {10.0, 20.0, 40.0}) {
    const oracle::Approach a{90.0, v};
    GripperFirmware fw(cfg);
    fw.execute_command(CommandCode::kEnableAuto);
    auto fired = fly(fw, a, 20000);
    ASSERT_TRUE(fired) << v;
    EXPECT_LE(std::abs(static_cast<double>(*fired) - a.contact_s() * 1000.0), 50.0) << v;
  }
}

TEST(AutoGrasp, InvalidSampleKeepsSchedule) {
  const oracle::Approach a{60.0, 40.0};
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  for (std::int64_t t = 0; t <= 600; t += 50) {
    fw.tick(TofSample::measured(a.gap(t / 1000.0), t), kIdleCurrents, t);
  }
  ASSERT_EQ(fw.scheduled_fire_ms(), 1750);
  for (std::int64_t t = 650; t <= 1700; t += 50) {
    fw.tick(TofSample::invalid(t), kIdleCurrents, t);
    EXPECT_EQ(fw.scheduled_fire_ms(), 1750);
  }
  fw.tick(TofSample::invalid(1750), kIdleCurrents, 1750);
  EXPECT_EQ(fw.status() & 0x3, 0x3);
}

TEST(AutoGrasp, RecedingTargetNeverFires) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  for (std::int64_t t = 0; t <= 2000; t += 50) tick_to(fw, t, 10.0 + t / 100.0);
  EXPECT_EQ(fw.status() & 0x3, 0);
}

TEST(AutoGrasp, AutoOffNeverChangesAdhesives) {
  const oracle::Approach a{60.0, 40.0};
  GripperFirmware fw;
  EXPECT_FALSE(fly(fw, a, 5000));
  EXPECT_EQ(fw.status(), 0);
}

TEST(AutoGrasp, DisableAutoCancelsSchedule) {
  const oracle::Approach a{60.0, 40.0};
  GripperFirmware fw;
  fw.execute_command(CommandCode::kEnableAuto);
  for (std::int64_t t = 0; t <= 600; t += 50) tick_to(fw, t, a.gap(t / 1000.0));
  ASSERT_TRUE(fw.scheduled_fire_ms());
  fw.execute_command(CommandCode::kDisableAuto);
  for (std::int64_t t = 650; t <= 3000; t += 50) tick_to(fw, t, 0.0);
  EXPECT_EQ(fw.status(), 0);
}

TEST(Logging, OneRecordPerTickWithIncreasingSeq) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kMark, 9);
  for (std::int64_t t = 0; t < 1000; t += 50) {
    auto rec = fw.tick(TofSample::measured(42.4, t), {1, 2, 3, 4}, t);
    ASSERT_TRUE(rec);
    EXPECT_EQ(rec->seq, static_cast<std::uint32_t>(t / 50));
    EXPECT_EQ(rec->timestamp_ms, static_cast<std::uint32_t>(t));
    EXPECT_EQ(rec->experiment_id, 9);
    EXPECT_EQ(rec->tof_mm, 42);
    EXPECT_EQ(rec->tof_valid, 1);
    EXPECT_EQ(rec->status, 0x0010);
    EXPECT_EQ(rec->servo_current_mA, (std::array<std::uint16_t, 4>{1, 2, 3, 4}));
  }
  EXPECT_EQ(fw.log().record_count(9), 20u);
  fw.execute_command(CommandCode::kMark, 0);
  EXPECT_FALSE(fw.tick(TofSample::invalid(1000), kIdleCurrents, 1000));
  EXPECT_EQ(fw.log().record_count(9), 20u);
}

TEST(Logging, CursorSeekAndClamp) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kMark, 4);
  for (std::int64_t t = 0; t < 500; t += 50) tick_to(fw, t);
  fw.execute_command(CommandCode::kMark, 0);

  fw.execute_command(CommandCode::kOpenExp, 4);
  EXPECT_EQ(fw.log_flags(), log_flag_bits::kFileOpen);
  fw.execute_command(CommandCode::kNextRecord, 3);
  EXPECT_EQ(decode_record(fw.current_record()).seq, 3u);
  fw.execute_command(CommandCode::kNextRecord, 100);
  EXPECT_EQ(decode_record(fw.current_record()).seq, 9u);
  EXPECT_EQ(fw.log_flags(), log_flag_bits::kFileOpen | log_flag_bits::kEndOfFile);
  fw.execute_command(CommandCode::kCloseExp);
  EXPECT_EQ(fw.log_flags(), 0);
}

TEST(Logging, RestartingOpenExperimentRewindsCursor) {
  GripperFirmware fw;
  fw.execute_command(CommandCode::kMark, 2);
  for (std::int64_t t = 0; t < 500; t += 50) tick_to(fw, t);
  fw.execute_command(CommandCode::kOpenExp, 2);
  fw.execute_command(CommandCode::kNextRecord, 8);
  fw.execute_command(CommandCode::kMark, 2);
  EXPECT_EQ(fw.read_cursor()->index, 0u);
  EXPECT_EQ(fw.current_record(), RecordBytes{});
  tick_to(fw, 500);
  EXPECT_EQ(decode_record(fw.current_record()).seq, 0u);
}

TEST(Logging, NoOpenFileReadsZeros) {
  GripperFirmware fw;
  EXPECT_EQ(fw.current_record(), RecordBytes{});
  fw.execute_command(CommandCode::kOpenExp, 77);
  EXPECT_EQ(fw.current_record(), RecordBytes{});
  EXPECT_EQ(fw.log_flags(), 0);
}

TEST(Device, RegisterMapDocMatchesCheckedInFile) {
  std::ifstream in(std::string(GECKOPERCH_SOURCE_DIR) + "/docs/register_map.md");
  ASSERT_TRUE(in) << "docs/register_map.md missing; regenerate with `geckoperch regmap`";
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), register_map_markdown());
}

TEST(Device, MapEntriesFitTable) {
  for (const auto& r : kRegisterMap) EXPECT_LE(r.address + r.width, reg::kTableSize) << r.name;
}
