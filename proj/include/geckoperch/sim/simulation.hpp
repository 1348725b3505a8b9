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
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "geckoperch/adhesion/tile_pair.hpp"
#include "geckoperch/bus/bus.hpp"
#include "geckoperch/firmware/gripper_device.hpp"
#include "geckoperch/firmware/gripper_firmware.hpp"
#include "geckoperch/pac/bridge.hpp"
#include "geckoperch/sim/config.hpp"
#include "geckoperch/sim/flyer.hpp"

namespace geckoperch::sim {

// Range finder on the palm, looking along the gripper axis.
class TofSensor {
 public:
  TofSensor(const ScenarioConfig::Tof& cfg) : cfg_(cfg), rng_(cfg.seed) {}

  // Exact range along the gripper axis to the surface plane, in mm. nullopt
  // when the beam grazes or points away.
  static std::optional<double> true_range_mm(const FlyerState& flyer, const PerchSurface& surface) {
    const double cos_incidence = gripper_axis(flyer).dot(surface.normal * -1.0);
    if (cos_incidence < 0.05) return std::nullopt;
    const double gap_m = std::max(0.0, surface.height(gripper_tip(flyer)));
    return gap_m / cos_incidence * 1000.0;
  }

  firmware::TofSample sample(const FlyerState& flyer, const PerchSurface& surface,
                             std::int64_t now_ms) {
    auto range = true_range_mm(flyer, surface);
    if (!range) return firmware::TofSample::invalid(now_ms);
    double d = *range;
    if (cfg_.noise_sigma_mm > 0.0) d += noise_(rng_) * cfg_.noise_sigma_mm;
    if (cfg_.resolution_mm > 0.0) d = std::round(d / cfg_.resolution_mm) * cfg_.resolution_mm;
    return firmware::TofSample::measured(d, now_ms);
  }

 private:
  ScenarioConfig::Tof cfg_;
  std::mt19937_64 rng_;
  std::normal_distribution<double> noise_{0.0, 1.0};
};

struct TelemetryRow {
  std::int64_t tick = 0;
  double time_s = 0.0;
  Vec2 position;
  double heading = 0.0;
  Vec2 velocity;
  double angular_rate = 0.0;
  AccelCommand command;
  double tof_mm = 0.0;
  bool tof_valid = false;
  std::uint16_t status = 0;
  std::array<double, 2> pair_loads_N{};
  std::array<std::uint16_t, 4> currents_mA{};
  bool perched = false;

  bool operator==(const TelemetryRow& o) const {
    return tick == o.tick && time_s == o.time_s && position == o.position &&
           heading == o.heading && velocity == o.velocity && angular_rate == o.angular_rate &&
           command.linear == o.command.linear && command.angular == o.command.angular &&
           tof_mm == o.tof_mm && tof_valid == o.tof_valid && status == o.status &&
           pair_loads_N == o.pair_loads_N && currents_mA == o.currents_mA && perched == o.perched;
  }
};

struct EngageFailureEvent {
  double time_s = 0.0;
  std::size_t pair = 0;
  adhesion::EngageFailure reason = adhesion::EngageFailure::kNoContact;
};

struct ScenarioResult {
  std::string scenario;
  bool perched = false;
  bool expect_perch = true;
  bool detached_after_perch = false;
  std::string end_reason;  // perched | timeout | detached | engage-failed | released
  std::optional<double> contact_time_s;
  std::optional<double> contact_speed_mm_s;
  std::optional<double> fire_time_s;  // first engage, from any source
  bool auto_fired = false;            // that engage came from the auto-grasp trigger
  std::optional<double> perch_time_s;
  std::optional<double> trigger_error_ms;
  std::vector<EngageFailureEvent> engage_failures;
  std::int64_t ticks = 0;
  double end_time_s = 0.0;
  std::uint16_t final_status = 0;
  std::uint16_t grasp_delay_ms = 0;
  std::vector<TelemetryRow> telemetry;
};

// One perching run: flyer, surface, gripper firmware on its bus behind the
// arm controller, advanced in fixed ticks. Commands from outside enter only
// through queue_command() and are applied at the next tick boundary.
class Simulation {
 public:
  explicit Simulation(ScenarioConfig cfg)
      : cfg_(std::move(cfg)),
        firmware_(cfg_.firmware_config()),
        device_(firmware_, cfg_.firmware.device_id),
        shoulder_(0x01),
        wrist_(0x02),
        bridge_(bus_, cfg_.firmware.device_id),
        sensor_(cfg_.tof),
        surface_(PerchSurface::make(cfg_.surface.point_m, cfg_.surface.normal, cfg_.surface.quality)) {
    validate(cfg_);
    bus_.attach(shoulder_);
    bus_.attach(wrist_);
    bus_.attach(device_);

    for (auto& p : pairs_) p.surface_quality = surface_.surface_quality;

    const Vec2 n = surface_.normal;
    const Vec2 tangent{-n.y, n.x};
    const double aligned = std::atan2(-n.y, -n.x);
    const double heading = wrap_angle(aligned + deg_to_rad(cfg_.approach.misalignment_deg));
    FlyerState& f = world_flyer_;
    f.mass_kg = cfg_.flyer.mass_kg;
    f.inertia_kg_m2 = cfg_.flyer.inertia_kg_m2;
    f.gripper_offset = cfg_.flyer.gripper_offset_m;
    f.heading = heading;
    const Vec2 tip = surface_.point + n * cfg_.approach.start_distance_m +
                     tangent * cfg_.approach.lateral_offset_m;
    f.position = tip - rotate(f.gripper_offset, heading);
    f.velocity = n * (-cfg_.approach.initial_speed_mm_s / 1000.0);

    const Vec2 tip_goal = surface_.point - n * cfg_.approach.waypoint_behind_m +
                          tangent * cfg_.approach.lateral_offset_m;
    waypoint_ = {tip_goal - rotate(f.gripper_offset, heading), heading};

    if (cfg_.firmware.log_experiment != 0) {
      initial_.push_back({0.0, "MARK", cfg_.firmware.log_experiment});
    }
    if (cfg_.firmware.auto_grasp) initial_.push_back({0.0, "ENABLE AUTO", std::nullopt});
    script_ = cfg_.script;
    std::stable_sort(script_.begin(), script_.end(),
                     [](const ScheduledCommand& a, const ScheduledCommand& b) { return a.at_s < b.at_s; });
    script_.insert(script_.begin(), initial_.begin(), initial_.end());
  }

  Simulation(const Simulation&) = delete;
  Simulation& operator=(const Simulation&) = delete;

  void queue_command(pac::HostCommand cmd) { queued_.push_back(cmd); }

  // Advances one tick. Returns the dispatch results of commands applied at
  // this boundary, in queue order (scripted commands first).
  std::vector<pac::DispatchResult> step_tick() {
    const std::int64_t now_ms = tick_ * cfg_.tick_ms();
    const double t = static_cast<double>(now_ms) / 1000.0;

    const firmware::TofSample tof = sensor_.sample(world_flyer_, surface_, now_ms);
    const auto currents = synth_currents();
    firmware_.tick(tof, currents, now_ms);

    std::vector<pac::DispatchResult> applied;
    while (script_pos_ < script_.size() && script_[script_pos_].at_s <= t + 1e-9) {
      const auto& s = script_[script_pos_++];
      applied.push_back(bridge_.dispatch(s.name, s.param));
    }
    for (const auto& cmd : queued_) applied.push_back(bridge_.dispatch(cmd));
    queued_.clear();

    sync_adhesion(t);

    AccelCommand cmd;
    if (!(perched_ && cfg_.control.zero_thrust_when_perched)) {
      cmd = pd_control(world_flyer_, waypoint_, cfg_.control.gains, cfg_.flyer.limits);
    }
    const Vec2 external = disturbance(t);

    std::array<double, 2> loads{};
    if (perched_) {
      const double pull = (cmd.linear * world_flyer_.mass_kg + external).dot(surface_.normal);
      adhesion::LoadOutcome lo = adhesion::apply_normal_load(pairs_, pull, cfg_.adhesion);
      loads = {lo.pair_loads_N[0], lo.pair_loads_N[1]};
      if (!lo.holds) {
        perched_ = false;
        result_.detached_after_perch = true;
        touching_ = false;
      }
    }

    TelemetryRow row;
    row.tick = tick_;
    row.time_s = t;
    row.position = world_flyer_.position;
    row.heading = world_flyer_.heading;
    row.velocity = world_flyer_.velocity;
    row.angular_rate = world_flyer_.angular_rate;
    row.command = cmd;
    row.tof_mm = tof.distance_mm;
    row.tof_valid = tof.valid;
    row.status = firmware_.status();
    row.pair_loads_N = loads;
    row.currents_mA = currents;
    row.perched = perched_;
    result_.telemetry.push_back(row);

    integrate(cmd, external, t);
    ++tick_;
    update_finished(t + cfg_.tick_s);
    return applied;
  }

  bool finished() const { return finished_; }

  ScenarioResult run() {
    while (!finished_) step_tick();
    return result();
  }

  ScenarioResult result() const {
    ScenarioResult r = result_;
    r.scenario = cfg_.name;
    r.expect_perch = cfg_.expect_perch;
    r.perched = perched_;
    r.ticks = tick_;
    r.end_time_s = static_cast<double>(tick_ * cfg_.tick_ms()) / 1000.0;
    r.final_status = firmware_.status();
    r.grasp_delay_ms = firmware_.state().grasp_delay_ms;
    if (r.auto_fired && r.fire_time_s && r.contact_time_s) {
      r.trigger_error_ms =
          (*r.fire_time_s - (*r.contact_time_s + r.grasp_delay_ms / 1000.0)) * 1000.0;
    }
    if (r.end_reason.empty()) r.end_reason = finished_ ? "timeout" : "running";
    return r;
  }

  const ScenarioConfig& config() const { return cfg_; }
  const FlyerState& flyer() const { return world_flyer_; }
  const PerchSurface& surface() const { return surface_; }
  const std::array<adhesion::TilePairState, 2>& pairs() const { return pairs_; }
  bool perched() const { return perched_; }
  std::int64_t tick() const { return tick_; }
  const TelemetryRow* last_row() const {
    return result_.telemetry.empty() ? nullptr : &result_.telemetry.back();
  }

  firmware::GripperFirmware& firmware() { return firmware_; }
  bus::Bus& bus() { return bus_; }
  pac::PacBridge& bridge() { return bridge_; }

  // Keeps the telemetry vector from growing without bound in long sessions.
  void set_keep_telemetry(bool keep) { keep_telemetry_ = keep; }

 private:
  adhesion::ContactConditions contact_conditions() const {
    const double gap_mm = std::max(0.0, surface_.height(gripper_tip(world_flyer_))) * 1000.0;
    const double closing_mm_s = -world_flyer_.velocity.dot(surface_.normal) * 1000.0;
    return {gap_mm, touching_ ? result_.contact_speed_mm_s.value_or(closing_mm_s) : closing_mm_s,
            misalignment_deg(world_flyer_, surface_)};
  }

  void sync_adhesion(double t) {
    const auto& engaged = firmware_.state().adhesive_engaged;
    for (std::size_t i = 0; i < pairs_.size(); ++i) {
      if (engaged[i] && !commanded_[i]) {
        if (!result_.fire_time_s) {
          result_.fire_time_s = t;
          result_.auto_fired = firmware_.last_auto_fire_ms() == firmware_.now_ms();
        }
        adhesion::EngageOutcome o =
            adhesion::attempt_engage(pairs_[i], contact_conditions(), cfg_.adhesion);
        if (!o.engaged && o.failure) result_.engage_failures.push_back({t, i, *o.failure});
      } else if (!engaged[i] && commanded_[i]) {
        adhesion::ReleaseOutcome rel = adhesion::release(pairs_[i], 0.0, cfg_.adhesion);
        release_impulse_N_s_ += rel.impulse_N_s;
      }
      commanded_[i] = engaged[i];
    }

    const bool holding = pairs_[0].engaged || pairs_[1].engaged;
    if (holding && !perched_ && !result_.detached_after_perch) {
      perched_ = true;
      if (!result_.perch_time_s) result_.perch_time_s = t;
      perch_tip_ = gripper_tip(world_flyer_);
      perch_heading_ = world_flyer_.heading;
      world_flyer_.velocity = {};
      world_flyer_.angular_rate = 0.0;
    } else if (!holding && perched_) {
      perched_ = false;
      released_ = true;
    }
    if (!perched_ && release_impulse_N_s_ > 0.0) {
      world_flyer_.velocity += surface_.normal * (release_impulse_N_s_ / world_flyer_.mass_kg);
      release_impulse_N_s_ = 0.0;
    }
  }

  Vec2 disturbance(double t) const {
    const auto& d = cfg_.disturbance;
    if (d.duration_s > 0.0 && t + 1e-9 >= d.start_s && t < d.start_s + d.duration_s - 1e-9) {
      return d.force_N;
    }
    return {};
  }

  void integrate(const AccelCommand& cmd, Vec2 external, double t) {
    const double dt = cfg_.tick_s;
    FlyerState& f = world_flyer_;
    if (perched_) {
      // Pinned at the palm; the ball wrist lets the body swing +/-10 degrees.
      constexpr double kWristLimit = 10.0 * std::numbers::pi / 180.0;
      f.velocity = {};
      f.angular_rate += cmd.angular * dt;
      double dev = wrap_angle(f.heading + f.angular_rate * dt - perch_heading_);
      if (std::abs(dev) > kWristLimit) {
        dev = std::copysign(kWristLimit, dev);
        f.angular_rate = 0.0;
      }
      f.heading = wrap_angle(perch_heading_ + dev);
      f.position = perch_tip_ - rotate(f.gripper_offset, f.heading);
      return;
    }

    const double gap_before = surface_.height(gripper_tip(f));
    integrate_free(f, cmd, external, dt);
    const double gap_after = surface_.height(gripper_tip(f));
    if (gap_after < 0.0) {
      const Vec2 n = surface_.normal;
      const double vn = f.velocity.dot(n);
      if (!touching_) {
        const double frac = gap_before > 0.0 ? gap_before / (gap_before - gap_after) : 1.0;
        if (!result_.contact_time_s) {
          result_.contact_time_s = t + frac * dt;
          result_.contact_speed_mm_s = std::max(0.0, -vn) * 1000.0;
        }
        touching_ = true;
      }
      f.position += n * (-gap_after);
      if (vn < 0.0) f.velocity += n * (-(1.0 + cfg_.restitution) * vn);
    } else if (gap_after > kContactHysteresis_m) {
      touching_ = false;
    }
  }

  void update_finished(double t_next) {
    if (finished_) return;
    if (result_.detached_after_perch) {
      finish("detached");
    } else if (perched_ && result_.perch_time_s && t_next - *result_.perch_time_s >= cfg_.hold_s - 1e-9) {
      finish("perched");
    } else if (released_ && !perched_) {
      finish("released");
    } else if (!perched_ && !result_.engage_failures.empty() &&
               t_next - result_.engage_failures.front().time_s >= cfg_.hold_s - 1e-9) {
      finish("engage-failed");
    } else if (t_next >= cfg_.duration_s - 1e-9) {
      finish("timeout");
    }
    if (!keep_telemetry_ && result_.telemetry.size() > 1) {
      result_.telemetry.erase(result_.telemetry.begin(), result_.telemetry.end() - 1);
    }
  }

  void finish(const char* reason) {
    finished_ = true;
    result_.end_reason = reason;
  }

  std::array<std::uint16_t, 4> synth_currents() {
    const auto& cmd = firmware_.state().servo_commands;
    std::array<std::uint16_t, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) {
      const int moving = std::abs(static_cast<int>(cmd[i]) - static_cast<int>(last_servo_[i]));
      int hold = 0;
      if (i < 2 && cmd[i] == firmware::servo_position::kLoadTension) hold = 95;
      if (i == 3 && cmd[i] > 800) hold = 60;
      out[i] = static_cast<std::uint16_t>(15 + 2 * moving + hold);
    }
    last_servo_ = cmd;
    return out;
  }

  static constexpr double kContactHysteresis_m = 1e-3;

  ScenarioConfig cfg_;
  firmware::GripperFirmware firmware_;
  firmware::GripperDevice device_;
  bus::StubServo shoulder_;
  bus::StubServo wrist_;
  bus::Bus bus_;
  pac::PacBridge bridge_;
  TofSensor sensor_;
  PerchSurface surface_;
  FlyerState world_flyer_;
  Waypoint waypoint_;
  std::array<adhesion::TilePairState, 2> pairs_{};
  std::array<bool, 2> commanded_{};
  std::array<std::uint16_t, 4> last_servo_{};
  std::vector<ScheduledCommand> initial_;
  std::vector<ScheduledCommand> script_;
  std::size_t script_pos_ = 0;
  std::vector<pac::HostCommand> queued_;
  ScenarioResult result_;
  std::int64_t tick_ = 0;
  bool perched_ = false;
  bool touching_ = false;
  bool released_ = false;
  bool finished_ = false;
  bool keep_telemetry_ = true;
  double release_impulse_N_s_ = 0.0;
  Vec2 perch_tip_;
  double perch_heading_ = 0.0;
};

inline ScenarioResult run_scenario(const ScenarioConfig& cfg) {
  Simulation sim(cfg);
  return sim.run();
}

// Pure function of the result document: 0 when the perch outcome matched
// the expectation, 1 otherwise.
inline int exit_code_for(const nlohmann::json& result) {
  return result.at("perched").get<bool>() == result.at("expect_perch").get<bool>() ? 0 : 1;
}

inline nlohmann::json result_to_json(const ScenarioResult& r) {
  using nlohmann::json;
  auto opt = [](const std::optional<double>& v) { return v ? json(*v) : json(nullptr); };
  char hex[8];
  std::snprintf(hex, sizeof hex, "0x%04X", r.final_status);
  json failures = json::array();
  for (const auto& f : r.engage_failures) {
    failures.push_back({{"time_s", f.time_s},
                        {"pair", f.pair == 0 ? "A" : "B"},
                        {"reason", std::string(adhesion::to_string(f.reason))}});
  }
  json j = {{"schema", "geckoperch.result/1"},
            {"scenario", r.scenario},
            {"perched", r.perched},
            {"expect_perch", r.expect_perch},
            {"end_reason", r.end_reason},
            {"detached_after_perch", r.detached_after_perch},
            {"contact_time_s", opt(r.contact_time_s)},
            {"contact_speed_mm_s", opt(r.contact_speed_mm_s)},
            {"fire_time_s", opt(r.fire_time_s)},
            {"auto_fired", r.auto_fired},
            {"perch_time_s", opt(r.perch_time_s)},
            {"trigger_error_ms", opt(r.trigger_error_ms)},
            {"grasp_delay_ms", r.grasp_delay_ms},
            {"engage_failures", failures},
            {"ticks", r.ticks},
            {"end_time_s", r.end_time_s},
            {"final_status", r.final_status},
            {"final_status_hex", hex}};
  j["exit_code"] = exit_code_for(j);
  return j;
}

constexpr const char* kTelemetryCsvHeader =
    "tick,time_s,x_m,y_m,heading_rad,vx_m_s,vy_m_s,omega_rad_s,ax_cmd_m_s2,ay_cmd_m_s2,"
    "alpha_cmd_rad_s2,tof_mm,tof_valid,status_hex,load_a_N,load_b_N,perched";

inline std::string telemetry_csv_row(const TelemetryRow& r) {
  char buf[512];
  std::snprintf(buf, sizeof buf,
                "%lld,%.3f,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.3f,%d,0x%04X,%.6g,%.6g,%d",
                static_cast<long long>(r.tick), r.time_s, r.position.x, r.position.y, r.heading,
                r.velocity.x, r.velocity.y, r.angular_rate, r.command.linear.x,
                r.command.linear.y, r.command.angular, r.tof_mm, r.tof_valid ? 1 : 0, r.status,
                r.pair_loads_N[0], r.pair_loads_N[1], r.perched ? 1 : 0);
  return buf;
}

inline std::string telemetry_csv(const std::vector<TelemetryRow>& rows) {
  std::string out = std::string(kTelemetryCsvHeader) + "\n";
  for (const auto& r : rows) out += telemetry_csv_row(r) + "\n";
  return out;
}

}  // namespace geckoperch::sim
