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

#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "geckoperch/adhesion/tile_pair.hpp"
#include "geckoperch/firmware/commands.hpp"
#include "geckoperch/firmware/gripper_device.hpp"
#include "geckoperch/firmware/gripper_firmware.hpp"
#include "geckoperch/sim/flyer.hpp"

namespace geckoperch::sim {

using nlohmann::json;

constexpr int kScenarioSchemaVersion = 1;

// Bad configuration, tagged with the dotted path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(std::string path, const std::string& message)
      : std::runtime_error(path.empty() ? message : path + ": " + message),
        path_(std::move(path)) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Distribution {
  double mean = 0.0;
  double sd = 0.0;  // normal; 0 = fixed value
};

struct ScheduledCommand {
  double at_s = 0.0;
  std::string name;
  std::optional<std::int64_t> param;
};

struct ScenarioConfig {
  std::string name = "nominal";
  double tick_s = 0.05;
  double duration_s = 60.0;
  double hold_s = 2.0;  // keep running this long after perching
  bool expect_perch = true;

  struct Flyer {
    double mass_kg = 10.0;
    double inertia_kg_m2 = 0.25;
    Vec2 gripper_offset_m{0.3, 0.0};
    AccelLimits limits;
  } flyer;

  struct Surface {
    Vec2 point_m{0.0, 0.0};
    Vec2 normal{-1.0, 0.0};
    double quality = 0.54;
  } surface;

  struct Approach {
    double start_distance_m = 0.5;   // gripper tip in front of the surface
    double waypoint_behind_m = 0.05;  // gripper target behind the surface
    double misalignment_deg = 0.0;
    double initial_speed_mm_s = 0.0;
    double lateral_offset_m = 0.0;
  } approach;

  struct Control {
    PdGains gains;
    bool zero_thrust_when_perched = true;
  } control;

  struct Tof {
    double noise_sigma_mm = 0.0;
    double resolution_mm = 1.0;  // 0 = report the exact range
    std::uint64_t seed = 1;
  } tof;

  struct Firmware {
    std::uint16_t grasp_delay_ms = 250;
    double arm_threshold_mm = 40.0;
    int velocity_window_ticks = 10;
    std::int64_t wrist_ramp_ms = 500;
    bool auto_grasp = true;           // ENABLE AUTO at t = 0
    std::uint16_t log_experiment = 1;  // MARK at t = 0; 0 = no logging
    std::uint8_t device_id = firmware::kDefaultGripperId;
    firmware::DelayMode delay_mode = firmware::DelayMode::kPostContact;
  } firmware;

  adhesion::AdhesionParams adhesion;
  double restitution = 0.0;

  struct Disturbance {
    Vec2 force_N{0.0, 0.0};
    double start_s = 0.0;
    double duration_s = 0.0;
  } disturbance;

  std::vector<ScheduledCommand> script;

  struct MonteCarlo {
    int trials = 200;
    std::uint64_t seed = 7;
    Distribution initial_speed_mm_s{0.0, 0.0};
    Distribution misalignment_deg{0.0, 0.0};
    double tof_noise_sigma_mm = 0.0;
    std::vector<double> speed_bins_mm_s;  // bin edges over the sampled speed
  } monte_carlo;

  std::int64_t tick_ms() const { return std::llround(tick_s * 1000.0); }

  firmware::FirmwareConfig firmware_config() const {
    firmware::FirmwareConfig fc;
    fc.tick_ms = tick_ms();
    fc.grasp_delay_ms = firmware.grasp_delay_ms;
    fc.arm_threshold_mm = firmware.arm_threshold_mm;
    fc.velocity_window_ticks = firmware.velocity_window_ticks;
    fc.wrist_ramp_ms = firmware.wrist_ramp_ms;
    fc.delay_mode = firmware.delay_mode;
    return fc;
  }
};

namespace detail {

// Strict reader: every key present must be consumed, every type must match.
class Reader {
 public:
  Reader(const json& node, std::string path) : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) throw ConfigError(path_, "expected an object");
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string& key) const { return node_.contains(key); }

  const json* take(const std::string& key) {
    if (!node_.contains(key)) return nullptr;
    seen_.insert(key);
    return &node_.at(key);
  }

  void num(const std::string& key, double& out) {
    if (const json* v = take(key)) {
      if (!v->is_number()) throw ConfigError(at(key), "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) throw ConfigError(at(key), "must be finite");
    }
  }

  template <typename Int>
  void integer(const std::string& key, Int& out) {
    if (const json* v = take(key)) {
      if (!v->is_number_integer()) throw ConfigError(at(key), "expected an integer");
      const auto raw = v->get<std::int64_t>();
      if (raw < static_cast<std::int64_t>(std::numeric_limits<Int>::min()) ||
          (raw > 0 && static_cast<std::uint64_t>(raw) > std::numeric_limits<Int>::max())) {
        throw ConfigError(at(key), "integer out of range");
      }
      out = static_cast<Int>(raw);
    }
  }

  void boolean(const std::string& key, bool& out) {
    if (const json* v = take(key)) {
      if (!v->is_boolean()) throw ConfigError(at(key), "expected true or false");
      out = v->get<bool>();
    }
  }

  void string(const std::string& key, std::string& out) {
    if (const json* v = take(key)) {
      if (!v->is_string()) throw ConfigError(at(key), "expected a string");
      out = v->get<std::string>();
    }
  }

  void vec2(const std::string& key, Vec2& out) {
    if (const json* v = take(key)) {
      if (!v->is_array() || v->size() != 2 || !(*v)[0].is_number() || !(*v)[1].is_number()) {
        throw ConfigError(at(key), "expected [x, y]");
      }
      out = {(*v)[0].get<double>(), (*v)[1].get<double>()};
    }
  }

  void distribution(const std::string& key, Distribution& out) {
    if (const json* v = take(key)) {
      Reader r(*v, at(key));
      r.num("mean", out.mean);
      r.num("sd", out.sd);
      r.finish();
      if (out.sd < 0.0) throw ConfigError(at(key) + ".sd", "must be >= 0");
    }
  }

  template <typename Fn>
  void section(const std::string& key, Fn&& fn) {
    if (const json* v = take(key)) {
      Reader r(*v, at(key));
      fn(r);
      r.finish();
    }
  }

  void finish() const {
    for (auto it = node_.begin(); it != node_.end(); ++it) {
      if (!seen_.count(it.key())) throw ConfigError(at(it.key()), "unknown field");
    }
  }

 private:
  const json& node_;
  std::string path_;
  std::set<std::string> seen_;
};

inline void require(bool ok, const std::string& path, const std::string& message) {
  if (!ok) throw ConfigError(path, message);
}

}  // namespace detail

inline void validate(const ScenarioConfig& c) {
  using detail::require;
  require(c.tick_s > 0.0, "tick_s", "must be > 0");
  require(std::abs(c.tick_s * 1000.0 - static_cast<double>(c.tick_ms())) < 1e-9 && c.tick_ms() >= 1,
          "tick_s", "must be a whole number of milliseconds");
  require(c.duration_s > 0.0, "duration_s", "must be > 0");
  require(c.hold_s >= 0.0, "hold_s", "must be >= 0");
  require(c.flyer.mass_kg > 0.0, "flyer.mass_kg", "must be > 0");
  require(c.flyer.inertia_kg_m2 > 0.0, "flyer.inertia_kg_m2", "must be > 0");
  require(c.flyer.limits.linear > 0.0 && c.flyer.limits.linear <= kMaxLinearAccel,
          "flyer.max_accel_m_s2", "must be in (0, 0.1]");
  require(c.flyer.limits.angular > 0.0, "flyer.max_angular_accel_rad_s2", "must be > 0");
  require(c.surface.normal.norm() > 0.0, "surface.normal", "must be non-zero");
  require(c.surface.quality > 0.0 && c.surface.quality <= 1.0, "surface.quality",
          "must be in (0, 1]");
  require(c.approach.start_distance_m > 0.0, "approach.start_distance_m", "must be > 0");
  require(c.approach.waypoint_behind_m > 0.0, "approach.waypoint_behind_m",
          "waypoint must lie strictly behind the surface");
  require(c.control.gains.kp > 0.0, "control.kp", "must be > 0");
  require(c.control.gains.kd > 0.0, "control.kd", "must be > 0");
  require(c.control.gains.kp_heading > 0.0, "control.kp_heading", "must be > 0");
  require(c.control.gains.kd_heading > 0.0, "control.kd_heading", "must be > 0");
  require(c.tof.noise_sigma_mm >= 0.0, "tof.noise_sigma_mm", "must be >= 0");
  require(c.tof.resolution_mm >= 0.0, "tof.resolution_mm", "must be >= 0");
  require(c.firmware.velocity_window_ticks >= 1, "firmware.velocity_window_ticks", "must be >= 1");
  require(c.firmware.device_id <= bus::kMaxUnicastId, "firmware.device_id",
          "must be a unicast id (0-253)");
  require(c.firmware.device_id > 0x02, "firmware.device_id",
          "ids 0x01-0x02 belong to the arm servos");
  require(c.adhesion.friction_coefficient >= 0.0, "adhesion.friction_coefficient", "must be >= 0");
  require(c.adhesion.capacity_ceiling_N > 0.0 && c.adhesion.capacity_ceiling_N <= 20.0,
          "adhesion.capacity_ceiling_N", "must be in (0, 20]");
  require(c.adhesion.release_impulse_N_s >= 0.0 && c.adhesion.release_impulse_N_s <= 0.01,
          "adhesion.release_impulse_N_s", "must be in [0, 0.01]");
  require(c.restitution >= 0.0 && c.restitution <= 1.0, "restitution", "must be in [0, 1]");
  for (std::size_t i = 0; i < c.script.size(); ++i) {
    const std::string p = "script[" + std::to_string(i) + "]";
    require(c.script[i].at_s >= 0.0, p + ".at_s", "must be >= 0");
    auto code = firmware::command_from_name(c.script[i].name);
    require(code.has_value(), p + ".name", "unknown command '" + c.script[i].name + "'");
    const bool takes = firmware::command_info(*code).takes_param;
    require(takes == c.script[i].param.has_value(), p + ".param",
            takes ? "command requires a parameter" : "command takes no parameter");
  }
  require(c.monte_carlo.trials >= 1, "monte_carlo.trials", "must be >= 1");
  require(c.monte_carlo.tof_noise_sigma_mm >= 0.0, "monte_carlo.tof_noise_sigma_mm", "must be >= 0");
  for (std::size_t i = 1; i < c.monte_carlo.speed_bins_mm_s.size(); ++i) {
    require(c.monte_carlo.speed_bins_mm_s[i] > c.monte_carlo.speed_bins_mm_s[i - 1],
            "monte_carlo.speed_bins_mm_s", "edges must increase");
  }
}

inline ScenarioConfig scenario_from_json(const json& doc) {
  ScenarioConfig c;
  detail::Reader root(doc, "");
  int schema = kScenarioSchemaVersion;
  root.integer("schema", schema);
  if (schema != kScenarioSchemaVersion) {
    throw ConfigError("schema", "unsupported schema version " + std::to_string(schema));
  }
  root.string("name", c.name);
  root.num("tick_s", c.tick_s);
  root.num("duration_s", c.duration_s);
  root.num("hold_s", c.hold_s);
  root.boolean("expect_perch", c.expect_perch);
  root.section("flyer", [&](detail::Reader& r) {
    r.num("mass_kg", c.flyer.mass_kg);
    r.num("inertia_kg_m2", c.flyer.inertia_kg_m2);
    r.vec2("gripper_offset_m", c.flyer.gripper_offset_m);
    r.num("max_accel_m_s2", c.flyer.limits.linear);
    r.num("max_angular_accel_rad_s2", c.flyer.limits.angular);
  });
  root.section("surface", [&](detail::Reader& r) {
    r.vec2("point_m", c.surface.point_m);
    r.vec2("normal", c.surface.normal);
    r.num("quality", c.surface.quality);
  });
  root.section("approach", [&](detail::Reader& r) {
    r.num("start_distance_m", c.approach.start_distance_m);
    r.num("waypoint_behind_m", c.approach.waypoint_behind_m);
    r.num("misalignment_deg", c.approach.misalignment_deg);
    r.num("initial_speed_mm_s", c.approach.initial_speed_mm_s);
    r.num("lateral_offset_m", c.approach.lateral_offset_m);
  });
  root.section("control", [&](detail::Reader& r) {
    r.num("kp", c.control.gains.kp);
    r.num("kd", c.control.gains.kd);
    r.num("kp_heading", c.control.gains.kp_heading);
    r.num("kd_heading", c.control.gains.kd_heading);
    r.boolean("zero_thrust_when_perched", c.control.zero_thrust_when_perched);
  });
  root.section("tof", [&](detail::Reader& r) {
    r.num("noise_sigma_mm", c.tof.noise_sigma_mm);
    r.num("resolution_mm", c.tof.resolution_mm);
    r.integer("seed", c.tof.seed);
  });
  root.section("firmware", [&](detail::Reader& r) {
    r.integer("grasp_delay_ms", c.firmware.grasp_delay_ms);
    r.num("arm_threshold_mm", c.firmware.arm_threshold_mm);
    r.integer("velocity_window_ticks", c.firmware.velocity_window_ticks);
    r.integer("wrist_ramp_ms", c.firmware.wrist_ramp_ms);
    r.boolean("auto_grasp", c.firmware.auto_grasp);
    r.integer("log_experiment", c.firmware.log_experiment);
    r.integer("device_id", c.firmware.device_id);
    std::string mode = "post-contact";
    r.string("delay_mode", mode);
    if (mode == "post-contact") {
      c.firmware.delay_mode = firmware::DelayMode::kPostContact;
    } else if (mode == "settle") {
      c.firmware.delay_mode = firmware::DelayMode::kSettle;
    } else {
      throw ConfigError(r.at("delay_mode"), "expected \"post-contact\" or \"settle\"");
    }
  });
  root.section("adhesion", [&](detail::Reader& r) {
    r.num("friction_coefficient", c.adhesion.friction_coefficient);
    r.num("capacity_ceiling_N", c.adhesion.capacity_ceiling_N);
    r.num("nominal_preload_N", c.adhesion.nominal_preload_N);
    r.num("max_gap_mm", c.adhesion.max_gap_mm);
    r.num("max_approach_speed_mm_s", c.adhesion.max_approach_speed_mm_s);
    r.num("max_misalignment_deg", c.adhesion.max_misalignment_deg);
    r.num("release_impulse_N_s", c.adhesion.release_impulse_N_s);
    r.integer("wear_warning_cycles", c.adhesion.wear_warning_cycles);
    r.num("restitution", c.restitution);
  });
  root.section("disturbance", [&](detail::Reader& r) {
    r.vec2("force_N", c.disturbance.force_N);
    r.num("start_s", c.disturbance.start_s);
    r.num("duration_s", c.disturbance.duration_s);
  });
  if (const json* s = root.take("script")) {
    if (!s->is_array()) throw ConfigError("script", "expected an array");
    for (std::size_t i = 0; i < s->size(); ++i) {
      const std::string p = "script[" + std::to_string(i) + "]";
      detail::Reader r((*s)[i], p);
      ScheduledCommand cmd;
      r.num("at_s", cmd.at_s);
      r.string("name", cmd.name);
      if (const json* v = r.take("param"); v && !v->is_null()) {
        if (!v->is_number_integer()) throw ConfigError(p + ".param", "expected an integer");
        cmd.param = v->get<std::int64_t>();
      }
      r.finish();
      c.script.push_back(std::move(cmd));
    }
  }
  root.section("monte_carlo", [&](detail::Reader& r) {
    r.integer("trials", c.monte_carlo.trials);
    r.integer("seed", c.monte_carlo.seed);
    r.distribution("initial_speed_mm_s", c.monte_carlo.initial_speed_mm_s);
    r.distribution("misalignment_deg", c.monte_carlo.misalignment_deg);
    r.num("tof_noise_sigma_mm", c.monte_carlo.tof_noise_sigma_mm);
    if (const json* b = r.take("speed_bins_mm_s")) {
      if (!b->is_array()) throw ConfigError(r.at("speed_bins_mm_s"), "expected an array");
      for (const auto& e : *b) {
        if (!e.is_number()) throw ConfigError(r.at("speed_bins_mm_s"), "expected numbers");
        c.monte_carlo.speed_bins_mm_s.push_back(e.get<double>());
      }
    }
  });
  root.finish();
  validate(c);
  return c;
}

// Sets `dotted.path` in `doc` to `value`. The value is read as JSON when it
// parses (numbers, true/false, arrays), otherwise as a plain string.
inline void apply_override(json& doc, const std::string& dotted_path, const std::string& value) {
  if (dotted_path.empty()) throw ConfigError("", "empty override path");
  json* node = &doc;
  std::stringstream ss(dotted_path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) {
    if (part.empty()) throw ConfigError(dotted_path, "malformed override path");
    parts.push_back(part);
  }
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) {
    if (!node->is_object()) throw ConfigError(dotted_path, "not an object");
    node = &(*node)[parts[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ConfigError(dotted_path, "not an object");
  json parsed = json::parse(value, nullptr, false);
  (*node)[parts.back()] = parsed.is_discarded() ? json(value) : parsed;
}

// "key=value" as given on the command line.
inline std::pair<std::string, std::string> split_override(const std::string& kv) {
  const auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("", "override '" + kv + "' is not of the form key=value");
  }
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

inline json read_config_document(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json doc = json::parse(in, nullptr, false, /*ignore_comments=*/true);
  if (doc.is_discarded()) throw ConfigError("", "config file '" + path + "' is not valid JSON");
  return doc;
}

inline ScenarioConfig load_scenario(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  json doc = read_config_document(path);
  for (const auto& kv : overrides) {
    auto [key, value] = split_override(kv);
    apply_override(doc, key, value);
  }
  return scenario_from_json(doc);
}

}  // namespace geckoperch::sim
