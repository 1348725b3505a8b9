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
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace geckoperch::sim {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  Vec2& operator+=(Vec2 o) {
    x += o.x;
    y += o.y;
    return *this;
  }
  bool operator==(const Vec2&) const = default;

  double dot(Vec2 o) const { return x * o.x + y * o.y; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 rotate(Vec2 v, double angle) {
  const double c = std::cos(angle);
  const double s = std::sin(angle);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

inline double wrap_angle(double a) {
  const double r = std::remainder(a, 2.0 * std::numbers::pi);
  return r <= -std::numbers::pi ? r + 2.0 * std::numbers::pi : r;
}

inline double deg_to_rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / std::numbers::pi; }

// Astrobee thrust ceiling along any axis.
constexpr double kMaxLinearAccel = 0.1;

// Planar rigid body on an air-bearing table. The gripper sits at
// `gripper_offset` in the body frame and points along body +x.
struct FlyerState {
  Vec2 position;
  double heading = 0.0;
  Vec2 velocity;
  double angular_rate = 0.0;
  double mass_kg = 10.0;
  double inertia_kg_m2 = 0.25;
  Vec2 gripper_offset{0.3, 0.0};
};

inline Vec2 gripper_tip(const FlyerState& s) { return s.position + rotate(s.gripper_offset, s.heading); }

inline Vec2 gripper_axis(const FlyerState& s) { return rotate({1.0, 0.0}, s.heading); }

// Flat perch target: a line in the plane with an outward unit normal.
struct PerchSurface {
  Vec2 point;
  Vec2 normal{-1.0, 0.0};
  double surface_quality = 1.0;

  static PerchSurface make(Vec2 point, Vec2 normal, double quality) {
    const double n = normal.norm();
    if (!(n > 0.0)) throw std::invalid_argument("surface normal must be non-zero");
    if (!(quality > 0.0 && quality <= 1.0)) {
      throw std::invalid_argument("surface quality must be in (0, 1]");
    }
    return {point, normal * (1.0 / n), quality};
  }

  // Signed distance of `p` in front of the surface.
  double height(Vec2 p) const { return (p - point).dot(normal); }
};

struct Waypoint {
  Vec2 position;
  double heading = 0.0;
};

struct PdGains {
  double kp = 0.01;
  double kd = 0.04;
  double kp_heading = 0.4;
  double kd_heading = 1.2;
};

struct AccelLimits {
  double linear = kMaxLinearAccel;
  double angular = 0.1;
};

struct AccelCommand {
  Vec2 linear;
  double angular = 0.0;
};

// a = Kp (waypoint - pos) - Kd vel, clamped per axis; heading likewise.
inline AccelCommand pd_control(const FlyerState& s, const Waypoint& w, const PdGains& g,
                               const AccelLimits& limits = {}) {
  if (!(g.kp > 0.0) || !(g.kd > 0.0)) throw std::invalid_argument("PD gains must be positive");
  const Vec2 raw = (w.position - s.position) * g.kp - s.velocity * g.kd;
  const double alpha = g.kp_heading * wrap_angle(w.heading - s.heading) - g.kd_heading * s.angular_rate;
  return {{std::clamp(raw.x, -limits.linear, limits.linear),
           std::clamp(raw.y, -limits.linear, limits.linear)},
          std::clamp(alpha, -limits.angular, limits.angular)};
}

// Semi-implicit Euler for free flight. `force` is any external force in
// newtons on top of the commanded acceleration.
inline void integrate_free(FlyerState& s, const AccelCommand& cmd, Vec2 force, double dt) {
  const Vec2 accel = cmd.linear + force * (1.0 / s.mass_kg);
  s.velocity += accel * dt;
  s.angular_rate += cmd.angular * dt;
  s.position += s.velocity * dt;
  s.heading = wrap_angle(s.heading + s.angular_rate * dt);
}

// Angle between the gripper axis and the inward surface normal.
inline double misalignment_deg(const FlyerState& s, const PerchSurface& surface) {
  const Vec2 inward = surface.normal * -1.0;
  const Vec2 axis = gripper_axis(s);
  const double cross = axis.x * inward.y - axis.y * inward.x;
  return rad_to_deg(std::atan2(cross, axis.dot(inward)));
}

}  // namespace geckoperch::sim
