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
#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace geckoperch::adhesion {

// Calibration of the opposed-tile adhesion law and its engagement windows.
struct AdhesionParams {
  // Normal capacity = min(ceiling, mu * shear preload) * surface quality.
  double friction_coefficient = 2.0;
  double capacity_ceiling_N = 20.0;
  double nominal_preload_N = 10.0;
  double max_gap_mm = 1.0;
  double max_approach_speed_mm_s = 200.0;
  double max_misalignment_deg = 10.0;
  double release_impulse_N_s = 0.004;
  std::uint32_t wear_warning_cycles = 30000;
};

struct TilePairState {
  bool in_contact = false;
  bool engaged = false;
  double shear_preload_N = 0.0;
  std::uint32_t load_cycles = 0;
  double surface_quality = 1.0;  // (0, 1]
  bool forcibly_released = false;
};

struct ContactConditions {
  double gap_mm = 0.0;
  double approach_speed_mm_s = 0.0;
  double angular_misalignment_deg = 0.0;
};

enum class EngageFailure { kNoContact, kExcessSpeed, kExcessMisalignment };

inline std::string_view to_string(EngageFailure f) {
  switch (f) {
    case EngageFailure::kNoContact:
      return "no-contact";
    case EngageFailure::kExcessSpeed:
      return "excess-speed";
    case EngageFailure::kExcessMisalignment:
      return "excess-misalignment";
  }
  return "unknown";
}

struct EngageOutcome {
  bool engaged = false;
  std::optional<EngageFailure> failure;
};

inline bool wear_warning(const TilePairState& pair, const AdhesionParams& params) {
  return pair.load_cycles > params.wear_warning_cycles;
}

// The load tendon shears the tiles, then loads them normally. Engagement
// only takes when the tiles sit on the surface, arrived slowly enough, and
// the wrist could absorb the tilt. Engaging an engaged pair is a no-op.
inline EngageOutcome attempt_engage(TilePairState& pair, const ContactConditions& cond,
                                    const AdhesionParams& params) {
  if (pair.engaged) return {true, std::nullopt};
  pair.in_contact = cond.gap_mm <= params.max_gap_mm;
  if (!pair.in_contact) return {false, EngageFailure::kNoContact};
  if (std::abs(cond.approach_speed_mm_s) > params.max_approach_speed_mm_s) {
    return {false, EngageFailure::kExcessSpeed};
  }
  if (std::abs(cond.angular_misalignment_deg) > params.max_misalignment_deg) {
    return {false, EngageFailure::kExcessMisalignment};
  }
  pair.engaged = true;
  pair.forcibly_released = false;
  pair.shear_preload_N = params.nominal_preload_N;
  ++pair.load_cycles;
  return {true, std::nullopt};
}

inline double normal_capacity(const TilePairState& pair, const AdhesionParams& params) {
  if (!pair.engaged) return 0.0;
  const double shear_limited =
      std::min(params.capacity_ceiling_N, params.friction_coefficient * pair.shear_preload_N);
  return std::max(0.0, shear_limited) * std::clamp(pair.surface_quality, 0.0, 1.0);
}

struct LoadOutcome {
  bool holds = true;
  std::vector<std::size_t> detached;
  std::vector<double> pair_loads_N;
};

// Splits a normal pull (positive = away from the surface) equally over the
// engaged pairs. Each pair is judged against its own capacity; a pair that
// lets go does not hand its share to the survivor in the same step.
inline LoadOutcome apply_normal_load(std::span<TilePairState> pairs, double total_load_N,
                                     const AdhesionParams& params) {
  LoadOutcome out;
  out.pair_loads_N.assign(pairs.size(), 0.0);
  const auto engaged = static_cast<std::size_t>(
      std::count_if(pairs.begin(), pairs.end(), [](const TilePairState& p) { return p.engaged; }));
  if (total_load_N <= 0.0) return out;
  if (engaged == 0) {
    out.holds = false;
    return out;
  }

  const double share = total_load_N / static_cast<double>(engaged);
  std::vector<double> capacity(pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) capacity[i] = normal_capacity(pairs[i], params);

  for (std::size_t i = 0; i < pairs.size(); ++i) {
    if (!pairs[i].engaged) continue;
    out.pair_loads_N[i] = share;
    if (share > capacity[i]) {
      pairs[i].engaged = false;
      pairs[i].in_contact = false;
      pairs[i].shear_preload_N = 0.0;
      pairs[i].forcibly_released = true;
      out.detached.push_back(i);
    }
  }
  out.holds = out.detached.size() < engaged;
  return out;
}

struct ReleaseOutcome {
  double impulse_N_s = 0.0;
  bool forcible = false;
};

// Peel release. Returns the reaction impulse pushed into the robot.
inline ReleaseOutcome release(TilePairState& pair, double normal_load_N,
                              const AdhesionParams& params) {
  if (!pair.engaged) return {};
  ReleaseOutcome out{params.release_impulse_N_s, normal_load_N > 0.0};
  pair.engaged = false;
  pair.shear_preload_N = 0.0;
  pair.forcibly_released = out.forcible;
  return out;
}

}  // namespace geckoperch::adhesion
