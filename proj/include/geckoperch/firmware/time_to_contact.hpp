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
#include <optional>

namespace geckoperch::firmware {

// VL6180X ranging window.
constexpr double kTofMinMm = 5.0;
constexpr double kTofMaxMm = 100.0;

// One range reading. Distances are carried as reals so a noise-free sensor
// model can report the exact gap; the hardware path quantizes to 1 mm.
struct TofSample {
  double distance_mm = 0.0;
  bool valid = false;
  std::int64_t timestamp_ms = 0;

  static TofSample measured(double distance_mm, std::int64_t timestamp_ms) {
    return {distance_mm, distance_mm >= kTofMinMm && distance_mm <= kTofMaxMm, timestamp_ms};
  }

  static TofSample invalid(std::int64_t timestamp_ms) { return {0.0, false, timestamp_ms}; }
};

// Constant-velocity time to contact from two range readings `dt_s` apart.
// nullopt when the target is not approaching.
inline std::optional<double> estimate_time_to_contact(double d_prev_mm, double d_curr_mm,
                                                      double dt_s) {
  if (dt_s <= 0.0) return std::nullopt;
  const double closing_mm_s = (d_prev_mm - d_curr_mm) / dt_s;
  if (closing_mm_s <= 0.0) return std::nullopt;
  return d_curr_mm / closing_mm_s;
}

}  // namespace geckoperch::firmware
