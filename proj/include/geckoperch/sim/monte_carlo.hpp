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
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "geckoperch/sim/config.hpp"
#include "geckoperch/sim/simulation.hpp"

namespace geckoperch::sim {

constexpr double kZ95 = 1.959963984540054;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

// Wilson score interval for a binomial proportion.
inline Interval wilson_interval(int successes, int n, double z = kZ95) {
  if (n <= 0) return {0.0, 1.0};
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double centre = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

// Derives independent per-trial seeds from one master seed.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

struct TrialSample {
  int index = 0;
  double initial_speed_mm_s = 0.0;
  double misalignment_deg = 0.0;
  std::uint64_t tof_seed = 0;
};

struct TrialOutcome {
  TrialSample sample;
  bool perched = false;
  std::string end_reason;
  std::optional<std::string> failure;
  std::optional<double> contact_speed_mm_s;
  std::optional<double> trigger_error_ms;
};

struct BinSummary {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
  int trials = 0;
  int successes = 0;
  double rate = 0.0;
  Interval ci;
};

struct CampaignResult {
  std::uint64_t seed = 0;
  std::vector<TrialOutcome> trials;
  std::vector<BinSummary> bins;
  BinSummary overall;
};

inline std::vector<TrialSample> sample_trials(const ScenarioConfig::MonteCarlo& mc, int n,
                                              std::uint64_t seed) {
  std::vector<TrialSample> out;
  out.reserve(static_cast<std::size_t>(n));
  std::uint64_t state = seed;
  for (int i = 0; i < n; ++i) {
    std::mt19937_64 rng(splitmix64(state));
    std::normal_distribution<double> unit(0.0, 1.0);
    TrialSample s;
    s.index = i;
    s.initial_speed_mm_s = mc.initial_speed_mm_s.mean + mc.initial_speed_mm_s.sd * unit(rng);
    s.misalignment_deg = mc.misalignment_deg.mean + mc.misalignment_deg.sd * unit(rng);
    s.tof_seed = rng();
    out.push_back(s);
  }
  return out;
}

inline ScenarioConfig trial_config(const ScenarioConfig& base, const TrialSample& s) {
  ScenarioConfig c = base;
  c.approach.initial_speed_mm_s = s.initial_speed_mm_s;
  c.approach.misalignment_deg = s.misalignment_deg;
  c.tof.noise_sigma_mm = base.monte_carlo.tof_noise_sigma_mm;
  c.tof.seed = s.tof_seed;
  return c;
}

inline BinSummary summarize(double lo, double hi, const std::vector<TrialOutcome>& trials) {
  BinSummary b;
  b.lo = lo;
  b.hi = hi;
  for (const auto& t : trials) {
    const double v = t.sample.initial_speed_mm_s;
    if (v < lo || v >= hi) continue;
    ++b.trials;
    if (t.perched) ++b.successes;
  }
  b.rate = b.trials > 0 ? static_cast<double>(b.successes) / b.trials : 0.0;
  b.ci = wilson_interval(b.successes, b.trials);
  return b;
}

// `n` seeded trials drawn from the campaign distributions. Bins are over the
// sampled initial speed; the outer bins are open-ended.
inline CampaignResult run_campaign(const ScenarioConfig& base, int n, std::uint64_t seed) {
  if (n < 1) throw ConfigError("monte_carlo.trials", "must be >= 1");
  CampaignResult out;
  out.seed = seed;
  for (const TrialSample& s : sample_trials(base.monte_carlo, n, seed)) {
    Simulation sim(trial_config(base, s));
    sim.set_keep_telemetry(false);
    ScenarioResult r = sim.run();
    TrialOutcome t;
    t.sample = s;
    t.perched = r.perched;
    t.end_reason = r.end_reason;
    if (!r.engage_failures.empty()) {
      t.failure = std::string(adhesion::to_string(r.engage_failures.front().reason));
    }
    t.contact_speed_mm_s = r.contact_speed_mm_s;
    t.trigger_error_ms = r.trigger_error_ms;
    out.trials.push_back(std::move(t));
  }

  constexpr double kInf = std::numeric_limits<double>::infinity();
  const auto& edges = base.monte_carlo.speed_bins_mm_s;
  out.overall = summarize(-kInf, kInf, out.trials);
  if (edges.empty()) {
    out.bins.push_back(out.overall);
  } else {
    out.bins.push_back(summarize(-kInf, edges.front(), out.trials));
    for (std::size_t i = 0; i + 1 < edges.size(); ++i) {
      out.bins.push_back(summarize(edges[i], edges[i + 1], out.trials));
    }
    out.bins.push_back(summarize(edges.back(), kInf, out.trials));
  }
  return out;
}

inline std::string format_bound(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

inline std::string campaign_csv(const CampaignResult& c) {
  std::string out = "bin_lo_mm_s,bin_hi_mm_s,trials,successes,success_rate,wilson_lo,wilson_hi\n";
  auto row = [&](const BinSummary& b, const std::string& lo, const std::string& hi) {
    char buf[160];
    std::snprintf(buf, sizeof buf, ",%d,%d,%.6f,%.6f,%.6f\n", b.trials, b.successes, b.rate,
                  b.ci.lo, b.ci.hi);
    out += lo + "," + hi + buf;
  };
  for (const auto& b : c.bins) row(b, format_bound(b.lo), format_bound(b.hi));
  row(c.overall, "all", "all");
  return out;
}

inline std::string trials_csv(const CampaignResult& c) {
  std::string out =
      "trial,initial_speed_mm_s,misalignment_deg,tof_seed,perched,end_reason,failure,"
      "contact_speed_mm_s,trigger_error_ms\n";
  for (const auto& t : c.trials) {
    char buf[256];
    auto opt = [](const std::optional<double>& v) {
      if (!v) return std::string();
      char b[32];
      std::snprintf(b, sizeof b, "%.6g", *v);
      return std::string(b);
    };
    std::snprintf(buf, sizeof buf, "%d,%.6f,%.6f,%llu,%d,", t.sample.index,
                  t.sample.initial_speed_mm_s, t.sample.misalignment_deg,
                  static_cast<unsigned long long>(t.sample.tof_seed), t.perched ? 1 : 0);
    out += buf + t.end_reason + "," + t.failure.value_or("") + "," + opt(t.contact_speed_mm_s) +
           "," + opt(t.trigger_error_ms) + "\n";
  }
  return out;
}

}  // namespace geckoperch::sim
