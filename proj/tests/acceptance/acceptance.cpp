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

// Acceptance checks. One PASS/FAIL line per criterion; exit status is the
// number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#include "geckoperch/adhesion/pull_test.hpp"
#include "geckoperch/adhesion/tile_pair.hpp"
#include "geckoperch/bus/packet.hpp"
#include "geckoperch/firmware/gripper_device.hpp"
#include "geckoperch/pac/bridge.hpp"
#include "geckoperch/sim/config.hpp"
#include "geckoperch/sim/monte_carlo.hpp"
#include "geckoperch/sim/simulation.hpp"
#include "model_check.hpp"
#include "oracles.hpp"

using namespace geckoperch;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const char* name, bool pass, const std::string& detail) {
  std::printf("%s %s: %s\n", pass ? "PASS" : "FAIL", name, detail.c_str());
  std::fflush(stdout);
  if (!pass) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

sim::ScenarioConfig nominal(const std::vector<std::string>& overrides = {}) {
  return sim::load_scenario(std::string(GECKOPERCH_SOURCE_DIR) + "/configs/nominal.json",
                            overrides);
}

void protocol_suite() {
  const auto t0 = Clock::now();
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<int> id(0, bus::kBroadcastId), instr(1, 3),
      len(0, static_cast<int>(bus::kMaxParams)), byte(0, 255), delta(1, 255);
  int round_trip_ok = 0, rejected = 0;
  constexpr int kN = 10000;
  for (int i = 0; i < kN; ++i) {
    bus::Packet p;
    p.device_id = static_cast<std::uint8_t>(id(rng));
    p.instruction = static_cast<bus::Instruction>(instr(rng));
    p.params.resize(static_cast<std::size_t>(len(rng)));
    for (auto& b : p.params) b = static_cast<std::uint8_t>(byte(rng));
    const auto frame = bus::encode_packet(p);
    if (auto back = bus::parse_exact_packet(frame); back && *back == p) ++round_trip_ok;

    auto bad = frame;
    std::uniform_int_distribution<std::size_t> pos(0, bad.size() - 1);
    const std::size_t at = pos(rng);
    bad[at] = static_cast<std::uint8_t>(bad[at] + delta(rng));
    if (!bus::parse_exact_packet(bad)) ++rejected;
  }
  const double s = seconds_since(t0);
  report("protocol", round_trip_ok == kN && rejected == kN && s < 5.0,
         fmt("%d/%d round-trips, %d/%d corruptions rejected, %.2f s", round_trip_ok, kN, rejected,
             kN, s));
}

void fsm_conformance() {
  int divergences = 0;
  std::string first;
  for (std::uint64_t seed = 1; seed <= 1000; ++seed) {
    if (auto d = model_check::run_sequence(seed, 50)) {
      if (divergences++ == 0) first = fmt(" (first: seed %llu step %d)", (unsigned long long)seed, d->step);
    }
  }
  report("fsm-conformance", divergences == 0,
         fmt("1000 sequences of length <= 50, %d divergences", divergences) + first);
}

void time_to_contact() {
  // Exact gap samples every 50 ms; several start distances per speed so the
  // sample phase relative to the 40 mm crossing varies.
  double worst = 0.0;
  int runs = 0, misses = 0;
  for (int v = 10; v <= 100; ++v) {
    for (double d0 = 60.0; d0 < 62.5; d0 += 0.25) {
      const oracle::Approach a{d0, static_cast<double>(v)};
      firmware::GripperFirmware fw;
      fw.execute_command(firmware::CommandCode::kEnableAuto);
      std::optional<std::int64_t> fired;
      for (std::int64_t t = 0; t <= 20000 && !fired; t += 50) {
        fw.tick(firmware::TofSample::measured(std::max(0.0, a.gap(t / 1000.0)), t), {}, t);
        if (fw.state().adhesive_engaged[0]) fired = t;
      }
      ++runs;
      if (!fired) {
        ++misses;
        continue;
      }
      const double err = static_cast<double>(*fired) - (a.contact_s() * 1000.0 + 250.0);
      worst = std::max(worst, std::abs(err));
    }
  }
  report("time-to-contact", misses == 0 && worst <= 50.0,
         fmt("%d approaches at 10-100 mm/s, worst |fire - (contact + 250 ms)| = %.1f ms (limit 50)",
             runs, worst));
}

void pull_test() {
  const auto a = adhesion::pull_test(adhesion::PullTestConfig::flight());
  const auto b = adhesion::pull_test(adhesion::PullTestConfig::flight());
  bool same = a.trials.size() == b.trials.size();
  for (std::size_t i = 0; same && i < a.trials.size(); ++i) {
    same = a.trials[i].pull_off_force_N == b.trials[i].pull_off_force_N;
  }
  const bool pass = a.trials.size() == 5 && a.mean_N >= 10.4 && a.mean_N <= 11.2 &&
                    a.max_deviation_fraction <= 0.10 && same;
  report("pull-test", pass,
         fmt("5 trials, mean %.3f N, max deviation %.1f%%, %s", a.mean_N,
             a.max_deviation_fraction * 100.0, same ? "deterministic" : "NOT deterministic"));
}

void capacity_ceiling() {
  double worst = 0.0;
  long evaluations = 0;
  for (double mu : {0.0, 0.5, 1.0, 2.0, 4.0, 10.0, 100.0}) {
    adhesion::AdhesionParams p;
    p.friction_coefficient = mu;
    for (int i = 0; i <= 1000; ++i) {
      const double preload = i * 0.1;
      for (int q = 1; q <= 1000; ++q) {
        adhesion::TilePairState s;
        s.engaged = true;
        s.shear_preload_N = preload;
        s.surface_quality = q * 0.001;
        worst = std::max(worst, adhesion::normal_capacity(s, p));
        ++evaluations;
      }
    }
  }
  report("capacity-ceiling", worst <= 20.0,
         fmt("%ld (mu, preload 0-100 N, quality 0.001-1) points, max capacity %.6f N", evaluations,
             worst));
}

void nominal_perch() {
  const auto t0 = Clock::now();
  const auto quiet = nominal({"monte_carlo.initial_speed_mm_s.sd=0",
                              "monte_carlo.misalignment_deg.sd=0",
                              "monte_carlo.tof_noise_sigma_mm=0"});
  const auto clean = sim::run_campaign(quiet, 200, 7);
  const auto noisy = sim::run_campaign(nominal(), 200, 7);
  const double s = seconds_since(t0);
  const bool pass = clean.overall.rate == 1.0 && noisy.overall.rate >= 0.95 && s < 60.0;
  report("nominal-perch", pass,
         fmt("noise-free %d/%d, noisy %d/%d (rate %.3f, 95%% CI [%.3f, %.3f]), %.1f s",
             clean.overall.successes, clean.overall.trials, noisy.overall.successes,
             noisy.overall.trials, noisy.overall.rate, noisy.overall.ci.lo, noisy.overall.ci.hi,
             s));
}

void slow_drip() {
  firmware::GripperFirmware fw;
  firmware::GripperDevice device(fw);
  bus::Bus line;
  line.attach(device);
  pac::PacBridge bridge(line);
  bridge.dispatch("MARK", 4);
  std::mt19937 rng(5);
  std::uniform_real_distribution<double> tof(0.0, 120.0);
  for (int i = 0; i < 500; ++i) {
    const std::int64_t t = i * 50;
    fw.tick(firmware::TofSample::measured(tof(rng), t),
            {static_cast<std::uint16_t>(i), 20, 30, 40}, t);
  }
  bridge.dispatch("MARK", 0);

  std::vector<std::uint8_t> stored;
  for (std::size_t i = 0; i < fw.log().record_count(4); ++i) {
    const auto r = fw.log().record(4, i);
    stored.insert(stored.end(), r.begin(), r.end());
  }
  const auto first = bridge.slow_drip(4);
  const auto second = bridge.slow_drip(4);
  std::size_t crc_ok = 0;
  for (const auto& r : first.records) crc_ok += firmware::record_crc_ok(r) ? 1 : 0;
  const bool pass = first.status == pac::SlowDripResult::Status::kOk &&
                    first.records.size() == 500 && first.bytes() == stored &&
                    crc_ok == 500 && first.crc_errors.empty() && second.bytes() == first.bytes();
  report("slow-drip", pass,
         fmt("%zu records, bytes %s device log, %zu/500 crc ok, second drip %s", first.records.size(),
             first.bytes() == stored ? "identical to" : "DIFFER from", crc_ok,
             second.bytes() == first.bytes() ? "identical" : "DIFFERS"));
}

void physics() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> v(-0.2, 0.2), w(-0.5, 0.5);
  double worst_rel = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    sim::FlyerState s;
    s.velocity = {v(rng), v(rng)};
    s.angular_rate = w(rng);
    const auto v0 = s.velocity;
    const double w0 = s.angular_rate;
    for (int i = 0; i < 10000; ++i) sim::integrate_free(s, {}, {}, 0.05);
    worst_rel = std::max({worst_rel, std::abs(s.velocity.x - v0.x) / std::abs(v0.x),
                          std::abs(s.velocity.y - v0.y) / std::abs(v0.y),
                          std::abs(s.angular_rate - w0) / std::abs(w0)});
  }

  double worst_cmd = 0.0;
  std::size_t rows = 0;
  for (const char* name : {"nominal", "auto_off", "misaligned", "operator_close", "pull_off"}) {
    const auto r = sim::run_scenario(
        sim::load_scenario(std::string(GECKOPERCH_SOURCE_DIR) + "/configs/" + name + ".json"));
    for (const auto& row : r.telemetry) {
      worst_cmd = std::max({worst_cmd, std::abs(row.command.linear.x), std::abs(row.command.linear.y)});
      ++rows;
    }
  }
  std::uniform_real_distribution<double> big(-50.0, 50.0);
  for (int i = 0; i < 100000; ++i) {
    sim::FlyerState s;
    s.position = {big(rng), big(rng)};
    s.velocity = {big(rng), big(rng)};
    const auto a = sim::pd_control(s, {{big(rng), big(rng)}, 0.0}, {1.0, 2.0});
    worst_cmd = std::max({worst_cmd, std::abs(a.linear.x), std::abs(a.linear.y)});
  }
  report("physics", worst_rel <= 1e-12 && worst_cmd <= 0.1,
         fmt("zero-command velocity drift %.3g relative over 10000 steps; max |accel cmd| %.6f m/s^2 "
             "over %zu telemetry rows + 100000 random states",
             worst_rel, worst_cmd, rows));
}

}  // namespace

int main() {
  protocol_suite();
  fsm_conformance();
  time_to_contact();
  pull_test();
  capacity_ceiling();
  nominal_perch();
  slow_drip();
  physics();
  std::printf("%d failure(s)\n", g_failures);
  return g_failures;
}
