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

// geckoperch: scenario runner, Monte Carlo campaigns, pull tests, slow-drip
// retrieval and the live serve mode.

#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "geckoperch/adhesion/pull_test.hpp"
#include "geckoperch/firmware/gripper_device.hpp"
#include "geckoperch/pac/geckolog.hpp"
#include "geckoperch/serve/engine.hpp"
#include "geckoperch/serve/socket_server.hpp"
#include "geckoperch/sim/config.hpp"
#include "geckoperch/sim/monte_carlo.hpp"
#include "geckoperch/sim/simulation.hpp"

namespace fs = std::filesystem;
using namespace geckoperch;

namespace {

constexpr int kExitUsage = 2;

struct Common {
  std::string config;
  std::string out = "out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
};

void write_text(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream f(path);
  f << text;
  if (!f) throw std::runtime_error("cannot write " + path.string());
}

sim::ScenarioConfig load(const Common& c) {
  sim::ScenarioConfig cfg = sim::load_scenario(c.config, c.overrides);
  return cfg;
}

int cmd_run(const Common& c) {
  sim::ScenarioConfig cfg = load(c);
  if (c.seed) cfg.tof.seed = *c.seed;
  const sim::ScenarioResult r = sim::run_scenario(cfg);
  const nlohmann::json j = sim::result_to_json(r);
  const fs::path out(c.out);
  write_text(out / "telemetry.csv", sim::telemetry_csv(r.telemetry));
  write_text(out / "result.json", j.dump(2) + "\n");

  std::printf("scenario      %s\n", r.scenario.c_str());
  std::printf("perched       %s (expected %s)\n", r.perched ? "yes" : "no",
              r.expect_perch ? "yes" : "no");
  std::printf("end           %s at %.2f s\n", r.end_reason.c_str(), r.end_time_s);
  if (r.contact_speed_mm_s) std::printf("contact speed %.1f mm/s\n", *r.contact_speed_mm_s);
  if (r.trigger_error_ms) std::printf("trigger error %+.1f ms\n", *r.trigger_error_ms);
  for (const auto& f : r.engage_failures) {
    std::printf("engage fail   pair %c: %s at %.2f s\n", f.pair == 0 ? 'A' : 'B',
                std::string(adhesion::to_string(f.reason)).c_str(), f.time_s);
  }
  std::printf("artifacts     %s\n", out.string().c_str());
  return sim::exit_code_for(j);
}

int cmd_monte_carlo(const Common& c, std::optional<int> trials) {
  sim::ScenarioConfig cfg = load(c);
  const int n = trials.value_or(cfg.monte_carlo.trials);
  if (n < 1) {
    std::fprintf(stderr, "error: --trials must be >= 1\n");
    return kExitUsage;
  }
  const std::uint64_t seed = c.seed.value_or(cfg.monte_carlo.seed);
  const sim::CampaignResult res = sim::run_campaign(cfg, n, seed);
  const fs::path out(c.out);
  write_text(out / "campaign.csv", sim::campaign_csv(res));
  write_text(out / "trials.csv", sim::trials_csv(res));

  std::printf("%-18s %7s %7s %8s  %s\n", "speed bin mm/s", "trials", "perched", "rate",
              "95% Wilson");
  auto line = [](const std::string& label, const sim::BinSummary& b) {
    std::printf("%-18s %7d %7d %8.3f  [%.3f, %.3f]\n", label.c_str(), b.trials, b.successes,
                b.rate, b.ci.lo, b.ci.hi);
  };
  for (const auto& b : res.bins) {
    if (b.trials == 0) continue;
    line("[" + sim::format_bound(b.lo) + ", " + sim::format_bound(b.hi) + ")", b);
  }
  line("all", res.overall);
  std::printf("seed %llu, tables in %s\n", static_cast<unsigned long long>(seed),
              out.string().c_str());
  return 0;
}

int cmd_pull_test(int trials, std::optional<std::uint64_t> seed, bool ideal,
                  const std::optional<std::string>& out) {
  if (trials < 1) {
    std::fprintf(stderr, "error: --trials must be >= 1\n");
    return kExitUsage;
  }
  adhesion::PullTestConfig cfg = ideal ? adhesion::PullTestConfig::ideal()
                                       : adhesion::PullTestConfig::flight();
  cfg.trials = trials;
  if (seed) cfg.seed = *seed;
  const adhesion::PullTestResult r = adhesion::pull_test(cfg);

  std::string csv = "trial,pull_off_force_N,total_force_N,surface_quality\n";
  std::printf("%5s %14s %12s\n", "trial", "per pair [N]", "gauge [N]");
  for (std::size_t i = 0; i < r.trials.size(); ++i) {
    const auto& t = r.trials[i];
    std::printf("%5zu %14.3f %12.3f\n", i + 1, t.pull_off_force_N, t.total_force_N);
    char buf[128];
    std::snprintf(buf, sizeof buf, "%zu,%.6f,%.6f,%.6f\n", i + 1, t.pull_off_force_N,
                  t.total_force_N, t.surface_quality);
    csv += buf;
  }
  std::printf("mean %.3f N, max deviation %.1f%%\n", r.mean_N, r.max_deviation_fraction * 100.0);
  if (out) write_text(fs::path(*out) / "pull_test.csv", csv);
  return 0;
}

int cmd_drip(const Common& c, std::optional<int> experiment) {
  sim::ScenarioConfig cfg = load(c);
  if (c.seed) cfg.tof.seed = *c.seed;
  const int exp = experiment.value_or(cfg.firmware.log_experiment);
  if (exp < 0 || exp > 0xFFFF) {
    std::fprintf(stderr, "error: --experiment must be in 0..65535\n");
    return kExitUsage;
  }
  sim::Simulation s(cfg);
  s.set_keep_telemetry(false);
  s.run();
  // Logging must be closed before the log can be pulled.
  s.bridge().dispatch("MARK", 0);
  const pac::SlowDripResult drip = s.bridge().slow_drip(static_cast<std::uint16_t>(exp));
  if (drip.status != pac::SlowDripResult::Status::kOk) {
    std::fprintf(stderr, "error: slow-drip failed\n");
    return 1;
  }
  const pac::GeckologPaths paths = pac::write_geckolog(c.out, drip);
  std::printf("experiment %d: %zu records, %zu crc errors\n", exp, drip.records.size(),
              drip.crc_errors.size());
  std::printf("wrote %s and %s\n", paths.log.string().c_str(), paths.sidecar.string().c_str());
  return drip.crc_errors.empty() ? 0 : 1;
}

serve::ServeEngine* g_engine = nullptr;

extern "C" void on_signal(int) {
  if (g_engine) g_engine->stop();
}

int cmd_serve(const Common& c, int port, const std::string& bind, std::int64_t max_ticks) {
  sim::ScenarioConfig cfg = c.config.empty() ? sim::ScenarioConfig{} : load(c);
  if (c.seed) cfg.tof.seed = *c.seed;
  sim::validate(cfg);
  if (port < 0 || port > 65535) {
    std::fprintf(stderr, "error: --port must be in 0..65535\n");
    return kExitUsage;
  }
  serve::ServeEngine engine(cfg);
  serve::SocketServer server(engine, static_cast<std::uint16_t>(port), bind);
  server.start();
  std::printf("listening on %s:%u (tick %lld ms)\n", bind.c_str(), server.port(),
              static_cast<long long>(cfg.tick_ms()));
  std::fflush(stdout);

  g_engine = &engine;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::thread limiter;
  if (max_ticks > 0) {
    limiter = std::thread([&] {
      while (!engine.stopped() && static_cast<std::int64_t>(engine.ticks()) < max_ticks) {
        std::this_thread::sleep_for(std::chrono::milliseconds(10));
      }
      engine.stop();
    });
  }
  engine.run();
  if (limiter.joinable()) limiter.join();
  server.stop();
  g_engine = nullptr;
  return 0;
}

int cmd_regmap(const std::optional<std::string>& out) {
  const std::string md = firmware::register_map_markdown();
  if (out) {
    write_text(*out, md);
  } else {
    std::fputs(md.c_str(), stdout);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Gecko-adhesive gripper perching simulator"};
  app.require_subcommand(1);
  app.set_version_flag("--version", "geckoperch 0.3.0");

  Common common;
  auto add_common = [&](CLI::App* sub, bool config_required) {
    auto* opt = sub->add_option("config", common.config, "Scenario config (JSON)");
    if (config_required) opt->required();
    sub->add_option("--out", common.out, "Output directory")->capture_default_str();
    sub->add_option("--set", common.overrides, "Override a config field, key=value")
        ->allow_extra_args(false);
    sub->add_option("--seed", common.seed, "Seed override");
  };

  auto* run = app.add_subcommand("run", "Run one scenario");
  add_common(run, true);

  std::optional<int> mc_trials;
  auto* mc = app.add_subcommand("monte-carlo", "Seeded Monte Carlo campaign");
  add_common(mc, true);
  mc->add_option("-n,--trials", mc_trials, "Number of trials (default: monte_carlo.trials)");

  int pull_trials = 5;
  bool pull_ideal = false;
  std::optional<std::uint64_t> pull_seed;
  std::optional<std::string> pull_out;
  auto* pull = app.add_subcommand("pull-test", "Simulated pull-off test");
  pull->add_option("-n,--trials", pull_trials, "Number of pulls")->capture_default_str();
  pull->add_flag("--ideal", pull_ideal, "Ideal surface, no trial noise");
  pull->add_option("--seed", pull_seed, "Trial noise seed");
  pull->add_option("--out", pull_out, "Write pull_test.csv here");

  std::optional<int> drip_exp;
  auto* drip = app.add_subcommand("drip", "Run a scenario, then slow-drip its log");
  add_common(drip, true);
  drip->add_option("-e,--experiment", drip_exp, "Experiment id (default: firmware.log_experiment)");

  int port = 8765;
  std::string bind = "127.0.0.1";
  std::int64_t max_ticks = 0;
  auto* srv = app.add_subcommand("serve", "Live simulation for the operator console");
  add_common(srv, false);
  srv->add_option("--port", port, "TCP port (0 picks a free one)")->capture_default_str();
  srv->add_option("--bind", bind, "Bind address")->capture_default_str();
  srv->add_option("--ticks", max_ticks, "Stop after this many ticks (0 = run until signalled)");

  std::optional<std::string> regmap_out;
  auto* regmap = app.add_subcommand("regmap", "Print the gripper register map (markdown)");
  regmap->add_option("--out", regmap_out, "Write to a file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*run) return cmd_run(common);
    if (*mc) return cmd_monte_carlo(common, mc_trials);
    if (*pull) return cmd_pull_test(pull_trials, pull_seed, pull_ideal, pull_out);
    if (*drip) return cmd_drip(common, drip_exp);
    if (*srv) return cmd_serve(common, port, bind, max_ticks);
    if (*regmap) return cmd_regmap(regmap_out);
  } catch (const sim::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  }
  return kExitUsage;
}
