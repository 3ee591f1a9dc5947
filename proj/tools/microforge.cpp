#include <atomic>
#include <csignal>
#include <chrono>
#include <fstream>
#include <iostream>
#include <thread>

#include <fmt/format.h>

#include "CLI11.hpp"

#include "microforge/config.hpp"
#include "microforge/errors.hpp"
#include "microforge/letters.hpp"
#include "microforge/scenario.hpp"
#include "microforge/sweeps.hpp"
#include "microforge/teleop.hpp"

using namespace microforge;

namespace {

std::atomic<bool> g_stop{false};
void on_signal(int) { g_stop = true; }

world::BodyKind base_kind(const std::string& s) {
  if (s == "type1" || s == "Type1Base") return world::BodyKind::Type1Base;
  if (s == "type2" || s == "Type2Base") return world::BodyKind::Type2Base;
  throw SchemaError(fmt::format("unknown base type '{}' (type1 or type2)", s));
}

int run_cmd(const std::vector<std::string>& files, const std::optional<std::string>& out, const Config& cfg,
            std::optional<std::uint64_t> seed, std::optional<double> dt, int jobs) {
  std::vector<scenario::RunResult> results(files.size());
  const auto n = static_cast<std::int64_t>(files.size());
  std::optional<std::filesystem::path> out_dir;
  if (out) out_dir = *out;
#pragma omp parallel for schedule(dynamic) num_threads(jobs) if (jobs > 1)
  for (std::int64_t i = 0; i < n; ++i) results[i] = scenario::run_scenario(files[i], out_dir, cfg, seed, dt);

  int worst = scenario::kExitOk;
  for (std::size_t i = 0; i < files.size(); ++i) {
    const auto& r = results[i];
    int passed = 0;
    for (const auto& a : r.assertions) passed += a.passed ? 1 : 0;
    fmt::print("{}: {} ({} of {} assertions passed)\n", files[i], r.exit_code == 0 ? "ok" : "FAILED", passed,
               r.assertions.size());
    for (const auto& a : r.assertions)
      if (!a.passed) fmt::print("  tick {}: {} ({})\n", a.tick, a.predicate, a.detail);
    if (!r.message.empty()) fmt::print(stderr, "  {}\n", r.message);
    std::cout << r.final_state_summary;
    worst = std::max(worst, r.exit_code);
  }
  return worst;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"microforge: microrobot hydrogel simulation workbench"};
  app.require_subcommand(1);
  app.fallthrough();

  std::optional<std::string> config_path;
  std::optional<std::uint64_t> seed;
  std::optional<double> dt;
  std::optional<std::string> out;
  int jobs = 1;
  app.add_option("--config", config_path, "Config JSON (overrides MICROFORGE_CONFIG)");
  app.add_option("--seed", seed, "Override the scenario seed");
  app.add_option("--dt", dt, "Tick length in seconds");
  app.add_option("--out", out, "Output directory (run) or file (sweep, letters)");
  app.add_option("--jobs,-j", jobs, "Parallel scenario runs")->check(CLI::PositiveNumber);

  auto* run = app.add_subcommand("run", "Run scenarios headlessly");
  std::vector<std::string> scenario_files;
  run->add_option("scenario", scenario_files, "Scenario files (.scn)")->required()->check(CLI::ExistingFile);

  auto* sweep = app.add_subcommand("sweep", "Parameter sweeps to CSV");
  std::string sweep_kind;
  sweeps::SweepRequest req;
  bool serial = false;
  sweep->add_option("kind", sweep_kind, "SwellCurve, TransitionCurve, BilayerRatio or CycleRepeat")->required();
  sweep->add_option("--from", req.from, "Grid start");
  sweep->add_option("--to", req.to, "Grid stop (inclusive)");
  sweep->add_option("--step", req.step, "Grid step");
  sweep->add_option("--cycles", req.cycles, "CycleRepeat cycle count");
  sweep->add_option("--hold", req.hold_s, "CycleRepeat hold per phase (s)");
  sweep->add_option("--laser-power", req.laser_power_mW, "Print laser power (mW) for kinetics");
  sweep->add_flag("--serial", serial, "Use the serial reference kernels");

  auto* letters_cmd = app.add_subcommand("letters", "Follow a waypoint polyline with one base");
  std::string waypoint_file;
  std::string base = "type2";
  letters::LettersOptions lopt;
  letters_cmd->add_option("waypoints", waypoint_file, "Waypoint CSV (x_um,y_um)")->required()->check(CLI::ExistingFile);
  letters_cmd->add_option("--base", base, "type1 or type2");
  letters_cmd->add_option("--water-fraction", lopt.water_fraction, "Operating water fraction");
  letters_cmd->add_option("--budget", lopt.budget_s, "Simulated time budget (s)");

  auto* serve = app.add_subcommand("serve", "Live simulation over WebSocket");
  std::optional<std::string> serve_scenario;
  teleop::ServiceOptions sopt;
  std::optional<std::string> replay_path, trace_path;
  serve->add_option("scenario", serve_scenario, "Initial scenario (default: empty world)")->check(CLI::ExistingFile);
  serve->add_option("--port", sopt.port, "TCP port (0 picks one)");
  serve->add_option("--bind", sopt.bind_address, "Bind address");
  serve->add_option("--speed", sopt.speed, "Wall-clock pacing factor, 0 = unpaced");
  serve->add_option("--scenario-dir", sopt.scenario_dir, "Directory for load_scenario commands");
  serve->add_option("--replay", replay_path, "Write the session replay log here on exit");
  serve->add_option("--trace", trace_path, "Write the served trace CSV here");

  auto* config_cmd = app.add_subcommand("config", "Print the effective configuration");

  CLI11_PARSE(app, argc, argv);

  try {
    Config cfg = resolve_config(config_path);
    if (dt) cfg.dt_s = *dt;

    if (*run) return run_cmd(scenario_files, out, cfg, seed, dt, jobs);

    if (*config_cmd) {
      std::cout << config_to_json(cfg).dump(2) << '\n';
      return 0;
    }

    if (*sweep) {
      req.kind = sweeps::sweep_kind_from_string(sweep_kind);
      req.exec = serial ? sweeps::Exec::Serial : sweeps::Exec::Parallel;
      if (out) {
        std::ofstream f(*out);
        sweeps::run_sweep(req, cfg, f);
      } else {
        sweeps::run_sweep(req, cfg, std::cout);
      }
      return 0;
    }

    if (*letters_cmd) {
      lopt.base = base_kind(base);
      lopt.dt_s = cfg.dt_s;
      const auto pts = letters::load_waypoints(waypoint_file);
      std::ofstream f;
      if (out) f.open(*out);
      const auto r = letters::draw_letters(pts, cfg, lopt, out ? &f : nullptr);
      fmt::print("segments {} time_s {:.3f} max_cross_track_um {:.3f} max_waypoint_miss_um {:.3f}\n", r.segments,
                 r.time_s, r.max_cross_track_um, r.max_waypoint_miss_um);
      return 0;
    }

    if (*serve) {
      scenario::Scenario sc;
      if (serve_scenario) sc = scenario::load_scenario(*serve_scenario);
      if (seed) sc.seed = *seed;
      if (dt) sc.dt_s = *dt;
      if (replay_path) sopt.replay_path = *replay_path;
      if (trace_path) sopt.trace_path = *trace_path;
      teleop::Service service(std::move(sc), cfg, sopt);
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      service.start();
      fmt::print("serving on ws://{}:{}/ (Ctrl-C to stop)\n", sopt.bind_address, service.port());
      std::fflush(stdout);
      while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(50));
      service.stop();
      fmt::print("stopped after {} ticks\n", service.ticks());
      return 0;
    }
  } catch (const SchemaError& e) {
    fmt::print(stderr, "{}\n", e.what());
    return scenario::kExitSchema;
  } catch (const GridError& e) {
    fmt::print(stderr, "{}\n", e.what());
    return scenario::kExitSchema;
  } catch (const Error& e) {
    fmt::print(stderr, "{}\n", e.what());
    return scenario::kExitRuntime;
  }
  return 0;
}
