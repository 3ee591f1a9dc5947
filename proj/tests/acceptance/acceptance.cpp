// Prints one PASS/FAIL line per acceptance criterion and exits non-zero when
// any of them fails.
#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <thread>

#include <fmt/format.h>

#include "microforge/bilayer.hpp"
#include "microforge/errors.hpp"
#include "microforge/gel_core.hpp"
#include "microforge/kinetics.hpp"
#include "microforge/magnetics.hpp"
#include "microforge/scenario.hpp"
#include "microforge/sweeps.hpp"
#include "microforge/teleop.hpp"
#include "microforge/websocket.hpp"

using namespace microforge;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!detail.empty()) detail += "; ";
    detail += what;
    if (!ok) {
      pass = false;
      detail += " [failed]";
    }
  }
};

std::filesystem::path scenario_path(const std::string& name) {
  return std::filesystem::path(MICROFORGE_SOURCE_DIR) / "scenarios" / (name + ".scn");
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Runs a bundled scenario to the end, optionally observing every tick.
struct ScenarioRun {
  std::unique_ptr<scenario::ScenarioEngine> engine;
  bool ok = false;
};
ScenarioRun run_engine(const std::string& name, const std::function<void(const sim::Simulation&)>& observe = {}) {
  ScenarioRun r;
  r.engine = std::make_unique<scenario::ScenarioEngine>(scenario::load_scenario(scenario_path(name)), Config{});
  auto& e = *r.engine;
  while (!e.done()) {
    e.apply_scripted();
    e.step();
    if (observe) observe(e.sim());
  }
  e.apply_scripted();
  r.ok = e.all_passed();
  return r;
}

std::optional<double> first_entry(const sim::Simulation& s, mating::MateState state) {
  for (const auto& t : s.transitions())
    if (t.to == state) return t.time_s;
  return std::nullopt;
}

Outcome free_energy_correctness() {
  Outcome o;
  const gel::HydrogelParams p;
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> jp(p.dry_volume() * 1.5, 3.0), mu(-1.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    const double J = jp(rng), m = mu(rng), h = 1e-6;
    const double fd = (gel::free_energy(J + h, 3.0, m, p) - gel::free_energy(J - h, 3.0, m, p)) / (2 * h);
    const double d = gel::dW_dJp(J, m, p);
    worst = std::max(worst, std::abs(fd - d) / std::max(std::abs(d), 1.0));
  }
  o.require(worst < 1e-6, fmt::format("max gradient error {:.2e}", worst));
  double residual = 0.0;
  for (int i = 0; i <= 100; ++i) {
    const double phi = i / 100.0;
    const double lam = gel::equilibrium_at(phi, p);
    residual = std::max(residual, std::abs(gel::dW_dJp(lam * lam * lam, gel::env_to_mu(phi, p), p)));
  }
  o.require(residual < 1e-10, fmt::format("max equilibrium residual {:.2e}", residual));
  return o;
}

Outcome calibration_closure() {
  Outcome o;
  const gel::GelModel g;
  const double l0 = g.equilibrium_at(0.0), l4 = g.equilibrium_at(0.4), l1 = g.equilibrium_at(1.0);
  o.require(std::abs(l0 - 0.927) < 1e-9 && l4 >= 1.0 && std::abs(l1 - 0.753) < 1e-9,
            fmt::format("lambda(0, 0.4, 1) = ({:.9f}, {:.9f}, {:.9f})", l0, l4, l1));
  const auto grid = sweeps::swell_curve(g, sweeps::make_grid(0.0, 1.0, 0.01));
  std::size_t peak = 0;
  for (std::size_t i = 0; i < grid.size(); ++i)
    if (grid[i].lambda_eq > grid[peak].lambda_eq) peak = i;
  bool unimodal = true;
  for (std::size_t i = 1; i < grid.size(); ++i)
    unimodal &= i <= peak ? grid[i].lambda_eq > grid[i - 1].lambda_eq : grid[i].lambda_eq < grid[i - 1].lambda_eq;
  o.require(peak > 0 && peak + 1 < grid.size() && unimodal,
            fmt::format("single interior peak at phi = {:.2f}", grid[peak].water_fraction));
  return o;
}

Outcome kinetics_anchor() {
  Outcome o;
  const kinetics::KineticsParams k;
  const auto slow = kinetics::relax({0.927, 0.753, gel::SwellDirection::TowardWater}, 0.753, 45.0, k,
                                    gel::SwellDirection::TowardWater);
  o.require(std::abs(slow.lambda - 0.838) <= 0.005 && std::abs(k.tau_slow_s - 62.8) < 0.1,
            fmt::format("lambda(45 s) = {:.4f} with tau_slow {} s", slow.lambda, k.tau_slow_s));
  const auto fast = kinetics::relax({0.753, 0.927, gel::SwellDirection::TowardEL}, 0.927, 5.0, k,
                                    gel::SwellDirection::TowardEL);
  const double settled = (fast.lambda - 0.753) / (0.927 - 0.753);
  o.require(settled >= 0.95, fmt::format("fast branch {:.1f}% settled at 5 s", 100 * settled));
  return o;
}

Outcome cycle_repeatability() {
  Outcome o;
  const auto rows = sweeps::cycle_repeat(*world::WorldConfig::defaults());
  double spread = 0.0;
  for (const auto& r : rows) {
    const auto& ref = r.water_fraction == 1.0 ? rows[0] : rows[1];
    spread = std::max(spread, std::abs(r.lambda_end - ref.lambda_end));
  }
  o.require(rows.size() == 16 && spread < 1e-9,
            fmt::format("{} phases, max deviation {:.1e}, ends ({:.6f}, {:.6f})", rows.size(), spread,
                        rows[0].lambda_end, rows[1].lambda_end));
  return o;
}

Outcome bimorph_radius() {
  Outcome o;
  const double R = bilayer::radius_formula(1.0, 1.0, 2.0, 1.0);
  const double oracle = 1.0 * (8.0 * 4.0 + 3.0 * 1.5) / (6.0 * 1.0 * 4.0);
  o.require(std::abs(R - oracle) < 1e-6 && std::abs(R - 1.5208333333) < 1e-6, fmt::format("R = {:.9f}", R));
  const auto sel = bilayer::select_convention(2.0, 0.47);
  const auto& best = sel.best();
  o.require(std::abs(best.argmin_soft_over_hard - 0.47) <= 0.05,
            fmt::format("analytic argmin {:.4f} (m = {}, n = {}, {}) vs 0.47", best.argmin_soft_over_hard,
                        best.convention.m_is_soft_over_hard ? "h_soft/h_hard" : "h_hard/h_soft",
                        best.convention.n_is_hard_over_soft ? "E_hard/E_soft" : "E_soft/E_hard",
                        best.mode == bilayer::SweepMode::FixedHard ? "fixed hard layer" : "fixed total"));
  const auto spec = bilayer::calibrated_spec(2.0);
  const double dtheta = bilayer::bend_angle(spec, 1.0) - bilayer::bend_angle(spec, 0.4);
  const auto rows = sweeps::bilayer_ratio(spec, sweeps::make_grid(0.25, 5.0, 0.05));
  const auto peak = *std::max_element(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return a.delta_theta_deg < b.delta_theta_deg;
  });
  o.require(std::abs(dtheta - 27.0) <= 2.0 && peak.ratio >= 1.5 && peak.ratio <= 2.5,
            fmt::format("delta theta at ratio 2 = {:.2f} deg, peak at ratio {:.2f}", dtheta, peak.ratio));
  return o;
}

Outcome magnetic_actuation() {
  Outcome o;
  const auto f = magnetics::magnetic_force(magnetics::MagneticBase::type1(), {1.0, 0.0});
  o.require(std::abs(f.x - 1.310e-8) <= 1e-12, fmt::format("F = {:.4e} N", f.x));
  const auto cfg = world::WorldConfig::defaults();
  const double t1 = sweeps::free_space_travel(*cfg, world::BodyKind::Type1Base, 1.310e-5, 1.0, 2.0);
  const double t2 = sweeps::free_space_travel(*cfg, world::BodyKind::Type2Base, 1.308e-5, 1.0, 2.0);
  const double diff = std::abs(t1 - t2) / t2;
  o.require(diff < 0.01, fmt::format("Type 1 vs Type 2 travel {:.3f} vs {:.3f} um ({:.3f}%)", t1, t2, 100 * diff));
  double worst = 0.0;
  for (const auto& base : {magnetics::MagneticBase::type1(), magnetics::MagneticBase::type2()})
    for (double m : magnetics::sample_moments(base, 10000, 42))
      worst = std::max(worst, std::abs(m / base.moment_emu - 1.0));
  o.require(worst <= 0.15 + 1e-12, fmt::format("max sampled moment deviation {:.2f}%", 100 * worst));
  return o;
}

Outcome mating_end_to_end() {
  Outcome o;
  for (const char* name : {"mate_type1", "mate_type2"}) {
    auto r = run_engine(name);
    const auto locked = first_entry(r.engine->sim(), mating::MateState::Locked);
    o.require(r.ok && locked && *locked <= 60.0,
              fmt::format("{} Locked at {}", name, locked ? fmt::format("{:.1f} s", *locked) : "never"));
  }
  world::WorldState w;
  w.water_fraction = w.water_fraction_target = 1.0;
  world::add_body(w, world::make_body("base", world::BodyKind::Type1Base, {0.0, -100.0, 0.0}, *w.config, 1.0));
  world::add_body(w, world::make_body("eff", world::BodyKind::EndEffectorSingle, {0.0, 0.0, 0.0}, *w.config, 1.0));
  auto& base = w.bodies[0];
  base.swell->lambda = 0.753;
  const auto open = world::check_mate_geometry(w, base, w.bodies[1]);
  base.swell->lambda = 1.0;
  const auto shut = world::check_mate_geometry(w, base, w.bodies[1]);
  o.require(open.can_insert && !open.interference_locked && std::abs(open.male_width_um - 45.18) < 1e-9,
            fmt::format("male {:.2f} um in {:.0f} um slot inserts", open.male_width_um, open.slot_width_um));
  o.require(shut.interference_locked && !shut.can_insert,
            fmt::format("male {:.2f} um at lambda 1 locks", shut.male_width_um));
  return o;
}

Outcome detachment() {
  Outcome o;
  {
    auto r = run_engine("detach_type2");
    const auto t = first_entry(r.engine->sim(), mating::MateState::Detached);
    o.require(r.ok && t, fmt::format("Type 2 in open-jaw water: Detached at {}",
                                     t ? fmt::format("{:.1f} s", *t) : "never"));
  }
  {
    auto r = run_engine("detach_type1_no_walls");
    const auto& s = r.engine->sim();
    const auto& p = s.pair("base", "single");
    const auto rep = world::detach_feasible(s.world(), "base", "single");
    o.require(r.ok && p.state == mating::MateState::DetachPending && !p.released &&
                  rep.reason == world::DetachReason::SurfaceTensionAdhesion,
              fmt::format("Type 1 without walls refused ({})", world::to_string(rep.reason)));
  }
  {
    auto r = run_engine("detach_type1_walls");
    const auto t = first_entry(r.engine->sim(), mating::MateState::Detached);
    o.require(r.ok && t, fmt::format("Type 1 with walls and enclosure: Detached at {}",
                                     t ? fmt::format("{:.1f} s", *t) : "never"));
  }
  return o;
}

Outcome manipulation() {
  Outcome o;
  {
    auto r = run_engine("push_single_sphere");
    const auto& s = r.engine->sim();
    const auto start = r.engine->scenario().world.bodies[2].pose.position();
    const auto& rel = s.releases();
    const bool released = !rel.empty() && rel[0].complete;
    const double drift = released ? rel[0].displacement_um.at("sphere") : 1e9;
    const double carried = released ? geom::norm(rel[0].start_positions.at("sphere") - start) : 0.0;
    o.require(r.ok && carried >= 300.0, fmt::format("sphere carried {:.1f} um", carried));
    o.require(released && drift <= 200.0, fmt::format("moved {:.1f} um during release", drift));
  }
  {
    std::optional<double> touch_a, touch_b;
    auto r = run_engine("multi_sphere", [&](const sim::Simulation& s) {
      const auto& w = s.world();
      const auto& eff = w.body("multi");
      if (!touch_a && world::body_separation(w, eff, w.body("sphere_a")) <= 1.0) touch_a = w.time_s;
      if (!touch_b && world::body_separation(w, eff, w.body("sphere_b")) <= 1.0) touch_b = w.time_s;
    });
    o.require(r.ok && touch_a && touch_b && *touch_a < *touch_b,
              fmt::format("multi-push acquires sphere_a at {} and sphere_b at {}",
                          touch_a ? fmt::format("{:.2f} s", *touch_a) : "never",
                          touch_b ? fmt::format("{:.2f} s", *touch_b) : "never"));
  }
  return o;
}

std::optional<json> next_of(ws::Client& c, const std::string& type) {
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (std::chrono::steady_clock::now() < deadline) {
    auto m = c.receive(100);
    if (!m) continue;
    auto j = json::parse(*m);
    if (j["type"] == type) return j;
  }
  return std::nullopt;
}

Outcome determinism() {
  Outcome o;
  const auto dir = std::filesystem::temp_directory_path() / "microforge_acceptance";
  std::filesystem::create_directories(dir / "a");
  std::filesystem::create_directories(dir / "b");
  for (const char* name : {"mate_type1", "swap_type2"}) {
    scenario::run_scenario(scenario_path(name), dir / "a", Config{});
    scenario::run_scenario(scenario_path(name), dir / "b", Config{});
    const auto trace = std::string(name) + ".trace.csv";
    const auto a = slurp(dir / "a" / trace);
    o.require(!a.empty() && a == slurp(dir / "b" / trace), fmt::format("{} headless reruns identical", name));
  }

  // Served session against its replay log.
  teleop::ServiceOptions opt;
  opt.port = 0;
  opt.speed = 0.0;
  opt.trace_path = dir / "served.trace.csv";
  try {
    teleop::Service svc(scenario::load_scenario(scenario_path("mate_type2")), Config{}, opt);
    svc.start();
    {
      ws::Client c("127.0.0.1", svc.port());
      next_of(c, "scene");
      c.send_text(R"({"type":"hello","schema_version":1})");
      c.send_text(R"({"type":"driver","action":"acquire"})");
      next_of(c, "driver");
      const char* cmds[] = {
          R"({"type":"command","client_seq":1,"kind":"joystick","grad_x":0.4,"grad_y":0.2,"rotate_rate":0.1})",
          R"({"type":"command","client_seq":2,"kind":"solvent_target","target":0.4})",
          R"({"type":"command","client_seq":3,"kind":"joystick","grad_x":-0.3,"grad_y":0,"rotate_rate":0})"};
      for (const char* cmd : cmds) {
        c.send_text(cmd);
        next_of(c, "ack");
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
      }
      c.close();
    }
    svc.stop();
    const auto replay = svc.replay_log();
    std::ostringstream headless;
    scenario::ScenarioEngine e(replay, Config{});
    e.set_trace(&headless);
    e.run_to_end();
    const auto served = slurp(dir / "served.trace.csv");
    // The replay is a plain scenario; operator actions are whatever it holds
    // beyond the scripted actions that fell due.
    std::size_t scripted = 0;
    for (const auto& a : scenario::load_scenario(scenario_path("mate_type2")).script)
      scripted += std::llround(a.time_s / e.dt()) <= svc.ticks() ? 1 : 0;
    const std::size_t operator_actions = replay.script.size() - scripted;
    o.require(operator_actions == 3 && !served.empty() && served == headless.str(),
              fmt::format("served run of {} ticks with {} operator commands equals its headless replay", svc.ticks(),
                          operator_actions));
  } catch (const Error& e) {
    o.require(false, e.what());
  }
  return o;
}

}  // namespace

int main() {
  const std::pair<const char*, Outcome (*)()> criteria[] = {
      {"free-energy gradient and equilibrium", free_energy_correctness},
      {"calibration closure", calibration_closure},
      {"kinetics anchor", kinetics_anchor},
      {"cycle repeatability", cycle_repeatability},
      {"bimorph radius, optimum and calibrated peak", bimorph_radius},
      {"magnetics", magnetic_actuation},
      {"mating end-to-end", mating_end_to_end},
      {"detachment", detachment},
      {"manipulation", manipulation},
      {"determinism", determinism},
  };
  int failed = 0;
  int n = 0;
  for (const auto& [name, check] : criteria) {
    ++n;
    Outcome out;
    try {
      out = check();
    } catch (const std::exception& e) {
      out.pass = false;
      out.detail = e.what();
    }
    failed += out.pass ? 0 : 1;
    fmt::print("{} [{}] {}: {}\n", out.pass ? "PASS" : "FAIL", n, name, out.detail);
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
