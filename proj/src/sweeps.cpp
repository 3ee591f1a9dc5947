#include "microforge/sweeps.hpp"

#include <cmath>
#include <ostream>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge::sweeps {

namespace {

std::string g17(double v) { return fmt::format("{:.17g}", v); }

// Runs body(i) for i in [0, n), serially or across OpenMP threads. Each
// index writes only its own output slot.
template <class F>
void for_each_index(std::size_t n, Exec exec, F&& body) {
  const auto count = static_cast<std::int64_t>(n);
  if (exec == Exec::Serial) {
    for (std::int64_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
    return;
  }
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < count; ++i) body(static_cast<std::size_t>(i));
}

constexpr double kProbeWaterFraction = 0.40;

}  // namespace

const char* to_string(SweepKind k) {
  switch (k) {
    case SweepKind::SwellCurve: return "SwellCurve";
    case SweepKind::TransitionCurve: return "TransitionCurve";
    case SweepKind::BilayerRatio: return "BilayerRatio";
    case SweepKind::CycleRepeat: return "CycleRepeat";
  }
  return "?";
}

SweepKind sweep_kind_from_string(const std::string& s) {
  for (auto k : {SweepKind::SwellCurve, SweepKind::TransitionCurve, SweepKind::BilayerRatio, SweepKind::CycleRepeat})
    if (s == to_string(k)) return k;
  throw GridError(fmt::format("unknown sweep kind '{}'", s));
}

std::vector<double> make_grid(double start, double stop, double step) {
  if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
    throw GridError("grid bounds must be finite");
  if (!(step > 0.0)) throw GridError(fmt::format("grid step {} must be positive", step));
  if (stop < start) throw GridError(fmt::format("grid stop {} is below start {}", stop, start));
  const double span = (stop - start) / step;
  if (span > 1e6) throw GridError(fmt::format("grid of {:.0f} points is too large", span));
  const auto n = static_cast<std::size_t>(std::floor(span + 1e-9)) + 1;
  std::vector<double> g(n);
  // start + i*step rather than accumulation, so every point is exact to one rounding.
  for (std::size_t i = 0; i < n; ++i) g[i] = start + static_cast<double>(i) * step;
  if (stop - g.back() > 1e-9 * step) g.push_back(stop);
  else g.back() = std::min(g.back(), stop);
  return g;
}

std::vector<SwellPoint> swell_curve(const gel::GelModel& gel, const std::vector<double>& water_fractions, Exec exec) {
  for (double phi : water_fractions)
    if (!(phi >= 0.0 && phi <= 1.0)) throw GridError(fmt::format("water fraction {} outside [0, 1]", phi));
  std::vector<SwellPoint> out(water_fractions.size());
  for_each_index(out.size(), exec, [&](std::size_t i) {
    out[i] = {water_fractions[i], gel.equilibrium_at(water_fractions[i])};
  });
  return out;
}

std::vector<TransitionPoint> transition_curve(const world::WorldConfig& cfg, const std::vector<double>& times,
                                              double laser_power_mW, Exec exec) {
  for (double t : times)
    if (!(t >= 0.0) || !std::isfinite(t)) throw GridError(fmt::format("sample time {} must be finite and >= 0", t));
  const double el = cfg.gel->equilibrium_at(0.0);
  const double water = cfg.gel->equilibrium_at(1.0);
  const std::size_t n = times.size();
  std::vector<TransitionPoint> out(2 * n);
  for_each_index(2 * n, exec, [&](std::size_t i) {
    const bool to_water = i < n;
    const double t = times[i % n];
    const double from = to_water ? el : water;
    const double target = to_water ? water : el;
    const auto dir = kinetics::direction_for(from, target);
    // The exponential update is exact for any dt, so one call per sample.
    const auto s = kinetics::relax(gel::SwellState{from, target, dir}, target, t, cfg.kinetics, dir, laser_power_mW);
    out[i] = {to_water ? Direction::TowardWater : Direction::TowardEL, t, s.lambda};
  });
  return out;
}

std::vector<RatioPoint> bilayer_ratio(const bilayer::BilayerSpec& calibrated, const std::vector<double>& ratios,
                                      Exec exec) {
  for (double r : ratios)
    if (!(r > 0.0) || !std::isfinite(r)) throw GridError(fmt::format("thickness ratio {} must be positive", r));
  std::vector<RatioPoint> out(ratios.size());
  const double ref = calibrated.mismatch.reference_water_fraction;
  for_each_index(out.size(), exec, [&](std::size_t i) {
    bilayer::BilayerSpec spec = calibrated;
    spec.h_soft_um = ratios[i] * spec.h_hard_um;
    const double theta = bilayer::bend_angle(spec, 1.0);
    out[i] = {ratios[i], bilayer::bend_radius(spec, 1.0), theta, theta - bilayer::bend_angle(spec, ref)};
  });
  return out;
}

std::vector<CyclePoint> cycle_repeat(const world::WorldConfig& cfg, int cycles, double hold_s, double dt_s,
                                     double laser_power_mW) {
  if (cycles < 1) throw GridError("cycle count must be at least 1");
  if (!(hold_s > 0.0) || !(dt_s > 0.0) || dt_s > hold_s) throw GridError("need 0 < dt <= hold");
  const auto steps = static_cast<std::int64_t>(std::llround(hold_s / dt_s));
  const double el = cfg.gel->equilibrium_at(0.0);
  gel::SwellState s{el, el, gel::SwellDirection::TowardEL};
  std::vector<CyclePoint> out;
  for (int c = 1; c <= cycles; ++c) {
    for (double phi : {1.0, 0.0}) {
      const double target = cfg.gel->equilibrium_at(phi);
      const auto dir = kinetics::direction_for(s.lambda, target);
      s.lambda_eq = target;
      s.direction = dir;
      for (std::int64_t k = 0; k < steps; ++k) s = kinetics::relax(s, target, dt_s, cfg.kinetics, dir, laser_power_mW);
      out.push_back({c, phi, s.lambda});
    }
  }
  return out;
}

double free_space_travel(const world::WorldConfig& cfg, world::BodyKind kind, double moment_emu, double grad,
                         double duration_s, double dt_s) {
  auto shared = std::make_shared<world::WorldConfig>(cfg);
  world::WorldState w;
  w.config = shared;
  w.water_fraction = w.water_fraction_target = kProbeWaterFraction;
  world::Body b = world::make_body("probe", kind, {}, cfg, kProbeWaterFraction);
  b.magnetic->moment_emu = moment_emu;
  world::add_body(w, std::move(b));
  const world::CommandMap cmds{{"probe", magnetics::FieldCommand{grad, 0.0, std::nullopt, 0.0}}};
  const auto steps = std::llround(duration_s / dt_s);
  for (long long k = 0; k < steps; ++k) w = world::tick(w, cmds, dt_s);
  return w.body("probe").pose.x;
}

std::vector<MomentSample> moment_batch(const world::WorldConfig& cfg, world::BodyKind kind, std::size_t count,
                                       std::uint64_t seed, double grad, double duration_s, Exec exec) {
  if (!world::is_base(kind)) throw GridError("moment sampling needs a base kind");
  const auto& base = kind == world::BodyKind::Type1Base ? cfg.type1_base : cfg.type2_base;
  const auto moments = magnetics::sample_moments(base, count, seed);
  std::vector<MomentSample> out(count);
  for_each_index(count, exec, [&](std::size_t i) {
    out[i] = {i, moments[i], free_space_travel(cfg, kind, moments[i], grad, duration_s)};
  });
  return out;
}

void write_csv(std::ostream& out, const std::vector<SwellPoint>& rows) {
  out << "water_fraction,lambda_eq\n";
  for (const auto& r : rows) out << g17(r.water_fraction) << ',' << g17(r.lambda_eq) << '\n';
}

void write_csv(std::ostream& out, const std::vector<TransitionPoint>& rows) {
  out << "direction,time_s,lambda\n";
  for (const auto& r : rows)
    out << (r.direction == Direction::TowardWater ? "toward_water" : "toward_el") << ',' << g17(r.time_s) << ','
        << g17(r.lambda) << '\n';
}

void write_csv(std::ostream& out, const std::vector<RatioPoint>& rows) {
  out << "ratio,radius_um,theta_deg,delta_theta_deg\n";
  for (const auto& r : rows)
    out << g17(r.ratio) << ',' << g17(r.radius_um) << ',' << g17(r.theta_deg) << ',' << g17(r.delta_theta_deg) << '\n';
}

void write_csv(std::ostream& out, const std::vector<CyclePoint>& rows) {
  out << "cycle,water_fraction,lambda_end\n";
  for (const auto& r : rows) out << r.cycle << ',' << g17(r.water_fraction) << ',' << g17(r.lambda_end) << '\n';
}

void run_sweep(const SweepRequest& req, const Config& cfg, std::ostream& out) {
  const auto& w = *cfg.world;
  auto grid = [&](double from, double to, double step) {
    return make_grid(req.from.value_or(from), req.to.value_or(to), req.step.value_or(step));
  };
  switch (req.kind) {
    case SweepKind::SwellCurve:
      write_csv(out, swell_curve(*w.gel, grid(0.0, 1.0, 0.01), req.exec));
      return;
    case SweepKind::TransitionCurve:
      write_csv(out, transition_curve(w, grid(0.0, 300.0, 1.0), req.laser_power_mW, req.exec));
      return;
    case SweepKind::BilayerRatio:
      write_csv(out, bilayer_ratio(w.gripper.left, grid(0.25, 5.0, 0.05), req.exec));
      return;
    case SweepKind::CycleRepeat:
      write_csv(out, cycle_repeat(w, req.cycles, req.hold_s, 0.1, req.laser_power_mW));
      return;
  }
}

}  // namespace microforge::sweeps
