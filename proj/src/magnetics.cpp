#include "microforge/magnetics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge::magnetics {

FieldCommand clamp(const FieldCommand& cmd, const CoilLimits& limits) {
  FieldCommand out = cmd;
  const double g = std::hypot(cmd.grad_x, cmd.grad_y);
  if (g > limits.max_gradient_T_per_m) {
    const double s = limits.max_gradient_T_per_m / g;
    out.grad_x *= s;
    out.grad_y *= s;
  }
  out.rotate_rate = std::clamp(cmd.rotate_rate, -limits.max_rotate_rate, limits.max_rotate_rate);
  return out;
}

void DragModel::validate() const {
  if (!(c_translation > 0.0 && c_rotation > 0.0)) throw RangeError("drag coefficients must be positive");
  if (!(wall_amplification >= 1.0)) throw RangeError("wall amplification must be >= 1");
  if (!(stick_force_N >= 0.0)) throw RangeError("stick threshold must be non-negative");
}

geom::Vec2 magnetic_force(const MagneticBase& base, const FieldCommand& cmd, double misalignment_rad) {
  const double m = base.moment_Am2() * std::cos(misalignment_rad);
  return {m * cmd.grad_x, m * cmd.grad_y};
}

double magnetic_torque(const MagneticBase& base, double field_heading, double body_heading, double alignment_field_T) {
  return base.moment_Am2() * alignment_field_T * std::sin(field_heading - (body_heading + base.axis_offset_rad));
}

geom::Vec2 overdamped_velocity(geom::Vec2 force_N, const DragModel& drag) {
  const double f = geom::norm(force_N);
  if (f <= drag.stick_force_N || f == 0.0) return {};
  // Static threshold subtracts from the driving force, so motion starts
  // continuously once the threshold is exceeded.
  const double effective = (f - drag.stick_force_N) / f;
  const double mobility_um = 1e6 / (drag.c_translation * drag.wall_amplification);
  return force_N * (effective * mobility_um);
}

geom::Pose step_overdamped(const geom::Pose& pose, geom::Vec2 force_N, double torque_Nm, const DragModel& drag, double dt_s,
                           double dt_max_s) {
  if (!(dt_s > 0.0)) throw StepTooLarge(fmt::format("dt = {} must be positive", dt_s));
  if (dt_s > dt_max_s) throw StepTooLarge(fmt::format("dt = {} s exceeds dt_max = {} s", dt_s, dt_max_s));
  const geom::Vec2 v = overdamped_velocity(force_N, drag);
  const double omega = torque_Nm / (drag.c_rotation * drag.wall_amplification);
  return {pose.x + v.x * dt_s, pose.y + v.y * dt_s, pose.theta + omega * dt_s};
}

std::vector<double> sample_moments(const MagneticBase& base, std::size_t count, std::uint64_t seed, double envelope) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> spread(0.0, base.variation_sigma);
  std::vector<double> out(count);
  for (auto& m : out) m = base.moment_emu * (1.0 + std::clamp(spread(rng), -envelope, envelope));
  return out;
}

}  // namespace microforge::magnetics
