#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "microforge/geometry.hpp"

namespace microforge::magnetics {

inline constexpr double kAm2PerEmu = 1e-3;

// Remanent-moment magnetic base. The moment points along the body's
// forward axis rotated by axis_offset_rad.
struct MagneticBase {
  double moment_emu = 1.310e-5;
  double axis_offset_rad = 0.0;
  double variation_sigma = 0.05;  // sample-to-sample spread, fraction of the mean

  double moment_Am2() const { return moment_emu * kAm2PerEmu; }
  static MagneticBase type1() { return {1.310e-5, 0.0, 0.05}; }
  static MagneticBase type2() { return {1.308e-5, 0.0, 0.05}; }
};

// One tick's worth of coil output for one base.
struct FieldCommand {
  double grad_x = 0.0;  // T/m
  double grad_y = 0.0;  // T/m
  // Uniform alignment-field direction (rad). Unset keeps the coil's current
  // heading, which then advances by rotate_rate.
  std::optional<double> heading;
  double rotate_rate = 0.0;  // rad/s

  bool operator==(const FieldCommand&) const = default;
};

struct CoilLimits {
  double max_gradient_T_per_m = 2.0;
  double alignment_field_T = 5e-3;
  double max_rotate_rate = 3.0;  // rad/s
};

// Gradient magnitude clamped to the coil limit (direction preserved) and
// rotation rate clamped symmetrically.
FieldCommand clamp(const FieldCommand& cmd, const CoilLimits& limits);

struct DragModel {
  double c_translation = 2.616e-4;  // N·s/m
  double c_rotation = 1.31e-11;     // N·m·s/rad
  double wall_amplification = 1.0;  // >= 1
  double stick_force_N = 0.0;       // below this |F| the body does not move

  void validate() const;
};

// Force on the base (N) from the gradient, scaled by cos(misalignment).
geom::Vec2 magnetic_force(const MagneticBase& base, const FieldCommand& cmd, double misalignment_rad = 0.0);

// Alignment torque (N·m) toward `field_heading`.
double magnetic_torque(const MagneticBase& base, double field_heading, double body_heading, double alignment_field_T);

// Overdamped step: v = F / c, ω = τ / c_rot. Positions in µm.
// Throws StepTooLarge when dt > dt_max.
geom::Pose step_overdamped(const geom::Pose& pose, geom::Vec2 force_N, double torque_Nm, const DragModel& drag, double dt_s,
                           double dt_max_s = 1e-3);

// Velocity (µm/s) after applying the stick threshold and wall amplification.
geom::Vec2 overdamped_velocity(geom::Vec2 force_N, const DragModel& drag);

// Sample moments from a normal spread around the mean, clamped to ±envelope.
std::vector<double> sample_moments(const MagneticBase& base, std::size_t count, std::uint64_t seed,
                                   double envelope = 0.15);

}  // namespace microforge::magnetics
