#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "microforge/config.hpp"

namespace microforge::sweeps {

enum class SweepKind { SwellCurve, TransitionCurve, BilayerRatio, CycleRepeat };
const char* to_string(SweepKind k);
SweepKind sweep_kind_from_string(const std::string& s);  // throws GridError

// Every kernel has a serial reference and an OpenMP version; both produce
// bit-identical rows because each row is computed independently.
enum class Exec { Serial, Parallel };

// Inclusive grid start, start+step, ... up to stop (within step/1e9).
// GridError on non-finite values, step <= 0, stop < start or more than
// a million points.
std::vector<double> make_grid(double start, double stop, double step);

struct SwellPoint {
  double water_fraction;
  double lambda_eq;
};
std::vector<SwellPoint> swell_curve(const gel::GelModel& gel, const std::vector<double>& water_fractions,
                                    Exec exec = Exec::Parallel);

enum class Direction { TowardWater, TowardEL };
struct TransitionPoint {
  Direction direction;
  double time_s;
  double lambda;
};
// Step responses between the pure-EL and pure-water equilibria, sampled
// at `times` for each direction (toward water first).
std::vector<TransitionPoint> transition_curve(const world::WorldConfig& cfg, const std::vector<double>& times,
                                              double laser_power_mW = 12.0, Exec exec = Exec::Parallel);

struct RatioPoint {
  double ratio;             // soft / hard thickness
  double radius_um;         // in pure water
  double theta_deg;         // in pure water
  double delta_theta_deg;   // pure water minus the 40% reference
};
// Calibrated strip with a fixed hard layer, swept over soft/hard ratios.
std::vector<RatioPoint> bilayer_ratio(const bilayer::BilayerSpec& calibrated, const std::vector<double>& ratios,
                                      Exec exec = Exec::Parallel);

struct CyclePoint {
  int cycle;
  double water_fraction;
  double lambda_end;
};
// Alternating pure-water / pure-EL holds starting from EL equilibrium,
// integrated in `dt_s` steps. One row per phase.
std::vector<CyclePoint> cycle_repeat(const world::WorldConfig& cfg, int cycles = 8, double hold_s = 1500.0,
                                     double dt_s = 0.1, double laser_power_mW = 12.0);

struct MomentSample {
  std::size_t index;
  double moment_emu;
  double displacement_um;  // free-space travel after the probe command
};
// Samples base moments and drives each one through a free-space gradient
// pulse: `grad` T/m along +x for `duration_s`.
std::vector<MomentSample> moment_batch(const world::WorldConfig& cfg, world::BodyKind kind, std::size_t count,
                                       std::uint64_t seed, double grad = 1.0, double duration_s = 1.0,
                                       Exec exec = Exec::Parallel);

// Free-space x displacement (µm) of one base with the given moment.
double free_space_travel(const world::WorldConfig& cfg, world::BodyKind kind, double moment_emu, double grad,
                         double duration_s, double dt_s = 1e-3);

void write_csv(std::ostream& out, const std::vector<SwellPoint>& rows);
void write_csv(std::ostream& out, const std::vector<TransitionPoint>& rows);
void write_csv(std::ostream& out, const std::vector<RatioPoint>& rows);
void write_csv(std::ostream& out, const std::vector<CyclePoint>& rows);

struct SweepRequest {
  SweepKind kind = SweepKind::SwellCurve;
  // Unset bounds take per-kind defaults (documented in docs/formats.md).
  std::optional<double> from, to, step;
  int cycles = 8;
  double hold_s = 1500.0;
  double laser_power_mW = 12.0;
  Exec exec = Exec::Parallel;
};
// Runs a sweep under `cfg` and writes its CSV.
void run_sweep(const SweepRequest& req, const Config& cfg, std::ostream& out);

}  // namespace microforge::sweeps
