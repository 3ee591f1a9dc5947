#pragma once

#include <map>

#include "microforge/gel_core.hpp"

namespace microforge::kinetics {

using gel::SwellDirection;
using gel::SwellState;

// First-order swelling kinetics. Deswelling toward water-rich solvent is
// slow; re-swelling toward EL-rich solvent settles within seconds.
struct KineticsParams {
  double tau_fast_s = 1.5;   // reaches >= 95% of the step within 5 s
  double tau_slow_s = 62.8;  // 0.927 -> 0.838 after 45 s toward 0.753
  // Laser power (mW) -> multiplier on both time constants. Linear between
  // keys, clamped outside. Higher power = faster transitions.
  std::map<double, double> lp_speedup{{12.0, 1.0}, {13.0, 0.8}};

  void validate() const;
};

// Direction implied by moving from `lambda` toward `lambda_target`:
// shrinking is the slow (toward water) branch.
SwellDirection direction_for(double lambda, double lambda_target);

double lp_scale(double laser_power_mW, const KineticsParams& params);

double tau_for(SwellDirection direction, double laser_power_mW, const KineticsParams& params);

// Exact exponential update over dt (any dt >= 0, no sub-stepping error).
// dt == 0 returns the state untouched.
SwellState relax(const SwellState& state, double lambda_target, double dt_s, const KineticsParams& params,
                 SwellDirection direction, double laser_power_mW = 12.0);

}  // namespace microforge::kinetics
