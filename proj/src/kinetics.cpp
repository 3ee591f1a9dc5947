#include "microforge/kinetics.hpp"

#include <cmath>
#include <iterator>

#include "microforge/errors.hpp"

namespace microforge::kinetics {

void KineticsParams::validate() const {
  if (!(tau_fast_s > 0.0 && tau_slow_s > 0.0)) throw RangeError("time constants must be positive");
  if (!(tau_fast_s < tau_slow_s)) throw RangeError("tau_fast must be smaller than tau_slow");
  if (lp_speedup.empty()) throw RangeError("lp_speedup table is empty");
  double prev = 0.0;
  bool first = true;
  for (const auto& [lp, scale] : lp_speedup) {
    if (!(scale > 0.0)) throw RangeError("lp_speedup factors must be positive");
    if (!first && !(scale < prev)) throw RangeError("lp_speedup must be strictly decreasing in laser power");
    prev = scale;
    first = false;
  }
}

SwellDirection direction_for(double lambda, double lambda_target) {
  return lambda_target < lambda ? SwellDirection::TowardWater : SwellDirection::TowardEL;
}

double lp_scale(double laser_power_mW, const KineticsParams& params) {
  const auto& table = params.lp_speedup;
  if (laser_power_mW <= table.begin()->first) return table.begin()->second;
  if (laser_power_mW >= table.rbegin()->first) return table.rbegin()->second;
  auto hi = table.upper_bound(laser_power_mW);
  auto lo = std::prev(hi);
  const double t = (laser_power_mW - lo->first) / (hi->first - lo->first);
  return lo->second + t * (hi->second - lo->second);
}

double tau_for(SwellDirection direction, double laser_power_mW, const KineticsParams& params) {
  const double base = direction == SwellDirection::TowardWater ? params.tau_slow_s : params.tau_fast_s;
  return base * lp_scale(laser_power_mW, params);
}

SwellState relax(const SwellState& state, double lambda_target, double dt_s, const KineticsParams& params,
                 SwellDirection direction, double laser_power_mW) {
  if (dt_s == 0.0) return state;
  SwellState next = state;
  const double tau = tau_for(direction, laser_power_mW, params);
  next.lambda = lambda_target + (state.lambda - lambda_target) * std::exp(-dt_s / tau);
  next.lambda_eq = lambda_target;
  next.direction = direction;
  return next;
}

}  // namespace microforge::kinetics
