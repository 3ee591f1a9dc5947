#include "microforge/gel_core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <fmt/format.h>

#include "microforge/errors.hpp"
#include "microforge/root_finding.hpp"

namespace microforge::gel {

namespace {

constexpr double kBracketLowFactor = 1.001;
constexpr double kBracketHighJp = 27.0;
constexpr int kBranchScanPoints = 512;

// (J - a) ln(J / (J - a)), written with log1p so it stays accurate for large J.
double mixing_term(double Jp, double a) { return -(Jp - a) * std::log1p(-a / Jp); }

double mixing_slope(double Jp, double a) { return -std::log1p(-a / Jp) - a / Jp; }

// Fritsch-Carlson three-point slope: harmonic mean of adjacent secants, zero
// at local extrema.
double interior_slope(double h0, double h1, double d0, double d1) {
  if (d0 == 0.0 || d1 == 0.0 || (d0 > 0.0) != (d1 > 0.0)) return 0.0;
  const double w0 = 2.0 * h1 + h0;
  const double w1 = h1 + 2.0 * h0;
  return (w0 + w1) / (w0 / d0 + w1 / d1);
}

double end_slope(double h0, double h1, double d0, double d1) {
  double s = ((2.0 * h0 + h1) * d0 - h0 * d1) / (h0 + h1);
  if ((s > 0.0) != (d0 > 0.0)) return 0.0;
  if ((d0 > 0.0) != (d1 > 0.0) && std::abs(s) > std::abs(3.0 * d0)) return 3.0 * d0;
  return s;
}

}  // namespace

CompositionCalibration::CompositionCalibration()
    : CompositionCalibration({{0.00, 0.927}, {0.40, 1.02}, {1.00, 0.753}}) {}

CompositionCalibration::CompositionCalibration(std::vector<CompositionAnchor> anchors)
    : anchors_(std::move(anchors)) {
  if (anchors_.size() < 2) throw RangeError("calibration needs at least two anchors");
  for (std::size_t i = 0; i < anchors_.size(); ++i) {
    const auto& a = anchors_[i];
    if (!(a.water_fraction >= 0.0 && a.water_fraction <= 1.0))
      throw RangeError(fmt::format("anchor water_fraction {} outside [0,1]", a.water_fraction));
    if (!(a.lambda_eq > 0.0)) throw RangeError(fmt::format("anchor lambda_eq {} must be positive", a.lambda_eq));
    if (i > 0 && !(a.water_fraction > anchors_[i - 1].water_fraction))
      throw RangeError("anchor water fractions must be strictly increasing");
  }
  if (anchors_.front().water_fraction != 0.0 || anchors_.back().water_fraction != 1.0)
    throw RangeError("calibration must cover water fractions 0 and 1");
  build_slopes();
}

void CompositionCalibration::build_slopes() {
  const std::size_t n = anchors_.size();
  slopes_.assign(n, 0.0);
  std::vector<double> h(n - 1), d(n - 1);
  for (std::size_t i = 0; i + 1 < n; ++i) {
    h[i] = anchors_[i + 1].water_fraction - anchors_[i].water_fraction;
    d[i] = (anchors_[i + 1].lambda_eq - anchors_[i].lambda_eq) / h[i];
  }
  if (n == 2) {
    slopes_[0] = slopes_[1] = d[0];
    return;
  }
  for (std::size_t i = 1; i + 1 < n; ++i) slopes_[i] = interior_slope(h[i - 1], h[i], d[i - 1], d[i]);
  slopes_[0] = end_slope(h[0], h[1], d[0], d[1]);
  slopes_[n - 1] = end_slope(h[n - 2], h[n - 3], d[n - 2], d[n - 3]);
}

double CompositionCalibration::lambda_at(double water_fraction) const {
  if (!(water_fraction >= 0.0 && water_fraction <= 1.0))
    throw RangeError(fmt::format("water_fraction {} outside [0,1]", water_fraction));
  // Exact at anchors regardless of interpolation round-off.
  for (const auto& a : anchors_)
    if (a.water_fraction == water_fraction) return a.lambda_eq;
  auto upper = std::upper_bound(anchors_.begin(), anchors_.end(), water_fraction,
                                 [](double v, const CompositionAnchor& a) { return v < a.water_fraction; });
  const std::size_t i = static_cast<std::size_t>(upper - anchors_.begin()) - 1;
  const auto& a0 = anchors_[i];
  const auto& a1 = anchors_[i + 1];
  const double h = a1.water_fraction - a0.water_fraction;
  const double t = (water_fraction - a0.water_fraction) / h;
  const double t2 = t * t, t3 = t2 * t;
  return (2 * t3 - 3 * t2 + 1) * a0.lambda_eq + (t3 - 2 * t2 + t) * h * slopes_[i] +
         (-2 * t3 + 3 * t2) * a1.lambda_eq + (t3 - t2) * h * slopes_[i + 1];
}

double CompositionCalibration::peak_water_fraction() const {
  auto it = std::max_element(anchors_.begin(), anchors_.end(),
                             [](const auto& l, const auto& r) { return l.lambda_eq < r.lambda_eq; });
  return it->water_fraction;
}

void HydrogelParams::validate() const {
  if (!(Nv > 0.0)) throw RangeError("Nv must be positive");
  if (!(lambda0 > 1.0)) throw RangeError("lambda0 must exceed 1");
  if (!std::isfinite(chi)) throw RangeError("chi must be finite");
}

void HardMaterialParams::validate() const {
  if (!(C10_MPa > 0.0 && D1_per_MPa > 0.0 && modulus_ratio_n > 0.0))
    throw RangeError("hard material constants must be positive");
}

double free_energy(double Jp, double I1bar, double mu_over_kT, const HydrogelParams& p) {
  const double a = p.dry_volume();
  if (!(Jp > a)) throw DomainError(fmt::format("Jp = {} is at or below the dry state {}", Jp, a));
  if (!(I1bar >= 3.0 - 1e-12)) throw DomainError(fmt::format("I1bar = {} below 3", I1bar));
  const double l0 = p.lambda0;
  const double l0_6 = std::pow(l0, 6);
  const double elastic =
      0.5 * p.Nv * (std::cbrt(Jp * Jp) * I1bar / l0 - 3.0 * a - 2.0 / l0 * std::log(l0 * l0 * l0 * Jp));
  return elastic + mixing_term(Jp, a) - p.chi / (l0_6 * Jp) - mu_over_kT * (Jp - a);
}

double equilibrium_mu(double Jp, const HydrogelParams& p) {
  const double a = p.dry_volume();
  if (!(Jp > a)) throw DomainError(fmt::format("Jp = {} is at or below the dry state {}", Jp, a));
  const double l0 = p.lambda0;
  const double elastic = p.Nv / l0 * (1.0 / std::cbrt(Jp) - 1.0 / Jp);
  return elastic + mixing_slope(Jp, a) + p.chi / (std::pow(l0, 6) * Jp * Jp);
}

double dW_dJp(double Jp, double mu_over_kT, const HydrogelParams& p) {
  return equilibrium_mu(Jp, p) - mu_over_kT;
}

double d2W_dJp2(double Jp, const HydrogelParams& p) {
  const double a = p.dry_volume();
  if (!(Jp > a)) throw DomainError(fmt::format("Jp = {} is at or below the dry state {}", Jp, a));
  const double l0 = p.lambda0;
  const double elastic = p.Nv / l0 * (-1.0 / (3.0 * Jp * std::cbrt(Jp)) + 1.0 / (Jp * Jp));
  const double mixing = -a * a / (Jp * Jp * (Jp - a));
  return elastic + mixing - 2.0 * p.chi / (std::pow(l0, 6) * Jp * Jp * Jp);
}

StableBranch stable_branch(const HydrogelParams& p) {
  p.validate();
  const double lo = kBracketLowFactor * p.dry_volume();
  const double hi = kBracketHighJp;
  auto curvature = [&](double J) { return d2W_dJp2(J, p); };

  // Log-spaced scan for sign changes of the curvature; pick the convex run
  // containing the free-swelling state J' = 1 (else the longest run).
  std::vector<double> grid(kBranchScanPoints);
  for (int i = 0; i < kBranchScanPoints; ++i)
    grid[i] = lo * std::pow(hi / lo, static_cast<double>(i) / (kBranchScanPoints - 1));

  struct Run { std::size_t first, last; };
  std::vector<Run> runs;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (curvature(grid[i]) <= 0.0) continue;
    if (!runs.empty() && runs.back().last + 1 == i) runs.back().last = i;
    else runs.push_back({i, i});
  }
  if (runs.empty()) throw NoRootError("free energy is nowhere convex inside the physical bracket");

  const Run* chosen = nullptr;
  for (const auto& r : runs)
    if (grid[r.first] <= 1.0 && grid[r.last] >= 1.0) chosen = &r;
  if (!chosen) {
    chosen = &*std::max_element(runs.begin(), runs.end(), [&](const Run& l, const Run& r) {
      return grid[l.last] / grid[l.first] < grid[r.last] / grid[r.first];
    });
  }

  auto refine = [&](std::size_t inside, std::size_t outside) {
    // curvature(inside) > 0 >= curvature(outside); bisect the boundary.
    double in = grid[inside], out = grid[outside];
    for (int k = 0; k < 200 && std::abs(in - out) > 1e-15 * in; ++k) {
      const double mid = 0.5 * (in + out);
      if (curvature(mid) > 0.0) in = mid; else out = mid;
    }
    return in;
  };

  StableBranch b;
  b.Jp_lo = chosen->first == 0 ? grid.front() : refine(chosen->first, chosen->first - 1);
  b.Jp_hi = chosen->last + 1 == grid.size() ? grid.back() : refine(chosen->last, chosen->last + 1);
  b.mu_lo = equilibrium_mu(b.Jp_lo, p);
  b.mu_hi = equilibrium_mu(b.Jp_hi, p);
  return b;
}

double equilibrium_lambda(double mu_over_kT, const HydrogelParams& p, const StableBranch& b) {
  if (!(mu_over_kT >= b.mu_lo && mu_over_kT <= b.mu_hi))
    throw NoRootError(fmt::format("mu/kT = {} outside the calibrated bracket [{}, {}]", mu_over_kT, b.mu_lo, b.mu_hi));
  auto f = [&](double J) { return dW_dJp(J, mu_over_kT, p); };
  auto df = [&](double J) { return d2W_dJp2(J, p); };
  auto root = solve_bracketed(f, df, b.Jp_lo, b.Jp_hi);
  if (!root) throw NoRootError("bracket endpoints share a sign");
  return std::cbrt(root->x);
}

double equilibrium_lambda(double mu_over_kT, const HydrogelParams& p) {
  return equilibrium_lambda(mu_over_kT, p, stable_branch(p));
}

double mu_free_swelling(const HydrogelParams& p) { return equilibrium_mu(1.0, p); }

double env_to_mu(double water_fraction, const HydrogelParams& p) {
  const double lambda = p.calibration.lambda_at(water_fraction);
  return equilibrium_mu(lambda * lambda * lambda, p);
}

double equilibrium_at(double water_fraction, const HydrogelParams& p) {
  return equilibrium_lambda(env_to_mu(water_fraction, p), p);
}

GelModel::GelModel(HydrogelParams params) : params_(std::move(params)), branch_(stable_branch(params_)) {}

double GelModel::equilibrium_at(double water_fraction) const {
  return equilibrium_lambda(env_to_mu(water_fraction, params_), params_, branch_);
}

}  // namespace microforge::gel
