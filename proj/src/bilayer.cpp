#include "microforge/bilayer.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "microforge/errors.hpp"
#include "microforge/root_finding.hpp"

namespace microforge::bilayer {

namespace {

constexpr double kRatioLo = 0.05;
constexpr double kRatioHi = 20.0;

double sweep_total_thickness(double ratio, const SweepGeometry& g) {
  return g.mode == SweepMode::FixedHard ? g.fixed_thickness * (1.0 + ratio) : g.fixed_thickness;
}

}  // namespace

double radius_formula(double h_total, double m, double n, double eps) {
  if (eps == 0.0) return std::numeric_limits<double>::infinity();
  const double opm2 = (1.0 + m) * (1.0 + m);
  const double mn = m * n;
  return h_total * (8.0 * opm2 + (1.0 + mn) * (m * m + 1.0 / mn)) / (6.0 * eps * opm2);
}

FormulaRatios formula_ratios(double soft_over_hard, double hard_over_soft_modulus, const Convention& conv) {
  return {conv.m_is_soft_over_hard ? soft_over_hard : 1.0 / soft_over_hard,
          conv.n_is_hard_over_soft ? hard_over_soft_modulus : 1.0 / hard_over_soft_modulus};
}

void BilayerSpec::validate() const {
  if (!(length_um > 0.0 && h_hard_um > 0.0 && h_soft_um > 0.0))
    throw RangeError("bilayer length and layer thicknesses must be positive");
  if (!(modulus_ratio_n > 0.0)) throw RangeError("modulus ratio must be positive");
  if (!mismatch.gel) throw RangeError("bilayer mismatch model has no gel model");
}

double bend_radius_for_strain(const BilayerSpec& spec, double eps) {
  const auto [m, n] = formula_ratios(spec.thickness_ratio(), spec.modulus_ratio_n, spec.convention);
  return radius_formula(spec.h_soft_um + spec.h_hard_um, m, n, eps);
}

double bend_radius(const BilayerSpec& spec, double water_fraction) {
  return bend_radius_for_strain(spec, spec.mismatch.strain_at(water_fraction));
}

double angle_for_radius(double length_um, double radius_um) {
  if (std::isinf(radius_um)) return 0.0;
  return length_um / radius_um * (180.0 / std::numbers::pi);
}

double bend_angle_for_strain(const BilayerSpec& spec, double eps) {
  return angle_for_radius(spec.length_um, bend_radius_for_strain(spec, eps));
}

double bend_angle(const BilayerSpec& spec, double water_fraction) {
  return angle_for_radius(spec.length_um, bend_radius(spec, water_fraction));
}

std::vector<SweepRow> sweep_thickness_ratio(double hard_over_soft_modulus, double eps, const std::vector<double>& ratios,
                                            const SweepGeometry& geometry) {
  if (ratios.empty()) throw GridError("thickness-ratio list is empty");
  std::vector<SweepRow> rows;
  rows.reserve(ratios.size());
  for (double r : ratios) {
    if (!(r > 0.0)) throw GridError(fmt::format("thickness ratio {} must be positive", r));
    const auto [m, n] = formula_ratios(r, hard_over_soft_modulus, geometry.convention);
    const double R = radius_formula(sweep_total_thickness(r, geometry), m, n, eps);
    rows.push_back({r, R, angle_for_radius(geometry.length, R)});
  }
  return rows;
}

double analytic_argmin(double hard_over_soft_modulus, const Convention& conv, SweepMode mode) {
  SweepGeometry g{mode, 1.0, 1.0, conv};
  auto radius_at_log = [&](double log_r) {
    const double r = std::exp(log_r);
    const auto [m, n] = formula_ratios(r, hard_over_soft_modulus, conv);
    return radius_formula(sweep_total_thickness(r, g), m, n, 1.0);
  };
  return std::exp(golden_minimize(radius_at_log, std::log(kRatioLo), std::log(kRatioHi), 1e-13));
}

ConventionSelection select_convention(double hard_over_soft_modulus, double target_ratio) {
  ConventionSelection sel;
  for (SweepMode mode : {SweepMode::FixedTotal, SweepMode::FixedHard}) {
    for (bool m_soft : {true, false}) {
      for (bool n_hard : {true, false}) {
        Convention c{m_soft, n_hard};
        sel.candidates.push_back({c, mode, analytic_argmin(hard_over_soft_modulus, c, mode)});
      }
    }
  }
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < sel.candidates.size(); ++i) {
    const double d = std::abs(sel.candidates[i].argmin_soft_over_hard - target_ratio);
    if (d < best) {
      best = d;
      sel.chosen = i;
    }
  }
  return sel;
}

ExperimentalFit fit_experimental(double peak_ratio, double delta_theta_deg, double length_um, double h_hard_um,
                                 std::shared_ptr<const gel::GelModel> gel) {
  const Convention conv{};
  // The fixed-hard optimum grows monotonically with E_hard/E_soft; bisect in log n.
  double lo = 0.0, hi = std::log(1e5);
  if (analytic_argmin(std::exp(lo), conv, SweepMode::FixedHard) > peak_ratio ||
      analytic_argmin(std::exp(hi), conv, SweepMode::FixedHard) < peak_ratio)
    throw RangeError(fmt::format("no modulus ratio places the bending peak at {}", peak_ratio));
  for (int k = 0; k < 200 && hi - lo > 1e-14; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (analytic_argmin(std::exp(mid), conv, SweepMode::FixedHard) < peak_ratio) lo = mid; else hi = mid;
  }
  ExperimentalFit fit;
  fit.modulus_ratio_n = std::exp(0.5 * (lo + hi));

  const auto [m, n] = formula_ratios(peak_ratio, fit.modulus_ratio_n, conv);
  const double radius_at_unit_strain = radius_formula(h_hard_um * (1.0 + peak_ratio), m, n, 1.0);
  const double target_radius = length_um / (delta_theta_deg * std::numbers::pi / 180.0);
  const double eps = radius_at_unit_strain / target_radius;
  MismatchModel probe{1.0, 0.40, gel};
  fit.gain = eps / probe.strain_at(1.0);
  return fit;
}

BilayerSpec calibrated_spec(double soft_over_hard, std::shared_ptr<const gel::GelModel> gel) {
  const ExperimentalFit fit = fit_experimental(2.0, 27.0, 59.0, 6.0, gel);
  BilayerSpec s;
  s.h_hard_um = 6.0;
  s.h_soft_um = 6.0 * soft_over_hard;
  s.length_um = 59.0;
  s.modulus_ratio_n = fit.modulus_ratio_n;
  s.mismatch = MismatchModel{fit.gain, 0.40, std::move(gel)};
  return s;
}

const char* to_string(GripperState s) {
  switch (s) {
    case GripperState::Open: return "Open";
    case GripperState::Closed: return "Closed";
    case GripperState::Intermediate: return "Intermediate";
  }
  return "?";
}

void GripperSpec::validate() const {
  left.validate();
  right.validate();
  if (!(open_threshold_deg > close_threshold_deg && close_threshold_deg >= 0.0))
    throw RangeError("gripper thresholds need open > close >= 0");
  if (!(jaw_gap_closed_um > 0.0)) throw RangeError("closed jaw gap must be positive");
}

GripperReading gripper_aperture_for_lambda(const GripperSpec& grip, double lambda_soft) {
  const double tl = bend_angle_for_strain(grip.left, grip.left.mismatch.strain_for_lambda(lambda_soft));
  const double tr = bend_angle_for_strain(grip.right, grip.right.mismatch.strain_for_lambda(lambda_soft));
  const double deg = std::numbers::pi / 180.0;
  const double dl = grip.left.length_um * std::sin(tl * deg);
  const double dr = grip.right.length_um * std::sin(tr * deg);
  GripperReading r;
  r.aperture_um = grip.jaw_gap_closed_um + dl + dr;
  r.centerline_offset_um = 0.5 * (dr - dl);
  r.theta_deg = 0.5 * (tl + tr);
  if (r.theta_deg >= grip.open_threshold_deg) r.state = GripperState::Open;
  else if (r.theta_deg <= grip.close_threshold_deg) r.state = GripperState::Closed;
  else r.state = GripperState::Intermediate;
  return r;
}

GripperReading gripper_aperture(const GripperSpec& grip, double water_fraction) {
  return gripper_aperture_for_lambda(grip, grip.left.mismatch.gel->equilibrium_at(water_fraction));
}

}  // namespace microforge::bilayer
