#pragma once

#include <memory>
#include <vector>

#include "microforge/gel_core.hpp"

namespace microforge::bilayer {

// Raw bimorph radius formula. h_total = h1 + h2 in any length unit (R comes
// back in the same unit); m, n are the formula's thickness and modulus
// ratios; eps is the expansion mismatch. eps == 0 gives +infinity.
double radius_formula(double h_total, double m, double n, double eps);

// How a soft-to-hard thickness ratio and a hard-to-soft modulus ratio map
// onto the formula's m and n. The formula's symbols are loosely defined, so
// the mapping is explicit and selectable.
struct Convention {
  bool m_is_soft_over_hard = true;   // else m = h_hard / h_soft
  bool n_is_hard_over_soft = false;  // else n = E_soft / E_hard
};

// What stays fixed while the thickness ratio is swept.
enum class SweepMode { FixedTotal, FixedHard };

// Mismatch strain of the soft layer relative to the 40%-water reference:
// eps = gain * (lambda_ref - lambda). Positive when the soft layer has shrunk.
struct MismatchModel {
  double gain = 1.0;
  double reference_water_fraction = 0.40;
  std::shared_ptr<const gel::GelModel> gel = std::make_shared<gel::GelModel>();

  double lambda_ref() const { return gel->equilibrium_at(reference_water_fraction); }
  double strain_for_lambda(double lambda_soft) const { return gain * (lambda_ref() - lambda_soft); }
  double strain_at(double water_fraction) const { return strain_for_lambda(gel->equilibrium_at(water_fraction)); }
};

struct BilayerSpec {
  double length_um = 59.0;
  double h_hard_um = 6.0;
  double h_soft_um = 12.0;
  double modulus_ratio_n = 2.0;  // E_hard / E_soft
  Convention convention{};
  MismatchModel mismatch{};

  double thickness_ratio() const { return h_soft_um / h_hard_um; }
  void validate() const;
};

// Formula arguments (m, n) for a soft/hard thickness ratio under `conv`.
struct FormulaRatios {
  double m;
  double n;
};
FormulaRatios formula_ratios(double soft_over_hard, double hard_over_soft_modulus, const Convention& conv);

double bend_radius_for_strain(const BilayerSpec& spec, double eps);  // µm
double bend_radius(const BilayerSpec& spec, double water_fraction);  // µm, equilibrium swelling
double angle_for_radius(double length_um, double radius_um);         // degrees, small-angle θ = L/R
double bend_angle_for_strain(const BilayerSpec& spec, double eps);
double bend_angle(const BilayerSpec& spec, double water_fraction);

struct SweepRow {
  double ratio;
  double radius;
  double theta_deg;
};

// Geometry shared by every row of a thickness-ratio sweep.
struct SweepGeometry {
  SweepMode mode = SweepMode::FixedHard;
  double fixed_thickness = 6.0;  // h_hard (FixedHard) or h_soft + h_hard (FixedTotal)
  double length = 59.0;
  Convention convention{};
};

// Element-wise radius/angle; output order follows `ratios`.
// `hard_over_soft_modulus` is E_hard/E_soft, mapped through geometry.convention.
std::vector<SweepRow> sweep_thickness_ratio(double hard_over_soft_modulus, double eps, const std::vector<double>& ratios,
                                            const SweepGeometry& geometry = {});

// Soft-to-hard ratio minimising R in (0.05, 20).
double analytic_argmin(double hard_over_soft_modulus, const Convention& conv, SweepMode mode);

struct ConventionCandidate {
  Convention convention;
  SweepMode mode;
  double argmin_soft_over_hard;
};

struct ConventionSelection {
  std::vector<ConventionCandidate> candidates;
  std::size_t chosen = 0;
  const ConventionCandidate& best() const { return candidates[chosen]; }
};

// Evaluates all four (m, n) conventions in both sweep modes and picks the
// one whose analytic optimum lies nearest `target_ratio`.
ConventionSelection select_convention(double hard_over_soft_modulus, double target_ratio);

// Experimental fit: effective modulus ratio placing the angle peak at
// `peak_ratio` (fixed hard layer), then the strain gain giving
// `delta_theta_deg` between pure water and the 40%-water reference there.
struct ExperimentalFit {
  double modulus_ratio_n = 0.0;  // effective E_hard / E_soft
  double gain = 0.0;
};
ExperimentalFit fit_experimental(double peak_ratio = 2.0, double delta_theta_deg = 27.0, double length_um = 59.0,
                                 double h_hard_um = 6.0,
                                 std::shared_ptr<const gel::GelModel> gel = std::make_shared<gel::GelModel>());

// Calibrated strip at the given soft/hard ratio (default fit, 59 x 6 µm hard layer).
BilayerSpec calibrated_spec(double soft_over_hard = 2.0,
                            std::shared_ptr<const gel::GelModel> gel = std::make_shared<gel::GelModel>());

enum class GripperState { Open, Closed, Intermediate };
const char* to_string(GripperState s);

struct GripperSpec {
  BilayerSpec left = calibrated_spec();
  BilayerSpec right = calibrated_spec();
  double jaw_gap_closed_um = 58.0;
  double open_threshold_deg = 20.0;
  double close_threshold_deg = 5.0;

  void validate() const;
};

struct GripperReading {
  double aperture_um;
  double centerline_offset_um;  // (right - left) / 2 tip displacement
  double theta_deg;             // mean jaw angle
  GripperState state;
};

GripperReading gripper_aperture_for_lambda(const GripperSpec& grip, double lambda_soft);
GripperReading gripper_aperture(const GripperSpec& grip, double water_fraction);

}  // namespace microforge::bilayer
