#pragma once

#include <map>
#include <string>
#include <vector>

namespace microforge::gel {

// One measured equilibrium point: linear swelling ratio at a water fraction
// of the water / ethyl-lactate mixture.
struct CompositionAnchor {
  double water_fraction = 0.0;
  double lambda_eq = 1.0;
};

// Composition -> equilibrium swelling table for one printed part. Between
// anchors the table is read through a shape-preserving (monotone) piecewise
// cubic, so no overshoot appears on either side of the interior peak.
class CompositionCalibration {
 public:
  // Default 12 mW table: 0.927 in pure EL, 1.02 at 40% water, 0.753 in water.
  CompositionCalibration();
  explicit CompositionCalibration(std::vector<CompositionAnchor> anchors);

  const std::vector<CompositionAnchor>& anchors() const { return anchors_; }

  // Interpolated equilibrium swelling ratio; throws RangeError outside [0, 1].
  double lambda_at(double water_fraction) const;

  // Water fraction of the largest anchor (the swelling peak).
  double peak_water_fraction() const;

 private:
  void build_slopes();

  std::vector<CompositionAnchor> anchors_;
  std::vector<double> slopes_;
};

// Constants of the hydrogel free energy (all dimensionless).
struct HydrogelParams {
  double Nv = 0.0854;
  double lambda0 = 2.2617;
  double chi = -0.7363;
  CompositionCalibration calibration{};

  // λ0^-3, the free-swelling-relative volume of the dry network.
  double dry_volume() const { return 1.0 / (lambda0 * lambda0 * lambda0); }
  void validate() const;
};

// Non-responsive (hard) material. Only modulus_ratio_n feeds the reduced
// models; C10/D1 are carried for completeness of the material card.
struct HardMaterialParams {
  double C10_MPa = 0.015;
  double D1_per_MPa = 10.0;
  double modulus_ratio_n = 2.0;  // E_hard / E_soft
  void validate() const;
};

enum class SwellDirection { TowardWater, TowardEL };

struct SwellState {
  double lambda = 1.0;
  double lambda_eq = 1.0;
  SwellDirection direction = SwellDirection::TowardEL;

  double Jp() const { return lambda * lambda * lambda; }
};

// Hydrogel free-energy density W(J', Ī1, μ/kT).
// Throws DomainError when Jp <= λ0^-3 or I1bar < 3.
double free_energy(double Jp, double I1bar, double mu_over_kT, const HydrogelParams& params);

// dW/dJ' on the isotropic branch (Ī1 = 3).
double dW_dJp(double Jp, double mu_over_kT, const HydrogelParams& params);

// d²W/dJ'² on the isotropic branch (independent of μ).
double d2W_dJp2(double Jp, const HydrogelParams& params);

// The μ/kT at which Jp is an equilibrium: dW/dJ'(Jp, μ) = 0 solved for μ.
double equilibrium_mu(double Jp, const HydrogelParams& params);

// Interval of J' inside [1.001 λ0^-3, 27] on which W is convex in J'; the
// equilibrium root is searched only there, where it is unique.
struct StableBranch {
  double Jp_lo = 0.0;
  double Jp_hi = 0.0;
  double mu_lo = 0.0;  // equilibrium_mu(Jp_lo)
  double mu_hi = 0.0;  // equilibrium_mu(Jp_hi)
};
StableBranch stable_branch(const HydrogelParams& params);

// Equilibrium linear swelling ratio at chemical potential μ/kT.
// Throws NoRootError when μ is outside the stable branch range.
double equilibrium_lambda(double mu_over_kT, const HydrogelParams& params);
double equilibrium_lambda(double mu_over_kT, const HydrogelParams& params, const StableBranch& branch);

// μ/kT giving λ_eq = 1 (the designed, free-swelling size).
double mu_free_swelling(const HydrogelParams& params);

// Chemical potential of a water/EL mixture, calibrated so that
// equilibrium_lambda(env_to_mu(φ)) reproduces the calibration interpolant.
double env_to_mu(double water_fraction, const HydrogelParams& params);

// Shortcut for equilibrium_lambda(env_to_mu(φ)).
double equilibrium_at(double water_fraction, const HydrogelParams& params);

// Parameters plus their stable branch, computed once. Used on hot paths
// (every world tick) where re-scanning the branch per call would dominate.
class GelModel {
 public:
  GelModel() : GelModel(HydrogelParams{}) {}
  explicit GelModel(HydrogelParams params);

  const HydrogelParams& params() const { return params_; }
  const StableBranch& branch() const { return branch_; }
  double equilibrium_at(double water_fraction) const;

 private:
  HydrogelParams params_;
  StableBranch branch_;
};

}  // namespace microforge::gel
