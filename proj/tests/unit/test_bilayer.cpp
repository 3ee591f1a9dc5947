#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"

#include "microforge/bilayer.hpp"

using namespace microforge::bilayer;

namespace {
// Independent transcription of the bimorph radius expression.
double radius_oracle(double h, double m, double n, double e) {
  const double num = 8.0 * (1 + m) * (1 + m) + (1 + m * n) * (m * m + 1.0 / (m * n));
  return h * num / (6.0 * e * (1 + m) * (1 + m));
}
}  // namespace

TEST_CASE("radius formula hand value and oracle agreement") {
  CHECK(radius_formula(1.0, 1.0, 2.0, 1.0) == doctest::Approx(36.5 / 24.0).epsilon(1e-12));
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> m(0.05, 20.0), n(0.1, 10.0), e(-0.5, 0.5);
  for (int i = 0; i < 1000; ++i) {
    const double mm = m(rng), nn = n(rng), ee = e(rng);
    if (ee == 0.0) continue;
    const double got = radius_formula(3.0, mm, nn, ee);
    const double want = radius_oracle(3.0, mm, nn, ee);
    REQUIRE(std::abs(got - want) <= 1e-12 * std::abs(want));
  }
}

TEST_CASE("radius is inversely proportional to mismatch and infinite at zero") {
  CHECK(std::isinf(radius_formula(1.0, 2.0, 2.0, 0.0)));
  for (double k : {0.5, 2.0, 7.0})
    CHECK(radius_formula(1.0, 2.0, 2.0, 0.1 * k) == doctest::Approx(radius_formula(1.0, 2.0, 2.0, 0.1) / k));
  CHECK(angle_for_radius(59.0, std::numeric_limits<double>::infinity()) == 0.0);
  CHECK(angle_for_radius(118.0, 100.0) == doctest::Approx(2.0 * angle_for_radius(59.0, 100.0)));
}

TEST_CASE("sweep of a single ratio reproduces the formula") {
  SweepGeometry g{SweepMode::FixedTotal, 1.0, 1.0, Convention{true, true}};
  const auto rows = sweep_thickness_ratio(2.0, 1.0, {1.0}, g);
  REQUIRE(rows.size() == 1);
  CHECK(rows[0].radius == doctest::Approx(36.5 / 24.0));
}

TEST_CASE("convention selection lands near the quoted analytic optimum") {
  // Bounded scalar minimisation outside this code base: fixed hard layer,
  // m = h_soft / h_hard, n = E_soft / E_hard gives 0.466282.
  const auto sel = select_convention(2.0, 0.47);
  CHECK(sel.candidates.size() == 8);
  CHECK(sel.best().argmin_soft_over_hard == doctest::Approx(0.4662817).epsilon(1e-6));
  CHECK(std::abs(sel.best().argmin_soft_over_hard - 0.47) <= 0.05);
  CHECK(sel.best().mode == SweepMode::FixedHard);
  // Fixed total thickness with the literal symbol reading gives 1/sqrt(2).
  CHECK(analytic_argmin(2.0, Convention{true, true}, SweepMode::FixedTotal) ==
        doctest::Approx(std::sqrt(0.5)).epsilon(1e-6));
}

TEST_CASE("fixed-total radius has one interior minimum for several modulus ratios") {
  for (double n : {1.5, 2.0, 3.0}) {
    std::vector<double> ratios;
    for (double lr = std::log(0.05); lr <= std::log(20.0); lr += 0.01) ratios.push_back(std::exp(lr));
    SweepGeometry g{SweepMode::FixedTotal, 1.0, 1.0, Convention{}};
    const auto rows = sweep_thickness_ratio(n, 1.0, ratios, g);
    int turns = 0;
    for (std::size_t i = 1; i + 1 < rows.size(); ++i)
      if (rows[i].radius < rows[i - 1].radius && rows[i].radius < rows[i + 1].radius) ++turns;
    CHECK(turns == 1);
  }
}

TEST_CASE("experimental calibration puts a 27 degree peak at ratio 2") {
  const auto fit = fit_experimental();
  CHECK(fit.modulus_ratio_n > 0.0);
  CHECK(fit.gain > 0.0);
  const auto spec = calibrated_spec(2.0);
  const double dtheta = bend_angle(spec, 1.0) - bend_angle(spec, 0.4);
  CHECK(std::abs(dtheta - 27.0) <= 2.0);
  CHECK(bend_angle(spec, 0.4) == 0.0);

  double best_ratio = 0.0, best = -1.0;
  std::vector<double> deltas;
  for (int i = 5; i <= 100; ++i) {
    const double r = i * 0.05;
    const auto s = calibrated_spec(r);
    const double d = bend_angle(s, 1.0) - bend_angle(s, 0.4);
    deltas.push_back(d);
    if (d > best) {
      best = d;
      best_ratio = r;
    }
  }
  CHECK(best_ratio >= 1.5);
  CHECK(best_ratio <= 2.5);
  // Tails fall away from the peak on both sides.
  const auto peak = std::max_element(deltas.begin(), deltas.end()) - deltas.begin();
  for (long i = 1; i <= peak; ++i) CHECK(deltas[i] > deltas[i - 1]);
  for (std::size_t i = peak + 1; i < deltas.size(); ++i) CHECK(deltas[i] < deltas[i - 1]);
}

TEST_CASE("gripper opens in water and closes at 40 percent") {
  const GripperSpec g;
  const auto closed = gripper_aperture(g, 0.4);
  CHECK(closed.state == GripperState::Closed);
  CHECK(closed.aperture_um == doctest::Approx(g.jaw_gap_closed_um));
  const auto open = gripper_aperture(g, 1.0);
  CHECK(open.state == GripperState::Open);
  CHECK(open.aperture_um > closed.aperture_um);
  CHECK(open.centerline_offset_um == 0.0);

  double prev_theta = -1e9, prev_ap = -1e9;
  for (double lam = 1.02; lam >= 0.75; lam -= 0.01) {
    const auto r = gripper_aperture_for_lambda(g, lam);
    if (r.theta_deg >= prev_theta) CHECK(r.aperture_um >= prev_ap);
    prev_theta = r.theta_deg;
    prev_ap = r.aperture_um;
  }
}
