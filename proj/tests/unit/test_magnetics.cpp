#include <cmath>

#include "doctest.h"

#include "microforge/errors.hpp"
#include "microforge/magnetics.hpp"
#include "microforge/sweeps.hpp"

using namespace microforge;
using namespace microforge::magnetics;

TEST_CASE("gradient force follows the unit conversion") {
  const auto base = MagneticBase::type1();
  const auto f = magnetic_force(base, FieldCommand{1.0, 0.0});
  CHECK(std::abs(f.x - 1.310e-8) <= 1e-12);
  CHECK(f.y == 0.0);
  CHECK(magnetic_force(base, FieldCommand{}) == geom::Vec2{0.0, 0.0});
  const auto g = magnetic_force(base, FieldCommand{-1.0, 0.5});
  const auto h = magnetic_force(base, FieldCommand{1.0, -0.5});
  CHECK(g.x == -h.x);
  CHECK(g.y == -h.y);
}

TEST_CASE("alignment torque is odd and peaks at a right angle") {
  const auto base = MagneticBase::type2();
  const double B = 5e-3;
  CHECK(magnetic_torque(base, 0.3, 0.3, B) == 0.0);
  CHECK(magnetic_torque(base, M_PI / 2, 0.0, B) == doctest::Approx(base.moment_Am2() * B));
  CHECK(magnetic_torque(base, 0.2, 0.0, B) == doctest::Approx(-magnetic_torque(base, -0.2, 0.0, B)));
}

TEST_CASE("overdamped stepping") {
  const DragModel drag;
  const geom::Pose p{10.0, -5.0, 0.4};
  CHECK(step_overdamped(p, {0.0, 0.0}, 0.0, drag, 1e-3) == p);
  CHECK_THROWS_AS(step_overdamped(p, {0.0, 0.0}, 0.0, drag, 2e-3), StepTooLarge);

  const geom::Vec2 F{2.616e-8, -1.0e-8};
  geom::Pose many = p;
  for (int i = 0; i < 10; ++i) many = step_overdamped(many, F, 0.0, drag, 1e-4);
  const geom::Pose once = step_overdamped(p, F, 0.0, drag, 1e-3);
  CHECK(many.x == doctest::Approx(once.x).epsilon(1e-12));
  CHECK(many.y == doctest::Approx(once.y).epsilon(1e-12));

  // Stick threshold and wall amplification.
  DragModel sticky = drag;
  sticky.stick_force_N = 3e-10;
  sticky.wall_amplification = 3.0;
  CHECK(overdamped_velocity({2.9e-10, 0.0}, sticky) == geom::Vec2{0.0, 0.0});
  // Above the threshold the excess force drives the body.
  CHECK(overdamped_velocity({2.616e-8, 0.0}, sticky).x == doctest::Approx((2.616e-8 - 3e-10) / (3 * 2.616e-4) * 1e6));
}

TEST_CASE("default drag moves a Type 2 base one body length in about 2 s at full gradient") {
  const auto cfg = world::WorldConfig::defaults();
  const double travel = sweeps::free_space_travel(*cfg, world::BodyKind::Type2Base, MagneticBase::type2().moment_emu,
                                                  cfg->coil.max_gradient_T_per_m, 2.0);
  CHECK(travel == doctest::Approx(200.0).epsilon(0.02));
}

TEST_CASE("Type 1 and Type 2 free-space trajectories differ by less than one percent") {
  const auto cfg = world::WorldConfig::defaults();
  const double t1 = sweeps::free_space_travel(*cfg, world::BodyKind::Type1Base, 1.310e-5, 1.0, 1.0);
  const double t2 = sweeps::free_space_travel(*cfg, world::BodyKind::Type2Base, 1.308e-5, 1.0, 1.0);
  CHECK(std::abs(t1 - t2) / t2 < 0.01);
}

TEST_CASE("sampled moments stay inside the 15 percent envelope") {
  const auto base = MagneticBase::type1();
  const auto s = sample_moments(base, 10000, 99);
  REQUIRE(s.size() == 10000);
  for (double m : s) REQUIRE(std::abs(m - base.moment_emu) <= 0.15 * base.moment_emu * (1 + 1e-12));
  CHECK(sample_moments(base, 10, 5) == sample_moments(base, 10, 5));
  CHECK(sample_moments(base, 10, 5) != sample_moments(base, 10, 6));
}

TEST_CASE("commands are clamped to the coil limits") {
  const CoilLimits lim;
  const auto c = clamp(FieldCommand{3.0, 4.0, std::nullopt, 10.0}, lim);
  CHECK(std::hypot(c.grad_x, c.grad_y) == doctest::Approx(lim.max_gradient_T_per_m));
  CHECK(c.grad_x / c.grad_y == doctest::Approx(0.75));
  CHECK(c.rotate_rate == lim.max_rotate_rate);
}
