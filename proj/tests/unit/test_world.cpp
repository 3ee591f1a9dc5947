#include <cmath>
#include <random>

#include "doctest.h"

#include "helpers.hpp"
#include "microforge/errors.hpp"
#include "microforge/simulation.hpp"
#include "microforge/world.hpp"

using namespace microforge;
using namespace microforge::world;

TEST_CASE("empty commands at equilibrium only advance time") {
  WorldState w = testing::docked_pair(BodyKind::Type2Base, BodyKind::EndEffectorGripper, 0.4);
  w.bodies[1].pose.y = 300.0;  // apart
  WorldState n = tick(w, {}, 1e-3);
  CHECK(n.time_s == doctest::Approx(1e-3));
  CHECK(n.tick_index == 1);
  for (std::size_t i = 0; i < w.bodies.size(); ++i) CHECK(n.bodies[i].pose == w.bodies[i].pose);
  CHECK(n.water_fraction == w.water_fraction);
  CHECK_THROWS_AS(tick(w, {}, 2e-3), StepTooLarge);
  CHECK_THROWS_AS(tick(w, {{"nobody", {}}}, 1e-3), InvalidCommand);
}

TEST_CASE("solvent exchange is first order") {
  CHECK(relax_water_fraction(0.4, 1.0, 2.0, 6.0) == doctest::Approx(1.0 - 0.6 * std::exp(-3.0)));
  WorldState w;
  w.water_fraction = 0.4;
  w.water_fraction_target = 1.0;
  double prev = w.water_fraction;
  for (int i = 0; i < 6000; ++i) {
    w = tick(w, {}, 1e-3);
    REQUIRE(w.water_fraction >= prev);
    REQUIRE(w.water_fraction <= 1.0);
    prev = w.water_fraction;
  }
  CHECK(w.water_fraction == doctest::Approx(0.970).epsilon(1e-3));
}

TEST_CASE("mate geometry gate follows the RMC size") {
  WorldState w = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 1.0);
  auto r = check_mate_geometry(w, w.bodies[0], w.bodies[1]);
  CHECK(w.bodies[0].swell->lambda == doctest::Approx(0.753));
  CHECK(r.male_width_um == doctest::Approx(45.18).epsilon(1e-4));
  CHECK(r.can_insert);
  CHECK_FALSE(r.interference_locked);

  w.bodies[0].swell->lambda = 1.0;
  r = check_mate_geometry(w, w.bodies[0], w.bodies[1]);
  CHECK(r.interference_locked);
  CHECK_FALSE(r.can_insert);

  w.bodies[0].swell->lambda = 0.753;
  w.bodies[0].pose.theta = 20.0 * M_PI / 180.0;
  CHECK_FALSE(check_mate_geometry(w, w.bodies[0], w.bodies[1]).can_insert);

  // Monotone in lambda at fixed poses.
  w.bodies[0].pose.theta = 0.0;
  bool seen_false = false;
  for (double lam = 0.7; lam <= 1.05; lam += 0.005) {
    w.bodies[0].swell->lambda = lam;
    const bool ok = check_mate_geometry(w, w.bodies[0], w.bodies[1]).can_insert;
    if (!ok) seen_false = true;
    CHECK(!(ok && seen_false));
    const auto rr = check_mate_geometry(w, w.bodies[0], w.bodies[1]);
    CHECK(!(rr.interference_locked && rr.can_insert));
  }
  CHECK_THROWS_AS(check_mate_geometry(w, w.bodies[1], w.bodies[0]), KindMismatch);
}

TEST_CASE("locked assemblies move rigidly") {
  WorldState w = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 0.4);
  lock_pair(w, "base", "eff");
  const auto rel0 = geom::relative(w.bodies[0].pose, w.bodies[1].pose);
  const auto start = w.bodies;
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> g(-1.0, 1.0);
  for (int i = 0; i < 2000; ++i) {
    magnetics::FieldCommand c{g(rng), g(rng), std::nullopt, g(rng)};
    w = tick(w, {{"base", c}}, 1e-3);
    const auto rel = geom::relative(w.bodies[0].pose, w.bodies[1].pose);
    REQUIRE(std::abs(rel.x - rel0.x) < 1e-9);
    REQUIRE(std::abs(rel.y - rel0.y) < 1e-9);
    REQUIRE(std::abs(geom::wrap_angle(rel.theta - rel0.theta)) < 1e-12);
  }

  WorldState v = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 0.4);
  lock_pair(v, "base", "eff");
  v = tick(v, {{"base", {1.0, 0.0}}}, 1e-3);
  CHECK(v.bodies[0].pose.x - start[0].pose.x == doctest::Approx(v.bodies[1].pose.x - start[1].pose.x));
  CHECK(v.bodies[0].pose.x > 0.0);
}

TEST_CASE("pushing transfers motion and leaves no overlap") {
  WorldState w;
  w.water_fraction = w.water_fraction_target = 0.4;
  add_body(w, make_body("base", BodyKind::Type2Base, {0.0, 0.0, 0.0}, *w.config, 0.4));
  add_body(w, make_body("ball", BodyKind::Sphere, {0.0, 120.0, 0.0}, *w.config, 0.4));
  const double sep0 = body_separation(w, w.bodies[0], w.bodies[1]);
  // Place the sphere just in contact, then push 1 µm into it.
  w.bodies[1].pose.y -= sep0 + 1.0;
  const double y0 = w.bodies[1].pose.y;
  resolve_contacts(w);
  CHECK(w.bodies[1].pose.y - y0 >= 1.0 - 1e-9);
  CHECK(max_overlap(w) <= 1e-9);
  CHECK(w.bodies[0].pose == geom::Pose{0.0, 0.0, 0.0});
}

TEST_CASE("random driving never leaves bodies interpenetrating") {
  WorldState w;
  w.water_fraction = w.water_fraction_target = 0.4;
  w.channel.bounds = std::array<double, 4>{-300, -300, 300, 300};
  add_body(w, make_body("base", BodyKind::Type1Base, {0.0, -150.0, 0.0}, *w.config, 0.4));
  add_body(w, make_body("eff", BodyKind::EndEffectorMulti, {0.0, 0.0, 0.0}, *w.config, 0.4));
  add_body(w, make_body("s1", BodyKind::Sphere, {-60.0, 150.0, 0.0}, *w.config, 0.4));
  add_body(w, make_body("s2", BodyKind::Sphere, {60.0, 150.0, 0.0}, *w.config, 0.4));
  add_body(w, make_body("s3", BodyKind::Sphere, {0.0, 200.0, 0.0}, *w.config, 0.4));
  add_body(w, make_wall("wall", {200.0, 0.0, 0.0}, 20.0, 300.0));
  std::mt19937_64 rng(1234);
  std::uniform_real_distribution<double> g(-2.0, 2.0);
  magnetics::FieldCommand c;
  for (int i = 0; i < 10000; ++i) {
    if (i % 250 == 0) c = {g(rng), g(rng), std::nullopt, g(rng)};
    w = tick(w, {{"base", c}}, 1e-3);
    REQUIRE(max_overlap(w) <= 1e-6);
  }
}

TEST_CASE("detach feasibility rules") {
  {
    WorldState w = testing::docked_pair(BodyKind::Type2Base, BodyKind::EndEffectorGripper, 1.0);
    lock_pair(w, "base", "eff");
    w = tick(w, {}, 1e-3);
    const auto d = detach_feasible(w, "base", "eff");
    CHECK(d.feasible);
  }
  {
    WorldState w = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 1.0);
    lock_pair(w, "base", "eff");
    const auto d = detach_feasible(w, "base", "eff");
    CHECK_FALSE(d.feasible);
    CHECK(d.reason == DetachReason::SurfaceTensionAdhesion);
  }
  {
    WorldState w = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 1.0);
    w.channel.top_enclosure = true;
    add_body(w, make_wall("wl", {-71.0, 0.0, 0.0}, 20.0, 120.0));
    add_body(w, make_wall("wr", {71.0, 0.0, 0.0}, 20.0, 120.0));
    lock_pair(w, "base", "eff");
    CHECK(walls_constrain(w, w.body("eff")));
    CHECK(detach_feasible(w, "base", "eff").feasible);
    w.channel.top_enclosure = false;
    CHECK_FALSE(detach_feasible(w, "base", "eff").feasible);
  }
  {
    WorldState w = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 1.0);
    CHECK_NOTHROW(detach_feasible(w, "base", "eff"));  // seated counts as mated
    w.bodies[0].pose.y = -150.0;
    CHECK_THROWS_AS(detach_feasible(w, "base", "eff"), NotMated);
  }
}

TEST_CASE("release needs a sphere in contact") {
  WorldState w;
  w.water_fraction = w.water_fraction_target = 0.4;
  add_body(w, make_body("base", BodyKind::Type2Base, {0.0, 0.0, 0.0}, *w.config, 0.4));
  sim::Simulation s(w);
  s.start_maneuver("base", sim::make_release());
  CHECK_THROWS_AS(s.step(1e-3), NoContact);
}

TEST_CASE("identical inputs give bit-identical worlds") {
  auto run = [] {
    WorldState w = testing::docked_pair(BodyKind::Type1Base, BodyKind::EndEffectorSingle, 1.0);
    w.water_fraction_target = 0.4;
    for (int i = 0; i < 3000; ++i) w = tick(w, {{"base", {0.3, -0.1, std::nullopt, 0.2}}}, 1e-3);
    return w;
  };
  CHECK(same_state(run(), run()));
}
