#include <sstream>

#include "doctest.h"

#include "helpers.hpp"
#include "microforge/errors.hpp"
#include "microforge/letters.hpp"

using namespace microforge;
using namespace microforge::letters;

TEST_CASE("waypoint parsing") {
  const auto pts = parse_waypoints("x_um,y_um\n# corner\n0,0\n10.5, -3\n\n");
  REQUIRE(pts.size() == 2);
  CHECK(pts[1] == geom::Vec2{10.5, -3.0});
  CHECK_THROWS_AS(parse_waypoints("0,0\n1\n"), SchemaError);
  CHECK_THROWS_AS(parse_waypoints("0,zero\n"), SchemaError);
}

TEST_CASE("square path with a Type 2 base stays within 10 um") {
  const auto pts = load_waypoints(testing::source_path("data/waypoints/square.csv"));
  std::ostringstream trace;
  const auto r = draw_letters(pts, Config{}, LettersOptions{}, &trace);
  CHECK(r.segments == pts.size() - 1);
  CHECK(r.max_cross_track_um < 10.0);
  CHECK(r.max_waypoint_miss_um <= 5.0 + 1e-9);
  CHECK(trace.str().rfind("time_s,x_um,y_um,segment,cross_track_um\n", 0) == 0);
}

TEST_CASE("zero-length paths succeed immediately") {
  CHECK(draw_letters({{0.0, 0.0}}, Config{}, LettersOptions{}).time_s == 0.0);
  CHECK(draw_letters({{5.0, 5.0}, {5.0, 5.0}}, Config{}, LettersOptions{}).time_s == 0.0);
}

TEST_CASE("Type 1 in water is slower than at 40 percent water") {
  const auto pts = load_waypoints(testing::source_path("data/waypoints/M.csv"));
  LettersOptions opt;
  opt.base = world::BodyKind::Type1Base;
  const auto fast = draw_letters(pts, Config{}, opt);
  opt.water_fraction = 1.0;
  const auto slow = draw_letters(pts, Config{}, opt);
  CHECK(slow.time_s > fast.time_s);
  opt.budget_s = 20.0;
  CHECK_THROWS_AS(draw_letters(pts, Config{}, opt), UnreachableWaypoint);
}
