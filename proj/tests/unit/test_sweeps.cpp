#include <fstream>
#include <sstream>

#include "doctest.h"

#include "helpers.hpp"
#include "microforge/errors.hpp"
#include "microforge/sweeps.hpp"

using namespace microforge;
using namespace microforge::sweeps;

namespace {

std::string sweep_text(SweepKind kind, Exec exec) {
  SweepRequest req;
  req.kind = kind;
  req.exec = exec;
  std::ostringstream out;
  run_sweep(req, Config{}, out);
  return out.str();
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("grids") {
  CHECK(make_grid(0.0, 1.0, 0.25).size() == 5);
  CHECK(make_grid(0.0, 1.0, 0.01).back() == doctest::Approx(1.0));
  CHECK(make_grid(2.0, 2.0, 1.0).size() == 1);
  CHECK_THROWS_AS(make_grid(0.0, 1.0, 0.0), GridError);
  CHECK_THROWS_AS(make_grid(1.0, 0.0, 0.1), GridError);
  CHECK_THROWS_AS(make_grid(0.0, 1e9, 1e-3), GridError);
  CHECK_THROWS_AS(sweep_kind_from_string("Nope"), GridError);
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  for (auto k : {SweepKind::SwellCurve, SweepKind::TransitionCurve, SweepKind::BilayerRatio})
    CHECK(sweep_text(k, Exec::Serial) == sweep_text(k, Exec::Parallel));
  const auto cfg = world::WorldConfig::defaults();
  const auto a = moment_batch(*cfg, world::BodyKind::Type1Base, 64, 3, 1.0, 0.2, Exec::Serial);
  const auto b = moment_batch(*cfg, world::BodyKind::Type1Base, 64, 3, 1.0, 0.2, Exec::Parallel);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].moment_emu == b[i].moment_emu);
    CHECK(a[i].displacement_um == b[i].displacement_um);
  }
}

TEST_CASE("default sweeps match the golden CSV files byte for byte") {
  CHECK(sweep_text(SweepKind::SwellCurve, Exec::Parallel) == slurp(testing::source_path("tests/golden/swell_curve.csv")));
  CHECK(sweep_text(SweepKind::TransitionCurve, Exec::Parallel) ==
        slurp(testing::source_path("tests/golden/transition_curve.csv")));
  CHECK(sweep_text(SweepKind::BilayerRatio, Exec::Parallel) ==
        slurp(testing::source_path("tests/golden/bilayer_ratio.csv")));
  CHECK(sweep_text(SweepKind::CycleRepeat, Exec::Parallel) ==
        slurp(testing::source_path("tests/golden/cycle_repeat.csv")));
}

TEST_CASE("sweep values") {
  const auto cfg = world::WorldConfig::defaults();
  const auto swell = swell_curve(*cfg->gel, {0.0, 0.4, 1.0});
  CHECK(swell[0].lambda_eq == doctest::Approx(0.927));
  CHECK(swell[1].lambda_eq >= 1.0);
  CHECK(swell[2].lambda_eq == doctest::Approx(0.753));

  const auto tr = transition_curve(*cfg, {0.0, 5.0, 45.0});
  REQUIRE(tr.size() == 6);
  CHECK(tr[0].direction == Direction::TowardWater);
  CHECK(std::abs(tr[2].lambda - 0.838) <= 0.005);
  CHECK(tr[4].lambda >= 0.927 - 0.05 * (0.927 - 0.753));

  const auto cyc = cycle_repeat(*cfg);
  REQUIRE(cyc.size() == 16);
  for (const auto& row : cyc) {
    const auto& first = row.water_fraction == 1.0 ? cyc[0] : cyc[1];
    CHECK(std::abs(row.lambda_end - first.lambda_end) < 1e-9);
  }
  CHECK(cyc[0].lambda_end == doctest::Approx(0.753).epsilon(1e-6));
  CHECK(cyc[1].lambda_end == doctest::Approx(0.927).epsilon(1e-6));
}
