#include <cstdlib>
#include <fstream>

#include "doctest.h"

#include "microforge/config.hpp"
#include "microforge/errors.hpp"

using namespace microforge;
using nlohmann::json;

TEST_CASE("config round trip keeps every value") {
  const Config d;
  const json j = config_to_json(d);
  const Config back = apply_config(j);
  CHECK(config_to_json(back) == j);
}

TEST_CASE("config overrides and refits") {
  const Config c = apply_config(json::parse(R"({"gel": {"anchors": [[0, 0.9], [0.4, 1.05], [1, 0.7]]},
                                                "kinetics": {"tau_slow_s": 40},
                                                "dt_s": 0.0005})"));
  CHECK(c.world->gel->equilibrium_at(1.0) == doctest::Approx(0.7));
  CHECK(c.world->kinetics.tau_slow_s == 40.0);
  CHECK(c.dt_s == 0.0005);
}

TEST_CASE("laser power tables select per part and survive a round trip") {
  const Config c = apply_config(json::parse(R"({"gel": {"calibrations_by_laser_power":
                                                  {"8": [[0, 0.95], [0.4, 1.1], [1, 0.8]]}}})"));
  CHECK(c.world->gel_for(8.0).equilibrium_at(1.0) == doctest::Approx(0.8));
  CHECK(c.world->gel_for(8.0).equilibrium_at(0.4) == doctest::Approx(1.1));
  CHECK(c.world->gel_for(12.0).equilibrium_at(1.0) == doctest::Approx(0.753));
  CHECK(c.world->gel_for(10.0).equilibrium_at(1.0) == doctest::Approx(0.753));
  const json j = config_to_json(c);
  CHECK(config_to_json(apply_config(j)) == j);

  // Changing the free-energy constants keeps the extra tables.
  const Config d = apply_config(json::parse(R"({"gel": {"chi": -0.7}})"), c);
  CHECK(d.world->gel_for(8.0).equilibrium_at(1.0) == doctest::Approx(0.8));

  CHECK_THROWS_AS(apply_config(json::parse(R"({"gel": {"calibrations_by_laser_power": {"hi": [[0, 1], [1, 1]]}}})")),
                  SchemaError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"gel": {"calibrations_by_laser_power": {"8": [[0.5, 1]]}}})")),
                  SchemaError);
}

TEST_CASE("unknown keys and bad values are schema errors") {
  CHECK_THROWS_AS(apply_config(json::parse(R"({"gel": {"nv": 1}})")), SchemaError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"bogus": 1})")), SchemaError);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"kinetics": {"tau_fast_s": 100}})")), Error);
  CHECK_THROWS_AS(apply_config(json::parse(R"({"dt_s": "fast"})")), SchemaError);
}

TEST_CASE("config path precedence") {
  const auto dir = std::filesystem::temp_directory_path();
  const auto env_file = dir / "mf_env_config.json";
  const auto cli_file = dir / "mf_cli_config.json";
  std::ofstream(env_file) << R"({"dt_s": 0.0002})";
  std::ofstream(cli_file) << R"({"dt_s": 0.0004})";
  ::setenv("MICROFORGE_CONFIG", env_file.c_str(), 1);
  CHECK(resolve_config(std::nullopt).dt_s == 0.0002);
  CHECK(resolve_config(cli_file.string()).dt_s == 0.0004);
  ::unsetenv("MICROFORGE_CONFIG");
  CHECK(resolve_config(std::nullopt).dt_s == 1e-3);
  std::ofstream(cli_file) << "{\n  \"dt_s\": 0.001,\n  oops\n}";
  try {
    load_config_file(cli_file);
    FAIL("expected a schema error");
  } catch (const SchemaError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }
}
