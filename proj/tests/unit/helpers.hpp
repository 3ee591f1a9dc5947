#pragma once

#include <filesystem>
#include <string>

#include "microforge/world.hpp"

namespace testing {

inline std::filesystem::path source_path(const std::string& rel) {
  return std::filesystem::path(MICROFORGE_SOURCE_DIR) / rel;
}

// Base seated in the effector's slot (base centre 100 µm behind the effector).
inline microforge::world::WorldState docked_pair(microforge::world::BodyKind base_kind,
                                                 microforge::world::BodyKind effector_kind, double water_fraction) {
  using namespace microforge::world;
  WorldState w;
  w.water_fraction = water_fraction;
  w.water_fraction_target = water_fraction;
  add_body(w, make_body("base", base_kind, {0.0, -100.0, 0.0}, *w.config, water_fraction));
  add_body(w, make_body("eff", effector_kind, {0.0, 0.0, 0.0}, *w.config, water_fraction));
  return w;
}

}  // namespace testing
