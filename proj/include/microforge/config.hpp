#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "json.hpp"

#include "microforge/mating.hpp"
#include "microforge/simulation.hpp"
#include "microforge/world.hpp"

namespace microforge {

inline constexpr int kConfigSchemaVersion = 1;

// Everything tunable, in one place. Missing keys in a config document keep
// their defaults; unknown keys are schema errors.
struct Config {
  std::shared_ptr<const world::WorldConfig> world = world::WorldConfig::defaults();
  mating::ProtocolParams protocol;
  sim::FollowerParams follower;
  double dt_s = 1e-3;
  double exchange_tau_s = 2.0;
  // Experimental bilayer targets the gripper calibration is fitted to.
  double bilayer_peak_ratio = 2.0;
  double bilayer_delta_theta_deg = 27.0;
};

// Applies overrides from `doc` on top of `base`. Throws SchemaError naming
// the offending key.
Config apply_config(const nlohmann::json& doc, const Config& base = {});
Config load_config_file(const std::filesystem::path& path, const Config& base = {});

// Full config as a document (every key present).
nlohmann::json config_to_json(const Config& cfg);

// Explicit path wins, then MICROFORGE_CONFIG, then defaults.
Config resolve_config(const std::optional<std::string>& cli_path);

// "line L, column C" for a byte offset into `text`.
std::string describe_offset(const std::string& text, std::size_t byte_offset);

}  // namespace microforge
