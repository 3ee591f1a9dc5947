#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <vector>

#include "microforge/config.hpp"

namespace microforge::letters {

// Polyline in µm. File format: optional "x_um,y_um" header, then one
// comma-separated point per line; '#' starts a comment.
std::vector<geom::Vec2> parse_waypoints(const std::string& text, const std::string& origin = "<waypoints>");
std::vector<geom::Vec2> load_waypoints(const std::filesystem::path& path);

struct LettersOptions {
  world::BodyKind base = world::BodyKind::Type2Base;
  // Operating point; unset picks 0.40 for Type 1 and 1.00 for Type 2.
  std::optional<double> water_fraction;
  double budget_s = 600.0;
  double dt_s = 1e-3;
  double trace_interval_s = 0.05;
};

struct LettersResult {
  double time_s = 0.0;
  std::size_t segments = 0;
  double max_cross_track_um = 0.0;
  double max_waypoint_miss_um = 0.0;  // distance to each waypoint when it was declared reached
};

// Drives a lone base from the first waypoint through the rest with the
// axis-decomposed follower. UnreachableWaypoint when the budget runs out.
LettersResult draw_letters(const std::vector<geom::Vec2>& waypoints, const Config& cfg, const LettersOptions& opt,
                           std::ostream* trace = nullptr);

}  // namespace microforge::letters
