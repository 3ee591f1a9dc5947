#include "microforge/letters.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <sstream>

#include <fmt/format.h>

#include "microforge/errors.hpp"
#include "microforge/simulation.hpp"

namespace microforge::letters {

std::vector<geom::Vec2> parse_waypoints(const std::string& text, const std::string& origin) {
  std::vector<geom::Vec2> pts;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    if (pts.empty() && line.find("x_um") != std::string::npos) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos)
      throw SchemaError(fmt::format("{}: line {}: expected 'x,y'", origin, lineno));
    try {
      std::size_t used = 0;
      const double x = std::stod(line.substr(0, comma));
      const std::string rest = line.substr(comma + 1);
      const double y = std::stod(rest, &used);
      if (rest.find_first_not_of(" \t\r", used) != std::string::npos) throw std::invalid_argument("trailing text");
      if (!std::isfinite(x) || !std::isfinite(y)) throw std::invalid_argument("not finite");
      pts.push_back({x, y});
    } catch (const std::exception&) {
      throw SchemaError(fmt::format("{}: line {}: '{}' is not a point", origin, lineno, line));
    }
  }
  return pts;
}

std::vector<geom::Vec2> load_waypoints(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot read waypoints '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_waypoints(ss.str(), path.string());
}

LettersResult draw_letters(const std::vector<geom::Vec2>& waypoints, const Config& cfg, const LettersOptions& opt,
                           std::ostream* trace) {
  if (!world::is_base(opt.base)) throw InvalidCommand("letters need a base body kind");
  LettersResult res;
  if (waypoints.size() < 2) return res;

  const double phi = opt.water_fraction.value_or(opt.base == world::BodyKind::Type1Base ? 0.40 : 1.00);
  world::WorldState w;
  w.config = cfg.world;
  w.water_fraction = w.water_fraction_target = phi;
  world::add_body(w, world::make_body("base", opt.base, {waypoints[0].x, waypoints[0].y, 0.0}, *cfg.world, phi));

  const auto budget = std::llround(opt.budget_s / opt.dt_s);
  const auto stride = std::max<long long>(1, std::llround(opt.trace_interval_s / opt.dt_s));
  if (trace) *trace << "time_s,x_um,y_um,segment,cross_track_um\n";
  std::size_t seg = 1;
  res.segments = waypoints.size() - 1;
  for (;;) {
    const geom::Vec2 pos = w.body("base").pose.position();
    const geom::Vec2 from = waypoints[seg - 1], to = waypoints[seg];
    res.max_cross_track_um = std::max(res.max_cross_track_um, sim::cross_track_error(pos, from, to));
    if (geom::norm(to - pos) <= cfg.follower.waypoint_tol_um) {
      res.max_waypoint_miss_um = std::max(res.max_waypoint_miss_um, geom::norm(to - pos));
      if (++seg == waypoints.size()) break;
      continue;
    }
    if (w.tick_index >= budget)
      throw UnreachableWaypoint(fmt::format("waypoint {} ({:.1f}, {:.1f}) not reached within {} s; base at ({:.3f}, {:.3f})",
                                            seg, to.x, to.y, opt.budget_s, pos.x, pos.y));
    const auto cmd = sim::follow_command(pos, from, to, cfg.follower, cfg.world->coil);
    w = world::tick(w, {{"base", cmd}}, opt.dt_s);
    if (trace && w.tick_index % stride == 0) {
      const auto& p = w.body("base").pose;
      *trace << fmt::format("{:.17g},{:.17g},{:.17g},{},{:.17g}\n", w.time_s, p.x, p.y, seg,
                            sim::cross_track_error(p.position(), from, to));
    }
  }
  res.time_s = w.time_s;
  return res;
}

}  // namespace microforge::letters
