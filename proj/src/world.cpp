#include "microforge/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge::world {

using geom::Circle;
using geom::ConvexPiece;
using geom::Polygon;
using geom::Pose;
using geom::Vec2;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

constexpr std::pair<BodyKind, const char*> kKindNames[] = {
    {BodyKind::Type1Base, "Type1Base"},
    {BodyKind::Type2Base, "Type2Base"},
    {BodyKind::EndEffectorSingle, "EndEffectorSingle"},
    {BodyKind::EndEffectorMulti, "EndEffectorMulti"},
    {BodyKind::EndEffectorGripper, "EndEffectorGripper"},
    {BodyKind::Sphere, "Sphere"},
    {BodyKind::Wall, "Wall"},
};

// Contact mobility: the more mobile body of a touching pair takes the
// correction. Pinned bodies (roll-back) are demoted to Static.
enum class Tier { Static = 0, Robot = 1, Passive = 2 };

double bounding_radius(const std::vector<ConvexPiece>& shape) {
  double r = 0.0;
  for (const auto& piece : shape) {
    if (const auto* c = std::get_if<Circle>(&piece)) {
      r = std::max(r, geom::norm(c->center) + c->radius);
    } else {
      for (const auto& v : std::get<Polygon>(piece).vertices) r = std::max(r, geom::norm(v));
    }
  }
  return r;
}

struct Extent {
  double x_min, y_min, x_max, y_max;
};

Extent extent(const ConvexPiece& world_piece) {
  if (const auto* c = std::get_if<Circle>(&world_piece))
    return {c->center.x - c->radius, c->center.y - c->radius, c->center.x + c->radius, c->center.y + c->radius};
  Extent e{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
           -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
  for (const auto& v : std::get<Polygon>(world_piece).vertices) {
    e.x_min = std::min(e.x_min, v.x);
    e.y_min = std::min(e.y_min, v.y);
    e.x_max = std::max(e.x_max, v.x);
    e.y_max = std::max(e.y_max, v.y);
  }
  return e;
}

Vec2 piece_centroid(const ConvexPiece& world_piece) {
  if (const auto* c = std::get_if<Circle>(&world_piece)) return c->center;
  Vec2 sum;
  const auto& v = std::get<Polygon>(world_piece).vertices;
  for (const auto& p : v) sum += p;
  return sum * (1.0 / static_cast<double>(v.size()));
}

std::vector<ConvexPiece> world_pieces(const Body& b) {
  std::vector<ConvexPiece> out;
  out.reserve(b.shape.size());
  for (const auto& p : b.shape) out.push_back(geom::to_world(p, b.pose));
  return out;
}

// Working view of the world used by the contact solver.
class ContactSolver {
 public:
  ContactSolver(WorldState& world, const WorldState* previous) : world_(world), previous_(previous) {
    const std::size_t n = world.bodies.size();
    root_.resize(n);
    tier_.resize(n);
    radius_.resize(n);
    pieces_.resize(n);
    members_.assign(n, {});
    for (std::size_t i = 0; i < n; ++i) {
      root_[i] = i;
      const Body& b = world.bodies[i];
      if (const Lock* l = world.lock_of_effector(b.id)) root_[i] = *world.index_of(l->base_id);
      radius_[i] = bounding_radius(b.shape);
      pieces_[i] = world_pieces(b);
    }
    for (std::size_t i = 0; i < n; ++i) members_[root_[i]].push_back(i);
    for (std::size_t i = 0; i < n; ++i) tier_[i] = base_tier(i);
  }

  void run() {
    const auto& cfg = *world_.config;
    std::set<std::size_t> pinned;
    for (;;) {
      for (int it = 0; it < cfg.contact_iterations; ++it) {
        if (sweep(true) <= cfg.contact_tolerance_um) return;
      }
      if (sweep(false) <= cfg.contact_tolerance_um) return;
      if (!previous_) return;
      // Jammed: restore offending movable assemblies to their pre-step poses
      // and hold them there while the rest settles.
      bool changed = false;
      for (std::size_t r : offending_roots()) {
        if (pinned.count(r)) continue;
        const auto prev = previous_->index_of(world_.bodies[r].id);
        if (!prev) continue;
        move_root_to(r, previous_->bodies[*prev].pose);
        tier_[r] = Tier::Static;
        pinned.insert(r);
        changed = true;
      }
      if (!changed) return;
    }
  }

 private:
  Tier base_tier(std::size_t i) const {
    const Body& b = world_.bodies[i];
    if (root_[i] != i) return base_tier(root_[i]);
    switch (b.kind) {
      case BodyKind::Wall: return Tier::Static;
      case BodyKind::Sphere: return Tier::Passive;
      case BodyKind::Type1Base:
      case BodyKind::Type2Base: return Tier::Robot;
      default: return Tier::Static;  // free end-effectors rest on the substrate
    }
  }

  void refresh(std::size_t r) {
    const Pose& rp = world_.bodies[r].pose;
    for (std::size_t m : members_[r]) {
      if (m != r) {
        const Lock* l = world_.lock_of_effector(world_.bodies[m].id);
        world_.bodies[m].pose = geom::compose(rp, l->relative);
      }
      pieces_[m] = world_pieces(world_.bodies[m]);
    }
  }

  void translate_root(std::size_t r, Vec2 d) {
    Pose& p = world_.bodies[r].pose;
    p.x += d.x;
    p.y += d.y;
    refresh(r);
  }

  void move_root_to(std::size_t r, const Pose& pose) {
    world_.bodies[r].pose = pose;
    refresh(r);
  }

  bool may_touch(std::size_t i, std::size_t j) const {
    if (root_[i] == root_[j]) return false;
    if (tier_[root_[i]] == Tier::Static && tier_[root_[j]] == Tier::Static) return false;
    const Vec2 d = world_.bodies[i].pose.position() - world_.bodies[j].pose.position();
    return geom::norm(d) <= radius_[i] + radius_[j];
  }

  // One Gauss-Seidel pass. Returns the deepest overlap encountered.
  double sweep(bool correct) {
    const std::size_t n = world_.bodies.size();
    double worst = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!may_touch(i, j)) continue;
        for (std::size_t a = 0; a < pieces_[i].size(); ++a) {
          for (std::size_t b = 0; b < pieces_[j].size(); ++b) {
            const auto pen = geom::penetration(pieces_[i][a], pieces_[j][b]);
            if (!pen) continue;
            worst = std::max(worst, pen->depth);
            if (!correct) continue;
            const Tier ti = tier_[root_[i]];
            const Tier tj = tier_[root_[j]];
            const Vec2 push = pen->normal * pen->depth;
            if (tj > ti) {
              translate_root(root_[j], push);
            } else if (ti > tj) {
              translate_root(root_[i], -push);
            } else {
              translate_root(root_[j], push * 0.5);
              translate_root(root_[i], push * -0.5);
            }
          }
        }
      }
    }
    if (world_.channel.bounds) worst = std::max(worst, enforce_bounds(correct));
    return worst;
  }

  // Translation that brings assembly `r` back inside the channel bounds.
  Vec2 bounds_correction(std::size_t r) const {
    const auto [bx0, by0, bx1, by1] = *world_.channel.bounds;
    Extent e{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
             -std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    for (std::size_t m : members_[r]) {
      for (const auto& p : pieces_[m]) {
        const Extent pe = extent(p);
        e = {std::min(e.x_min, pe.x_min), std::min(e.y_min, pe.y_min), std::max(e.x_max, pe.x_max),
             std::max(e.y_max, pe.y_max)};
      }
    }
    Vec2 d;
    if (e.x_min < bx0) d.x = bx0 - e.x_min; else if (e.x_max > bx1) d.x = bx1 - e.x_max;
    if (e.y_min < by0) d.y = by0 - e.y_min; else if (e.y_max > by1) d.y = by1 - e.y_max;
    return d;
  }

  double enforce_bounds(bool correct) {
    double worst = 0.0;
    for (std::size_t r = 0; r < world_.bodies.size(); ++r) {
      if (root_[r] != r || tier_[r] == Tier::Static) continue;
      const Vec2 d = bounds_correction(r);
      worst = std::max({worst, std::abs(d.x), std::abs(d.y)});
      if (correct && (d.x != 0.0 || d.y != 0.0)) translate_root(r, d);
    }
    return worst;
  }

  std::vector<std::size_t> offending_roots() const {
    const auto& cfg = *world_.config;
    std::set<std::size_t> out;
    const std::size_t n = world_.bodies.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (!may_touch(i, j)) continue;
        for (const auto& pa : pieces_[i]) {
          for (const auto& pb : pieces_[j]) {
            const auto pen = geom::penetration(pa, pb);
            if (!pen || pen->depth <= cfg.contact_tolerance_um) continue;
            if (tier_[root_[i]] != Tier::Static) out.insert(root_[i]);
            if (tier_[root_[j]] != Tier::Static) out.insert(root_[j]);
          }
        }
      }
    }
    if (world_.channel.bounds) {
      for (std::size_t r = 0; r < n; ++r) {
        if (root_[r] != r || tier_[r] == Tier::Static) continue;
        const Vec2 d = bounds_correction(r);
        if (std::max(std::abs(d.x), std::abs(d.y)) > cfg.contact_tolerance_um) out.insert(r);
      }
    }
    return {out.begin(), out.end()};
  }

  WorldState& world_;
  const WorldState* previous_;
  std::vector<std::size_t> root_;
  std::vector<Tier> tier_;
  std::vector<double> radius_;
  std::vector<std::vector<ConvexPiece>> pieces_;
  std::vector<std::vector<std::size_t>> members_;
};

bool same_swell(const std::optional<gel::SwellState>& a, const std::optional<gel::SwellState>& b) {
  if (a.has_value() != b.has_value()) return false;
  if (!a) return true;
  return a->lambda == b->lambda && a->lambda_eq == b->lambda_eq && a->direction == b->direction;
}

}  // namespace

const char* to_string(BodyKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

const char* to_string(Mount m) {
  switch (m) {
    case Mount::None: return "None";
    case Mount::Slot: return "Slot";
    case Mount::Bilayer: return "Bilayer";
  }
  return "?";
}

Mount mount_from_string(const std::string& s) {
  for (Mount m : {Mount::None, Mount::Slot, Mount::Bilayer})
    if (s == to_string(m)) return m;
  throw SchemaError(fmt::format("unknown mount '{}'", s));
}

Mount default_mount(BodyKind k) {
  if (k == BodyKind::EndEffectorGripper) return Mount::Bilayer;
  if (is_effector(k)) return Mount::Slot;
  return Mount::None;
}

BodyKind body_kind_from_string(const std::string& s) {
  for (const auto& [kind, name] : kKindNames)
    if (s == name) return kind;
  throw SchemaError(fmt::format("unknown body kind '{}'", s));
}

void MateGeometryParams::validate() const {
  if (!(male_width_um > 0.0 && slot_width_um > 0.0 && male_depth_um > 0.0 && slot_depth_um > 0.0))
    throw RangeError("mate feature sizes must be positive");
  if (!(lock_interference_um < insert_clearance_um))
    throw RangeError("lock interference must be smaller than insert clearance so a locked pair cannot slide out");
  if (!(lateral_tol_um >= 0.0 && max_angle_deg >= 0.0 && seat_tol_um >= 0.0))
    throw RangeError("alignment tolerances must be non-negative");
}

std::shared_ptr<const WorldConfig> WorldConfig::defaults() {
  static const std::shared_ptr<const WorldConfig> shared = [] {
    auto cfg = std::make_shared<WorldConfig>();
    cfg->gel = std::make_shared<gel::GelModel>();
    const auto spec = bilayer::calibrated_spec(2.0, cfg->gel);
    cfg->gripper.left = spec;
    cfg->gripper.right = spec;
    return std::shared_ptr<const WorldConfig>(cfg);
  }();
  return shared;
}

const gel::GelModel& WorldConfig::gel_for(double laser_power_mW) const {
  const auto it = gel_by_laser_power.find(laser_power_mW);
  return it != gel_by_laser_power.end() ? *it->second : *gel;
}

void WorldConfig::validate() const {
  if (!gel) throw RangeError("world config has no gel model");
  kinetics.validate();
  gripper.validate();
  mate.validate();
  if (!(dt_max_s > 0.0)) throw RangeError("dt_max must be positive");
  if (!(coil.max_gradient_T_per_m > 0.0 && coil.alignment_field_T >= 0.0 && coil.max_rotate_rate >= 0.0))
    throw RangeError("coil limits must be positive");
  if (!(detach.lambda_detach > 0.0 && detach.separation_um >= 0.0 && detach.wall_contact_tol_um >= 0.0))
    throw RangeError("detach parameters out of range");
  if (!(water_regime.drag_amplification >= 1.0 && water_regime.stick_force_N >= 0.0))
    throw RangeError("water-regime drag must amplify (>= 1) with a non-negative stick threshold");
  drag.validate();
  if (!(type1_base.moment_emu > 0.0 && type2_base.moment_emu > 0.0)) throw RangeError("moments must be positive");
  if (contact_iterations < 1 || !(contact_tolerance_um > 0.0)) throw RangeError("contact solver settings out of range");
}

const Body& WorldState::body(const std::string& id) const {
  if (auto i = index_of(id)) return bodies[*i];
  throw InvalidCommand(fmt::format("no body with id '{}'", id));
}

Body& WorldState::body(const std::string& id) {
  if (auto i = index_of(id)) return bodies[*i];
  throw InvalidCommand(fmt::format("no body with id '{}'", id));
}

std::optional<std::size_t> WorldState::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < bodies.size(); ++i)
    if (bodies[i].id == id) return i;
  return std::nullopt;
}

const Lock* WorldState::lock_of_base(const std::string& base_id) const {
  for (const auto& l : locks)
    if (l.base_id == base_id) return &l;
  return nullptr;
}

const Lock* WorldState::lock_of_effector(const std::string& effector_id) const {
  for (const auto& l : locks)
    if (l.effector_id == effector_id) return &l;
  return nullptr;
}

bool WorldState::is_locked(const std::string& base_id, const std::string& effector_id) const {
  const Lock* l = lock_of_base(base_id);
  return l && l->effector_id == effector_id;
}

bool same_state(const WorldState& a, const WorldState& b) {
  if (a.bodies.size() != b.bodies.size() || a.locks.size() != b.locks.size()) return false;
  if (a.water_fraction != b.water_fraction || a.water_fraction_target != b.water_fraction_target ||
      a.exchange_tau_s != b.exchange_tau_s || a.time_s != b.time_s || a.tick_index != b.tick_index ||
      a.rng_seed != b.rng_seed || a.field_heading != b.field_heading)
    return false;
  for (std::size_t i = 0; i < a.bodies.size(); ++i) {
    const Body& x = a.bodies[i];
    const Body& y = b.bodies[i];
    if (x.id != y.id || x.kind != y.kind || x.mount != y.mount || !(x.pose == y.pose) || !same_swell(x.swell, y.swell)) return false;
    if (x.gripper.has_value() != y.gripper.has_value()) return false;
    if (x.gripper && (x.gripper->aperture_um != y.gripper->aperture_um || x.gripper->state != y.gripper->state))
      return false;
  }
  for (std::size_t i = 0; i < a.locks.size(); ++i) {
    if (a.locks[i].base_id != b.locks[i].base_id || a.locks[i].effector_id != b.locks[i].effector_id ||
        !(a.locks[i].relative == b.locks[i].relative))
      return false;
  }
  return true;
}

std::vector<ConvexPiece> default_shape(BodyKind kind, Mount mount) {
  using geom::rectangle;
  // Effector back: two blocks flank the mount opening (y in [-50, -10]). A
  // slot is 62 µm wide; bilayer jaw roots sit 58 µm apart and the jaws
  // themselves are logical.
  const double half = mount == Mount::Bilayer ? 29.0 : 31.0;
  std::vector<ConvexPiece> back{rectangle(-60, -50, -half, -10), rectangle(half, -50, 60, -10)};
  auto with_back = [&](std::vector<ConvexPiece> front) {
    back.insert(back.end(), front.begin(), front.end());
    return back;
  };
  switch (kind) {
    case BodyKind::Type1Base:
    case BodyKind::Type2Base:
      return {rectangle(-60, -50, 60, 50)};
    case BodyKind::EndEffectorSingle:
      return with_back({rectangle(-60, -10, 60, 30), rectangle(-15, 30, 15, 50)});
    case BodyKind::EndEffectorMulti:
      // Concave front pocket, 90 x 40 µm, as three convex pieces.
      return with_back({rectangle(-60, -10, 60, 10), rectangle(-60, 10, -45, 50), rectangle(45, 10, 60, 50)});
    case BodyKind::EndEffectorGripper:
      return with_back({rectangle(-60, -10, 60, 50)});
    case BodyKind::Sphere:
      return {Circle{{0.0, 0.0}, 15.0}};
    case BodyKind::Wall:
      return {rectangle(-10, -100, 10, 100)};
  }
  return {};
}

Body make_body(const std::string& id, BodyKind kind, Pose pose, const WorldConfig& config, double water_fraction,
               std::optional<Mount> mount) {
  Body b;
  b.id = id;
  b.kind = kind;
  b.mount = mount.value_or(default_mount(kind));
  if (is_effector(kind) == (b.mount == Mount::None))
    throw InvalidCommand(fmt::format("body '{}': mount {} does not fit kind {}", id, to_string(b.mount), to_string(kind)));
  b.pose = pose;
  b.shape = default_shape(kind, b.mount);
  b.drag = config.drag;
  if (kind == BodyKind::Type1Base) b.magnetic = config.type1_base;
  if (kind == BodyKind::Type2Base) b.magnetic = config.type2_base;
  if (kind == BodyKind::Type1Base || b.mount == Mount::Bilayer) {
    const double eq = config.gel_for(b.laser_power_mW).equilibrium_at(water_fraction);
    b.swell = gel::SwellState{eq, eq, kinetics::direction_for(eq, eq)};
  }
  if (b.mount == Mount::Bilayer) b.gripper = bilayer::gripper_aperture_for_lambda(config.gripper, b.swell->lambda);
  return b;
}

Body make_wall(const std::string& id, Pose pose, double width_um, double length_um) {
  Body b;
  b.id = id;
  b.kind = BodyKind::Wall;
  b.pose = pose;
  b.shape = {geom::rectangle(-0.5 * width_um, -0.5 * length_um, 0.5 * width_um, 0.5 * length_um)};
  return b;
}

void add_body(WorldState& world, Body body) {
  if (world.index_of(body.id)) throw InvalidCommand(fmt::format("duplicate body id '{}'", body.id));
  for (const auto& piece : body.shape) {
    if (const auto* p = std::get_if<Polygon>(&piece); p && !geom::is_convex_ccw(*p))
      throw InvalidCommand(fmt::format("body '{}' has a non-convex or clockwise piece", body.id));
  }
  if (body.mount == Mount::Bilayer && body.swell)
    body.gripper = bilayer::gripper_aperture_for_lambda(world.config->gripper, body.swell->lambda);
  if (body.magnetic) world.field_heading[body.id] = body.pose.theta + body.magnetic->axis_offset_rad;
  world.bodies.push_back(std::move(body));
}

void lock_pair(WorldState& world, const std::string& base_id, const std::string& effector_id) {
  const Body& base = world.body(base_id);
  const Body& eff = world.body(effector_id);
  mate_type(base, eff);
  if (world.is_locked(base_id, effector_id)) return;
  if (world.lock_of_base(base_id) || world.lock_of_effector(effector_id))
    throw InvalidCommand(fmt::format("'{}' or '{}' is already locked to another body", base_id, effector_id));
  world.locks.push_back({base_id, effector_id, geom::relative(base.pose, eff.pose)});
}

void unlock_pair(WorldState& world, const std::string& base_id, const std::string& effector_id) {
  std::erase_if(world.locks, [&](const Lock& l) { return l.base_id == base_id && l.effector_id == effector_id; });
}

double relax_water_fraction(double current, double target, double tau_s, double dt_s) {
  if (current == target) return target;
  return target + (current - target) * std::exp(-dt_s / tau_s);
}

void enforce_locks(WorldState& world) {
  for (const auto& l : world.locks) {
    const Pose base = world.body(l.base_id).pose;
    world.body(l.effector_id).pose = geom::compose(base, l.relative);
  }
}

WorldState tick(const WorldState& world, const CommandMap& commands, double dt_s) {
  const WorldConfig& cfg = *world.config;
  if (!(dt_s > 0.0) || dt_s > cfg.dt_max_s)
    throw StepTooLarge(fmt::format("dt = {} s outside (0, {}]", dt_s, cfg.dt_max_s));
  for (const auto& [id, cmd] : commands) {
    const auto idx = world.index_of(id);
    if (!idx || !world.bodies[*idx].magnetic)
      throw InvalidCommand(fmt::format("field command for '{}', which is not a magnetic base", id));
    if (!std::isfinite(cmd.grad_x) || !std::isfinite(cmd.grad_y) || !std::isfinite(cmd.rotate_rate) ||
        (cmd.heading && !std::isfinite(*cmd.heading)))
      throw InvalidCommand(fmt::format("non-finite field command for '{}'", id));
  }

  WorldState next = world;

  next.water_fraction = relax_water_fraction(world.water_fraction, world.water_fraction_target, world.exchange_tau_s, dt_s);

  for (Body& b : next.bodies) {
    if (!b.swell) continue;
    const double lambda_target = cfg.gel_for(b.laser_power_mW).equilibrium_at(next.water_fraction);
    const auto dir = kinetics::direction_for(b.swell->lambda, lambda_target);
    b.swell = kinetics::relax(*b.swell, lambda_target, dt_s, cfg.kinetics, dir, b.laser_power_mW);
  }

  for (Body& b : next.bodies)
    if (b.mount == Mount::Bilayer && b.swell)
      b.gripper = bilayer::gripper_aperture_for_lambda(cfg.gripper, b.swell->lambda);

  const bool water_regime = next.water_fraction >= cfg.water_regime.water_fraction_threshold;
  for (Body& b : next.bodies) {
    if (!b.magnetic) continue;
    const auto it = commands.find(b.id);
    const magnetics::FieldCommand cmd =
        magnetics::clamp(it != commands.end() ? it->second : magnetics::FieldCommand{}, cfg.coil);
    double& heading = next.field_heading[b.id];
    heading = cmd.heading ? *cmd.heading : heading + cmd.rotate_rate * dt_s;

    const double misalignment = heading - (b.pose.theta + b.magnetic->axis_offset_rad);
    const Vec2 force = magnetics::magnetic_force(*b.magnetic, cmd, misalignment);
    const double torque = magnetics::magnetic_torque(*b.magnetic, heading, b.pose.theta, cfg.coil.alignment_field_T);
    if (force == Vec2{} && torque == 0.0) continue;

    magnetics::DragModel drag = b.drag;
    if (b.kind == BodyKind::Type1Base && water_regime) {
      drag.wall_amplification *= cfg.water_regime.drag_amplification;
      drag.stick_force_N = std::max(drag.stick_force_N, cfg.water_regime.stick_force_N);
    }
    if (const Lock* l = next.lock_of_base(b.id)) {
      const Body& eff = next.body(l->effector_id);
      const double r_m = geom::norm({l->relative.x, l->relative.y}) * 1e-6;
      drag.c_translation += eff.drag.c_translation;
      drag.c_rotation += eff.drag.c_rotation + eff.drag.c_translation * r_m * r_m;
    }
    b.pose = magnetics::step_overdamped(b.pose, force, torque, drag, dt_s, cfg.dt_max_s);
  }

  enforce_locks(next);
  resolve_contacts(next, &world);
  enforce_locks(next);

  next.time_s = world.time_s + dt_s;
  next.tick_index = world.tick_index + 1;
  return next;
}

void resolve_contacts(WorldState& world, const WorldState* previous) {
  ContactSolver solver(world, previous);
  solver.run();
}

double body_separation(const WorldState&, const Body& a, const Body& b) {
  double best = std::numeric_limits<double>::infinity();
  const auto pa = world_pieces(a);
  const auto pb = world_pieces(b);
  for (const auto& x : pa)
    for (const auto& y : pb) best = std::min(best, geom::separation(x, y));
  return best;
}

double max_overlap(const WorldState& world) {
  auto root = [&](std::size_t i) -> std::string {
    if (const Lock* l = world.lock_of_effector(world.bodies[i].id)) return l->base_id;
    return world.bodies[i].id;
  };
  double worst = 0.0;
  for (std::size_t i = 0; i < world.bodies.size(); ++i) {
    for (std::size_t j = i + 1; j < world.bodies.size(); ++j) {
      const Body& a = world.bodies[i];
      const Body& b = world.bodies[j];
      if (a.kind == BodyKind::Wall && b.kind == BodyKind::Wall) continue;
      if (root(i) == root(j)) continue;
      worst = std::max(worst, -body_separation(world, a, b));
    }
  }
  return worst;
}

MateType mate_type(const Body& base, const Body& effector) {
  if (base.kind == BodyKind::Type1Base && effector.mount == Mount::Slot) return MateType::Type1;
  if (base.kind == BodyKind::Type2Base && effector.mount == Mount::Bilayer) return MateType::Type2;
  throw KindMismatch(fmt::format("'{}' ({}) cannot mate with '{}' ({}, {} mount)", base.id, to_string(base.kind),
                                 effector.id, to_string(effector.kind), to_string(effector.mount)));
}

const char* to_string(MateType t) { return t == MateType::Type1 ? "Type1" : "Type2"; }

const char* to_string(DetachReason r) {
  switch (r) {
    case DetachReason::None: return "None";
    case DetachReason::SurfaceTensionAdhesion: return "SurfaceTensionAdhesion";
    case DetachReason::RmcNotShrunk: return "RmcNotShrunk";
    case DetachReason::GripperClosed: return "GripperClosed";
  }
  return "?";
}

MateGeometryReport check_mate_geometry(const WorldState& world, const Body& base, const Body& effector) {
  return check_mate_geometry(world, base, effector, world.config->mate.lateral_tol_um);
}

MateGeometryReport check_mate_geometry(const WorldState& world, const Body& base, const Body& effector, double tol_um) {
  if (!is_base(base.kind)) throw KindMismatch(fmt::format("'{}' has no male mating feature", base.id));
  if (!is_effector(effector.kind)) throw KindMismatch(fmt::format("'{}' has no female slot", effector.id));
  const MateGeometryParams& p = world.config->mate;

  const double lambda = (base.kind == BodyKind::Type1Base && base.swell) ? base.swell->lambda : 1.0;
  MateGeometryReport r;
  r.male_width_um = p.male_width_um * lambda;
  r.slot_width_um = effector.gripper ? effector.gripper->aperture_um : p.slot_width_um;
  r.clearance_x_um = r.slot_width_um - r.male_width_um;
  r.clearance_y_um = p.slot_depth_um - p.male_depth_um * lambda;

  const Pose rel = geom::relative(base.pose, effector.pose);
  r.lateral_error_um = std::abs(rel.x);
  r.angular_error_deg = std::abs(geom::wrap_angle(rel.theta)) / kDeg;
  r.seat_gap_um = rel.y - p.dock_offset_um;
  r.aligned = r.lateral_error_um <= tol_um && r.angular_error_deg <= p.max_angle_deg;
  r.seated = r.aligned && std::abs(r.seat_gap_um) <= p.seat_tol_um;
  r.can_insert = r.aligned && r.male_width_um <= r.slot_width_um - p.insert_clearance_um;
  r.interference_locked = r.male_width_um >= r.slot_width_um - p.lock_interference_um;
  return r;
}

bool walls_constrain(const WorldState& world, const Body& effector) {
  const double tol = world.config->detach.wall_contact_tol_um;
  bool left = false, right = false;
  for (const Body& w : world.bodies) {
    if (w.kind != BodyKind::Wall) continue;
    for (const auto& wp : world_pieces(w)) {
      double sep = std::numeric_limits<double>::infinity();
      for (const auto& ep : world_pieces(effector)) sep = std::min(sep, geom::separation(ep, wp));
      if (sep > tol) continue;
      const double side = effector.pose.to_local(piece_centroid(wp)).x;
      if (side < 0.0) left = true;
      if (side > 0.0) right = true;
    }
  }
  return left && right;
}

DetachReport detach_feasible(const WorldState& world, const std::string& base_id, const std::string& effector_id) {
  const Body& base = world.body(base_id);
  const Body& eff = world.body(effector_id);
  const MateType type = mate_type(base, eff);
  if (!world.is_locked(base_id, effector_id) && !check_mate_geometry(world, base, eff).seated)
    throw NotMated(fmt::format("'{}' and '{}' are neither locked nor seated", base_id, effector_id));

  DetachReport r;
  r.walls_ok = walls_constrain(world, eff);
  if (type == MateType::Type2) {
    r.feasible = eff.gripper && eff.gripper->state == bilayer::GripperState::Open;
    r.reason = r.feasible ? DetachReason::None : DetachReason::GripperClosed;
    return r;
  }
  // Without two-sided wall support under a lid, surface tension keeps the
  // effector stuck to the base no matter how far the RMC shrinks.
  if (!(r.walls_ok && world.channel.top_enclosure)) {
    r.reason = DetachReason::SurfaceTensionAdhesion;
  } else if (base.swell && base.swell->lambda > world.config->detach.lambda_detach) {
    r.reason = DetachReason::RmcNotShrunk;
  } else {
    r.feasible = true;
  }
  return r;
}

}  // namespace microforge::world
