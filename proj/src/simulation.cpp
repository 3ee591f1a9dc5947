#include "microforge/simulation.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge::sim {

using mating::MateState;

namespace {

constexpr double kContactTolUm = 1.0;
constexpr double kHeadingTolRad = 2.0 * std::numbers::pi / 180.0;

// Shared goto logic: drives toward a fixed target with the axis-decomposed
// follower and an optional absolute heading.
class GotoManeuver : public Maneuver {
 public:
  GotoManeuver(Vec2 target, std::optional<double> heading, double tol_um, double timeout_s)
      : target_(target), heading_(heading), tol_(tol_um), timeout_(timeout_s) {}

  std::string name() const override { return "goto"; }

  bool step(Simulation& sim, const std::string& base_id, FieldCommand& out) override {
    const auto& w = sim.world();
    const geom::Pose pose = w.body(base_id).pose;
    if (!started_) {
      started_ = true;
      from_ = pose.position();
      t0_ = w.time_s;
    }
    const bool heading_ok = !heading_ || std::abs(geom::wrap_angle(*heading_ - pose.theta)) <= kHeadingTolRad;
    if (geom::norm(target_ - pose.position()) <= tol_ && heading_ok) return false;
    if (w.time_s - t0_ > timeout_)
      throw UnreachableWaypoint(fmt::format("{} did not reach ({:.3f}, {:.3f}) within {} s (now at ({:.3f}, {:.3f}))",
                                            base_id, target_.x, target_.y, timeout_, pose.x, pose.y));
    out = follow_command(pose.position(), from_, target_, sim.follower(), w.config->coil, heading_);
    return true;
  }

 private:
  Vec2 target_;
  std::optional<double> heading_;
  double tol_;
  double timeout_;
  bool started_ = false;
  Vec2 from_;
  double t0_ = 0.0;
};

class HoldManeuver : public Maneuver {
 public:
  HoldManeuver(FieldCommand cmd, double duration_s) : cmd_(cmd), duration_(duration_s) {}
  std::string name() const override { return "hold"; }
  bool step(Simulation& sim, const std::string&, FieldCommand& out) override {
    if (!t0_) t0_ = sim.world().time_s;
    if (sim.world().time_s - *t0_ >= duration_ - 1e-12) return false;
    out = cmd_;
    return true;
  }

 private:
  FieldCommand cmd_;
  double duration_;
  std::optional<double> t0_;
};

// Lines up behind the effector's slot, then pushes a few µm past flush so
// contact (not the proportional tail) finishes the approach.
class DockManeuver : public Maneuver {
 public:
  DockManeuver(std::string effector_id, double timeout_s) : effector_(std::move(effector_id)), timeout_(timeout_s) {}
  std::string name() const override { return "dock"; }

  bool step(Simulation& sim, const std::string& base_id, FieldCommand& out) override {
    const auto& w = sim.world();
    const world::Body& base = w.body(base_id);
    const world::Body& eff = w.body(effector_);
    world::mate_type(base, eff);
    if (!t0_) {
      t0_ = w.time_s;
      const double dock = w.config->mate.dock_offset_um;
      const double heading = eff.pose.theta;
      stage_ = std::make_unique<GotoManeuver>(eff.pose.to_world({0.0, -dock - kStandoffUm}), heading, 3.0, timeout_);
      final_target_ = eff.pose.to_world({0.0, -dock + kPushUm});
      final_from_ = eff.pose.to_world({0.0, -dock - kStandoffUm});
      heading_ = heading;
    }
    if (w.time_s - *t0_ > timeout_)
      throw UnreachableWaypoint(fmt::format("{} could not dock with {} within {} s", base_id, effector_, timeout_));
    if (stage_) {
      if (stage_->step(sim, base_id, out)) return true;
      stage_.reset();
    }
    if (world::check_mate_geometry(w, base, eff).seated) return false;
    FollowerParams tight = sim.follower();
    tight.cross_track_band_um = 1.0;
    out = follow_command(base.pose.position(), final_from_, final_target_, tight, w.config->coil, heading_);
    return true;
  }

 private:
  static constexpr double kStandoffUm = 60.0;
  static constexpr double kPushUm = 6.0;
  std::string effector_;
  double timeout_;
  std::optional<double> t0_;
  std::unique_ptr<GotoManeuver> stage_;
  Vec2 final_target_;
  Vec2 final_from_;
  double heading_ = 0.0;
};

// Simultaneous backward and rotational motion, then a short straight retreat.
class ReleaseManeuver : public Maneuver {
 public:
  std::string name() const override { return "release"; }

  bool step(Simulation& sim, const std::string& base_id, FieldCommand& out) override {
    const auto& w = sim.world();
    if (!t0_) {
      std::vector<const world::Body*> robot{&w.body(base_id)};
      if (const world::Lock* l = w.lock_of_base(base_id)) robot.push_back(&w.body(l->effector_id));
      std::map<std::string, Vec2> touching;
      for (const auto& b : w.bodies) {
        if (b.kind != world::BodyKind::Sphere) continue;
        for (const auto* r : robot)
          if (world::body_separation(w, *r, b) <= kContactTolUm) touching[b.id] = b.pose.position();
      }
      if (touching.empty()) throw NoContact(fmt::format("{} is not pushing any sphere", base_id));
      t0_ = w.time_s;
      auto& rec = sim.open_release(base_id);
      rec.start_positions = std::move(touching);
    }
    const double t = w.time_s - *t0_;
    const geom::Pose pose = w.body(base_id).pose;
    if (t >= kTurnS + kRetreatS - 1e-12) {
      auto& rec = sim.open_release(base_id);
      for (const auto& [id, p0] : rec.start_positions)
        rec.displacement_um[id] = geom::norm(w.body(id).pose.position() - p0);
      rec.complete = true;
      return false;
    }
    const Vec2 back = pose.forward() * -kBackGradient;
    out = FieldCommand{back.x, back.y, std::nullopt, t < kTurnS ? kTurnRate : 0.0};
    return true;
  }

 private:
  static constexpr double kTurnS = 1.0;
  static constexpr double kRetreatS = 0.5;
  static constexpr double kBackGradient = 1.0;  // T/m
  static constexpr double kTurnRate = 1.0;      // rad/s
  std::optional<double> t0_;
};

class PlanManeuver : public Maneuver {
 public:
  explicit PlanManeuver(std::vector<PlanStep> steps) : steps_(std::move(steps)) {}
  std::string name() const override { return "plan"; }

  bool step(Simulation& sim, const std::string& base_id, FieldCommand& out) override {
    while (index_ < steps_.size()) {
      const PlanStep& s = steps_[index_];
      const auto& w = sim.world();
      if (!step_t0_) step_t0_ = w.time_s;
      const double elapsed = w.time_s - *step_t0_;
      bool running = false;
      switch (s.kind) {
        case PlanStep::Kind::SetSolvent:
          sim.set_solvent_target(s.value);
          break;
        case PlanStep::Kind::Wait:
          running = elapsed < s.value - 1e-12;
          break;
        case PlanStep::Kind::WaitState: {
          const auto& fsm = sim.pair(base_id, s.effector_id);
          const auto it = fsm.entered_at.find(s.state);
          running = !(fsm.state == s.state || (it != fsm.entered_at.end() && it->second >= *step_t0_));
          if (running && elapsed > s.timeout_s)
            throw IllegalTransition(fmt::format("{}/{} did not reach {} within {} s (stuck in {})", base_id,
                                                s.effector_id, mating::to_string(s.state), s.timeout_s,
                                                mating::to_string(fsm.state)));
          break;
        }
        case PlanStep::Kind::WaitReleased: {
          const auto& fsm = sim.pair(base_id, s.effector_id);
          running = fsm.state == MateState::Locked || (fsm.state == MateState::DetachPending && !fsm.released);
          if (running && elapsed > s.timeout_s)
            throw IllegalTransition(
                fmt::format("{}/{} still held after {} s", base_id, s.effector_id, s.timeout_s));
          break;
        }
        default: {
          if (!sub_) sub_ = make_sub(s, w, base_id);
          running = sub_->step(sim, base_id, out);
          if (!running) sub_.reset();
          break;
        }
      }
      if (running) return true;
      ++index_;
      step_t0_.reset();
    }
    return false;
  }

 private:
  static std::unique_ptr<Maneuver> make_sub(const PlanStep& s, const world::WorldState& w, const std::string& base_id) {
    switch (s.kind) {
      case PlanStep::Kind::Hold: return make_hold(s.command, s.value);
      case PlanStep::Kind::Goto: return make_goto(s.target, s.heading, 3.0, s.timeout_s);
      case PlanStep::Kind::Backoff: {
        const geom::Pose p = w.body(base_id).pose;
        return make_goto(p.position() - p.forward() * s.value, p.theta, 3.0, s.timeout_s);
      }
      case PlanStep::Kind::Dock: return make_dock(s.effector_id, s.timeout_s);
      default: break;
    }
    throw InvalidCommand("plan step has no motion");
  }

  std::vector<PlanStep> steps_;
  std::size_t index_ = 0;
  std::optional<double> step_t0_;
  std::unique_ptr<Maneuver> sub_;
};

int state_rank(MateState s) { return static_cast<int>(s); }

}  // namespace

double cross_track_error(Vec2 p, Vec2 a, Vec2 b) {
  const Vec2 ab = b - a;
  const double len2 = geom::dot(ab, ab);
  if (len2 == 0.0) return geom::norm(p - a);
  const double t = std::clamp(geom::dot(p - a, ab) / len2, 0.0, 1.0);
  return geom::norm(p - (a + ab * t));
}

FieldCommand follow_command(Vec2 pos, Vec2 from, Vec2 target, const FollowerParams& follower,
                            const magnetics::CoilLimits& coil, std::optional<double> heading) {
  FieldCommand cmd;
  cmd.heading = heading;
  const Vec2 e = target - pos;
  if (e.x == 0.0 && e.y == 0.0) return cmd;

  bool use_x = std::abs(e.x) >= std::abs(e.y);
  const Vec2 seg = target - from;
  const double len = geom::norm(seg);
  if (len > 0.0) {
    const Vec2 n{-seg.y / len, seg.x / len};
    const double c = geom::dot(pos - from, n);
    if (std::abs(c) > follower.cross_track_band_um) {
      // Moving along an axis toward the target changes c by n_axis*sign(e_axis).
      const double dx = e.x != 0.0 ? n.x * std::copysign(1.0, e.x) : 0.0;
      const double dy = e.y != 0.0 ? n.y * std::copysign(1.0, e.y) : 0.0;
      const bool x_helps = c * dx < 0.0;
      const bool y_helps = c * dy < 0.0;
      if (x_helps && (!y_helps || std::abs(dx) >= std::abs(dy))) use_x = true;
      else if (y_helps) use_x = false;
    }
  }
  const double g_max = coil.max_gradient_T_per_m;
  const double g_min = std::min(follower.min_gradient_T_per_m, g_max);
  auto command = [&](double err) {
    const double g = std::clamp(follower.gain_T_per_m_per_um * err, -g_max, g_max);
    return std::abs(g) < g_min ? std::copysign(g_min, err) : g;
  };
  if (use_x) cmd.grad_x = command(e.x);
  else cmd.grad_y = command(e.y);
  return cmd;
}

const char* to_string(PlanStep::Kind k) {
  switch (k) {
    case PlanStep::Kind::SetSolvent: return "SetSolvent";
    case PlanStep::Kind::Hold: return "Hold";
    case PlanStep::Kind::Goto: return "Goto";
    case PlanStep::Kind::Backoff: return "Backoff";
    case PlanStep::Kind::Dock: return "Dock";
    case PlanStep::Kind::WaitState: return "WaitState";
    case PlanStep::Kind::WaitReleased: return "WaitReleased";
    case PlanStep::Kind::Wait: return "Wait";
  }
  return "?";
}

std::unique_ptr<Maneuver> make_hold(FieldCommand cmd, double duration_s) {
  return std::make_unique<HoldManeuver>(cmd, duration_s);
}
std::unique_ptr<Maneuver> make_goto(Vec2 target, std::optional<double> heading, double tol_um, double timeout_s) {
  return std::make_unique<GotoManeuver>(target, heading, tol_um, timeout_s);
}
std::unique_ptr<Maneuver> make_dock(const std::string& effector_id, double timeout_s) {
  return std::make_unique<DockManeuver>(effector_id, timeout_s);
}
std::unique_ptr<Maneuver> make_release() { return std::make_unique<ReleaseManeuver>(); }
std::unique_ptr<Maneuver> make_plan(std::vector<PlanStep> steps) {
  return std::make_unique<PlanManeuver>(std::move(steps));
}

Simulation::Simulation(world::WorldState initial, mating::ProtocolParams protocol, FollowerParams follower)
    : world_(std::move(initial)), protocol_(protocol), follower_(follower) {
  for (const auto& b : world_.bodies) {
    if (!world::is_base(b.kind)) continue;
    commands_[b.id] = FieldCommand{};
    for (const auto& e : world_.bodies) {
      if (!world::is_effector(e.kind)) continue;
      try {
        world::mate_type(b, e);
      } catch (const KindMismatch&) {
        continue;
      }
      pairs_.push_back(mating::make_pair_state(world_, b.id, e.id));
    }
  }
}

const mating::MatingState& Simulation::pair(const std::string& base_id, const std::string& effector_id) const {
  for (const auto& p : pairs_)
    if (p.base_id == base_id && p.effector_id == effector_id) return p;
  throw InvalidCommand(fmt::format("no mating pair {}/{}", base_id, effector_id));
}

std::string Simulation::mate_state_of(const std::string& body_id) const {
  const mating::MatingState* best = nullptr;
  for (const auto& p : pairs_) {
    if (p.base_id != body_id && p.effector_id != body_id) continue;
    if (!best || state_rank(p.state) > state_rank(best->state)) best = &p;
  }
  return best ? mating::to_string(best->state) : "";
}

void Simulation::set_solvent_target(double water_fraction) {
  if (!(water_fraction >= 0.0 && water_fraction <= 1.0))
    throw RangeError(fmt::format("water fraction target {} outside [0, 1]", water_fraction));
  world_.water_fraction_target = water_fraction;
}

void Simulation::set_command(const std::string& base_id, FieldCommand cmd) {
  const auto idx = world_.index_of(base_id);
  if (!idx || !world_.bodies[*idx].magnetic) throw InvalidCommand(fmt::format("'{}' is not a magnetic base", base_id));
  commands_[base_id] = magnetics::clamp(cmd, world_.config->coil);
}

FieldCommand Simulation::command(const std::string& base_id) const {
  const auto it = commands_.find(base_id);
  if (it == commands_.end()) throw InvalidCommand(fmt::format("'{}' is not a magnetic base", base_id));
  return it->second;
}

void Simulation::start_maneuver(const std::string& base_id, std::unique_ptr<Maneuver> m) {
  if (!commands_.count(base_id)) throw InvalidCommand(fmt::format("'{}' is not a magnetic base", base_id));
  maneuvers_[base_id] = std::move(m);
}

ReleaseResult& Simulation::open_release(const std::string& base_id) {
  for (auto it = releases_.rbegin(); it != releases_.rend(); ++it)
    if (it->base_id == base_id && !it->complete) return *it;
  ReleaseResult r;
  r.base_id = base_id;
  r.start_time_s = world_.time_s;
  releases_.push_back(std::move(r));
  return releases_.back();
}

void Simulation::step(double dt_s) {
  world::CommandMap cmds = commands_;
  for (auto it = maneuvers_.begin(); it != maneuvers_.end();) {
    FieldCommand c = commands_[it->first];
    if (it->second->step(*this, it->first, c)) {
      cmds[it->first] = magnetics::clamp(c, world_.config->coil);
      ++it;
    } else {
      it = maneuvers_.erase(it);
    }
  }
  world_ = world::tick(world_, cmds, dt_s);

  for (auto& p : pairs_) {
    std::optional<mating::Transition> t;
    p = mating::advance(p, world_, protocol_, &t);
    if (!t) continue;
    TransitionRecord r;
    r.time_s = world_.time_s;
    r.tick = world_.tick_index;
    r.base_id = p.base_id;
    r.effector_id = p.effector_id;
    r.type = p.type;
    r.from = t->from;
    r.to = t->to;
    r.can_insert = t->guards.geometry.can_insert;
    r.interference_locked = t->guards.geometry.interference_locked;
    const auto& eff = world_.body(p.effector_id);
    r.gripper_state = eff.gripper ? bilayer::to_string(eff.gripper->state) : "";
    r.walls_ok = t->guards.walls_ok;
    r.detach_feasible = p.released;
    transitions_.push_back(std::move(r));
  }
  sync_locks();
}

void Simulation::sync_locks() {
  for (const auto& p : pairs_) {
    const bool held = world_.is_locked(p.base_id, p.effector_id);
    if (p.holds_lock() && !held) world::lock_pair(world_, p.base_id, p.effector_id);
    if (!p.holds_lock() && held) world::unlock_pair(world_, p.base_id, p.effector_id);
  }
}

std::vector<PlanStep> swap_end_effector(const Simulation& sim, const std::string& base_id, const std::string& from,
                                        const std::string& to) {
  const auto& w = sim.world();
  const world::Body& base = w.body(base_id);
  const world::Body& target = w.body(to);
  const world::Body& current = w.body(from);
  if (!w.is_locked(base_id, from))
    throw NotMated(fmt::format("{} is not locked to {}", base_id, from));
  if (from == to) return {};
  const auto type = world::mate_type(base, target);
  world::mate_type(base, current);
  if (type == world::MateType::Type1 && !(world::walls_constrain(w, current) && w.channel.top_enclosure))
    throw MissingConstraintWalls(
        fmt::format("{} needs walls on both sides and a top enclosure to shed {}", base_id, from));

  const auto& p = sim.protocol();
  const double dock = w.config->mate.dock_offset_um;
  std::vector<PlanStep> plan;
  auto add = [&](PlanStep s) { plan.push_back(std::move(s)); };

  PlanStep s;
  s.kind = PlanStep::Kind::SetSolvent;
  s.value = 1.0;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::WaitReleased;
  s.effector_id = from;
  s.timeout_s = 400.0;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::Backoff;
  s.value = 40.0;
  s.timeout_s = 60.0;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::WaitState;
  s.effector_id = from;
  s.state = MateState::Detached;
  s.timeout_s = 10.0;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::Goto;
  s.target = target.pose.to_world({0.0, -dock - 80.0});
  s.heading = target.pose.theta;
  s.timeout_s = 120.0;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::Dock;
  s.effector_id = to;
  s.timeout_s = 120.0;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::SetSolvent;
  s.value = p.lock_water_fraction;
  add(s);

  s = {};
  s.kind = PlanStep::Kind::WaitState;
  s.effector_id = to;
  s.state = MateState::Locked;
  s.timeout_s = 60.0;
  add(s);
  return plan;
}

}  // namespace microforge::sim
