#include "microforge/mating.hpp"

#include <cmath>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge::mating {

namespace {

constexpr std::pair<MateState, const char*> kNames[] = {
    {MateState::Disengaged, "Disengaged"}, {MateState::Approaching, "Approaching"},
    {MateState::MateReady, "MateReady"},   {MateState::LockPending, "LockPending"},
    {MateState::Locked, "Locked"},         {MateState::DetachPending, "DetachPending"},
    {MateState::Detached, "Detached"},
};

}  // namespace

const char* to_string(MateState s) {
  for (const auto& [state, name] : kNames)
    if (state == s) return name;
  return "?";
}

MateState mate_state_from_string(const std::string& s) {
  for (const auto& [state, name] : kNames)
    if (s == name) return state;
  throw SchemaError(fmt::format("unknown mating state '{}'", s));
}

MateState successor(MateState s) {
  switch (s) {
    case MateState::Disengaged:
    case MateState::Detached: return MateState::Approaching;
    case MateState::Approaching: return MateState::MateReady;
    case MateState::MateReady: return MateState::LockPending;
    case MateState::LockPending: return MateState::Locked;
    case MateState::Locked: return MateState::DetachPending;
    case MateState::DetachPending: return MateState::Detached;
  }
  return MateState::Disengaged;
}

MatingState make_pair_state(const world::WorldState& w, const std::string& base_id, const std::string& effector_id) {
  MatingState m;
  m.base_id = base_id;
  m.effector_id = effector_id;
  m.type = world::mate_type(w.body(base_id), w.body(effector_id));
  m.state = w.is_locked(base_id, effector_id) ? MateState::Locked : MateState::Disengaged;
  m.entered_at[m.state] = w.time_s;
  return m;
}

Guards evaluate_guards(const MatingState& fsm, const world::WorldState& w, const ProtocolParams& p) {
  const world::Body& base = w.body(fsm.base_id);
  const world::Body& eff = w.body(fsm.effector_id);
  Guards g;
  g.geometry = world::check_mate_geometry(w, base, eff);
  g.separation_um = world::body_separation(w, base, eff);
  g.near = g.separation_um <= p.approach_gap_um;
  g.detach_separation_um = w.config->detach.separation_um;
  const world::Lock* held = w.lock_of_base(fsm.base_id);
  const world::Lock* taken = w.lock_of_effector(fsm.effector_id);
  g.base_free = (!held || held->effector_id == fsm.effector_id) && (!taken || taken->base_id == fsm.base_id);
  g.lock_solvent = std::abs(w.water_fraction_target - p.lock_water_fraction) <= p.water_target_tol;
  g.release_solvent = w.water_fraction_target >= p.release_water_fraction;
  g.jaws_closed = eff.gripper && eff.gripper->state == bilayer::GripperState::Closed;
  g.walls_ok = world::walls_constrain(w, eff) && w.channel.top_enclosure;
  if (fsm.state == MateState::DetachPending && !fsm.released) g.detach = world::detach_feasible(w, fsm.base_id, fsm.effector_id);
  return g;
}

bool guard_satisfied(const MatingState& fsm, const Guards& g, const ProtocolParams&) {
  switch (fsm.state) {
    case MateState::Disengaged:
      return g.near && g.base_free;
    case MateState::Detached:
      // Re-approach only once the base comes back inside the debounce gap.
      return g.base_free && g.separation_um <= g.detach_separation_um;
    case MateState::Approaching:
      return g.geometry.can_insert && g.geometry.seated && g.base_free;
    case MateState::MateReady:
      return g.lock_solvent;
    case MateState::LockPending: {
      if (!g.geometry.seated || !g.base_free) return false;
      if (fsm.type == MateType::Type1) return g.geometry.interference_locked;
      return g.jaws_closed && g.geometry.interference_locked;
    }
    case MateState::Locked:
      return g.release_solvent;
    case MateState::DetachPending:
      return fsm.released && g.separation_um > g.detach_separation_um;
  }
  return false;
}

MatingState advance(const MatingState& fsm, const world::WorldState& w, const ProtocolParams& p,
                    std::optional<Transition>* fired) {
  MatingState next = fsm;
  const Guards g = evaluate_guards(fsm, w, p);
  if (fsm.state == MateState::DetachPending && !fsm.released && g.detach && g.detach->feasible) {
    // The world lock is dropped now; separating is the operator's job.
    next.released = true;
    return next;
  }
  if (!guard_satisfied(fsm, g, p)) return next;
  next.state = successor(fsm.state);
  if (next.state == MateState::Approaching) next.released = false;
  next.entered_at[next.state] = w.time_s;
  if (fired) *fired = Transition{fsm.state, next.state, g};
  return next;
}

MatingState request(const MatingState& fsm, MateState to, const world::WorldState& w, const ProtocolParams& p) {
  if (to != successor(fsm.state))
    throw IllegalTransition(fmt::format("{} -> {} skips the protocol for {}/{}", to_string(fsm.state), to_string(to),
                                        fsm.base_id, fsm.effector_id));
  std::optional<Transition> t;
  MatingState next = advance(fsm, w, p, &t);
  if (!t || t->to != to)
    throw IllegalTransition(fmt::format("{} -> {} guard not satisfied for {}/{}", to_string(fsm.state), to_string(to),
                                        fsm.base_id, fsm.effector_id));
  return next;
}

}  // namespace microforge::mating
