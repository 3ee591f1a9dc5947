#pragma once

#include <map>
#include <optional>
#include <string>

#include "microforge/world.hpp"

namespace microforge::mating {

using world::MateType;

// Detached is the terminal alias of Disengaged: it may start a new approach.
enum class MateState { Disengaged, Approaching, MateReady, LockPending, Locked, DetachPending, Detached };
const char* to_string(MateState s);
MateState mate_state_from_string(const std::string& s);  // throws SchemaError

// The single legal successor of `s` (Detached continues like Disengaged).
MateState successor(MateState s);

struct ProtocolParams {
  double approach_gap_um = 20.0;         // body gap that counts as "approaching"
  double lock_water_fraction = 0.40;     // solvent target that triggers locking
  double release_water_fraction = 0.95;  // targets at or above this trigger detachment
  double water_target_tol = 0.02;
};

struct MatingState {
  std::string base_id;
  std::string effector_id;
  MateType type = MateType::Type1;
  MateState state = MateState::Disengaged;
  // Set once the world lock has been dropped during DetachPending.
  bool released = false;
  // Time of the most recent entry into each state.
  std::map<MateState, double> entered_at;

  bool holds_lock() const { return state == MateState::Locked || (state == MateState::DetachPending && !released); }
};

MatingState make_pair_state(const world::WorldState& w, const std::string& base_id, const std::string& effector_id);

struct Guards {
  world::MateGeometryReport geometry;
  double separation_um = 0.0;
  bool near = false;
  double detach_separation_um = 10.0;
  bool base_free = true;  // base not locked to a different effector
  bool lock_solvent = false;
  bool release_solvent = false;
  bool jaws_closed = false;
  bool walls_ok = false;
  std::optional<world::DetachReport> detach;  // evaluated only while detaching
};

Guards evaluate_guards(const MatingState& fsm, const world::WorldState& w, const ProtocolParams& p);

// Whether the guard for leaving `fsm.state` toward its successor holds.
bool guard_satisfied(const MatingState& fsm, const Guards& g, const ProtocolParams& p);

struct Transition {
  MateState from;
  MateState to;
  Guards guards;
};

// Pure reducer: at most one transition per call.
MatingState advance(const MatingState& fsm, const world::WorldState& w, const ProtocolParams& p,
                    std::optional<Transition>* fired = nullptr);

// Explicit request for `to`. Throws IllegalTransition if `to` is not the
// successor of the current state or its guard does not hold.
MatingState request(const MatingState& fsm, MateState to, const world::WorldState& w, const ProtocolParams& p);

}  // namespace microforge::mating
