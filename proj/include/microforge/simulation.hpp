#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "microforge/mating.hpp"
#include "microforge/world.hpp"

namespace microforge::sim {

using geom::Vec2;
using magnetics::FieldCommand;

struct FollowerParams {
  double gain_T_per_m_per_um = 0.01;
  double waypoint_tol_um = 5.0;
  double cross_track_band_um = 2.0;
  // Smallest nonzero gradient command. Keeps small corrections above the
  // static friction threshold in the water regime.
  double min_gradient_T_per_m = 0.05;
};

// One-axis-at-a-time proportional command from `pos` toward `target` along
// the segment that started at `from`. The axis is chosen to keep the
// cross-track error inside the band, otherwise the axis with larger error.
FieldCommand follow_command(Vec2 pos, Vec2 from, Vec2 target, const FollowerParams& follower,
                            const magnetics::CoilLimits& coil, std::optional<double> heading = std::nullopt);

// Perpendicular distance from `p` to the segment [a, b].
double cross_track_error(Vec2 p, Vec2 a, Vec2 b);

class Simulation;

class Maneuver {
 public:
  virtual ~Maneuver() = default;
  virtual std::string name() const = 0;
  // Writes this tick's command for the base; returns false once finished
  // (the command is then ignored). Failures throw.
  virtual bool step(Simulation& sim, const std::string& base_id, FieldCommand& out) = 0;
};

struct PlanStep {
  enum class Kind { SetSolvent, Hold, Goto, Backoff, Dock, WaitState, WaitReleased, Wait };
  Kind kind = Kind::Wait;
  double value = 0.0;  // water fraction, duration (s) or back-off distance (µm)
  FieldCommand command;
  Vec2 target;
  std::optional<double> heading;
  std::string effector_id;
  mating::MateState state = mating::MateState::Locked;
  double timeout_s = 60.0;
};
const char* to_string(PlanStep::Kind k);

std::unique_ptr<Maneuver> make_hold(FieldCommand cmd, double duration_s);
std::unique_ptr<Maneuver> make_goto(Vec2 target, std::optional<double> heading, double tol_um, double timeout_s);
std::unique_ptr<Maneuver> make_dock(const std::string& effector_id, double timeout_s);
std::unique_ptr<Maneuver> make_release();
std::unique_ptr<Maneuver> make_plan(std::vector<PlanStep> steps);

struct ReleaseResult {
  std::string base_id;
  double start_time_s = 0.0;
  bool complete = false;
  std::map<std::string, Vec2> start_positions;
  std::map<std::string, double> displacement_um;  // filled on completion
};

struct TransitionRecord {
  double time_s = 0.0;
  std::int64_t tick = 0;
  std::string base_id;
  std::string effector_id;
  world::MateType type = world::MateType::Type1;
  mating::MateState from = mating::MateState::Disengaged;
  mating::MateState to = mating::MateState::Disengaged;
  bool can_insert = false;
  bool interference_locked = false;
  std::string gripper_state;
  bool walls_ok = false;
  bool detach_feasible = false;
};

class Simulation {
 public:
  explicit Simulation(world::WorldState initial, mating::ProtocolParams protocol = {}, FollowerParams follower = {});

  const world::WorldState& world() const { return world_; }
  const std::vector<mating::MatingState>& pairs() const { return pairs_; }
  const mating::MatingState& pair(const std::string& base_id, const std::string& effector_id) const;
  // Most advanced mating state among the pairs involving `body_id`, or empty.
  std::string mate_state_of(const std::string& body_id) const;
  const std::vector<TransitionRecord>& transitions() const { return transitions_; }
  const std::vector<ReleaseResult>& releases() const { return releases_; }
  const mating::ProtocolParams& protocol() const { return protocol_; }
  const FollowerParams& follower() const { return follower_; }

  void set_solvent_target(double water_fraction);  // RangeError outside [0, 1]
  // Persistent operator command, clamped to the coil limits.
  void set_command(const std::string& base_id, FieldCommand cmd);
  FieldCommand command(const std::string& base_id) const;
  void start_maneuver(const std::string& base_id, std::unique_ptr<Maneuver> m);
  bool maneuver_active(const std::string& base_id) const { return maneuvers_.count(base_id) > 0; }
  void cancel_maneuver(const std::string& base_id) { maneuvers_.erase(base_id); }

  void step(double dt_s);

  // Used by the release maneuver.
  ReleaseResult& open_release(const std::string& base_id);

 private:
  void sync_locks();

  world::WorldState world_;
  mating::ProtocolParams protocol_;
  FollowerParams follower_;
  std::vector<mating::MatingState> pairs_;
  std::vector<TransitionRecord> transitions_;
  std::vector<ReleaseResult> releases_;
  std::map<std::string, FieldCommand> commands_;
  std::map<std::string, std::unique_ptr<Maneuver>> maneuvers_;
};

// Detach from `from`, transit, and mate with `to`. Empty when `to` is the
// currently locked effector.
std::vector<PlanStep> swap_end_effector(const Simulation& sim, const std::string& base_id, const std::string& from,
                                        const std::string& to);

}  // namespace microforge::sim
