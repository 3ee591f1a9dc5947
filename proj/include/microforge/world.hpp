#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "microforge/bilayer.hpp"
#include "microforge/gel_core.hpp"
#include "microforge/geometry.hpp"
#include "microforge/kinetics.hpp"
#include "microforge/magnetics.hpp"

namespace microforge::world {

enum class BodyKind { Type1Base, Type2Base, EndEffectorSingle, EndEffectorMulti, EndEffectorGripper, Sphere, Wall };

const char* to_string(BodyKind k);
BodyKind body_kind_from_string(const std::string& s);  // throws SchemaError

inline bool is_base(BodyKind k) { return k == BodyKind::Type1Base || k == BodyKind::Type2Base; }
inline bool is_effector(BodyKind k) {
  return k == BodyKind::EndEffectorSingle || k == BodyKind::EndEffectorMulti || k == BodyKind::EndEffectorGripper;
}

// How an end-effector receives a base: a passive 62 µm slot (Type 1) or
// double-bilayer jaws (Type 2). The front tool is independent of the mount.
enum class Mount { None, Slot, Bilayer };
const char* to_string(Mount m);
Mount mount_from_string(const std::string& s);  // throws SchemaError
Mount default_mount(BodyKind k);

struct Body {
  std::string id;
  BodyKind kind = BodyKind::Sphere;
  Mount mount = Mount::None;
  geom::Pose pose;
  std::vector<geom::ConvexPiece> shape;  // body frame, convex pieces
  std::optional<gel::SwellState> swell;  // RMC (Type 1 base) or bilayer-jaw soft layers
  double laser_power_mW = 12.0;
  std::optional<magnetics::MagneticBase> magnetic;
  magnetics::DragModel drag;
  // Derived every tick for bilayer mounts; empty for everything else.
  std::optional<bilayer::GripperReading> gripper;
};

// Geometry of the mating features, all µm. The male feature is logical: it
// decides insert/lock but is not a collision piece.
struct MateGeometryParams {
  double male_width_um = 60.0;
  double male_depth_um = 40.0;
  double slot_width_um = 62.0;
  double slot_depth_um = 40.0;
  double insert_clearance_um = 3.0;
  double lock_interference_um = 2.5;
  double max_angle_deg = 5.0;
  double lateral_tol_um = 5.0;
  double seat_tol_um = 2.0;
  double dock_offset_um = 100.0;  // base centre to effector centre when flush

  void validate() const;
};

struct DetachParams {
  double lambda_detach = 0.80;
  double wall_contact_tol_um = 2.0;
  double separation_um = 10.0;
};

// Type 1 bases in (nearly) pure water move slowly and in jerks.
struct WaterRegime {
  double water_fraction_threshold = 0.9;
  double drag_amplification = 3.0;
  double stick_force_N = 3e-10;
};

struct WorldConfig {
  std::shared_ptr<const gel::GelModel> gel;
  // Optional composition tables for parts printed at other laser powers
  // (same free-energy constants, different anchors). Keyed by mW.
  std::map<double, std::shared_ptr<const gel::GelModel>> gel_by_laser_power;
  kinetics::KineticsParams kinetics;
  bilayer::GripperSpec gripper;
  magnetics::CoilLimits coil;
  MateGeometryParams mate;
  DetachParams detach;
  WaterRegime water_regime;
  magnetics::DragModel drag;  // per body, before the water-regime multiplier
  magnetics::MagneticBase type1_base = magnetics::MagneticBase::type1();
  magnetics::MagneticBase type2_base = magnetics::MagneticBase::type2();
  double dt_max_s = 1e-3;
  int contact_iterations = 50;
  double contact_tolerance_um = 1e-9;

  static std::shared_ptr<const WorldConfig> defaults();
  void validate() const;

  // Table for a part printed at laser_power_mW, falling back to `gel`.
  const gel::GelModel& gel_for(double laser_power_mW) const;
};

struct Channel {
  // Axis-aligned bounds enforced on every non-wall body when present.
  std::optional<std::array<double, 4>> bounds;  // x_min, y_min, x_max, y_max
  bool top_enclosure = false;
  double height_um = 300.0;  // metadata only
};

struct Lock {
  std::string base_id;
  std::string effector_id;
  geom::Pose relative;  // effector pose in the base frame, frozen at lock time
};

struct WorldState {
  std::shared_ptr<const WorldConfig> config = WorldConfig::defaults();
  std::vector<Body> bodies;
  double water_fraction = 1.0;
  double water_fraction_target = 1.0;
  double exchange_tau_s = 2.0;
  Channel channel;
  double time_s = 0.0;
  std::int64_t tick_index = 0;
  std::uint64_t rng_seed = 0;
  std::vector<Lock> locks;
  // Coil alignment-field heading per base; persists between commands.
  std::map<std::string, double> field_heading;

  const Body& body(const std::string& id) const;  // throws InvalidCommand
  Body& body(const std::string& id);
  std::optional<std::size_t> index_of(const std::string& id) const;
  const Lock* lock_of_base(const std::string& base_id) const;
  const Lock* lock_of_effector(const std::string& effector_id) const;
  bool is_locked(const std::string& base_id, const std::string& effector_id) const;
};

// Bit-level comparison of the evolving state (config pointer ignored).
bool same_state(const WorldState& a, const WorldState& b);

// Default shapes, all centred on the body origin with +y forward.
std::vector<geom::ConvexPiece> default_shape(BodyKind kind, Mount mount);
Body make_body(const std::string& id, BodyKind kind, geom::Pose pose, const WorldConfig& config, double water_fraction,
               std::optional<Mount> mount = std::nullopt);
Body make_wall(const std::string& id, geom::Pose pose, double width_um, double length_um);

// Adds a body, seeding its swelling state at equilibrium for the current
// water fraction and its coil heading at its own heading.
void add_body(WorldState& world, Body body);

// Freezes the current relative pose of a base/effector pair.
void lock_pair(WorldState& world, const std::string& base_id, const std::string& effector_id);
void unlock_pair(WorldState& world, const std::string& base_id, const std::string& effector_id);

using CommandMap = std::map<std::string, magnetics::FieldCommand>;

WorldState tick(const WorldState& world, const CommandMap& commands, double dt_s);

// Water fraction after `dt` of first-order exchange.
double relax_water_fraction(double current, double target, double tau_s, double dt_s);

struct MateGeometryReport {
  double male_width_um = 0.0;
  double slot_width_um = 0.0;
  double clearance_x_um = 0.0;
  double clearance_y_um = 0.0;
  double lateral_error_um = 0.0;
  double angular_error_deg = 0.0;
  double seat_gap_um = 0.0;  // > 0 when the base face is behind the effector's back face
  bool aligned = false;
  bool seated = false;  // male inside the slot
  bool can_insert = false;
  bool interference_locked = false;
};

MateGeometryReport check_mate_geometry(const WorldState& world, const Body& base, const Body& effector);
// Report with lateral tolerance overridden.
MateGeometryReport check_mate_geometry(const WorldState& world, const Body& base, const Body& effector, double tol_um);

enum class MateType { Type1, Type2 };
const char* to_string(MateType t);
// Pair type from the base kind; throws KindMismatch for incompatible kinds.
MateType mate_type(const Body& base, const Body& effector);

enum class DetachReason { None, SurfaceTensionAdhesion, RmcNotShrunk, GripperClosed };
const char* to_string(DetachReason r);

struct DetachReport {
  bool feasible = false;
  DetachReason reason = DetachReason::None;
  bool walls_ok = false;
};

// Walls within tolerance on two opposite sides of the effector.
bool walls_constrain(const WorldState& world, const Body& effector);

DetachReport detach_feasible(const WorldState& world, const std::string& base_id, const std::string& effector_id);

// Minimum signed separation between two bodies' pieces.
double body_separation(const WorldState& world, const Body& a, const Body& b);

// Largest overlap depth among non-wall body pairs that are not rigidly joined.
double max_overlap(const WorldState& world);

// Projection-based contact resolution in place. `previous` supplies the
// poses used for roll-back when projection cannot converge.
void resolve_contacts(WorldState& world, const WorldState* previous = nullptr);

// Places locked effectors at base ∘ relative.
void enforce_locks(WorldState& world);

}  // namespace microforge::world
