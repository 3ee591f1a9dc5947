#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "microforge/config.hpp"
#include "microforge/simulation.hpp"

namespace microforge::scenario {

inline constexpr int kScenarioSchemaVersion = 1;

struct BodySpec {
  std::string id;
  world::BodyKind kind = world::BodyKind::Sphere;
  std::optional<world::Mount> mount;
  geom::Pose pose;  // theta stored in radians
  double theta_deg = 0.0;
  std::optional<double> laser_power_mW;
  std::optional<double> moment_emu;
  bool sample_moment = false;
  double width_um = 20.0;   // walls only
  double length_um = 200.0;  // walls only
};

struct WorldSpec {
  double water_fraction = 1.0;
  std::optional<double> water_fraction_target;
  std::optional<double> exchange_tau_s;
  world::Channel channel;
  std::vector<BodySpec> bodies;
  std::vector<std::pair<std::string, std::string>> locks;
};

enum class ActionKind { Solvent, Field, Maneuver, Assert };
const char* to_string(ActionKind k);

// One scripted or operator action. The raw document is kept so a scenario
// re-serializes exactly as written (replay logs depend on it).
struct Action {
  double time_s = 0.0;
  ActionKind kind = ActionKind::Solvent;
  nlohmann::json doc;
  bool from_operator = false;
};

struct Scenario {
  std::string name;
  std::string description;
  std::uint64_t seed = 0;
  double duration_s = 0.0;
  std::optional<double> dt_s;
  double trace_interval_s = 0.05;
  // Config keys applied over the effective config for this scenario only
  // (same schema as a config file).
  std::optional<nlohmann::json> config;
  WorldSpec world;
  std::vector<Action> script;
};

// Parsing validates the document structure, every action's fields, that
// script times are non-decreasing and that referenced body ids exist.
// Throws SchemaError with the offending field path (and line/column for
// syntax errors).
Scenario parse_scenario(const nlohmann::json& doc);
Scenario parse_scenario_text(const std::string& text, const std::string& origin = "<scenario>");
Scenario load_scenario(const std::filesystem::path& path);
nlohmann::json to_json(const Scenario& s);

// Builds the initial world. Moments marked for sampling are drawn from the
// configured spread using the scenario seed, in body order.
world::WorldState build_world(const Scenario& s, const Config& cfg);

// cfg with the scenario's config overlay applied.
Config effective_config(const Scenario& s, const Config& cfg);

struct AssertionResult {
  std::int64_t tick = 0;
  double time_s = 0.0;
  std::string predicate;
  bool passed = false;
  std::string detail;
};

// Writes one row per body every `trace_interval` after stepping.
class TraceWriter {
 public:
  explicit TraceWriter(std::ostream& out);
  void write_header();
  void write(const sim::Simulation& sim);

 private:
  std::ostream& out_;
};

void write_transitions_csv(std::ostream& out, const std::vector<sim::TransitionRecord>& records);

// Drives a Simulation from a scenario script. Used both for headless runs
// and by the teleop service, so the two paths execute identical code.
class ScenarioEngine {
 public:
  // An open-ended engine ignores the scenario duration (the teleop service
  // runs until stopped).
  ScenarioEngine(Scenario scenario, Config cfg, bool open_ended = false);

  const Scenario& scenario() const { return scenario_; }
  const sim::Simulation& sim() const { return *sim_; }
  double dt() const { return dt_; }
  std::int64_t tick() const { return sim_->world().tick_index; }
  std::int64_t total_ticks() const { return total_ticks_; }
  bool done() const { return tick() >= total_ticks_; }

  void set_trace(std::ostream* out);

  // Applies every scripted action due at the current tick (asserts are
  // evaluated here, before the step).
  void apply_scripted();
  // Applies an operator action now and records it at the current tick.
  void apply_operator(nlohmann::json action_doc);
  // One simulation tick; writes a trace row when due.
  void step();
  // apply_scripted + step until done, then the final apply_scripted.
  void run_to_end();

  const std::vector<AssertionResult>& assertions() const { return assertions_; }
  bool all_passed() const;
  // The scenario with operator actions merged after scripted ones at the
  // same tick, and duration set to the ticks executed so far.
  Scenario replay_log() const;

 private:
  void apply(const Action& a);
  AssertionResult evaluate(const nlohmann::json& doc) const;
  std::int64_t tick_of(double t) const;

  Scenario scenario_;
  Config cfg_;
  double dt_;
  std::int64_t total_ticks_;
  std::int64_t trace_stride_;
  std::map<std::string, geom::Vec2> initial_positions_;
  std::unique_ptr<sim::Simulation> sim_;
  std::size_t next_action_ = 0;
  std::vector<Action> operator_log_;
  std::vector<AssertionResult> assertions_;
  std::unique_ptr<TraceWriter> trace_;
};

enum ExitCode { kExitOk = 0, kExitRuntime = 1, kExitAssertion = 2, kExitSchema = 3 };

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<AssertionResult> assertions;
  std::vector<sim::TransitionRecord> transitions;
  std::string final_state_summary;
};

// Runs a scenario file headlessly, writing <name>.trace.csv and
// <name>.transitions.csv into out_dir when given.
RunResult run_scenario(const std::filesystem::path& path, const std::optional<std::filesystem::path>& out_dir,
                       const Config& cfg, std::optional<std::uint64_t> seed_override = std::nullopt,
                       std::optional<double> dt_override = std::nullopt);

}  // namespace microforge::scenario
