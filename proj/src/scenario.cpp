#include "microforge/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge::scenario {

using nlohmann::json;

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kContactTolUm = 1.0;

void only_keys(const json& doc, std::initializer_list<const char*> keys, const std::string& path) {
  if (!doc.is_object()) throw SchemaError(fmt::format("{}: expected an object", path));
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : doc.items())
    if (!allowed.count(k)) throw SchemaError(fmt::format("{}: unknown key '{}'", path, k));
}

template <class T>
T get(const json& doc, const char* key, const std::string& path) {
  const auto it = doc.find(key);
  if (it == doc.end()) throw SchemaError(fmt::format("{}.{}: required", path, key));
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    throw SchemaError(fmt::format("{}.{}: wrong type ({})", path, key, it->type_name()));
  }
}

template <class T>
std::optional<T> get_opt(const json& doc, const char* key, const std::string& path) {
  if (!doc.contains(key)) return std::nullopt;
  return get<T>(doc, key, path);
}

double get_number(const json& doc, const char* key, const std::string& path) {
  const double v = get<double>(doc, key, path);
  if (!std::isfinite(v)) throw SchemaError(fmt::format("{}.{}: must be finite", path, key));
  return v;
}

geom::Vec2 get_point(const json& doc, const char* key, const std::string& path) {
  const auto a = get<std::array<double, 2>>(doc, key, path);
  return {a[0], a[1]};
}

const std::set<std::string> kAssertChecks{"mating_state", "locked",     "detach_feasible", "reached",
                                          "body_near",    "contact",    "travel",          "released_within",
                                          "water_fraction", "no_overlap", "gripper_state"};
const std::set<std::string> kManeuvers{"goto", "dock", "release", "hold", "swap", "cancel"};

// Validates an action document and returns the body ids it references.
std::vector<std::string> check_action(const json& a, ActionKind kind, const std::string& path) {
  std::vector<std::string> ids;
  auto id = [&](const char* key) { ids.push_back(get<std::string>(a, key, path)); };
  switch (kind) {
    case ActionKind::Solvent: {
      only_keys(a, {"t", "action", "target"}, path);
      const double target = get_number(a, "target", path);
      if (target < 0.0 || target > 1.0) throw SchemaError(fmt::format("{}.target: {} outside [0, 1]", path, target));
      break;
    }
    case ActionKind::Field:
      only_keys(a, {"t", "action", "base", "grad_x", "grad_y", "rotate_rate", "heading_deg"}, path);
      id("base");
      get_number(a, "grad_x", path);
      get_number(a, "grad_y", path);
      if (a.contains("rotate_rate")) get_number(a, "rotate_rate", path);
      if (a.contains("heading_deg")) get_number(a, "heading_deg", path);
      break;
    case ActionKind::Maneuver: {
      const auto m = get<std::string>(a, "maneuver", path);
      if (!kManeuvers.count(m)) throw SchemaError(fmt::format("{}.maneuver: unknown maneuver '{}'", path, m));
      id("base");
      if (m == "goto") {
        only_keys(a, {"t", "action", "maneuver", "base", "target", "heading_deg", "tol_um", "timeout_s"}, path);
        get_point(a, "target", path);
      } else if (m == "dock") {
        only_keys(a, {"t", "action", "maneuver", "base", "effector", "timeout_s"}, path);
        id("effector");
      } else if (m == "hold") {
        only_keys(a, {"t", "action", "maneuver", "base", "grad_x", "grad_y", "rotate_rate", "heading_deg", "duration_s"},
                  path);
        get_number(a, "duration_s", path);
      } else if (m == "swap") {
        only_keys(a, {"t", "action", "maneuver", "base", "from", "to", "expect_error"}, path);
        id("from");
        id("to");
      } else {
        only_keys(a, {"t", "action", "maneuver", "base"}, path);
      }
      break;
    }
    case ActionKind::Assert: {
      const auto check = get<std::string>(a, "check", path);
      if (!kAssertChecks.count(check)) throw SchemaError(fmt::format("{}.check: unknown check '{}'", path, check));
      if (check == "mating_state") {
        only_keys(a, {"t", "action", "check", "base", "effector", "state"}, path);
        id("base");
        id("effector");
        mating::mate_state_from_string(get<std::string>(a, "state", path));
      } else if (check == "locked") {
        only_keys(a, {"t", "action", "check", "base", "effector", "expect"}, path);
        id("base");
        id("effector");
      } else if (check == "detach_feasible") {
        only_keys(a, {"t", "action", "check", "base", "effector", "expect", "reason"}, path);
        id("base");
        id("effector");
      } else if (check == "reached") {
        only_keys(a, {"t", "action", "check", "body", "target", "tol_um"}, path);
        id("body");
        get_point(a, "target", path);
        get_number(a, "tol_um", path);
      } else if (check == "body_near") {
        only_keys(a, {"t", "action", "check", "body", "other", "max_um"}, path);
        id("body");
        id("other");
        get_number(a, "max_um", path);
      } else if (check == "contact") {
        only_keys(a, {"t", "action", "check", "body", "other", "expect"}, path);
        id("body");
        id("other");
      } else if (check == "travel") {
        only_keys(a, {"t", "action", "check", "body", "min_um", "max_um"}, path);
        id("body");
      } else if (check == "released_within") {
        only_keys(a, {"t", "action", "check", "base", "body", "max_um"}, path);
        id("base");
        id("body");
        get_number(a, "max_um", path);
      } else if (check == "water_fraction") {
        only_keys(a, {"t", "action", "check", "value", "tol"}, path);
        get_number(a, "value", path);
        get_number(a, "tol", path);
      } else if (check == "no_overlap") {
        only_keys(a, {"t", "action", "check", "tol_um"}, path);
      } else if (check == "gripper_state") {
        only_keys(a, {"t", "action", "check", "effector", "state"}, path);
        id("effector");
        get<std::string>(a, "state", path);
      }
      break;
    }
  }
  return ids;
}

ActionKind action_kind_from_string(const std::string& s, const std::string& path) {
  if (s == "solvent") return ActionKind::Solvent;
  if (s == "field") return ActionKind::Field;
  if (s == "maneuver") return ActionKind::Maneuver;
  if (s == "assert") return ActionKind::Assert;
  throw SchemaError(fmt::format("{}.action: unknown action '{}'", path, s));
}

BodySpec parse_body(const json& b, const std::string& path) {
  only_keys(b, {"id", "kind", "mount", "pose", "laser_power_mW", "moment_emu", "sample_moment", "width_um", "length_um"},
            path);
  BodySpec s;
  s.id = get<std::string>(b, "id", path);
  if (s.id.empty()) throw SchemaError(path + ".id: must not be empty");
  try {
    s.kind = world::body_kind_from_string(get<std::string>(b, "kind", path));
    if (b.contains("mount")) s.mount = world::mount_from_string(get<std::string>(b, "mount", path));
  } catch (const SchemaError& e) {
    throw SchemaError(fmt::format("{}: {}", path, e.what()));
  }
  if (b.contains("pose")) {
    const json& p = b["pose"];
    only_keys(p, {"x", "y", "theta_deg"}, path + ".pose");
    s.pose.x = get_number(p, "x", path + ".pose");
    s.pose.y = get_number(p, "y", path + ".pose");
    s.theta_deg = get_opt<double>(p, "theta_deg", path + ".pose").value_or(0.0);
    s.pose.theta = s.theta_deg * kDegToRad;
  }
  s.laser_power_mW = get_opt<double>(b, "laser_power_mW", path);
  s.moment_emu = get_opt<double>(b, "moment_emu", path);
  s.sample_moment = get_opt<bool>(b, "sample_moment", path).value_or(false);
  s.width_um = get_opt<double>(b, "width_um", path).value_or(s.width_um);
  s.length_um = get_opt<double>(b, "length_um", path).value_or(s.length_um);
  const bool base = world::is_base(s.kind);
  if ((s.moment_emu || s.sample_moment) && !base) throw SchemaError(path + ": only bases carry a magnetic moment");
  if (s.moment_emu && s.sample_moment) throw SchemaError(path + ": moment_emu and sample_moment are exclusive");
  if ((b.contains("width_um") || b.contains("length_um")) && s.kind != world::BodyKind::Wall)
    throw SchemaError(path + ": width_um/length_um apply to walls only");
  if (s.kind == world::BodyKind::Wall && !(s.width_um > 0.0 && s.length_um > 0.0))
    throw SchemaError(path + ": wall dimensions must be positive");
  return s;
}

json body_to_json(const BodySpec& s) {
  json b{{"id", s.id}, {"kind", world::to_string(s.kind)}, {"pose", {{"x", s.pose.x}, {"y", s.pose.y}, {"theta_deg", s.theta_deg}}}};
  if (s.mount) b["mount"] = world::to_string(*s.mount);
  if (s.laser_power_mW) b["laser_power_mW"] = *s.laser_power_mW;
  if (s.moment_emu) b["moment_emu"] = *s.moment_emu;
  if (s.sample_moment) b["sample_moment"] = true;
  if (s.kind == world::BodyKind::Wall) {
    b["width_um"] = s.width_um;
    b["length_um"] = s.length_um;
  }
  return b;
}

std::string fmt_double(double v) { return fmt::format("{:.17g}", v); }

}  // namespace

const char* to_string(ActionKind k) {
  switch (k) {
    case ActionKind::Solvent: return "solvent";
    case ActionKind::Field: return "field";
    case ActionKind::Maneuver: return "maneuver";
    case ActionKind::Assert: return "assert";
  }
  return "?";
}

Scenario parse_scenario(const json& doc) {
  const std::string root = "scenario";
  only_keys(doc, {"schema_version", "name", "description", "seed", "duration_s", "dt_s", "trace_interval_s", "config", "world",
                  "script"},
            root);
  const int version = get<int>(doc, "schema_version", root);
  if (version != kScenarioSchemaVersion)
    throw SchemaError(fmt::format("scenario.schema_version: {} is not supported (expected {})", version,
                                  kScenarioSchemaVersion));
  Scenario s;
  s.name = get_opt<std::string>(doc, "name", root).value_or("");
  s.description = get_opt<std::string>(doc, "description", root).value_or("");
  s.seed = get_opt<std::uint64_t>(doc, "seed", root).value_or(0);
  s.duration_s = get_number(doc, "duration_s", root);
  if (s.duration_s < 0.0) throw SchemaError("scenario.duration_s: must be non-negative");
  s.dt_s = get_opt<double>(doc, "dt_s", root);
  if (s.dt_s && !(*s.dt_s > 0.0)) throw SchemaError("scenario.dt_s: must be positive");
  s.trace_interval_s = get_opt<double>(doc, "trace_interval_s", root).value_or(s.trace_interval_s);
  if (!(s.trace_interval_s > 0.0)) throw SchemaError("scenario.trace_interval_s: must be positive");

  if (doc.contains("config")) {
    if (!doc["config"].is_object()) throw SchemaError("scenario.config: expected an object");
    try {
      apply_config(doc["config"]);
    } catch (const SchemaError& e) {
      throw SchemaError(fmt::format("scenario.config: {}", e.what()));
    }
    s.config = doc["config"];
  }

  const json& w = doc.contains("world") ? doc["world"] : json::object();
  only_keys(w, {"water_fraction", "water_fraction_target", "exchange_tau_s", "channel", "bodies", "locks"}, "scenario.world");
  s.world.water_fraction = get_opt<double>(w, "water_fraction", "scenario.world").value_or(1.0);
  s.world.water_fraction_target = get_opt<double>(w, "water_fraction_target", "scenario.world");
  s.world.exchange_tau_s = get_opt<double>(w, "exchange_tau_s", "scenario.world");
  for (double phi : {s.world.water_fraction, s.world.water_fraction_target.value_or(s.world.water_fraction)})
    if (phi < 0.0 || phi > 1.0) throw SchemaError(fmt::format("scenario.world: water fraction {} outside [0, 1]", phi));
  if (s.world.exchange_tau_s && !(*s.world.exchange_tau_s > 0.0))
    throw SchemaError("scenario.world.exchange_tau_s: must be positive");
  if (w.contains("channel")) {
    const json& c = w["channel"];
    only_keys(c, {"bounds", "top_enclosure", "height_um"}, "scenario.world.channel");
    if (c.contains("bounds")) {
      const auto b = get<std::array<double, 4>>(c, "bounds", "scenario.world.channel");
      if (!(b[0] < b[2] && b[1] < b[3])) throw SchemaError("scenario.world.channel.bounds: need x_min < x_max, y_min < y_max");
      s.world.channel.bounds = b;
    }
    s.world.channel.top_enclosure = get_opt<bool>(c, "top_enclosure", "scenario.world.channel").value_or(false);
    s.world.channel.height_um = get_opt<double>(c, "height_um", "scenario.world.channel").value_or(300.0);
  }
  std::set<std::string> ids;
  if (w.contains("bodies")) {
    if (!w["bodies"].is_array()) throw SchemaError("scenario.world.bodies: expected an array");
    for (std::size_t i = 0; i < w["bodies"].size(); ++i) {
      BodySpec b = parse_body(w["bodies"][i], fmt::format("scenario.world.bodies[{}]", i));
      if (!ids.insert(b.id).second) throw SchemaError(fmt::format("scenario.world.bodies[{}]: duplicate id '{}'", i, b.id));
      s.world.bodies.push_back(std::move(b));
    }
  }
  if (w.contains("locks")) {
    const auto locks = get<std::vector<std::array<std::string, 2>>>(w, "locks", "scenario.world");
    for (std::size_t i = 0; i < locks.size(); ++i) {
      for (const auto& id : locks[i])
        if (!ids.count(id)) throw SchemaError(fmt::format("scenario.world.locks[{}]: unknown body '{}'", i, id));
      s.world.locks.emplace_back(locks[i][0], locks[i][1]);
    }
  }

  if (doc.contains("script")) {
    const json& script = doc["script"];
    if (!script.is_array()) throw SchemaError("scenario.script: expected an array");
    double last_t = 0.0;
    for (std::size_t i = 0; i < script.size(); ++i) {
      const std::string path = fmt::format("scenario.script[{}]", i);
      const json& a = script[i];
      if (!a.is_object()) throw SchemaError(path + ": expected an object");
      Action act;
      act.time_s = get_number(a, "t", path);
      if (act.time_s < 0.0) throw SchemaError(path + ".t: must be non-negative");
      if (act.time_s < last_t)
        throw SchemaError(fmt::format("{}.t: {} is earlier than the previous action ({})", path, act.time_s, last_t));
      if (act.time_s > s.duration_s + 1e-9)
        throw SchemaError(fmt::format("{}.t: {} is after duration_s ({})", path, act.time_s, s.duration_s));
      last_t = act.time_s;
      act.kind = action_kind_from_string(get<std::string>(a, "action", path), path);
      for (const auto& id : check_action(a, act.kind, path))
        if (!ids.count(id)) throw SchemaError(fmt::format("{}: unknown body '{}'", path, id));
      act.doc = a;
      s.script.push_back(std::move(act));
    }
  }
  return s;
}

Scenario parse_scenario_text(const std::string& text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(fmt::format("{}: syntax error at {}: {}", origin, describe_offset(text, e.byte), e.what()));
  }
  try {
    return parse_scenario(doc);
  } catch (const SchemaError& e) {
    throw SchemaError(fmt::format("{}: {}", origin, e.what()));
  }
}

Scenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot read scenario '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario_text(ss.str(), path.string());
}

json to_json(const Scenario& s) {
  json world{{"water_fraction", s.world.water_fraction}};
  if (s.world.water_fraction_target) world["water_fraction_target"] = *s.world.water_fraction_target;
  if (s.world.exchange_tau_s) world["exchange_tau_s"] = *s.world.exchange_tau_s;
  json channel{{"top_enclosure", s.world.channel.top_enclosure}, {"height_um", s.world.channel.height_um}};
  if (s.world.channel.bounds) channel["bounds"] = *s.world.channel.bounds;
  world["channel"] = channel;
  world["bodies"] = json::array();
  for (const auto& b : s.world.bodies) world["bodies"].push_back(body_to_json(b));
  if (!s.world.locks.empty()) {
    world["locks"] = json::array();
    for (const auto& [b, e] : s.world.locks) world["locks"].push_back({b, e});
  }
  json doc{{"schema_version", kScenarioSchemaVersion}, {"name", s.name},        {"description", s.description},
           {"seed", s.seed},                            {"duration_s", s.duration_s}, {"trace_interval_s", s.trace_interval_s},
           {"world", world}};
  if (s.dt_s) doc["dt_s"] = *s.dt_s;
  if (s.config) doc["config"] = *s.config;
  doc["script"] = json::array();
  for (const auto& a : s.script) doc["script"].push_back(a.doc);
  return doc;
}

Config effective_config(const Scenario& s, const Config& cfg) {
  if (!s.config) return cfg;
  try {
    return apply_config(*s.config, cfg);
  } catch (const SchemaError& e) {
    throw SchemaError(fmt::format("scenario.config: {}", e.what()));
  }
}

world::WorldState build_world(const Scenario& s, const Config& cfg) {
  world::WorldState w;
  w.config = cfg.world;
  w.water_fraction = s.world.water_fraction;
  w.water_fraction_target = s.world.water_fraction_target.value_or(s.world.water_fraction);
  w.exchange_tau_s = s.world.exchange_tau_s.value_or(cfg.exchange_tau_s);
  w.channel = s.world.channel;
  w.rng_seed = s.seed;

  std::size_t sampled = 0;
  for (const auto& b : s.world.bodies) sampled += b.sample_moment ? 1 : 0;
  // One draw per sampled base, relative to the type-1 mean so the factor
  // can be applied to either base type.
  const auto& ref = cfg.world->type1_base;
  const auto draws = magnetics::sample_moments(ref, sampled, s.seed);
  std::size_t next_draw = 0;

  try {
    for (const auto& spec : s.world.bodies) {
      world::Body body = spec.kind == world::BodyKind::Wall
                             ? world::make_wall(spec.id, spec.pose, spec.width_um, spec.length_um)
                             : world::make_body(spec.id, spec.kind, spec.pose, *cfg.world, w.water_fraction, spec.mount);
      if (spec.laser_power_mW) {
        body.laser_power_mW = *spec.laser_power_mW;
        if (body.swell) {
          const double eq = cfg.world->gel_for(body.laser_power_mW).equilibrium_at(w.water_fraction);
          body.swell = gel::SwellState{eq, eq, kinetics::direction_for(eq, eq)};
          if (body.gripper) body.gripper = bilayer::gripper_aperture_for_lambda(cfg.world->gripper, eq);
        }
      }
      if (spec.moment_emu) body.magnetic->moment_emu = *spec.moment_emu;
      if (spec.sample_moment) body.magnetic->moment_emu *= draws[next_draw++] / ref.moment_emu;
      world::add_body(w, std::move(body));
    }
    for (const auto& [b, e] : s.world.locks) {
      world::mate_type(w.body(b), w.body(e));
      world::lock_pair(w, b, e);
    }
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw SchemaError(fmt::format("scenario.world: {}", e.what()));
  }
  return w;
}

TraceWriter::TraceWriter(std::ostream& out) : out_(out) {}

void TraceWriter::write_header() {
  out_ << "time_s,tick,body,kind,x_um,y_um,theta_rad,lambda,gripper_aperture_um,water_fraction,"
          "water_fraction_target,mate_state\n";
}

void TraceWriter::write(const sim::Simulation& sim) {
  const auto& w = sim.world();
  for (const auto& b : w.bodies) {
    if (b.kind == world::BodyKind::Wall) continue;
    out_ << fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}\n", fmt_double(w.time_s), w.tick_index, b.id,
                        world::to_string(b.kind), fmt_double(b.pose.x), fmt_double(b.pose.y), fmt_double(b.pose.theta),
                        b.swell ? fmt_double(b.swell->lambda) : "", b.gripper ? fmt_double(b.gripper->aperture_um) : "",
                        fmt_double(w.water_fraction), fmt_double(w.water_fraction_target), sim.mate_state_of(b.id));
  }
}

void write_transitions_csv(std::ostream& out, const std::vector<sim::TransitionRecord>& records) {
  out << "time_s,tick,base,effector,type,from,to,can_insert,interference_locked,gripper_state,walls_ok,"
         "detach_feasible\n";
  for (const auto& r : records)
    out << fmt::format("{},{},{},{},{},{},{},{:d},{:d},{},{:d},{:d}\n", fmt_double(r.time_s), r.tick, r.base_id,
                       r.effector_id, world::to_string(r.type), mating::to_string(r.from), mating::to_string(r.to),
                       r.can_insert, r.interference_locked, r.gripper_state, r.walls_ok, r.detach_feasible);
}

ScenarioEngine::ScenarioEngine(Scenario scenario, Config cfg, bool open_ended)
    : scenario_(std::move(scenario)), cfg_(effective_config(scenario_, cfg)) {
  dt_ = scenario_.dt_s.value_or(cfg_.dt_s);
  if (!(dt_ > 0.0) || dt_ > cfg_.world->dt_max_s)
    throw StepTooLarge(fmt::format("dt {} s outside (0, {}]", dt_, cfg_.world->dt_max_s));
  total_ticks_ = open_ended ? std::numeric_limits<std::int64_t>::max() : std::llround(scenario_.duration_s / dt_);
  trace_stride_ = std::max<std::int64_t>(1, std::llround(scenario_.trace_interval_s / dt_));
  sim_ = std::make_unique<sim::Simulation>(build_world(scenario_, cfg_), cfg_.protocol, cfg_.follower);
  for (const auto& b : sim_->world().bodies) initial_positions_[b.id] = b.pose.position();
}

void ScenarioEngine::set_trace(std::ostream* out) {
  if (!out) {
    trace_.reset();
    return;
  }
  trace_ = std::make_unique<TraceWriter>(*out);
  trace_->write_header();
}

std::int64_t ScenarioEngine::tick_of(double t) const { return std::llround(t / dt_); }

void ScenarioEngine::apply_scripted() {
  while (next_action_ < scenario_.script.size() && tick_of(scenario_.script[next_action_].time_s) <= tick())
    apply(scenario_.script[next_action_++]);
}

void ScenarioEngine::apply_operator(json action_doc) {
  Action a;
  // Never earlier than a scripted action already applied at this tick, so
  // the replay log keeps non-decreasing times.
  double t = static_cast<double>(tick()) * dt_;
  for (std::size_t i = 0; i < next_action_; ++i)
    if (tick_of(scenario_.script[i].time_s) == tick()) t = std::max(t, scenario_.script[i].time_s);
  if (!operator_log_.empty()) t = std::max(t, operator_log_.back().time_s);
  action_doc["t"] = t;
  const std::string path = "operator";
  if (!action_doc.contains("action") || !action_doc["action"].is_string())
    throw SchemaError("operator.action: required");
  a.kind = action_kind_from_string(action_doc["action"].get<std::string>(), path);
  for (const auto& id : check_action(action_doc, a.kind, path))
    if (!sim_->world().index_of(id)) throw SchemaError(fmt::format("operator: unknown body '{}'", id));
  a.time_s = t;
  a.doc = std::move(action_doc);
  a.from_operator = true;
  apply(a);
  operator_log_.push_back(std::move(a));
}

void ScenarioEngine::step() {
  sim_->step(dt_);
  if (trace_ && tick() % trace_stride_ == 0) trace_->write(*sim_);
}

void ScenarioEngine::run_to_end() {
  for (;;) {
    apply_scripted();
    if (done()) break;
    step();
  }
}

bool ScenarioEngine::all_passed() const {
  return std::all_of(assertions_.begin(), assertions_.end(), [](const auto& r) { return r.passed; });
}

Scenario ScenarioEngine::replay_log() const {
  Scenario out = scenario_;
  out.dt_s = dt_;
  out.duration_s = static_cast<double>(tick()) * dt_;
  out.script.clear();
  std::size_t op = 0;
  for (const auto& a : scenario_.script) {
    while (op < operator_log_.size() && tick_of(operator_log_[op].time_s) < tick_of(a.time_s))
      out.script.push_back(operator_log_[op++]);
    if (tick_of(a.time_s) <= tick()) out.script.push_back(a);
  }
  while (op < operator_log_.size()) out.script.push_back(operator_log_[op++]);
  for (auto& a : out.script) a.from_operator = false;
  return out;
}

void ScenarioEngine::apply(const Action& a) {
  const json& d = a.doc;
  auto& sim = *sim_;
  switch (a.kind) {
    case ActionKind::Solvent:
      sim.set_solvent_target(d["target"].get<double>());
      return;
    case ActionKind::Field: {
      magnetics::FieldCommand c;
      c.grad_x = d["grad_x"].get<double>();
      c.grad_y = d["grad_y"].get<double>();
      c.rotate_rate = d.value("rotate_rate", 0.0);
      if (d.contains("heading_deg")) c.heading = d["heading_deg"].get<double>() * kDegToRad;
      sim.set_command(d["base"].get<std::string>(), c);
      return;
    }
    case ActionKind::Assert:
      assertions_.push_back(evaluate(d));
      return;
    case ActionKind::Maneuver:
      break;
  }

  const auto base = d["base"].get<std::string>();
  const auto m = d["maneuver"].get<std::string>();
  if (m == "cancel") {
    sim.cancel_maneuver(base);
  } else if (m == "goto") {
    std::optional<double> heading;
    if (d.contains("heading_deg")) heading = d["heading_deg"].get<double>() * kDegToRad;
    const auto t = d["target"].get<std::array<double, 2>>();
    sim.start_maneuver(base, sim::make_goto({t[0], t[1]}, heading, d.value("tol_um", cfg_.follower.waypoint_tol_um),
                                            d.value("timeout_s", 120.0)));
  } else if (m == "dock") {
    sim.start_maneuver(base, sim::make_dock(d["effector"].get<std::string>(), d.value("timeout_s", 120.0)));
  } else if (m == "release") {
    sim.start_maneuver(base, sim::make_release());
  } else if (m == "hold") {
    magnetics::FieldCommand c;
    c.grad_x = d.value("grad_x", 0.0);
    c.grad_y = d.value("grad_y", 0.0);
    c.rotate_rate = d.value("rotate_rate", 0.0);
    if (d.contains("heading_deg")) c.heading = d["heading_deg"].get<double>() * kDegToRad;
    sim.start_maneuver(base, sim::make_hold(c, d["duration_s"].get<double>()));
  } else if (m == "swap") {
    const auto expected = d.value("expect_error", std::string{});
    AssertionResult r;
    r.tick = tick();
    r.time_s = sim.world().time_s;
    r.predicate = fmt::format("swap({}, {} -> {}) raises {}", base, d["from"].get<std::string>(),
                              d["to"].get<std::string>(), expected.empty() ? "nothing" : expected);
    try {
      auto plan = sim::swap_end_effector(sim, base, d["from"].get<std::string>(), d["to"].get<std::string>());
      if (!plan.empty()) sim.start_maneuver(base, sim::make_plan(std::move(plan)));
      if (expected.empty()) return;
      r.passed = false;
      r.detail = "plan was built";
    } catch (const Error& e) {
      if (expected.empty()) throw;
      const std::string what = e.what();
      r.passed = what.rfind(expected + ":", 0) == 0;
      r.detail = what;
    }
    assertions_.push_back(std::move(r));
  }
}

AssertionResult ScenarioEngine::evaluate(const json& d) const {
  const auto& w = sim_->world();
  AssertionResult r;
  r.tick = w.tick_index;
  r.time_s = w.time_s;
  const auto check = d["check"].get<std::string>();
  auto str = [&](const char* k) { return d[k].get<std::string>(); };

  if (check == "mating_state") {
    const auto want = mating::mate_state_from_string(str("state"));
    const auto& fsm = sim_->pair(str("base"), str("effector"));
    r.predicate = fmt::format("mating_state({}, {}) == {}", str("base"), str("effector"), str("state"));
    r.passed = fsm.state == want;
    r.detail = fmt::format("state is {}", mating::to_string(fsm.state));
  } else if (check == "locked") {
    const bool want = d.value("expect", true);
    const bool is = w.is_locked(str("base"), str("effector"));
    r.predicate = fmt::format("locked({}, {}) == {}", str("base"), str("effector"), want);
    r.passed = is == want;
    r.detail = fmt::format("locked is {}", is);
  } else if (check == "detach_feasible") {
    const bool want = d.value("expect", true);
    const auto rep = world::detach_feasible(w, str("base"), str("effector"));
    r.predicate = fmt::format("detach_feasible({}, {}) == {}", str("base"), str("effector"), want);
    r.passed = rep.feasible == want;
    if (d.contains("reason")) {
      r.predicate += fmt::format(" with reason {}", str("reason"));
      r.passed = r.passed && str("reason") == world::to_string(rep.reason);
    }
    r.detail = fmt::format("feasible is {}, reason {}, walls_ok {}", rep.feasible, world::to_string(rep.reason),
                           rep.walls_ok);
  } else if (check == "reached") {
    const auto t = d["target"].get<std::array<double, 2>>();
    const double tol = d["tol_um"].get<double>();
    const double dist = geom::norm(w.body(str("body")).pose.position() - geom::Vec2{t[0], t[1]});
    r.predicate = fmt::format("distance({}, ({}, {})) <= {}", str("body"), t[0], t[1], tol);
    r.passed = dist <= tol;
    r.detail = fmt::format("distance is {:.3f} um", dist);
  } else if (check == "body_near" || check == "contact") {
    const double sep = world::body_separation(w, w.body(str("body")), w.body(str("other")));
    if (check == "body_near") {
      const double max = d["max_um"].get<double>();
      r.predicate = fmt::format("separation({}, {}) <= {}", str("body"), str("other"), max);
      r.passed = sep <= max;
    } else {
      const bool want = d.value("expect", true);
      r.predicate = fmt::format("contact({}, {}) == {}", str("body"), str("other"), want);
      r.passed = (sep <= kContactTolUm) == want;
    }
    r.detail = fmt::format("separation is {:.3f} um", sep);
  } else if (check == "travel") {
    const double dist = geom::norm(w.body(str("body")).pose.position() - initial_positions_.at(str("body")));
    const double lo = d.value("min_um", 0.0);
    const double hi = d.value("max_um", std::numeric_limits<double>::infinity());
    r.predicate = fmt::format("{} <= travel({}) <= {}", lo, str("body"), hi);
    r.passed = dist >= lo && dist <= hi;
    r.detail = fmt::format("travel is {:.3f} um", dist);
  } else if (check == "released_within") {
    const double max = d["max_um"].get<double>();
    r.predicate = fmt::format("release by {} left {} within {} um", str("base"), str("body"), max);
    const sim::ReleaseResult* found = nullptr;
    for (const auto& rel : sim_->releases())
      if (rel.base_id == str("base") && rel.complete) found = &rel;
    if (!found) {
      r.detail = "no completed release";
    } else if (const auto it = found->displacement_um.find(str("body")); it == found->displacement_um.end()) {
      r.detail = fmt::format("{} was not in contact when the release started", str("body"));
    } else {
      r.passed = it->second <= max;
      r.detail = fmt::format("displacement is {:.3f} um", it->second);
    }
  } else if (check == "water_fraction") {
    const double v = d["value"].get<double>(), tol = d["tol"].get<double>();
    r.predicate = fmt::format("|water_fraction - {}| <= {}", v, tol);
    r.passed = std::abs(w.water_fraction - v) <= tol;
    r.detail = fmt::format("water_fraction is {:.6f}", w.water_fraction);
  } else if (check == "no_overlap") {
    const double tol = d.value("tol_um", 0.5);
    const double depth = world::max_overlap(w);
    r.predicate = fmt::format("max_overlap <= {}", tol);
    r.passed = depth <= tol;
    r.detail = fmt::format("max overlap is {:.6f} um", depth);
  } else if (check == "gripper_state") {
    const auto& eff = w.body(str("effector"));
    r.predicate = fmt::format("gripper_state({}) == {}", str("effector"), str("state"));
    r.passed = eff.gripper && str("state") == bilayer::to_string(eff.gripper->state);
    r.detail = eff.gripper ? fmt::format("gripper is {}", bilayer::to_string(eff.gripper->state)) : "no gripper";
  }
  return r;
}

RunResult run_scenario(const std::filesystem::path& path, const std::optional<std::filesystem::path>& out_dir,
                       const Config& cfg, std::optional<std::uint64_t> seed_override, std::optional<double> dt_override) {
  RunResult res;
  Scenario s;
  try {
    s = load_scenario(path);
    if (seed_override) s.seed = *seed_override;
    if (dt_override) s.dt_s = *dt_override;
  } catch (const SchemaError& e) {
    res.exit_code = kExitSchema;
    res.message = e.what();
    return res;
  }

  std::ofstream trace_file;
  try {
    ScenarioEngine engine(s, cfg);
    const std::string stem = path.stem().string();
    if (out_dir) {
      std::filesystem::create_directories(*out_dir);
      trace_file.open(*out_dir / (stem + ".trace.csv"));
      engine.set_trace(&trace_file);
    }
    std::string runtime_error;
    try {
      engine.run_to_end();
    } catch (const SchemaError&) {
      throw;
    } catch (const Error& e) {
      runtime_error = e.what();
    }
    res.assertions = engine.assertions();
    res.transitions = engine.sim().transitions();
    if (out_dir) {
      std::ofstream tr(*out_dir / (stem + ".transitions.csv"));
      write_transitions_csv(tr, res.transitions);
    }
    for (const auto& p : engine.sim().pairs())
      res.final_state_summary += fmt::format("{}/{}: {}\n", p.base_id, p.effector_id, mating::to_string(p.state));
    if (!runtime_error.empty()) {
      res.exit_code = kExitRuntime;
      res.message = fmt::format("tick {}: {}", engine.tick(), runtime_error);
    } else if (!engine.all_passed()) {
      res.exit_code = kExitAssertion;
      for (const auto& a : res.assertions)
        if (!a.passed) {
          res.message = AssertionFailed(fmt::format("tick {}: {} ({})", a.tick, a.predicate, a.detail)).what();
          break;
        }
    }
  } catch (const SchemaError& e) {
    res.exit_code = kExitSchema;
    res.message = e.what();
  } catch (const Error& e) {
    res.exit_code = kExitRuntime;
    res.message = e.what();
  }
  return res;
}

}  // namespace microforge::scenario
