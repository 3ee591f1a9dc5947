#include "microforge/config.hpp"

#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "microforge/errors.hpp"

namespace microforge {

using nlohmann::json;

namespace {

// Reads known keys out of one JSON object and rejects the rest.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw SchemaError(fmt::format("{}: expected an object", path_));
  }

  template <class T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    if (it == doc_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception& e) {
      throw SchemaError(fmt::format("{}.{}: {}", path_, key, e.what()));
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    const auto it = doc_.find(key);
    return it == doc_.end() ? nullptr : &*it;
  }

  std::string path(const char* key) const { return path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : doc_.items())
      if (!seen_.count(k)) throw SchemaError(fmt::format("{}: unknown key '{}'", path_, k));
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

std::string describe_offset(const std::string& text, std::size_t byte_offset) {
  std::size_t line = 1, col = 1;
  for (std::size_t i = 0; i < text.size() && i + 1 < byte_offset; ++i) {
    if (text[i] == '\n') {
      ++line;
      col = 1;
    } else {
      ++col;
    }
  }
  return fmt::format("line {}, column {}", line, col);
}

Config apply_config(const json& doc, const Config& base) {
  Config cfg = base;
  auto wc = std::make_shared<world::WorldConfig>(*base.world);
  Section root(doc, "config");

  int version = kConfigSchemaVersion;
  root.read("schema_version", version);
  if (version != kConfigSchemaVersion)
    throw SchemaError(fmt::format("config.schema_version: {} is not supported (expected {})", version,
                                  kConfigSchemaVersion));

  gel::HydrogelParams gp = wc->gel->params();
  std::map<double, gel::CompositionCalibration> extra_tables;
  for (const auto& [lp, m] : wc->gel_by_laser_power) extra_tables.emplace(lp, m->params().calibration);
  bool gel_changed = false;
  if (const json* g = root.child("gel")) {
    Section s(*g, root.path("gel"));
    s.read("Nv", gp.Nv);
    s.read("lambda0", gp.lambda0);
    s.read("chi", gp.chi);
    std::vector<std::array<double, 2>> anchors;
    s.read("anchors", anchors);
    if (!anchors.empty()) {
      std::vector<gel::CompositionAnchor> a;
      for (const auto& [phi, lam] : anchors) a.push_back({phi, lam});
      try {
        gp.calibration = gel::CompositionCalibration(a);
      } catch (const Error& e) {
        throw SchemaError(fmt::format("config.gel.anchors: {}", e.what()));
      }
    }
    std::map<std::string, std::vector<std::array<double, 2>>> by_lp;
    s.read("calibrations_by_laser_power", by_lp);
    s.finish();
    gel_changed = true;
    if (g->contains("calibrations_by_laser_power")) extra_tables.clear();
    for (const auto& [key, table] : by_lp) {
      const std::string where = root.path("gel") + ".calibrations_by_laser_power." + key;
      double lp = 0.0;
      try {
        lp = std::stod(key);
      } catch (const std::exception&) {
        throw SchemaError(fmt::format("{}: key is not a laser power", where));
      }
      std::vector<gel::CompositionAnchor> a;
      for (const auto& [phi, lam] : table) a.push_back({phi, lam});
      try {
        extra_tables[lp] = gel::CompositionCalibration(a);
      } catch (const Error& e) {
        throw SchemaError(fmt::format("{}: {}", where, e.what()));
      }
    }
  }

  if (const json* k = root.child("kinetics")) {
    Section s(*k, root.path("kinetics"));
    s.read("tau_fast_s", wc->kinetics.tau_fast_s);
    s.read("tau_slow_s", wc->kinetics.tau_slow_s);
    std::map<std::string, double> lp;
    s.read("lp_speedup", lp);
    if (!lp.empty()) {
      wc->kinetics.lp_speedup.clear();
      for (const auto& [key, v] : lp) {
        try {
          wc->kinetics.lp_speedup[std::stod(key)] = v;
        } catch (const std::exception&) {
          throw SchemaError(fmt::format("config.kinetics.lp_speedup: key '{}' is not a laser power", key));
        }
      }
    }
    s.finish();
  }

  // Bilayer geometry; modulus ratio and gain are refitted unless given.
  double length = wc->gripper.left.length_um, h_hard = wc->gripper.left.h_hard_um,
         h_soft = wc->gripper.left.h_soft_um;
  std::optional<double> modulus_ratio, gain;
  bool bilayer_changed = gel_changed;
  if (const json* b = root.child("bilayer")) {
    Section s(*b, root.path("bilayer"));
    s.read("length_um", length);
    s.read("h_hard_um", h_hard);
    s.read("h_soft_um", h_soft);
    s.read("peak_ratio", cfg.bilayer_peak_ratio);
    s.read("delta_theta_deg", cfg.bilayer_delta_theta_deg);
    double v;
    if (b->contains("modulus_ratio_n")) { s.read("modulus_ratio_n", v); modulus_ratio = v; }
    if (b->contains("gain")) { s.read("gain", v); gain = v; }
    s.read("jaw_gap_closed_um", wc->gripper.jaw_gap_closed_um);
    s.read("open_threshold_deg", wc->gripper.open_threshold_deg);
    s.read("close_threshold_deg", wc->gripper.close_threshold_deg);
    s.finish();
    bilayer_changed = true;
  }

  if (gel_changed) {
    try {
      wc->gel = std::make_shared<gel::GelModel>(gp);
      wc->gel_by_laser_power.clear();
      for (const auto& [lp, table] : extra_tables) {
        gel::HydrogelParams p = gp;
        p.calibration = table;
        wc->gel_by_laser_power[lp] = std::make_shared<gel::GelModel>(p);
      }
    } catch (const Error& e) {
      throw SchemaError(fmt::format("config.gel: {}", e.what()));
    }
  }
  if (bilayer_changed) {
    bilayer::ExperimentalFit fit{wc->gripper.left.modulus_ratio_n, wc->gripper.left.mismatch.gain};
    if (!modulus_ratio || !gain) {
      const auto f = bilayer::fit_experimental(cfg.bilayer_peak_ratio, cfg.bilayer_delta_theta_deg, length, h_hard, wc->gel);
      fit = f;
    }
    bilayer::BilayerSpec spec;
    spec.length_um = length;
    spec.h_hard_um = h_hard;
    spec.h_soft_um = h_soft;
    spec.modulus_ratio_n = modulus_ratio.value_or(fit.modulus_ratio_n);
    spec.mismatch = bilayer::MismatchModel{gain.value_or(fit.gain), 0.40, wc->gel};
    wc->gripper.left = spec;
    wc->gripper.right = spec;
  }

  if (const json* c = root.child("coil")) {
    Section s(*c, root.path("coil"));
    s.read("max_gradient_T_per_m", wc->coil.max_gradient_T_per_m);
    s.read("alignment_field_T", wc->coil.alignment_field_T);
    s.read("max_rotate_rate", wc->coil.max_rotate_rate);
    s.finish();
  }
  if (const json* d = root.child("drag")) {
    Section s(*d, root.path("drag"));
    s.read("c_translation", wc->drag.c_translation);
    s.read("c_rotation", wc->drag.c_rotation);
    s.finish();
  }
  if (const json* m = root.child("moments")) {
    Section s(*m, root.path("moments"));
    s.read("type1_emu", wc->type1_base.moment_emu);
    s.read("type2_emu", wc->type2_base.moment_emu);
    double sigma = wc->type1_base.variation_sigma;
    s.read("variation_sigma", sigma);
    wc->type1_base.variation_sigma = wc->type2_base.variation_sigma = sigma;
    s.finish();
  }
  if (const json* w = root.child("water_regime")) {
    Section s(*w, root.path("water_regime"));
    s.read("water_fraction_threshold", wc->water_regime.water_fraction_threshold);
    s.read("drag_amplification", wc->water_regime.drag_amplification);
    s.read("stick_force_N", wc->water_regime.stick_force_N);
    s.finish();
  }
  if (const json* m = root.child("mate")) {
    Section s(*m, root.path("mate"));
    auto& p = wc->mate;
    s.read("male_width_um", p.male_width_um);
    s.read("male_depth_um", p.male_depth_um);
    s.read("slot_width_um", p.slot_width_um);
    s.read("slot_depth_um", p.slot_depth_um);
    s.read("insert_clearance_um", p.insert_clearance_um);
    s.read("lock_interference_um", p.lock_interference_um);
    s.read("max_angle_deg", p.max_angle_deg);
    s.read("lateral_tol_um", p.lateral_tol_um);
    s.read("seat_tol_um", p.seat_tol_um);
    s.read("dock_offset_um", p.dock_offset_um);
    s.finish();
  }
  if (const json* d = root.child("detach")) {
    Section s(*d, root.path("detach"));
    s.read("lambda_detach", wc->detach.lambda_detach);
    s.read("wall_contact_tol_um", wc->detach.wall_contact_tol_um);
    s.read("separation_um", wc->detach.separation_um);
    s.finish();
  }
  if (const json* c = root.child("contact")) {
    Section s(*c, root.path("contact"));
    s.read("iterations", wc->contact_iterations);
    s.read("tolerance_um", wc->contact_tolerance_um);
    s.finish();
  }
  if (const json* p = root.child("protocol")) {
    Section s(*p, root.path("protocol"));
    s.read("approach_gap_um", cfg.protocol.approach_gap_um);
    s.read("lock_water_fraction", cfg.protocol.lock_water_fraction);
    s.read("release_water_fraction", cfg.protocol.release_water_fraction);
    s.read("water_target_tol", cfg.protocol.water_target_tol);
    s.finish();
  }
  if (const json* f = root.child("follower")) {
    Section s(*f, root.path("follower"));
    s.read("gain_T_per_m_per_um", cfg.follower.gain_T_per_m_per_um);
    s.read("waypoint_tol_um", cfg.follower.waypoint_tol_um);
    s.read("cross_track_band_um", cfg.follower.cross_track_band_um);
    s.read("min_gradient_T_per_m", cfg.follower.min_gradient_T_per_m);
    s.finish();
  }
  if (const json* s0 = root.child("solvent")) {
    Section s(*s0, root.path("solvent"));
    s.read("exchange_tau_s", cfg.exchange_tau_s);
    s.finish();
  }
  root.read("dt_s", cfg.dt_s);
  root.read("dt_max_s", wc->dt_max_s);
  root.finish();

  try {
    wc->validate();
  } catch (const RangeError& e) {
    throw SchemaError(fmt::format("config: {}", e.what()));
  }
  if (!(cfg.exchange_tau_s > 0.0)) throw SchemaError("config.solvent.exchange_tau_s must be positive");
  if (!(cfg.dt_s > 0.0 && cfg.dt_s <= wc->dt_max_s)) throw SchemaError("config.dt_s must lie in (0, dt_max_s]");
  if (!(cfg.follower.gain_T_per_m_per_um > 0.0 && cfg.follower.waypoint_tol_um > 0.0))
    throw SchemaError("config.follower: gain and waypoint tolerance must be positive");
  cfg.world = std::move(wc);
  return cfg;
}

Config load_config_file(const std::filesystem::path& path, const Config& base) {
  std::ifstream in(path);
  if (!in) throw SchemaError(fmt::format("cannot read config file '{}'", path.string()));
  std::stringstream ss;
  ss << in.rdbuf();
  const std::string text = ss.str();
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw SchemaError(fmt::format("{}: {} ({})", path.string(), e.what(), describe_offset(text, e.byte)));
  }
  return apply_config(doc, base);
}

json config_to_json(const Config& cfg) {
  const auto& w = *cfg.world;
  const auto& gp = w.gel->params();
  json anchors = json::array();
  for (const auto& a : gp.calibration.anchors()) anchors.push_back({a.water_fraction, a.lambda_eq});
  json lp = json::object();
  for (const auto& [k, v] : w.kinetics.lp_speedup) lp[fmt::format("{}", k)] = v;
  json by_lp = json::object();
  for (const auto& [k, m] : w.gel_by_laser_power) {
    json t = json::array();
    for (const auto& a : m->params().calibration.anchors()) t.push_back({a.water_fraction, a.lambda_eq});
    by_lp[fmt::format("{}", k)] = t;
  }
  const auto& b = w.gripper.left;
  return json{
      {"schema_version", kConfigSchemaVersion},
      {"gel", {{"Nv", gp.Nv}, {"lambda0", gp.lambda0}, {"chi", gp.chi}, {"anchors", anchors},
               {"calibrations_by_laser_power", by_lp}}},
      {"kinetics", {{"tau_fast_s", w.kinetics.tau_fast_s}, {"tau_slow_s", w.kinetics.tau_slow_s}, {"lp_speedup", lp}}},
      {"bilayer",
       {{"length_um", b.length_um},
        {"h_hard_um", b.h_hard_um},
        {"h_soft_um", b.h_soft_um},
        {"peak_ratio", cfg.bilayer_peak_ratio},
        {"delta_theta_deg", cfg.bilayer_delta_theta_deg},
        {"modulus_ratio_n", b.modulus_ratio_n},
        {"gain", b.mismatch.gain},
        {"jaw_gap_closed_um", w.gripper.jaw_gap_closed_um},
        {"open_threshold_deg", w.gripper.open_threshold_deg},
        {"close_threshold_deg", w.gripper.close_threshold_deg}}},
      {"coil",
       {{"max_gradient_T_per_m", w.coil.max_gradient_T_per_m},
        {"alignment_field_T", w.coil.alignment_field_T},
        {"max_rotate_rate", w.coil.max_rotate_rate}}},
      {"drag", {{"c_translation", w.drag.c_translation}, {"c_rotation", w.drag.c_rotation}}},
      {"moments",
       {{"type1_emu", w.type1_base.moment_emu},
        {"type2_emu", w.type2_base.moment_emu},
        {"variation_sigma", w.type1_base.variation_sigma}}},
      {"water_regime",
       {{"water_fraction_threshold", w.water_regime.water_fraction_threshold},
        {"drag_amplification", w.water_regime.drag_amplification},
        {"stick_force_N", w.water_regime.stick_force_N}}},
      {"mate",
       {{"male_width_um", w.mate.male_width_um},
        {"male_depth_um", w.mate.male_depth_um},
        {"slot_width_um", w.mate.slot_width_um},
        {"slot_depth_um", w.mate.slot_depth_um},
        {"insert_clearance_um", w.mate.insert_clearance_um},
        {"lock_interference_um", w.mate.lock_interference_um},
        {"max_angle_deg", w.mate.max_angle_deg},
        {"lateral_tol_um", w.mate.lateral_tol_um},
        {"seat_tol_um", w.mate.seat_tol_um},
        {"dock_offset_um", w.mate.dock_offset_um}}},
      {"detach",
       {{"lambda_detach", w.detach.lambda_detach},
        {"wall_contact_tol_um", w.detach.wall_contact_tol_um},
        {"separation_um", w.detach.separation_um}}},
      {"contact", {{"iterations", w.contact_iterations}, {"tolerance_um", w.contact_tolerance_um}}},
      {"protocol",
       {{"approach_gap_um", cfg.protocol.approach_gap_um},
        {"lock_water_fraction", cfg.protocol.lock_water_fraction},
        {"release_water_fraction", cfg.protocol.release_water_fraction},
        {"water_target_tol", cfg.protocol.water_target_tol}}},
      {"follower",
       {{"gain_T_per_m_per_um", cfg.follower.gain_T_per_m_per_um},
        {"waypoint_tol_um", cfg.follower.waypoint_tol_um},
        {"cross_track_band_um", cfg.follower.cross_track_band_um},
        {"min_gradient_T_per_m", cfg.follower.min_gradient_T_per_m}}},
      {"solvent", {{"exchange_tau_s", cfg.exchange_tau_s}}},
      {"dt_s", cfg.dt_s},
      {"dt_max_s", w.dt_max_s},
  };
}

Config resolve_config(const std::optional<std::string>& cli_path) {
  if (cli_path) return load_config_file(*cli_path);
  if (const char* env = std::getenv("MICROFORGE_CONFIG"); env && *env) return load_config_file(env);
  return Config{};
}

}  // namespace microforge
