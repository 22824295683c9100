#include "aolcorr/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aolcorr/error.hpp"

namespace aolcorr {

using nlohmann::json;

namespace {

// Reads keys from one JSON object and rejects whatever was not read.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw InvalidInput("config: " + where_ + " must be an object");
  }

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw InvalidInput("config: wrong type for " + name(key));
    }
  }

  void get(const char* key, std::filesystem::path& out) {
    std::string s = out.string();
    get(key, s);
    out = s;
  }

  template <class Fn>
  void object(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), name(key));
    fn(sub);
    sub.finish();
  }

  bool has(const char* key) const { return j_.contains(key); }
  std::string name(const char* key) const { return where_.empty() ? key : where_ + "." + key; }

  void finish() const {
    for (const auto& [k, _] : j_.items()) {
      if (!seen_.count(k)) throw InvalidInput("config: unknown key " + name(k.c_str()));
    }
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

void read_force(Reader& r, ForceSettings& f) {
  r.get("zonal_degree", f.zonal_degree);
  r.get("density_scale", f.density_scale);
  r.get("f10_sensitivity", f.f10_sensitivity);
  r.get("srp_enabled", f.srp_enabled);
}

json force_json(const ForceSettings& f) {
  return {{"zonal_degree", f.zonal_degree},
          {"density_scale", f.density_scale},
          {"f10_sensitivity", f.f10_sensitivity},
          {"srp_enabled", f.srp_enabled}};
}

void require(bool ok, const std::string& what) {
  if (!ok) throw InvalidInput("config: " + what);
}

void check_range(const std::array<double, 2>& r, const std::string& name, double lo_bound) {
  require(r[0] >= lo_bound && r[1] >= r[0], name + " must be an ordered [low, high] pair >= " + std::to_string(lo_bound));
}

}  // namespace

void PipelineConfig::validate() const {
  propagator.validate();
  for (const auto* f : {&truth_force, &prediction_force}) {
    require(f->zonal_degree == 0 || f->zonal_degree == 2 || f->zonal_degree == 3 || f->zonal_degree == 4,
            "zonal_degree must be 0, 2, 3 or 4");
    require(f->density_scale >= 0.0, "density_scale must be >= 0");
  }
  const auto& s = simulation;
  require(s.satellites >= 2, "simulation.satellites must be >= 2");
  require(s.span_days > 0.0 && s.cadence_hours > 0.0, "simulation span and cadence must be > 0");
  require(s.jitter_fraction >= 0.0 && s.jitter_fraction < 0.5, "simulation.jitter_fraction must be in [0, 0.5)");
  require(s.sigma_position_km >= 0.0 && s.sigma_velocity_km_s >= 0.0, "simulation sigmas must be >= 0");
  check_range(s.perigee_km, "simulation.perigee_km", 150.0);
  check_range(s.eccentricity, "simulation.eccentricity", 0.0);
  require(s.eccentricity[1] < 0.2, "simulation.eccentricity must stay below 0.2");
  check_range(s.inclination_deg, "simulation.inclination_deg", 0.0);
  require(s.inclination_deg[1] <= 180.0, "simulation.inclination_deg must be <= 180");
  check_range(s.bc_m2_kg, "simulation.bc_m2_kg", 0.0);
  require(s.bc_m2_kg[0] > 0.0, "simulation.bc_m2_kg must be > 0");
  check_range(s.bc_bias, "simulation.bc_bias", 0.0);
  require(s.bc_bias[0] > 0.0, "simulation.bc_bias must be > 0");
  require(s.rocket_body_fraction >= 0.0 && s.rocket_body_fraction <= 1.0,
          "simulation.rocket_body_fraction must be in [0, 1]");
  require(s.density_variability >= 0.0 && s.density_correlation_days > 0.0,
          "simulation density variability must be >= 0 with a positive correlation time");
  require(s.f10.period_days > 0.0 && s.f10.noise >= 0.0, "simulation.f10 period must be > 0 and noise >= 0");
  require(split.train_fraction > 0.0 && split.train_fraction < 1.0, "split.train_fraction must be in (0, 1)");
  if (split.mode == SplitMode::Time) {
    require(split.train_end_days > 0.0 && split.train_end_days < s.span_days,
            "split.train_end_days must fall inside the simulation span");
  }
  require(!models.empty(), "models must list tcnn and/or hgp");
  for (const auto& m : models) require(m == "tcnn" || m == "hgp", "unknown model '" + m + "'");
  require(!tcnn.hidden.empty() && std::all_of(tcnn.hidden.begin(), tcnn.hidden.end(), [](int h) { return h > 0; }),
          "tcnn.hidden must list positive widths");
  require(tcnn.activation == "silu" || tcnn.activation == "tanh", "tcnn.activation must be silu or tanh");
  require(tcnn.max_epochs > 0 && tcnn.batch_size > 0 && tcnn.patience > 0, "tcnn epochs, batch and patience must be > 0");
  require(tcnn.learning_rate > 0.0, "tcnn.learning_rate must be > 0");
  require(tcnn.holdout_fraction >= 0.0 && tcnn.holdout_fraction < 1.0, "tcnn.holdout_fraction must be in [0, 1)");
  require(tcnn.beta_nll >= 0.0 && tcnn.beta_nll <= 1.0, "tcnn.beta_nll must be in [0, 1]");
  require(hgp.max_points >= 2 && hgp.downsample_every >= 1, "hgp.max_points must be >= 2, downsample_every >= 1");
  require(hgp.max_rounds >= 1 && hgp.max_iterations >= 0, "hgp rounds must be >= 1");
  require(alpha > 0.0, "alpha must be > 0");
  require(horizon_days > 0.0 && reverse_days >= 0.0, "horizon_days must be > 0 and reverse_days >= 0");
  require(threads >= 0, "threads must be >= 0");
}

std::filesystem::path PipelineConfig::resolve(const std::filesystem::path& p) const {
  return p.is_absolute() ? p : paths.out_dir / p;
}

bool PipelineConfig::uses_model(const std::string& name) const {
  return std::find(models.begin(), models.end(), name) != models.end();
}

PipelineConfig parse_config(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InvalidInput(std::string("config: ") + e.what());
  }
  PipelineConfig cfg;
  Reader root(j, "");
  if (!root.has("seed")) throw InvalidInput("config: seed is mandatory");
  root.get("seed", cfg.seed);
  root.object("paths", [&](Reader& r) {
    r.get("out_dir", cfg.paths.out_dir);
    r.get("catalog", cfg.paths.catalog);
    r.get("vcm_dir", cfg.paths.vcm_dir);
    r.get("dataset", cfg.paths.dataset);
    r.get("models", cfg.paths.models);
    r.get("reports", cfg.paths.reports);
  });
  root.object("propagator", [&](Reader& r) {
    r.get("rel_tol", cfg.propagator.rel_tol);
    r.get("abs_tol_pos_km", cfg.propagator.abs_tol_pos);
    r.get("abs_tol_vel_km_s", cfg.propagator.abs_tol_vel);
    r.get("max_step_s", cfg.propagator.max_step);
  });
  root.object("truth_force", [&](Reader& r) { read_force(r, cfg.truth_force); });
  root.object("prediction_force", [&](Reader& r) { read_force(r, cfg.prediction_force); });
  root.object("simulation", [&](Reader& r) {
    auto& s = cfg.simulation;
    r.get("satellites", s.satellites);
    r.get("span_days", s.span_days);
    r.get("cadence_hours", s.cadence_hours);
    r.get("jitter_fraction", s.jitter_fraction);
    r.get("sigma_position_km", s.sigma_position_km);
    r.get("sigma_velocity_km_s", s.sigma_velocity_km_s);
    r.get("perigee_km", s.perigee_km);
    r.get("eccentricity", s.eccentricity);
    r.get("inclination_deg", s.inclination_deg);
    r.get("bc_m2_kg", s.bc_m2_kg);
    r.get("bc_bias", s.bc_bias);
    r.get("rocket_body_fraction", s.rocket_body_fraction);
    r.get("density_variability", s.density_variability);
    r.get("density_correlation_days", s.density_correlation_days);
    r.object("f10", [&](Reader& f) {
      f.get("mean", s.f10.mean);
      f.get("amplitude", s.f10.amplitude);
      f.get("period_days", s.f10.period_days);
      f.get("noise", s.f10.noise);
      f.get("shift_day", s.f10.shift_day);
      f.get("shift_amount", s.f10.shift_amount);
    });
  });
  root.object("split", [&](Reader& r) {
    std::string mode = "satellite";
    r.get("mode", mode);
    if (mode == "satellite") cfg.split.mode = SplitMode::Satellite;
    else if (mode == "time") cfg.split.mode = SplitMode::Time;
    else throw InvalidInput("config: split.mode must be satellite or time");
    r.get("train_fraction", cfg.split.train_fraction);
    r.get("train_end_days", cfg.split.train_end_days);
  });
  root.get("models", cfg.models);
  root.object("tcnn", [&](Reader& r) {
    r.get("hidden", cfg.tcnn.hidden);
    r.get("activation", cfg.tcnn.activation);
    r.get("max_epochs", cfg.tcnn.max_epochs);
    r.get("batch_size", cfg.tcnn.batch_size);
    r.get("learning_rate", cfg.tcnn.learning_rate);
    r.get("patience", cfg.tcnn.patience);
    r.get("holdout_fraction", cfg.tcnn.holdout_fraction);
    r.get("beta_nll", cfg.tcnn.beta_nll);
  });
  root.object("hgp", [&](Reader& r) {
    r.get("max_points", cfg.hgp.max_points);
    r.get("downsample_every", cfg.hgp.downsample_every);
    r.get("max_rounds", cfg.hgp.max_rounds);
    r.get("max_iterations", cfg.hgp.max_iterations);
  });
  root.get("alpha", cfg.alpha);
  root.get("horizon_days", cfg.horizon_days);
  root.get("reverse_days", cfg.reverse_days);
  root.get("threads", cfg.threads);
  root.finish();
  cfg.validate();
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("config: cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string config_to_json(const PipelineConfig& c) {
  const auto& s = c.simulation;
  json j;
  j["seed"] = c.seed;
  j["paths"] = {{"out_dir", c.paths.out_dir.string()}, {"catalog", c.paths.catalog.string()},
                {"vcm_dir", c.paths.vcm_dir.string()}, {"dataset", c.paths.dataset.string()},
                {"models", c.paths.models.string()},   {"reports", c.paths.reports.string()}};
  j["propagator"] = {{"rel_tol", c.propagator.rel_tol},
                     {"abs_tol_pos_km", c.propagator.abs_tol_pos},
                     {"abs_tol_vel_km_s", c.propagator.abs_tol_vel},
                     {"max_step_s", c.propagator.max_step}};
  j["truth_force"] = force_json(c.truth_force);
  j["prediction_force"] = force_json(c.prediction_force);
  j["simulation"] = {{"satellites", s.satellites},
                     {"span_days", s.span_days},
                     {"cadence_hours", s.cadence_hours},
                     {"jitter_fraction", s.jitter_fraction},
                     {"sigma_position_km", s.sigma_position_km},
                     {"sigma_velocity_km_s", s.sigma_velocity_km_s},
                     {"perigee_km", s.perigee_km},
                     {"eccentricity", s.eccentricity},
                     {"inclination_deg", s.inclination_deg},
                     {"bc_m2_kg", s.bc_m2_kg},
                     {"bc_bias", s.bc_bias},
                     {"rocket_body_fraction", s.rocket_body_fraction},
                     {"density_variability", s.density_variability},
                     {"density_correlation_days", s.density_correlation_days},
                     {"f10",
                      {{"mean", s.f10.mean},
                       {"amplitude", s.f10.amplitude},
                       {"period_days", s.f10.period_days},
                       {"noise", s.f10.noise},
                       {"shift_day", s.f10.shift_day},
                       {"shift_amount", s.f10.shift_amount}}}};
  j["split"] = {{"mode", c.split.mode == SplitMode::Time ? "time" : "satellite"},
                {"train_fraction", c.split.train_fraction},
                {"train_end_days", c.split.train_end_days}};
  j["models"] = c.models;
  j["tcnn"] = {{"hidden", c.tcnn.hidden},
               {"activation", c.tcnn.activation},
               {"max_epochs", c.tcnn.max_epochs},
               {"batch_size", c.tcnn.batch_size},
               {"learning_rate", c.tcnn.learning_rate},
               {"patience", c.tcnn.patience},
               {"holdout_fraction", c.tcnn.holdout_fraction},
               {"beta_nll", c.tcnn.beta_nll}};
  j["hgp"] = {{"max_points", c.hgp.max_points},
              {"downsample_every", c.hgp.downsample_every},
              {"max_rounds", c.hgp.max_rounds},
              {"max_iterations", c.hgp.max_iterations}};
  j["alpha"] = c.alpha;
  j["horizon_days"] = c.horizon_days;
  j["reverse_days"] = c.reverse_days;
  j["threads"] = c.threads;
  return j.dump(2);
}

ForceConfig to_force_config(const ForceSettings& s) {
  ForceConfig f;
  f.zonal_degree = s.zonal_degree;
  f.drag_enabled = true;
  f.density_model = DensityModel::Biased;
  f.density_scale = s.density_scale;
  f.f10_sensitivity = s.f10_sensitivity;
  f.srp_enabled = s.srp_enabled;
  return f;
}

}  // namespace aolcorr
