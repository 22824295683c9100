#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "aolcorr/propagator.hpp"

namespace aolcorr {

/// Output layout below `out_dir`; relative entries are resolved against it.
struct PathsConfig {
  std::filesystem::path out_dir = "out";
  std::filesystem::path catalog = "catalog.csv";
  std::filesystem::path vcm_dir = "vcm";
  std::filesystem::path dataset = "dataset.csv";
  std::filesystem::path models = "models";
  std::filesystem::path reports = "reports";
};

/// Dynamics overrides applied on top of ForceConfig defaults.
struct ForceSettings {
  int zonal_degree = 4;
  double density_scale = 1.0;
  double f10_sensitivity = 0.0;
  bool srp_enabled = false;
};

struct F10Settings {
  double mean = 150.0;
  double amplitude = 20.0;       // 27-day oscillation
  double period_days = 27.0;
  double noise = 8.0;            // daily AR(1) innovation, sfu
  double shift_day = -1.0;       // < 0 disables the regime change
  double shift_amount = 0.0;     // sfu added from shift_day on
};

struct SimulationSettings {
  int satellites = 20;
  double span_days = 14.0;
  double cadence_hours = 8.0;
  double jitter_fraction = 0.25;
  double sigma_position_km = 0.015;
  double sigma_velocity_km_s = 5e-7;
  std::array<double, 2> perigee_km{400.0, 900.0};
  std::array<double, 2> eccentricity{0.0, 0.02};
  std::array<double, 2> inclination_deg{30.0, 100.0};
  std::array<double, 2> bc_m2_kg{0.005, 0.03};
  std::array<double, 2> bc_bias{0.9, 1.1};   // reported / truth
  double rocket_body_fraction = 0.25;
  double density_variability = 0.1;          // log-sigma of the daily truth density factor
  double density_correlation_days = 3.0;
  F10Settings f10;
};

enum class SplitMode { Satellite, Time };

struct SplitSettings {
  SplitMode mode = SplitMode::Satellite;
  double train_fraction = 0.8;
  double train_end_days = 0.0;  // time mode: window end relative to the simulation start
};

struct TcnnSettings {
  std::vector<int> hidden{128, 128};
  std::string activation = "silu";
  int max_epochs = 200;
  std::size_t batch_size = 512;
  double learning_rate = 1e-3;
  int patience = 10;
  double holdout_fraction = 0.1;
  double beta_nll = 0.0;
};

struct HgpSettings {
  std::size_t max_points = 4000;
  std::size_t downsample_every = 1;  // raised automatically to respect max_points
  int max_rounds = 10;
  int max_iterations = 60;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  PathsConfig paths;
  PropagatorSettings propagator;
  ForceSettings truth_force{4, 1.3, 0.5, false};
  ForceSettings prediction_force;
  SimulationSettings simulation;
  SplitSettings split;
  std::vector<std::string> models{"tcnn", "hgp"};
  TcnnSettings tcnn;
  HgpSettings hgp;
  double alpha = 1e6;
  double horizon_days = 7.0;
  double reverse_days = 2.0;
  int threads = 0;  // 0: hardware concurrency

  void validate() const;
  std::filesystem::path resolve(const std::filesystem::path& p) const;
  bool uses_model(const std::string& name) const;
};

/// Strict JSON parsing: unknown keys and a missing "seed" are errors.
PipelineConfig parse_config(const std::string& text);
PipelineConfig load_config(const std::filesystem::path& path);
std::string config_to_json(const PipelineConfig& cfg);

ForceConfig to_force_config(const ForceSettings& s);

}  // namespace aolcorr
