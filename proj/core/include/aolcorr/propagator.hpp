#pragma once

#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "aolcorr/astro.hpp"

namespace aolcorr {

inline constexpr double kDragCoefficient = 2.2;
inline constexpr double kDecayAltitudeKm = 100.0;
inline constexpr double kSolarPressure = 4.56e-6;  // N/m^2 at 1 AU

/// Zonal harmonic coefficients J2..J4 (index = degree).
inline constexpr double kZonalJ[5] = {0.0, 0.0, 1.08262668e-3, -2.53265649e-6, -1.61962159e-6};

enum class DensityModel { Reference, Biased, None };

/// Solar flux proxies used by the density scale factor.
struct SpaceWeather {
  double f10 = 150.0;   // sfu
  double f10a = 150.0;  // sfu, 81-day mean
};

/// Uniformly spaced samples, linearly interpolated and clamped at the ends.
struct DailySeries {
  double start_epoch = 0.0;
  double step = kSecondsPerDay;
  std::vector<double> values;

  double at(double epoch) const;
  bool empty() const { return values.empty(); }
};

/// Force model selection. Drag acceleration is -1/2 rho Bc |v_rel| v_rel with
/// Bc = Cd A / m, and
///   rho = rho_ref(h) * scale * (1 + kappa (F10 - 150) / 150) * factor(t).
struct ForceConfig {
  int zonal_degree = 4;  // 0, 2, 3 or 4
  bool drag_enabled = true;
  DensityModel density_model = DensityModel::Reference;
  double density_scale = 1.0;          // only read for DensityModel::Biased
  double ballistic_coefficient = 0.01;  // m^2/kg
  bool srp_enabled = false;
  double srp_coefficient = 0.0;  // Cr A / m, m^2/kg
  double mass_kg = 1000.0;
  double f10_sensitivity = 0.0;  // kappa

  /// When set, overrides the fixed F10 passed to the propagator.
  std::shared_ptr<const DailySeries> f10_series;
  /// Optional multiplicative density modulation in time.
  std::shared_ptr<const DailySeries> density_factor;

  void validate() const;
  double density_multiplier() const;
};

struct PropagatorSettings {
  double rel_tol = 1e-10;
  double abs_tol_pos = 1e-9;   // km
  double abs_tol_vel = 1e-12;  // km/s
  double min_step = 1e-6;      // s
  double max_step = 600.0;     // s
  double sample_interval = 60.0;  // s; <= 0 returns only the final state

  void validate() const;
};

enum class Frame { Eci, Rsw };

/// 6x6 position/velocity covariance (km^2, km^2/s, km^2/s^2 blocks).
struct Covariance6 {
  Mat6 matrix = Mat6::Zero();
  Frame frame = Frame::Eci;

  /// Throws InvalidInput unless symmetric (1e-12 relative) and PSD
  /// (min eigenvalue >= -1e-9 trace).
  void validate() const;
  Covariance6 symmetrized() const;
};

Mat6 symmetrize(const Mat6& m);

/// Cross-sectional area A = m Bc / Cd with Cd = 2.2.
double drag_area_from_bc(double mass_kg, double ballistic_coefficient);

/// Total acceleration in km/s^2. Throws DecayError below 100 km altitude when
/// drag is enabled.
Vec3 acceleration(const StateVector& s, const ForceConfig& cfg, const SpaceWeather& sw = {});

/// Jacobian of the acceleration with respect to (position, velocity), 3x6.
Eigen::Matrix<double, 3, 6> acceleration_jacobian(const StateVector& s, const ForceConfig& cfg,
                                                  const SpaceWeather& sw = {});

/// Unit vector from the Earth to the Sun at `epoch` (simple mean-longitude model).
Vec3 sun_direction(double epoch);

struct Trajectory {
  std::vector<StateVector> samples;
  const StateVector& final_state() const { return samples.back(); }
};

/// Adaptive Dormand-Prince 5(4). Samples every `sample_interval` seconds from
/// s0.epoch and always ends with the state at exactly t_end. Integrates
/// backward when t_end < s0.epoch. Throws DecayError or NumericalError.
Trajectory propagate(const StateVector& s0, const ForceConfig& cfg, const PropagatorSettings& settings,
                     double t_end, const SpaceWeather& sw = {});

/// States at arbitrary epochs on either side of s0.epoch, returned in input
/// order. Epochs past a decay come back empty.
std::vector<std::optional<StateVector>> propagate_to_epochs(const StateVector& s0, const ForceConfig& cfg,
                                                            const PropagatorSettings& settings,
                                                            std::span<const double> epochs,
                                                            const SpaceWeather& sw = {});

struct StmSample {
  StateVector state;
  Mat6 stm = Mat6::Identity();
};

/// State plus state transition matrix from the variational equations.
std::vector<std::optional<StmSample>> propagate_stm_to_epochs(const StateVector& s0, const ForceConfig& cfg,
                                                              const PropagatorSettings& settings,
                                                              std::span<const double> epochs,
                                                              const SpaceWeather& sw = {});

/// Linear covariance transport P(t) = Phi P0 Phi^T, no process noise.
Covariance6 propagate_covariance(const StateVector& s0, const Covariance6& p0, const ForceConfig& cfg,
                                 const PropagatorSettings& settings, double t_end, const SpaceWeather& sw = {});

}  // namespace aolcorr
