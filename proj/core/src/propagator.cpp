#include "aolcorr/propagator.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <unsupported/Eigen/AutoDiff>

#include "aolcorr/atmosphere.hpp"
#include "aolcorr/error.hpp"

namespace aolcorr {

double DailySeries::at(double epoch) const {
  if (values.empty()) return 1.0;
  const double x = (epoch - start_epoch) / step;
  if (x <= 0.0) return values.front();
  const auto last = static_cast<double>(values.size() - 1);
  if (x >= last) return values.back();
  const auto k = static_cast<std::size_t>(x);
  const double w = x - static_cast<double>(k);
  return values[k] * (1.0 - w) + values[k + 1] * w;
}

void ForceConfig::validate() const {
  if (zonal_degree != 0 && zonal_degree != 2 && zonal_degree != 3 && zonal_degree != 4) {
    throw InvalidInput("ForceConfig: zonal_degree must be one of 0, 2, 3, 4");
  }
  if (!(ballistic_coefficient > 0.0)) throw InvalidInput("ForceConfig: ballistic coefficient must be > 0");
  if (density_model == DensityModel::Biased && !(density_scale >= 0.0)) {
    throw InvalidInput("ForceConfig: density scale must be >= 0");
  }
  if (!(mass_kg > 0.0)) throw InvalidInput("ForceConfig: mass must be > 0");
  if (srp_enabled && !(srp_coefficient >= 0.0)) throw InvalidInput("ForceConfig: SRP coefficient must be >= 0");
}

double ForceConfig::density_multiplier() const {
  switch (density_model) {
    case DensityModel::Reference:
      return 1.0;
    case DensityModel::Biased:
      return density_scale;
    case DensityModel::None:
      return 0.0;
  }
  return 0.0;
}

void PropagatorSettings::validate() const {
  if (!(rel_tol > 0.0) || !(abs_tol_pos > 0.0) || !(abs_tol_vel > 0.0)) {
    throw InvalidInput("PropagatorSettings: tolerances must be > 0");
  }
  if (!(min_step > 0.0) || !(min_step < max_step)) {
    throw InvalidInput("PropagatorSettings: require 0 < min_step < max_step");
  }
}

Mat6 symmetrize(const Mat6& m) { return 0.5 * (m + m.transpose()); }

void Covariance6::validate() const {
  if (!matrix.allFinite()) throw InvalidInput("Covariance6: non-finite entries");
  const double scale = std::max(matrix.cwiseAbs().maxCoeff(), 1e-300);
  if ((matrix - matrix.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw InvalidInput("Covariance6: matrix is not symmetric");
  }
  const Eigen::SelfAdjointEigenSolver<Mat6> es(symmetrize(matrix), Eigen::EigenvaluesOnly);
  const double trace = matrix.trace();
  if (es.eigenvalues().minCoeff() < -1e-9 * std::abs(trace)) {
    throw InvalidInput("Covariance6: matrix is not positive semi-definite");
  }
}

Covariance6 Covariance6::symmetrized() const { return Covariance6{symmetrize(matrix), frame}; }

double drag_area_from_bc(double mass_kg, double ballistic_coefficient) {
  if (!(mass_kg > 0.0) || !(ballistic_coefficient > 0.0)) {
    throw InvalidInput("drag_area_from_bc: mass and ballistic coefficient must be > 0");
  }
  return mass_kg * ballistic_coefficient / kDragCoefficient;
}

Vec3 sun_direction(double epoch) {
  // Mean longitude starts at the vernal equinox at the reference epoch.
  constexpr double kObliquity = 23.439291 * kPi / 180.0;
  constexpr double kYear = 365.25 * kSecondsPerDay;
  const double lon = kTwoPi * epoch / kYear;
  return Vec3(std::cos(lon), std::cos(kObliquity) * std::sin(lon), std::sin(kObliquity) * std::sin(lon));
}

namespace {

inline double value_of(double x) { return x; }
template <typename D>
double value_of(const Eigen::AutoDiffScalar<D>& x) {
  return x.value();
}

template <typename T>
using V3 = Eigen::Matrix<T, 3, 1>;

// Generic over the scalar type so the same code yields the variational
// partials through forward-mode autodiff.
template <typename T>
V3<T> total_acceleration(double epoch, const V3<T>& r, const V3<T>& v, const ForceConfig& cfg,
                         const SpaceWeather& sw) {
  using std::sqrt;
  const T r2 = r.dot(r);
  const T rn = sqrt(r2);
  const T inv_r = T(1.0) / rn;
  const T central = -kMu * inv_r * inv_r * inv_r;
  V3<T> acc = r * central;

  if (cfg.zonal_degree >= 2) {
    const T s = r.z() * inv_r;
    const T ratio = kEarthRadius * inv_r;
    // Legendre P_n(s) and P_n'(s) by recurrence
    T p_prev = T(1.0), p_cur = s;
    T dp_prev = T(0.0), dp_cur = T(1.0);
    T ratio_n = ratio;
    const V3<T> r_hat = r * inv_r;
    for (int n = 2; n <= cfg.zonal_degree; ++n) {
      const double nd = n;
      const T p_next = ((2.0 * nd - 1.0) * s * p_cur - (nd - 1.0) * p_prev) / nd;
      const T dp_next = dp_prev + (2.0 * nd - 1.0) * p_cur;
      p_prev = p_cur;
      p_cur = p_next;
      dp_prev = dp_cur;
      dp_cur = dp_next;
      ratio_n = ratio_n * ratio;
      const T coef = kMu * kZonalJ[n] * ratio_n * inv_r * inv_r;
      const T radial = coef * ((nd + 1.0) * p_cur + s * dp_cur);
      acc += r_hat * radial;
      acc.z() -= coef * dp_cur;
    }
  }

  const double density_mult = cfg.density_multiplier();
  if (cfg.drag_enabled && density_mult != 0.0) {
    const T altitude = rn - kEarthRadius;
    const double alt_value = value_of(altitude);
    if (alt_value < kDecayAltitudeKm) throw DecayError(epoch, alt_value);
    const double f10 = cfg.f10_series ? cfg.f10_series->at(epoch) : sw.f10;
    double scale = density_mult * (1.0 + cfg.f10_sensitivity * (f10 - 150.0) / 150.0);
    if (cfg.density_factor) scale *= cfg.density_factor->at(epoch);
    scale = std::max(scale, 0.0);
    if (scale > 0.0) {
      const T rho = scale * reference_density_t(altitude, alt_value);  // kg/m^3
      V3<T> v_rel = v;
      v_rel.x() += kEarthRotationRate * r.y();
      v_rel.y() -= kEarthRotationRate * r.x();
      const T speed = sqrt(v_rel.dot(v_rel));
      // rho [kg/m^3] * Bc [m^2/kg] * (km/s)^2 -> 1e3 km/s^2
      const T drag = (-0.5e3 * cfg.ballistic_coefficient) * rho * speed;
      acc += v_rel * drag;
    }
  }

  if (cfg.srp_enabled && cfg.srp_coefficient > 0.0) {
    const Vec3 sun = sun_direction(epoch);
    const double mag = kSolarPressure * cfg.srp_coefficient * 1e-3;
    for (int k = 0; k < 3; ++k) acc(k) -= mag * sun(k);
  }
  return acc;
}

using Ad = Eigen::AutoDiffScalar<Eigen::Matrix<double, 6, 1>>;

void acceleration_and_jacobian(double epoch, const Vec3& r, const Vec3& v, const ForceConfig& cfg,
                               const SpaceWeather& sw, Vec3& acc, Eigen::Matrix<double, 3, 6>& jac) {
  V3<Ad> ra, va;
  for (int k = 0; k < 3; ++k) {
    ra(k) = Ad(r(k), 6, k);
    va(k) = Ad(v(k), 6, 3 + k);
  }
  const V3<Ad> a = total_acceleration<Ad>(epoch, ra, va, cfg, sw);
  for (int k = 0; k < 3; ++k) {
    acc(k) = a(k).value();
    if (a(k).derivatives().size() == 6) {
      jac.row(k) = a(k).derivatives().transpose();
    } else {
      jac.row(k).setZero();
    }
  }
}

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double a71 = 35.0 / 384, a73 = 500.0 / 1113, a74 = 125.0 / 192, a75 = -2187.0 / 6784,
                 a76 = 11.0 / 84;
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

// Integrates y' = f(t, y) from t0 through the monotone `targets`, invoking
// `on_target(k, y)` on exact arrival at each. `targets` must all lie on the
// same side of t0.
template <int N, class Rhs, class OnTarget>
void integrate_dopri5(Rhs&& rhs, double t0, Eigen::Matrix<double, N, 1> y, const std::vector<double>& targets,
                      const PropagatorSettings& settings, const Eigen::Matrix<double, N, 1>& atol,
                      OnTarget&& on_target) {
  using Vec = Eigen::Matrix<double, N, 1>;
  if (targets.empty()) return;
  const double dir = targets.back() >= t0 ? 1.0 : -1.0;

  double t = t0;
  std::size_t next = 0;
  while (next < targets.size() && targets[next] == t) on_target(next++, t, y);
  if (next == targets.size()) return;

  Vec k1 = rhs(t, y);
  double h = dir * std::min(settings.max_step, 10.0);
  Vec k2, k3, k4, k5, k6, k7, y_new, err;

  while (next < targets.size()) {
    const double target = targets[next];
    bool hits_target = false;
    if (dir * (t + h - target) >= 0.0) {
      h = target - t;
      hits_target = true;
    }
    if (std::abs(h) < settings.min_step && !hits_target) {
      std::ostringstream os;
      os << "propagate: step size underflow at epoch " << t << " s";
      throw NumericalError(os.str());
    }

    k2 = rhs(t + c2 * h, y + h * (a21 * k1));
    k3 = rhs(t + c3 * h, y + h * (a31 * k1 + a32 * k2));
    k4 = rhs(t + c4 * h, y + h * (a41 * k1 + a42 * k2 + a43 * k3));
    k5 = rhs(t + c5 * h, y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
    k6 = rhs(t + h, y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
    y_new = y + h * (a71 * k1 + a73 * k3 + a74 * k4 + a75 * k5 + a76 * k6);
    k7 = rhs(t + h, y_new);
    err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

    double acc = 0.0;
    for (int i = 0; i < y.size(); ++i) {
      const double sc = atol(i) + settings.rel_tol * std::max(std::abs(y(i)), std::abs(y_new(i)));
      const double q = err(i) / sc;
      acc += q * q;
    }
    const double err_norm = std::sqrt(acc / static_cast<double>(y.size()));
    if (!std::isfinite(err_norm)) throw NumericalError("propagate: non-finite error estimate");

    const double factor = err_norm == 0.0 ? 5.0 : std::clamp(0.9 * std::pow(err_norm, -0.2), 0.2, 5.0);
    if (err_norm <= 1.0) {
      t = hits_target ? target : t + h;
      y = y_new;
      k1 = k7;
      const double alt = y.template head<3>().norm() - kEarthRadius;
      if (alt < kDecayAltitudeKm) throw DecayError(t, alt);
      while (next < targets.size() && dir * (targets[next] - t) <= 0.0) on_target(next++, t, y);
      h = dir * std::min(std::abs(h) * std::min(factor, 5.0), settings.max_step);
    } else {
      h *= std::max(factor, 0.2);
    }
  }
}

Vec3 checked_position(const StateVector& s0) {
  if (!s0.position.allFinite() || !s0.velocity.allFinite()) {
    throw InvalidInput("propagate: non-finite initial state");
  }
  return s0.position;
}

void split_epochs(double t0, std::span<const double> epochs, std::vector<std::size_t>& fwd,
                  std::vector<std::size_t>& bwd) {
  for (std::size_t k = 0; k < epochs.size(); ++k) (epochs[k] >= t0 ? fwd : bwd).push_back(k);
  std::stable_sort(fwd.begin(), fwd.end(), [&](auto a, auto b) { return epochs[a] < epochs[b]; });
  std::stable_sort(bwd.begin(), bwd.end(), [&](auto a, auto b) { return epochs[a] > epochs[b]; });
}

Vec6 state_atol(const PropagatorSettings& s) {
  Vec6 atol;
  atol << Vec3::Constant(s.abs_tol_pos), Vec3::Constant(s.abs_tol_vel);
  return atol;
}

}  // namespace

Vec3 acceleration(const StateVector& s, const ForceConfig& cfg, const SpaceWeather& sw) {
  return total_acceleration<double>(s.epoch, s.position, s.velocity, cfg, sw);
}

Eigen::Matrix<double, 3, 6> acceleration_jacobian(const StateVector& s, const ForceConfig& cfg,
                                                  const SpaceWeather& sw) {
  Vec3 acc;
  Eigen::Matrix<double, 3, 6> jac;
  acceleration_and_jacobian(s.epoch, s.position, s.velocity, cfg, sw, acc, jac);
  return jac;
}

std::vector<std::optional<StateVector>> propagate_to_epochs(const StateVector& s0, const ForceConfig& cfg,
                                                            const PropagatorSettings& settings,
                                                            std::span<const double> epochs,
                                                            const SpaceWeather& sw) {
  cfg.validate();
  settings.validate();
  checked_position(s0);

  std::vector<std::optional<StateVector>> out(epochs.size());
  std::vector<std::size_t> fwd, bwd;
  split_epochs(s0.epoch, epochs, fwd, bwd);

  auto rhs = [&](double t, const Vec6& y) {
    Vec6 dy;
    dy.head<3>() = y.tail<3>();
    dy.tail<3>() = total_acceleration<double>(t, Vec3(y.head<3>()), Vec3(y.tail<3>()), cfg, sw);
    return dy;
  };
  const Vec6 atol = state_atol(settings);

  for (const auto* order : {&fwd, &bwd}) {
    if (order->empty()) continue;
    std::vector<double> targets;
    targets.reserve(order->size());
    for (auto k : *order) targets.push_back(epochs[k]);
    try {
      integrate_dopri5<6>(rhs, s0.epoch, s0.stacked(), targets, settings, atol,
                          [&](std::size_t idx, double t, const Vec6& y) {
                            out[(*order)[idx]] = StateVector::from_stacked(t, y);
                          });
    } catch (const DecayError&) {
      // later targets in this direction stay empty
    }
  }
  return out;
}

Trajectory propagate(const StateVector& s0, const ForceConfig& cfg, const PropagatorSettings& settings,
                     double t_end, const SpaceWeather& sw) {
  cfg.validate();
  settings.validate();
  checked_position(s0);

  std::vector<double> targets;
  const double span = t_end - s0.epoch;
  const double dir = span >= 0.0 ? 1.0 : -1.0;
  if (settings.sample_interval > 0.0) {
    const auto n = static_cast<long>(std::floor(std::abs(span) / settings.sample_interval));
    for (long k = 0; k <= n; ++k) {
      const double t = s0.epoch + dir * static_cast<double>(k) * settings.sample_interval;
      if (dir * (t_end - t) > 0.0) targets.push_back(t);
    }
  }
  targets.push_back(t_end);

  auto rhs = [&](double t, const Vec6& y) {
    Vec6 dy;
    dy.head<3>() = y.tail<3>();
    dy.tail<3>() = total_acceleration<double>(t, Vec3(y.head<3>()), Vec3(y.tail<3>()), cfg, sw);
    return dy;
  };

  Trajectory traj;
  traj.samples.reserve(targets.size());
  integrate_dopri5<6>(rhs, s0.epoch, s0.stacked(), targets, settings, state_atol(settings),
                      [&](std::size_t, double t, const Vec6& y) {
                        traj.samples.push_back(StateVector::from_stacked(t, y));
                      });
  return traj;
}

std::vector<std::optional<StmSample>> propagate_stm_to_epochs(const StateVector& s0, const ForceConfig& cfg,
                                                              const PropagatorSettings& settings,
                                                              std::span<const double> epochs,
                                                              const SpaceWeather& sw) {
  cfg.validate();
  settings.validate();
  checked_position(s0);

  using Vec42 = Eigen::Matrix<double, 42, 1>;
  auto rhs = [&](double t, const Vec42& y) {
    Vec3 acc;
    Eigen::Matrix<double, 3, 6> jac;
    acceleration_and_jacobian(t, y.head<3>(), y.segment<3>(3), cfg, sw, acc, jac);
    Vec42 dy;
    dy.head<3>() = y.segment<3>(3);
    dy.segment<3>(3) = acc;
    const Eigen::Map<const Mat6> phi(y.data() + 6);
    Mat6 a = Mat6::Zero();
    a.topRightCorner<3, 3>().setIdentity();
    a.bottomRows<3>() = jac;
    Eigen::Map<Mat6>(dy.data() + 6) = a * phi;
    return dy;
  };

  Vec42 y0;
  y0.head<6>() = s0.stacked();
  Eigen::Map<Mat6>(y0.data() + 6).setIdentity();
  Vec42 atol;
  atol.head<6>() = state_atol(settings);
  atol.tail<36>().setConstant(1e-9);

  std::vector<std::optional<StmSample>> out(epochs.size());
  std::vector<std::size_t> fwd, bwd;
  split_epochs(s0.epoch, epochs, fwd, bwd);
  for (const auto* order : {&fwd, &bwd}) {
    if (order->empty()) continue;
    std::vector<double> targets;
    for (auto k : *order) targets.push_back(epochs[k]);
    try {
      integrate_dopri5<42>(rhs, s0.epoch, y0, targets, settings, atol,
                           [&](std::size_t idx, double t, const Vec42& y) {
                             StmSample sample;
                             sample.state = StateVector::from_stacked(t, y.head<6>());
                             sample.stm = Eigen::Map<const Mat6>(y.data() + 6);
                             out[(*order)[idx]] = sample;
                           });
    } catch (const DecayError&) {
    }
  }
  return out;
}

Covariance6 propagate_covariance(const StateVector& s0, const Covariance6& p0, const ForceConfig& cfg,
                                 const PropagatorSettings& settings, double t_end, const SpaceWeather& sw) {
  if (p0.frame != Frame::Eci) throw InvalidInput("propagate_covariance: initial covariance must be in ECI");
  p0.validate();
  const double epochs[1] = {t_end};
  const auto res = propagate_stm_to_epochs(s0, cfg, settings, epochs, sw);
  if (!res[0]) throw DecayError(t_end, kDecayAltitudeKm);
  const Mat6& phi = res[0]->stm;
  return Covariance6{symmetrize(phi * p0.matrix * phi.transpose()), Frame::Eci};
}

}  // namespace aolcorr
