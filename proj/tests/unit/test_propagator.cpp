#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "aolcorr/atmosphere.hpp"
#include "aolcorr/error.hpp"
#include "aolcorr/propagator.hpp"
#include "test_support.hpp"

namespace aolcorr {
namespace {

using test::deg;

ForceConfig conservative(int zonal_degree) {
  ForceConfig cfg;
  cfg.zonal_degree = zonal_degree;
  cfg.drag_enabled = false;
  return cfg;
}

// Specific energy including the zonal potential through J4.
// Oracle runs use tolerances two orders tighter than the defaults.
PropagatorSettings tight(double sample_interval) {
  PropagatorSettings ps;
  ps.rel_tol = 1e-12;
  ps.abs_tol_pos = 1e-11;
  ps.abs_tol_vel = 1e-14;
  ps.sample_interval = sample_interval;
  return ps;
}

double total_energy(const StateVector& s, int zonal_degree) {
  const double r = s.position.norm();
  const double x = s.position.z() / r;
  const double p[5] = {1.0, x, 0.5 * (3 * x * x - 1), 0.5 * (5 * x * x * x - 3 * x),
                       (35 * std::pow(x, 4) - 30 * x * x + 3) / 8.0};
  double u = 1.0;
  for (int n = 2; n <= zonal_degree; ++n) u -= kZonalJ[n] * std::pow(kEarthRadius / r, n) * p[n];
  return 0.5 * s.velocity.squaredNorm() - kMu / r * u;
}

TEST(DragArea, FromBallisticCoefficient) {
  EXPECT_NEAR(drag_area_from_bc(250.0, 0.13), 14.7727, 1e-4);
  EXPECT_DOUBLE_EQ(drag_area_from_bc(2.2, 1.0), 1.0);
  EXPECT_NEAR(drag_area_from_bc(100.0, 0.01), 0.4545, 1e-4);
  EXPECT_THROW(drag_area_from_bc(0.0, 0.01), InvalidInput);
}

TEST(Acceleration, TwoBody) {
  const StateVector s{0.0, Vec3(7000.0, 0.0, 0.0), Vec3(0.0, 7.5, 0.0)};
  const Vec3 a = acceleration(s, conservative(0));
  EXPECT_NEAR(a.x(), -kMu / (7000.0 * 7000.0), 1e-15 * std::abs(a.x()));
  EXPECT_NEAR(a.x(), -8.1347e-3, 1e-7);
  EXPECT_EQ(a.y(), 0.0);
  EXPECT_EQ(a.z(), 0.0);
}

TEST(Acceleration, J2MatchesAnalyticGradient) {
  std::mt19937_64 rng(2);
  for (int k = 0; k < 50; ++k) {
    const StateVector s = elements_to_cart(test::random_leo(rng));
    const Vec3& r = s.position;
    const double rn = r.norm();
    const double z2 = r.z() * r.z() / (rn * rn);
    const double f = -1.5 * kZonalJ[2] * kMu * kEarthRadius * kEarthRadius / std::pow(rn, 5);
    const Vec3 j2(f * r.x() * (1 - 5 * z2), f * r.y() * (1 - 5 * z2), f * r.z() * (3 - 5 * z2));
    const Vec3 got = acceleration(s, conservative(2)) - acceleration(s, conservative(0));
    EXPECT_LT((got - j2).norm(), 1e-12 * j2.norm());
  }
  // the equatorial bulge pulls harder in the equatorial plane
  const StateVector eq{0.0, Vec3(7000.0, 0.0, 0.0), Vec3(0.0, 7.5, 0.0)};
  EXPECT_LT(acceleration(eq, conservative(2)).x(), acceleration(eq, conservative(0)).x());
}

TEST(Acceleration, DragMatchesCannonballFormula) {
  ForceConfig cfg = conservative(0);
  cfg.drag_enabled = true;
  cfg.ballistic_coefficient = 0.02;
  const StateVector s = elements_to_cart(test::circular(kEarthRadius + 420.0, deg(51.6), 0.4, 1.0));
  const double rho = reference_density(420.0);
  const Vec3 v_rel = s.velocity - Vec3(0.0, 0.0, kEarthRotationRate).cross(s.position);
  const Vec3 expected = -0.5 * rho * 0.02 * 1e3 * v_rel.norm() * v_rel;
  const Vec3 got = acceleration(s, cfg) - acceleration(s, conservative(0));
  // the difference of two ~8e-3 km/s^2 totals limits the attainable precision
  EXPECT_LT((got - expected).norm(), 1e-8 * expected.norm());
}

TEST(Acceleration, ZeroDensityScaleDisablesDrag) {
  ForceConfig cfg = conservative(4);
  cfg.drag_enabled = true;
  cfg.density_model = DensityModel::Biased;
  cfg.density_scale = 0.0;
  const StateVector s = elements_to_cart(test::circular(kEarthRadius + 300.0, 0.9));
  EXPECT_EQ(acceleration(s, cfg), acceleration(s, conservative(4)));
}

TEST(Acceleration, F10ScalesDensity) {
  ForceConfig cfg = conservative(0);
  cfg.drag_enabled = true;
  cfg.f10_sensitivity = 0.5;
  const StateVector s = elements_to_cart(test::circular(kEarthRadius + 500.0, 0.9));
  const Vec3 base = acceleration(s, conservative(0));
  const Vec3 d150 = acceleration(s, cfg, SpaceWeather{150.0, 150.0}) - base;
  const Vec3 d300 = acceleration(s, cfg, SpaceWeather{300.0, 150.0}) - base;
  EXPECT_LT((d300 - 1.5 * d150).norm(), 1e-12 * d300.norm());
}

TEST(Acceleration, BelowFloorSignalsDecay) {
  ForceConfig cfg;
  const StateVector s{0.0, Vec3(kEarthRadius + 90.0, 0.0, 0.0), Vec3(0.0, 7.8, 0.0)};
  EXPECT_THROW(acceleration(s, cfg), DecayError);
}

TEST(Acceleration, JacobianMatchesFiniteDifference) {
  ForceConfig cfg;
  cfg.zonal_degree = 4;
  // mid-band altitude: the density table is only piecewise smooth
  const StateVector s = elements_to_cart(test::circular(kEarthRadius + 375.0, deg(70.0), 1.0, 2.0));
  const auto jac = acceleration_jacobian(s, cfg);
  const Vec6 x0 = s.stacked();
  for (int j = 0; j < 6; ++j) {
    const double h = j < 3 ? 1e-2 : 1e-4;
    Vec6 xp = x0, xm = x0;
    xp(j) += h;
    xm(j) -= h;
    const Vec3 fd = (acceleration(StateVector::from_stacked(0.0, xp), cfg) -
                     acceleration(StateVector::from_stacked(0.0, xm), cfg)) / (2 * h);
    EXPECT_LT((jac.col(j) - fd).norm(), 1e-5 * jac.col(j).norm() + 1e-15) << "column " << j;
  }
}

TEST(Propagate, KeplerPeriodClosure) {
  const StateVector s0 = elements_to_cart(test::circular(7000.0, 0.6, 0.2, 0.0));
  const double period = kTwoPi * std::sqrt(std::pow(7000.0, 3) / kMu);
  EXPECT_NEAR(period, 5828.5, 0.1);
  const Trajectory tr = propagate(s0, conservative(0), tight(0.0), period);
  EXPECT_LT((tr.final_state().position - s0.position).norm(), 1e-6);
  EXPECT_DOUBLE_EQ(tr.final_state().epoch, period);
}

TEST(Propagate, ZeroDuration) {
  const StateVector s0 = elements_to_cart(test::circular(7000.0, 0.6));
  const Trajectory tr = propagate(s0, ForceConfig{}, PropagatorSettings{}, 0.0);
  ASSERT_EQ(tr.samples.size(), 1u);
  EXPECT_EQ(tr.final_state().position, s0.position);
  EXPECT_EQ(tr.final_state().velocity, s0.velocity);
}

TEST(Propagate, SamplesOnGridAndEndsAtTarget) {
  const StateVector s0 = elements_to_cart(test::circular(7000.0, 0.6));
  PropagatorSettings ps;
  ps.sample_interval = 60.0;
  const Trajectory tr = propagate(s0, conservative(2), ps, 1000.0);
  ASSERT_EQ(tr.samples.size(), 18u);
  for (std::size_t k = 0; k + 1 < tr.samples.size(); ++k) EXPECT_DOUBLE_EQ(tr.samples[k].epoch, 60.0 * k);
  EXPECT_DOUBLE_EQ(tr.final_state().epoch, 1000.0);
}

TEST(Propagate, BackwardRetracesForward) {
  ForceConfig cfg;
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 500.0, 1.2, 0.3, 0.1));
  const StateVector s1 = propagate(s0, cfg, tight(0.0), 43200.0).final_state();
  const StateVector back = propagate(s1, cfg, tight(0.0), 0.0).final_state();
  EXPECT_LT((back.position - s0.position).norm(), 1e-5);
}

TEST(Propagate, J2NodalRegression) {
  const double a = 6778.0, inc = deg(51.6);
  const StateVector s0 = elements_to_cart(test::circular(a, inc, 1.0, 0.0));
  PropagatorSettings ps;
  ps.sample_interval = 60.0;
  const Trajectory tr = propagate(s0, conservative(2), ps, kSecondsPerDay);

  // least-squares slope of the unwrapped node averages out short-period terms
  double st = 0, sr = 0, stt = 0, str = 0, prev = cart_to_elements(s0).raan;
  const double n = static_cast<double>(tr.samples.size());
  for (const StateVector& s : tr.samples) {
    const double raan = unwrap_near(cart_to_elements(s).raan, prev);
    prev = raan;
    st += s.epoch;
    sr += raan;
    stt += s.epoch * s.epoch;
    str += s.epoch * raan;
  }
  const double slope = (n * str - st * sr) / (n * stt - st * st);
  const double analytic =
      -1.5 * kZonalJ[2] * std::sqrt(kMu / (a * a * a)) * std::pow(kEarthRadius / a, 2) * std::cos(inc);
  EXPECT_NEAR(slope, analytic, 0.01 * std::abs(analytic));
}

TEST(Propagate, ConservesEnergyWithZonals) {
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 600.0, deg(63.0), 0.5, 0.2));
  const double period = kTwoPi * std::sqrt(std::pow(s0.position.norm(), 3) / kMu);
  const Trajectory tr = propagate(s0, conservative(4), tight(120.0), period);
  const double e0 = total_energy(s0, 4);
  for (const StateVector& s : tr.samples) EXPECT_LT(std::abs(total_energy(s, 4) - e0), 1e-10 * std::abs(e0));
}

TEST(Propagate, DragDecaysCircularOrbit) {
  ForceConfig cfg = conservative(0);
  cfg.drag_enabled = true;
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 350.0, deg(51.6)));
  const double period = kTwoPi * std::sqrt(std::pow(s0.position.norm(), 3) / kMu);
  PropagatorSettings ps;
  ps.sample_interval = period;
  const Trajectory tr = propagate(s0, cfg, ps, 4 * period);
  for (std::size_t k = 1; k < tr.samples.size(); ++k) {
    EXPECT_LT(cart_to_elements(tr.samples[k]).a, cart_to_elements(tr.samples[k - 1]).a);
  }
}

TEST(Propagate, TighterToleranceConverges) {
  ForceConfig cfg;
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 450.0, deg(97.0), 0.1, 0.1));
  auto run = [&](double rel) {
    PropagatorSettings ps;
    ps.sample_interval = 0.0;
    ps.rel_tol = rel;
    ps.abs_tol_pos = rel * 10.0;
    ps.abs_tol_vel = rel * 1e-2;
    return propagate(s0, cfg, ps, kSecondsPerDay).final_state().position;
  };
  const Vec3 ref = run(1e-13);
  const double coarse = (run(1e-8) - ref).norm();
  const double fine = (run(5e-9) - ref).norm();
  EXPECT_LT((run(1e-8) - run(5e-9)).norm(), std::max(coarse, 1e-9) * 2.0);
  EXPECT_LT(fine, std::max(coarse, 1e-9) * 1.5);
  EXPECT_LT((run(1e-10) - ref).norm(), 1e-3);
}

TEST(Propagate, DecayIsSignalled) {
  ForceConfig cfg;
  cfg.ballistic_coefficient = 0.2;
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 150.0, 0.5));
  EXPECT_THROW(propagate(s0, cfg, PropagatorSettings{}, 10 * kSecondsPerDay), DecayError);
  const std::vector<double> epochs{600.0, 10 * kSecondsPerDay};
  const auto out = propagate_to_epochs(s0, cfg, PropagatorSettings{}, epochs);
  EXPECT_TRUE(out[0].has_value());
  EXPECT_FALSE(out[1].has_value());
}

TEST(PropagateToEpochs, BothDirectionsInInputOrder) {
  ForceConfig cfg;
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 500.0, 1.0), 1000.0);
  const std::vector<double> epochs{5000.0, -2000.0, 1000.0, 3000.0};
  const auto out = propagate_to_epochs(s0, cfg, PropagatorSettings{}, epochs);
  ASSERT_EQ(out.size(), 4u);
  for (std::size_t k = 0; k < epochs.size(); ++k) {
    ASSERT_TRUE(out[k].has_value());
    EXPECT_DOUBLE_EQ(out[k]->epoch, epochs[k]);
    PropagatorSettings ps;
    ps.sample_interval = 0.0;
    const StateVector direct = propagate(s0, cfg, ps, epochs[k]).final_state();
    EXPECT_LT((direct.position - out[k]->position).norm(), 1e-6);
  }
}

TEST(Stm, MatchesFiniteDifferenceOverOneOrbit) {
  const ForceConfig cfg = conservative(0);
  const StateVector s0 = elements_to_cart(test::circular(7000.0, 0.8, 0.1, 0.3));
  const double period = kTwoPi * std::sqrt(std::pow(7000.0, 3) / kMu);
  PropagatorSettings ps;
  ps.rel_tol = 1e-12;
  ps.abs_tol_pos = 1e-11;
  ps.abs_tol_vel = 1e-14;
  const std::vector<double> t{period};
  const Mat6 phi = propagate_stm_to_epochs(s0, cfg, ps, t)[0]->stm;

  const Vec6 x0 = s0.stacked();
  for (int j = 0; j < 6; ++j) {
    const double h = j < 3 ? 1e-4 : 1e-7;
    Vec6 xp = x0, xm = x0;
    xp(j) += h;
    xm(j) -= h;
    const Vec6 fp = propagate_to_epochs(StateVector::from_stacked(0.0, xp), cfg, ps, t)[0]->stacked();
    const Vec6 fm = propagate_to_epochs(StateVector::from_stacked(0.0, xm), cfg, ps, t)[0]->stacked();
    const Vec6 fd = (fp - fm) / (2 * h);
    // position and velocity rows carry different units, compare each block
    EXPECT_LT((phi.col(j).head<3>() - fd.head<3>()).norm(), 1e-5 * phi.col(j).head<3>().norm()) << j;
    EXPECT_LT((phi.col(j).tail<3>() - fd.tail<3>()).norm(), 1e-5 * phi.col(j).tail<3>().norm()) << j;
  }
}

TEST(Stm, Composition) {
  ForceConfig cfg;
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 400.0, 0.9, 0.2, 0.4));
  const std::vector<double> t{20000.0, 50000.0};
  const auto out = propagate_stm_to_epochs(s0, cfg, PropagatorSettings{}, t);
  const StateVector s1 = out[0]->state;
  const std::vector<double> t2{50000.0};
  const Mat6 phi21 = propagate_stm_to_epochs(s1, cfg, PropagatorSettings{}, t2)[0]->stm;
  const Mat6 composed = phi21 * out[0]->stm;
  EXPECT_LT((composed - out[1]->stm).norm(), 1e-6 * out[1]->stm.norm());
}

TEST(Covariance, ZeroDurationUnchanged) {
  const StateVector s0 = elements_to_cart(test::circular(7000.0, 0.6));
  Covariance6 p0;
  p0.matrix = Vec6(1e-4, 2e-4, 3e-4, 1e-8, 2e-8, 3e-8).asDiagonal();
  const Covariance6 p = propagate_covariance(s0, p0, ForceConfig{}, PropagatorSettings{}, 0.0);
  EXPECT_LT((p.matrix - p0.matrix).norm(), 1e-18);
}

TEST(Covariance, ZeroStaysZero) {
  const StateVector s0 = elements_to_cart(test::circular(7000.0, 0.6));
  const Covariance6 p = propagate_covariance(s0, Covariance6{}, ForceConfig{}, PropagatorSettings{}, 86400.0);
  EXPECT_EQ(p.matrix, Mat6::Zero());
}

TEST(Covariance, SymmetricPsdAndGrowsAlongTrack) {
  const StateVector s0 = elements_to_cart(test::circular(kEarthRadius + 500.0, 0.9));
  Covariance6 p0;
  p0.matrix = Vec6(1e-4, 1e-4, 1e-4, 1e-10, 1e-10, 1e-10).asDiagonal();
  const Covariance6 p = propagate_covariance(s0, p0, ForceConfig{}, PropagatorSettings{}, 2 * kSecondsPerDay);
  EXPECT_NO_THROW(p.validate());
  EXPECT_EQ(p.matrix, p.matrix.transpose());
  PropagatorSettings ps;
  ps.sample_interval = 0.0;
  const StateVector s1 = propagate(s0, ForceConfig{}, ps, 2 * kSecondsPerDay).final_state();
  const Mat3 rsw = eci_to_rsw(s1).matrix * p.matrix.topLeftCorner<3, 3>() * eci_to_rsw(s1).matrix.transpose();
  EXPECT_GT(rsw(1, 1), 10.0 * rsw(0, 0));
  EXPECT_GT(rsw(1, 1), 10.0 * rsw(2, 2));
}

TEST(Covariance, RejectsIndefinite) {
  Covariance6 p;
  p.matrix = Mat6::Identity();
  p.matrix(0, 0) = -1.0;
  EXPECT_THROW(p.validate(), InvalidInput);
}

}  // namespace
}  // namespace aolcorr
