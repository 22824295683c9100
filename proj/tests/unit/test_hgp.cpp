#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <random>

#include "aolcorr/error.hpp"
#include "aolcorr/hgp.hpp"

namespace aolcorr {
namespace {

GpFitOptions fixed_hyperparameters() {
  GpFitOptions opt;
  opt.optimize = false;
  return opt;
}

TEST(SeKernel, ClosedFormValues) {
  const GpParams p = GpParams::unit(1);
  EXPECT_DOUBLE_EQ(se_kernel(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1), p), 1.0);
  EXPECT_NEAR(se_kernel(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Ones(1), p), std::exp(-1.0), 1e-15);
  GpParams q{Eigen::Vector2d(2.0, 0.5), 3.0, 0.1};
  EXPECT_NEAR(se_kernel(Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(1.0, 1.0), q), 3.0 * std::exp(-0.5 - 2.0), 1e-14);
}

TEST(SeKernel, DecaysWithDistance) {
  const GpParams p = GpParams::unit(1);
  double prev = 2.0;
  for (double d = 0.0; d < 5.0; d += 0.25) {
    const double k = se_kernel(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Constant(1, d), p);
    EXPECT_LT(k, prev);
    prev = k;
  }
}

TEST(SeKernel, MatrixMatchesPointwise) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd a(5, 3), b(4, 3);
  for (Eigen::Index i = 0; i < a.size(); ++i) a(i) = g(rng);
  for (Eigen::Index i = 0; i < b.size(); ++i) b(i) = g(rng);
  const GpParams p{Eigen::Vector3d(0.5, 2.0, 1.5), 1.7, 0.0};
  const Eigen::MatrixXd k = kernel_matrix(a, b, p);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j)
      EXPECT_NEAR(k(i, j), se_kernel(a.row(i).transpose(), b.row(j).transpose(), p), 1e-13);
}

// Two points solved by hand with the explicit 2 x 2 inverse.
TEST(GaussianProcess, TwoPointClosedForm) {
  const Eigen::MatrixXd x = Eigen::Vector2d(0.0, 1.0);
  const Eigen::VectorXd y = Eigen::Vector2d(0.0, 1.0);
  const double noise = 0.01;
  const GaussianProcess gp = GaussianProcess::fit(x, y, GpParams::unit(1, noise), fixed_hyperparameters());

  const double a = 1.0 + noise, c = std::exp(-1.0);
  const double det = a * a - c * c;
  const double ks = std::exp(-0.25);
  // K^-1 = [[a, -c], [-c, a]] / det
  const double w0 = (a * ks - c * ks) / det;
  const double w1 = (-c * ks + a * ks) / det;
  const double mean = w0 * 0.0 + w1 * 1.0;
  const double var = 1.0 - (ks * w0 + ks * w1);

  const GaussianPrediction p = gp.predict(Eigen::VectorXd::Constant(1, 0.5), false);
  EXPECT_NEAR(p.mean, mean, 1e-10);
  EXPECT_NEAR(p.variance, var, 1e-10);
  EXPECT_NEAR(gp.predict(Eigen::VectorXd::Constant(1, 0.5), true).variance, var + noise, 1e-10);

  const double lml = -0.5 * (a * 1.0) / det - 0.5 * std::log(det) - std::log(2.0 * std::numbers::pi);
  EXPECT_NEAR(gp.log_marginal_likelihood(), lml, 1e-10);
  EXPECT_NEAR(gp_log_marginal_likelihood(x, y, GpParams::unit(1, noise)), lml, 1e-10);
}

TEST(GaussianProcess, InterpolatesWithTinyNoise) {
  Eigen::MatrixXd x(6, 1);
  x << 0.0, 0.7, 1.3, 2.1, 2.9, 4.0;
  const Eigen::VectorXd y = x.col(0).array().sin();
  const GaussianProcess gp = GaussianProcess::fit(x, y, GpParams::unit(1, 1e-10), fixed_hyperparameters());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const GaussianPrediction p = gp.predict(x.row(i).transpose(), false);
    EXPECT_NEAR(p.mean, y(i), 1e-5);
    EXPECT_LT(p.variance, 1e-5);
  }
}

TEST(GaussianProcess, RevertsToPriorFarFromData) {
  Eigen::MatrixXd x(3, 1);
  x << 0.0, 0.5, 1.0;
  const Eigen::VectorXd y = Eigen::Vector3d(2.0, 2.5, 1.8);
  GpParams p = GpParams::unit(1, 0.05);
  p.signal_variance = 0.7;
  const GaussianProcess gp = GaussianProcess::fit(x, y, p, fixed_hyperparameters(), {}, 1.5);
  const GaussianPrediction far = gp.predict(Eigen::VectorXd::Constant(1, 100.0));
  EXPECT_NEAR(far.mean, 1.5, 1e-12);
  EXPECT_NEAR(far.variance, 0.75, 1e-12);
}

TEST(GaussianProcess, VarianceGrowsAwayFromCluster) {
  Eigen::MatrixXd x(5, 2);
  x << 0.0, 0.0, 0.1, 0.0, 0.0, 0.1, -0.1, 0.05, 0.05, -0.1;
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(5, -1.0, 1.0);
  GpParams p = GpParams::unit(2, 0.01);
  p.theta = Eigen::Vector2d(0.5, 2.0);
  const GaussianProcess gp = GaussianProcess::fit(x, y, p, fixed_hyperparameters());
  for (const Eigen::Vector2d dir : {Eigen::Vector2d(1, 0), Eigen::Vector2d(0, -1), Eigen::Vector2d(0.6, 0.8)}) {
    double prev = 0.0;
    for (double t = 0.3; t < 8.0; t += 0.1) {
      const double v = gp.predict(t * dir).variance;
      EXPECT_GE(v, prev - 1e-15) << "t = " << t;
      EXPECT_LE(v, p.signal_variance + p.noise_variance + 1e-15);
      prev = v;
    }
  }
}

TEST(GaussianProcess, OptimizationNeverLowersLikelihood) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 5.0);
  std::normal_distribution<double> g(0.0, 0.1);
  Eigen::MatrixXd x(60, 2);
  Eigen::VectorXd y(60);
  for (int i = 0; i < 60; ++i) {
    x(i, 0) = u(rng);
    x(i, 1) = u(rng);
    y(i) = std::sin(x(i, 0)) + 0.1 * x(i, 1) + g(rng);
  }
  for (double start : {0.01, 1.0, 100.0}) {
    GpParams init = GpParams::unit(2, 0.5);
    init.theta.setConstant(start);
    const GaussianProcess gp = GaussianProcess::fit(x, y, init);
    EXPECT_GE(gp.log_marginal_likelihood(), gp.initial_log_marginal_likelihood());
    EXPECT_NEAR(gp.log_marginal_likelihood(), gp_log_marginal_likelihood(x, y, gp.params()), 1e-6);
  }
}

TEST(GaussianProcess, DuplicatePointsStayFinite) {
  Eigen::MatrixXd x(4, 1);
  x << 0.0, 0.0, 1.0, 1.0;
  const Eigen::VectorXd y = Eigen::Vector4d(0.1, 0.2, 0.9, 1.1);
  const GaussianProcess noisy = GaussianProcess::fit(x, y, GpParams::unit(1, 0.01), fixed_hyperparameters());
  const GaussianPrediction p = noisy.predict(Eigen::VectorXd::Zero(1), false);
  EXPECT_NEAR(p.mean, 0.15, 0.01);
  const GaussianProcess noiseless = GaussianProcess::fit(x, y, GpParams::unit(1, 0.0), fixed_hyperparameters());
  EXPECT_GT(noiseless.jitter(), 0.0);
  EXPECT_TRUE(std::isfinite(noiseless.predict(Eigen::VectorXd::Constant(1, 0.5)).mean));
}

TEST(GaussianProcess, RecoversLengthScaleOfPriorSample) {
  const double theta_true = 0.1;
  const int n = 150;
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  std::normal_distribution<double> g;
  Eigen::MatrixXd x(n, 1);
  for (int i = 0; i < n; ++i) x(i, 0) = u(rng);
  GpParams truth = GpParams::unit(1, 0.0);
  truth.theta(0) = theta_true;
  Eigen::MatrixXd k = kernel_matrix(x, x, truth);
  k.diagonal().array() += 1e-4;
  const Eigen::MatrixXd l = k.llt().matrixL();
  Eigen::VectorXd w(n);
  for (int i = 0; i < n; ++i) w(i) = g(rng);
  const Eigen::VectorXd y = l * w;
  const GaussianProcess gp = GaussianProcess::fit(x, y, GpParams::unit(1, 0.1));
  EXPECT_GT(gp.params().theta(0), theta_true / 2);
  EXPECT_LT(gp.params().theta(0), theta_true * 2);
}

TEST(GaussianProcess, RejectsBadInput) {
  const Eigen::MatrixXd x = Eigen::Vector2d(0.0, 1.0);
  EXPECT_THROW(GaussianProcess::fit(x, Eigen::Vector3d::Zero(), GpParams::unit(1)), InvalidInput);
  EXPECT_THROW(GaussianProcess::fit(x, Eigen::Vector2d::Zero(), GpParams::unit(2)), InvalidInput);
  GpFitOptions small;
  small.max_points = 1;
  EXPECT_THROW(GaussianProcess::fit(x, Eigen::Vector2d::Zero(), GpParams::unit(1), small), InvalidInput);
  EXPECT_THROW(GaussianProcess().predict(Eigen::VectorXd::Zero(1)), InvalidInput);
}

struct Noisy1d {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Noisy1d noisy_sine(int n, double sigma0, double sigma1, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> g;
  Noisy1d d{Eigen::MatrixXd(n, 1), Eigen::VectorXd(n)};
  for (int i = 0; i < n; ++i) {
    const double x = u(rng);
    d.x(i, 0) = x;
    d.y(i) = std::sin(2 * std::numbers::pi * x) + (sigma0 + (sigma1 - sigma0) * x) * g(rng);
  }
  return d;
}

GpParams hgp_init() {
  GpParams p = GpParams::unit(1, 0.05);
  p.theta(0) = 0.1;
  return p;
}

TEST(HeteroscedasticGp, TracksNoiseRamp) {
  const Noisy1d d = noisy_sine(400, 0.05, 0.5, 5);
  const HeteroscedasticGp m = fit_heteroscedastic(d.x, d.y, hgp_init());
  const double lo = m.noise_variance(Eigen::VectorXd::Constant(1, 0.1));
  const double hi = m.noise_variance(Eigen::VectorXd::Constant(1, 0.9));
  // true ratio is (0.455 / 0.095)^2, about 23
  EXPECT_GT(hi / lo, 4.0);
  for (double x = 0.1; x < 0.95; x += 0.1) {
    const double truth = std::pow(0.05 + 0.45 * x, 2);
    const double v = m.noise_variance(Eigen::VectorXd::Constant(1, x));
    // the residual-based estimate leans high where the posterior variance is a large share
    EXPECT_GT(v, truth / 2) << "x = " << x;
    EXPECT_LT(v, truth * 3) << "x = " << x;
  }
  EXPECT_GE(m.rounds, 1);
  EXPECT_FALSE(m.nll_trace.empty());
}

TEST(HeteroscedasticGp, ConstantNoiseMatchesPlainFit) {
  const double sigma = 0.2;
  const Noisy1d d = noisy_sine(300, sigma, sigma, 6);
  const HeteroscedasticGp m = fit_heteroscedastic(d.x, d.y, hgp_init());
  const GaussianProcess plain = GaussianProcess::fit(d.x, d.y, hgp_init());
  double lo = 1e300, hi = 0.0;
  for (double x = 0.05; x < 1.0; x += 0.1) {
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, x);
    const double v = m.noise_variance(q);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    const GaussianPrediction a = m.predict(q), b = plain.predict(q);
    EXPECT_NEAR(a.mean, b.mean, 0.05 * sigma) << "x = " << x;
    EXPECT_NEAR(a.variance, b.variance, 0.05 * b.variance) << "x = " << x;
  }
  EXPECT_LT(hi / lo, 1.5);
}

TEST(HeteroscedasticGp, TotalVarianceExceedsPosterior) {
  const Noisy1d d = noisy_sine(80, 0.05, 0.3, 7);
  const HeteroscedasticGp m = fit_heteroscedastic(d.x, d.y, hgp_init());
  for (double x = -0.5; x < 1.5; x += 0.05) {
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, x);
    const GaussianPrediction p = m.predict(q);
    EXPECT_GE(p.variance, m.posterior_variance(q));
    EXPECT_NEAR(p.variance, m.posterior_variance(q) + m.noise_variance(q), 1e-12 * p.variance);
  }
}

TEST(HgpFile, RoundTripPredictsIdentically) {
  const Noisy1d d = noisy_sine(50, 0.05, 0.3, 8);
  const HeteroscedasticGp m = fit_heteroscedastic(d.x, d.y, hgp_init());
  const auto path = std::filesystem::temp_directory_path() / "aolcorr_hgp_roundtrip.bin";
  save_hgp(path, m, R"({"label_std":2.0})");
  std::string norm;
  const HeteroscedasticGp back = load_hgp(path, &norm);
  EXPECT_NE(norm.find("label_std"), std::string::npos);
  EXPECT_EQ(back.rounds, m.rounds);
  for (double x = 0.0; x <= 1.0; x += 0.125) {
    const Eigen::VectorXd q = Eigen::VectorXd::Constant(1, x);
    const GaussianPrediction a = m.predict(q), b = back.predict(q);
    EXPECT_NEAR(a.mean, b.mean, 1e-10 * (1.0 + std::abs(a.mean)));
    EXPECT_NEAR(a.variance, b.variance, 1e-10 * a.variance);
  }
  std::filesystem::remove(path);
}

TEST(HgpFile, RejectsForeignFile) {
  const auto path = std::filesystem::temp_directory_path() / "aolcorr_hgp_bad.bin";
  {
    std::ofstream out(path);
    out << "AOLTCNN1\n{}\n";
  }
  EXPECT_THROW(load_hgp(path), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace aolcorr
