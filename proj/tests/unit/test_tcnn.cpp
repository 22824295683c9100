#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include "aolcorr/astro.hpp"
#include "aolcorr/error.hpp"
#include "aolcorr/tcnn.hpp"

namespace aolcorr {
namespace {

Eigen::MatrixXd random_inputs(Eigen::Index n, int width, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Eigen::MatrixXd z(n, width);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g(rng);
  return z;
}

TEST(GaussianNll, ClosedFormValues) {
  EXPECT_DOUBLE_EQ(gaussian_nll(0.3, 1.0, 0.3), 0.0);
  EXPECT_DOUBLE_EQ(gaussian_nll(0.0, std::exp(1.0), 0.0), 0.5);
  EXPECT_NEAR(gaussian_nll(2.0, 4.0, 0.0), 0.5 * (1.0 + std::log(4.0)), 1e-15);
  EXPECT_NEAR(gaussian_nll(2.0, 4.0, 0.0), 1.1931, 1e-4);
  EXPECT_THROW(gaussian_nll(0.0, 0.0, 0.0), InvalidInput);
}

TEST(Tcnn, ParameterCountOfDefaultArchitecture) {
  const Tcnn model;
  const std::size_t expected = (31 * 128 + 128) + (128 * 128 + 128) + (128 * 2 + 2);
  EXPECT_EQ(model.parameter_count(), expected);
  EXPECT_EQ(model.parameter_count(), 20866u);
}

TEST(Tcnn, FreshModelGivesPositiveVariance) {
  const Tcnn model({}, 3);
  const std::vector<double> zero(31, 0.0);
  const GaussianPrediction p = model.forward(zero);
  EXPECT_TRUE(std::isfinite(p.mean));
  EXPECT_GT(p.variance, 0.0);
  EXPECT_TRUE(std::isfinite(p.variance));
  const GaussianPrediction again = model.forward(zero);
  EXPECT_EQ(p.mean, again.mean);
  EXPECT_EQ(p.variance, again.variance);
}

TEST(Tcnn, BatchForwardMatchesSingle) {
  const Tcnn model({}, 4);
  const Eigen::MatrixXd z = random_inputs(16, 31, 1);
  Eigen::VectorXd m, v;
  model.forward_batch(z, m, v);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    const Eigen::RowVectorXd row = z.row(i);
    const GaussianPrediction p = model.forward(std::span<const double>(row.data(), 31));
    EXPECT_NEAR(p.mean, m(i), 1e-12 * (1.0 + std::abs(m(i))));
    EXPECT_NEAR(p.variance, v(i), 1e-12 * v(i));
  }
}

TEST(Tcnn, RejectsBadInput) {
  const Tcnn model;
  const std::vector<double> short_input(30, 0.0);
  EXPECT_THROW(model.forward(short_input), InvalidInput);
  std::vector<double> nan_input(31, 0.0);
  nan_input[4] = std::nan("");
  EXPECT_THROW(model.forward(nan_input), InvalidInput);
}

// Central differences over every parameter on a three-sample batch.
TEST(Tcnn, GradientMatchesFiniteDifferences) {
  Tcnn model({}, 7);
  const Eigen::MatrixXd z = random_inputs(3, 31, 2);
  const Eigen::VectorXd y = Eigen::Vector3d(0.4, -1.2, 2.0);
  Eigen::VectorXd grad;
  model.loss_and_gradient(z, y, grad);
  ASSERT_EQ(grad.size(), 20866);
  const double h = 1e-5;
  int bad = 0;
  for (Eigen::Index k = 0; k < grad.size(); ++k) {
    const double saved = model.parameters()(k);
    model.parameters()(k) = saved + h;
    const double lp = model.loss(z, y);
    model.parameters()(k) = saved - h;
    const double lm = model.loss(z, y);
    model.parameters()(k) = saved;
    const double fd = (lp - lm) / (2 * h);
    const double scale = std::max({std::abs(fd), std::abs(grad(k)), 1e-6});
    if (std::abs(fd - grad(k)) > 1e-4 * scale) ++bad;
  }
  EXPECT_EQ(bad, 0);
}

TEST(Tcnn, ZeroResidualUnitVarianceGivesZeroMeanHeadGradient) {
  TcnnArchitecture arch;
  arch.hidden = {8};
  Tcnn model(arch, 1);
  // output layer: W is 2 x 8 column-major at offset 31*8+8, then b
  const Eigen::Index w_off = 31 * 8 + 8;
  const Eigen::Index b_off = w_off + 16;
  for (Eigen::Index k = w_off; k < b_off; ++k) model.parameters()(k) = 0.0;
  model.parameters()(b_off) = 0.25;
  model.parameters()(b_off + 1) = 0.0;
  const Eigen::MatrixXd z = random_inputs(5, 31, 3);
  Eigen::VectorXd grad;
  model.loss_and_gradient(z, Eigen::VectorXd::Constant(5, 0.25), grad);
  for (int j = 0; j < 8; ++j) EXPECT_EQ(grad(w_off + 2 * j), 0.0);
  EXPECT_EQ(grad(b_off), 0.0);
  EXPECT_NEAR(grad(b_off + 1), 0.5, 1e-15);
}

TEST(Tcnn, GradientInvariantToDuplicationAndPermutation) {
  const Tcnn model({}, 5);
  const Eigen::MatrixXd z = random_inputs(4, 31, 4);
  const Eigen::VectorXd y = Eigen::Vector4d(0.1, 0.2, -0.3, 0.7);
  Eigen::VectorXd g0, g1, g2;
  model.loss_and_gradient(z, y, g0);

  Eigen::MatrixXd zz(8, 31);
  zz << z, z;
  Eigen::VectorXd yy(8);
  yy << y, y;
  model.loss_and_gradient(zz, yy, g1);
  EXPECT_LT((g1 - g0).norm(), 1e-12 * g0.norm());

  Eigen::PermutationMatrix<Eigen::Dynamic> perm(4);
  perm.indices() << 2, 0, 3, 1;
  model.loss_and_gradient(perm * z, perm * y, g2);
  EXPECT_LT((g2 - g0).norm(), 1e-12 * g0.norm());
}

TEST(Tcnn, ClampedLogVarianceHasNoGradient) {
  TcnnArchitecture arch;
  arch.hidden = {4};
  Tcnn model(arch, 2);
  const Eigen::Index b_off = 31 * 4 + 4 + 8;
  model.parameters()(b_off + 1) = 500.0;
  const Eigen::MatrixXd z = random_inputs(2, 31, 5);
  Eigen::VectorXd grad;
  const double l = model.loss_and_gradient(z, Eigen::Vector2d(0.0, 1.0), grad);
  EXPECT_TRUE(std::isfinite(l));
  EXPECT_EQ(grad(b_off + 1), 0.0);
}

// Textbook bias-corrected Adam for a single step sequence.
Eigen::VectorXd reference_adam(Eigen::VectorXd p, const std::vector<Eigen::VectorXd>& grads, double lr) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(p.size()), v = Eigen::VectorXd::Zero(p.size());
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    const Eigen::VectorXd& g = grads[t - 1];
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      m(i) = 0.9 * m(i) + 0.1 * g(i);
      v(i) = 0.999 * v(i) + 0.001 * g(i) * g(i);
      const double mh = m(i) / (1.0 - std::pow(0.9, static_cast<double>(t)));
      const double vh = v(i) / (1.0 - std::pow(0.999, static_cast<double>(t)));
      p(i) -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  return p;
}

TEST(Adam, FirstStepMovesByLearningRate) {
  for (double g : {3.0, -0.02, 1e-3}) {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(1, 1.0);
    Adam adam(1);
    adam.step(p, Eigen::VectorXd::Constant(1, g));
    EXPECT_NEAR(p(0), 1.0 - 1e-3 * (g > 0 ? 1.0 : -1.0), 1e-8);
  }
}

TEST(Adam, ZeroGradientLeavesParameters) {
  Eigen::VectorXd p = Eigen::Vector3d(1.0, -2.0, 0.5);
  const Eigen::VectorXd before = p;
  Adam adam(3);
  adam.step(p, Eigen::VectorXd::Zero(3));
  EXPECT_EQ(p, before);
}

TEST(Adam, MatchesReferenceOverTwoSteps) {
  const Eigen::VectorXd p0 = Eigen::Vector3d(0.3, -0.1, 2.0);
  const std::vector<Eigen::VectorXd> grads{Eigen::Vector3d(0.5, -1.0, 1e-4), Eigen::Vector3d(-0.2, -0.7, 3.0)};
  Eigen::VectorXd p = p0;
  Adam adam(3, AdamOptions{0.01});
  for (const auto& g : grads) adam.step(p, g);
  EXPECT_EQ(adam.steps(), 2);
  EXPECT_LT((p - reference_adam(p0, grads, 0.01)).norm(), 1e-15);
}

struct ToySet {
  Eigen::MatrixXd z;
  Eigen::VectorXd y, x, sigma;
};

// y = sin(x) + noise whose standard deviation ramps from 0.05 to 0.3.
ToySet toy_set(Eigen::Index n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> ux(-kPi, kPi);
  std::normal_distribution<double> g(0.0, 1.0);
  ToySet t{Eigen::MatrixXd::Zero(n, 31), Eigen::VectorXd(n), Eigen::VectorXd(n), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double x = ux(rng);
    t.x(i) = x;
    t.sigma(i) = 0.05 + 0.25 * (x + kPi) / (2 * kPi);
    t.z(i, 0) = x;
    t.y(i) = std::sin(x) + t.sigma(i) * g(rng);
  }
  return t;
}

TcnnTrainOptions toy_options() {
  TcnnTrainOptions opt;
  opt.max_epochs = 300;
  opt.batch_size = 64;
  opt.adam.learning_rate = 3e-3;
  opt.patience = 30;
  opt.seed = 11;
  return opt;
}

TEST(TrainTcnn, RecoversHeteroscedasticToy) {
  const ToySet train = toy_set(3000, 1);
  TcnnArchitecture arch;
  arch.hidden = {32, 32};
  Tcnn model(arch, 2);
  const TcnnTrainResult res = train_tcnn(model, train.z, train.y, toy_options());
  EXPECT_FALSE(res.train_loss.empty());
  EXPECT_EQ(res.holdout_loss.size(), res.train_loss.size());

  const ToySet test = toy_set(1000, 2);
  Eigen::VectorXd m, v;
  model.forward_batch(test.z, m, v);
  const double rmse = std::sqrt((m.array() - test.x.array().sin()).square().mean());
  EXPECT_LT(rmse, 0.1);
  for (Eigen::Index i = 0; i < test.x.size(); ++i) {
    if (std::abs(std::abs(test.x(i)) - kPi) < 0.2) continue;  // sparse data at the domain edges
    const double ratio = std::sqrt(v(i)) / test.sigma(i);
    EXPECT_GT(ratio, 0.5) << "x = " << test.x(i);
    EXPECT_LT(ratio, 2.0) << "x = " << test.x(i);
  }
  // beats the best constant Gaussian
  const double mu = train.y.mean();
  const double var = (train.y.array() - mu).square().mean();
  double baseline = 0.0;
  for (Eigen::Index i = 0; i < test.y.size(); ++i) baseline += gaussian_nll(mu, var, test.y(i));
  EXPECT_LT(model.loss(test.z, test.y), baseline / static_cast<double>(test.y.size()));
}

TEST(TrainTcnn, SeedFixedTrainingIsBitReproducible) {
  const ToySet train = toy_set(500, 3);
  TcnnArchitecture arch;
  arch.hidden = {16};
  TcnnTrainOptions opt = toy_options();
  opt.max_epochs = 20;
  Tcnn a(arch, 9), b(arch, 9);
  const auto ra = train_tcnn(a, train.z, train.y, opt);
  const auto rb = train_tcnn(b, train.z, train.y, opt);
  EXPECT_EQ(a.parameters(), b.parameters());
  EXPECT_EQ(ra.train_loss, rb.train_loss);
}

TEST(TrainTcnn, GroupedHoldoutKeepsGroupsWhole) {
  const ToySet train = toy_set(400, 4);
  TcnnArchitecture arch;
  arch.hidden = {8};
  TcnnTrainOptions opt = toy_options();
  opt.max_epochs = 3;
  opt.groups.resize(400);
  for (std::size_t k = 0; k < 400; ++k) opt.groups[k] = static_cast<int>(k % 10);
  Tcnn model(arch, 1);
  const auto res = train_tcnn(model, train.z, train.y, opt);
  EXPECT_EQ(res.holdout_loss.size(), 3u);
  opt.groups.pop_back();
  EXPECT_THROW(train_tcnn(model, train.z, train.y, opt), InvalidInput);
}

TEST(TrainTcnn, DivergenceNamesTheStep) {
  TcnnArchitecture arch;
  arch.hidden = {4};
  Tcnn model(arch, 1);
  const Eigen::MatrixXd z = random_inputs(10, 31, 6);
  const Eigen::VectorXd y = Eigen::VectorXd::Constant(10, 1e300);
  TcnnTrainOptions opt;
  opt.max_epochs = 1;
  opt.holdout_fraction = 0.0;
  try {
    train_tcnn(model, z, y, opt);
    FAIL() << "no divergence reported";
  } catch (const NumericalError& e) {
    EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
  }
}

TEST(TcnnFile, RoundTrip) {
  TcnnArchitecture arch;
  arch.hidden = {16, 8};
  arch.activation = Activation::Tanh;
  const Tcnn model(arch, 12);
  const auto path = std::filesystem::temp_directory_path() / "aolcorr_tcnn_roundtrip.bin";
  save_tcnn(path, model, R"({"label_mean":0.5})");
  std::string norm;
  const Tcnn back = load_tcnn(path, &norm);
  EXPECT_EQ(back.parameters(), model.parameters());
  EXPECT_EQ(back.architecture().hidden, arch.hidden);
  EXPECT_EQ(back.architecture().activation, Activation::Tanh);
  EXPECT_NE(norm.find("label_mean"), std::string::npos);
  std::filesystem::remove(path);
}

TEST(TcnnFile, RejectsForeignFile) {
  const auto path = std::filesystem::temp_directory_path() / "aolcorr_tcnn_bad.bin";
  {
    std::ofstream out(path);
    out << "NOTAMODEL\n{}\n";
  }
  EXPECT_THROW(load_tcnn(path), ParseError);
  std::filesystem::remove(path);
}

}  // namespace
}  // namespace aolcorr
