#include <benchmark/benchmark.h>

#include <random>

#include "aolcorr/tcnn.hpp"

namespace aolcorr {
namespace {

Eigen::MatrixXd random_batch(Eigen::Index n) {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> g;
  Eigen::MatrixXd z(n, 31);
  for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = g(rng);
  return z;
}

void BM_TcnnForward(benchmark::State& state) {
  const Tcnn model({}, 1);
  const Eigen::MatrixXd z = random_batch(state.range(0));
  Eigen::VectorXd m, v;
  for (auto _ : state) {
    model.forward_batch(z, m, v);
    benchmark::DoNotOptimize(m.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TcnnForward)->Arg(1)->Arg(512);

void BM_TcnnLossAndGradient(benchmark::State& state) {
  const Tcnn model({}, 1);
  const Eigen::MatrixXd z = random_batch(state.range(0));
  const Eigen::VectorXd y = Eigen::VectorXd::LinSpaced(state.range(0), -1.0, 1.0);
  Eigen::VectorXd grad;
  for (auto _ : state) benchmark::DoNotOptimize(model.loss_and_gradient(z, y, grad));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TcnnLossAndGradient)->Arg(3)->Arg(512);

void BM_AdamStep(benchmark::State& state) {
  Tcnn model({}, 1);
  const Eigen::VectorXd grad = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(model.parameter_count()), 1e-3);
  Adam adam(grad.size());
  for (auto _ : state) adam.step(model.parameters(), grad);
}
BENCHMARK(BM_AdamStep);

}  // namespace
}  // namespace aolcorr
