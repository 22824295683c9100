#include <benchmark/benchmark.h>

#include <random>

#include "aolcorr/hgp.hpp"

namespace aolcorr {
namespace {

constexpr int kDims = 31;

struct Problem {
  Eigen::MatrixXd x;
  Eigen::VectorXd y;
};

Problem make_problem(Eigen::Index n) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  Problem p{Eigen::MatrixXd(n, kDims), Eigen::VectorXd(n)};
  for (Eigen::Index i = 0; i < p.x.size(); ++i) p.x(i) = g(rng);
  for (Eigen::Index i = 0; i < n; ++i) p.y(i) = std::sin(p.x(i, 0)) + 0.1 * g(rng);
  return p;
}

GpParams params() {
  GpParams p = GpParams::unit(kDims, 0.01);
  p.theta.setConstant(2.0 * kDims);
  return p;
}

GpFitOptions fixed() {
  GpFitOptions opt;
  opt.optimize = false;
  return opt;
}

// Cholesky conditioning at fixed hyperparameters.
void BM_GpCondition(benchmark::State& state) {
  const Problem p = make_problem(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(GaussianProcess::fit(p.x, p.y, params(), fixed()));
}
BENCHMARK(BM_GpCondition)->Arg(200)->Arg(600)->Unit(benchmark::kMillisecond);

void BM_GpPredict(benchmark::State& state) {
  const Problem p = make_problem(state.range(0));
  const GaussianProcess gp = GaussianProcess::fit(p.x, p.y, params(), fixed());
  const Eigen::VectorXd q = p.x.row(0).transpose() * 0.5;
  for (auto _ : state) benchmark::DoNotOptimize(gp.predict(q));
}
BENCHMARK(BM_GpPredict)->Arg(200)->Arg(600)->Unit(benchmark::kMicrosecond);

void BM_GpOptimize(benchmark::State& state) {
  const Problem p = make_problem(state.range(0));
  GpFitOptions opt;
  opt.max_iterations = 10;
  for (auto _ : state) benchmark::DoNotOptimize(GaussianProcess::fit(p.x, p.y, params(), opt));
}
BENCHMARK(BM_GpOptimize)->Arg(200)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace aolcorr
