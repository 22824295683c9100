#include <benchmark/benchmark.h>

#include <random>

#include "aolcorr/aol_map.hpp"
#include "aolcorr/corrector.hpp"
#include "test_support.hpp"

namespace aolcorr {
namespace {

CorrectionInputs sample_inputs() {
  CorrectionInputs in;
  in.propagated = elements_to_cart(test::circular(kEarthRadius + 500.0, test::deg(51.6), 0.4, 1.0));
  const Mat6 rsw = Vec6(0.04, 1.5, 0.01, 1e-6, 2e-8, 4e-9).asDiagonal();
  const Mat6 r6 = eci_to_rsw(in.propagated).block();
  in.propagated_cov = Covariance6{symmetrize(r6.transpose() * rsw * r6), Frame::Eci};
  in.prediction = GaussianPrediction{1e-4, 1e-8};
  in.initial_rsw_cov = Covariance6{Vec6(1e-4, 1e-4, 1e-4, 1e-10, 1e-10, 1e-10).asDiagonal(), Frame::Rsw};
  in.alpha = 1e6;
  return in;
}

void BM_Correct(benchmark::State& state) {
  const CorrectionInputs in = sample_inputs();
  for (auto _ : state) benchmark::DoNotOptimize(correct(in));
}
BENCHMARK(BM_Correct);

void BM_MapErrorToRsw(benchmark::State& state) {
  const AolCorrection c{1e-4, 1e-8, cart_to_elements(sample_inputs().propagated)};
  for (auto _ : state) benchmark::DoNotOptimize(map_error_to_rsw(c));
}
BENCHMARK(BM_MapErrorToRsw);

}  // namespace
}  // namespace aolcorr
