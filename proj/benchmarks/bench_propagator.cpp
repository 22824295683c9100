#include <benchmark/benchmark.h>

#include <vector>

#include "aolcorr/propagator.hpp"
#include "test_support.hpp"

namespace aolcorr {
namespace {

StateVector leo_state() {
  return elements_to_cart(test::circular(kEarthRadius + 500.0, test::deg(51.6), 0.4, 0.0));
}

void BM_PropagateDays(benchmark::State& state) {
  const StateVector s0 = leo_state();
  const ForceConfig cfg;
  PropagatorSettings ps;
  ps.sample_interval = 0.0;
  const double t_end = static_cast<double>(state.range(0)) * kSecondsPerDay;
  for (auto _ : state) benchmark::DoNotOptimize(propagate(s0, cfg, ps, t_end).final_state());
}
BENCHMARK(BM_PropagateDays)->Arg(1)->Arg(7)->Unit(benchmark::kMillisecond);

// State plus STM at 8 h cadence over a week, as the covariance transport uses it.
void BM_PropagateStmWeek(benchmark::State& state) {
  const StateVector s0 = leo_state();
  const ForceConfig cfg;
  std::vector<double> epochs;
  for (double t = 8 * 3600.0; t <= 7 * kSecondsPerDay; t += 8 * 3600.0) epochs.push_back(t);
  for (auto _ : state) benchmark::DoNotOptimize(propagate_stm_to_epochs(s0, cfg, {}, epochs));
}
BENCHMARK(BM_PropagateStmWeek)->Unit(benchmark::kMillisecond);

void BM_Acceleration(benchmark::State& state) {
  const StateVector s = leo_state();
  const ForceConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(acceleration(s, cfg));
}
BENCHMARK(BM_Acceleration);

}  // namespace
}  // namespace aolcorr
