#include "aolcorr/simulation.hpp"

#include <cmath>
#include <random>

#include "aolcorr/error.hpp"

namespace aolcorr {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr int kF10aWindow = 81;
constexpr int kFirstNoradId = 90001;

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index) {
  std::uint64_t h = splitmix(seed);
  for (unsigned char c : stream) h = splitmix(h ^ c);
  return splitmix(h ^ index);
}

SpaceWeatherHistory make_space_weather(const F10Settings& s, double start_epoch, double days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int n_days = static_cast<int>(std::ceil(days)) + 2;
  const int total = kF10aWindow + n_days;
  auto f10 = std::make_shared<DailySeries>();
  f10->start_epoch = start_epoch - kF10aWindow * kSecondsPerDay;
  double ar = 0.0;
  for (int k = 0; k < total; ++k) {
    const double day = static_cast<double>(k - kF10aWindow);
    ar = 0.8 * ar + s.noise * gauss(rng);
    double v = s.mean + s.amplitude * std::sin(2.0 * kPi * day / s.period_days) + ar;
    if (s.shift_day >= 0.0 && day >= s.shift_day) v += s.shift_amount;
    f10->values.push_back(std::max(v, 60.0));
  }
  auto f10a = std::make_shared<DailySeries>();
  f10a->start_epoch = start_epoch;
  double sum = 0.0;
  for (int k = 0; k < total; ++k) {
    sum += f10->values[static_cast<std::size_t>(k)];
    if (k >= kF10aWindow) sum -= f10->values[static_cast<std::size_t>(k - kF10aWindow)];
    if (k >= kF10aWindow) f10a->values.push_back(sum / kF10aWindow);
  }
  return SpaceWeatherHistory{f10, f10a};
}

std::shared_ptr<const DailySeries> make_density_factor(double log_sigma, double correlation_days, double start_epoch,
                                                       double days, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const double phi = std::exp(-1.0 / correlation_days);
  const double innov = log_sigma * std::sqrt(1.0 - phi * phi);
  auto series = std::make_shared<DailySeries>();
  series->start_epoch = start_epoch;
  double x = log_sigma * gauss(rng);
  const int n = static_cast<int>(std::ceil(days)) + 2;
  for (int k = 0; k < n; ++k) {
    series->values.push_back(std::exp(x));
    x = phi * x + innov * gauss(rng);
  }
  return series;
}

Population make_population(const PipelineConfig& cfg) {
  const auto& s = cfg.simulation;
  Population pop;
  const double start = 0.0;
  const double days = s.span_days + 1.0;
  pop.weather = make_space_weather(s.f10, start, days, derive_seed(cfg.seed, "space-weather"));

  std::mt19937_64 rng(derive_seed(cfg.seed, "population"));
  auto uniform = [&](const std::array<double, 2>& r) {
    return std::uniform_real_distribution<double>(r[0], r[1])(rng);
  };
  std::uniform_real_distribution<double> angle(0.0, kTwoPi);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int k = 0; k < s.satellites; ++k) {
    SyntheticSatellite sat;
    sat.norad_id = kFirstNoradId + k;
    sat.name = "SYN-" + std::to_string(sat.norad_id);
    sat.type = unit(rng) < s.rocket_body_fraction ? ObjectType::RocketBody : ObjectType::Payload;
    const double hp = uniform(s.perigee_km);
    const double e = uniform(s.eccentricity);
    sat.elements.e = e;
    sat.elements.a = (kEarthRadius + hp) / (1.0 - e);
    sat.elements.i = uniform(s.inclination_deg) * kPi / 180.0;
    sat.elements.raan = angle(rng);
    sat.elements.argp = angle(rng);
    sat.elements.true_anomaly = angle(rng);
    sat.start_epoch = start;
    sat.span = s.span_days * kSecondsPerDay;
    sat.truth_force = to_force_config(cfg.truth_force);
    sat.truth_force.ballistic_coefficient = uniform(s.bc_m2_kg);
    if (cfg.truth_force.srp_enabled) sat.truth_force.srp_coefficient = 0.01;
    sat.truth_force.f10_series = pop.weather.f10;
    if (s.density_variability > 0.0) {
      sat.truth_force.density_factor = make_density_factor(s.density_variability, s.density_correlation_days, start,
                                                           days, derive_seed(cfg.seed, "density", sat.norad_id));
    }
    sat.reported_bc_bias = uniform(s.bc_bias);
    pop.satellites.push_back(sat);

    CatalogRow row;
    row.norad_id = sat.norad_id;
    row.object_name = sat.name;
    row.object_type = sat.type;
    row.rcs_size = RcsSize::Large;
    row.perigee_altitude = hp;
    pop.catalog.push_back(row);
  }
  return pop;
}

}  // namespace aolcorr
