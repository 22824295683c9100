#pragma once

#include <cstdint>
#include <vector>

#include "aolcorr/config.hpp"
#include "aolcorr/vcm.hpp"

namespace aolcorr {

/// Deterministic sub-seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::string_view stream, std::uint64_t index = 0);

/// Daily F10.7 and its trailing 81-day mean covering [start - 81 d, start + days].
SpaceWeatherHistory make_space_weather(const F10Settings& s, double start_epoch, double days, std::uint64_t seed);

/// Daily log-normal AR(1) density factor with unit median.
std::shared_ptr<const DailySeries> make_density_factor(double log_sigma, double correlation_days, double start_epoch,
                                                       double days, std::uint64_t seed);

struct Population {
  std::vector<SyntheticSatellite> satellites;
  std::vector<CatalogRow> catalog;
  SpaceWeatherHistory weather;
};

/// Draws the satellite population and the shared space weather for a config.
Population make_population(const PipelineConfig& cfg);

}  // namespace aolcorr
