#include "aolcorr/atmosphere.hpp"

namespace aolcorr {

int density_band(double altitude_km) {
  // last entry is the ceiling sentinel
  const int last = static_cast<int>(kDensityBands.size()) - 2;
  if (!(altitude_km >= kDensityBands[0].base_altitude_km)) return 0;
  for (int k = last; k >= 0; --k) {
    if (altitude_km >= kDensityBands[static_cast<std::size_t>(k)].base_altitude_km) return k;
  }
  return 0;
}

double reference_density(double altitude_km) { return reference_density_t(altitude_km, altitude_km); }

}  // namespace aolcorr
