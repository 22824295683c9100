#pragma once

#include <array>
#include <cmath>

namespace aolcorr {

/// One band of the piecewise-exponential reference atmosphere.
struct DensityBand {
  double base_altitude_km;
  double base_density;     // kg/m^3
  double scale_height_km;
};

/// Reference exponential atmosphere, 100 km to 1500 km. Values above 1000 km
/// extrapolate the last band.
inline constexpr std::array<DensityBand, 20> kDensityBands{{
    {100.0, 5.297e-7, 5.877},   {110.0, 9.661e-8, 7.263},   {120.0, 2.438e-8, 9.473},
    {130.0, 8.484e-9, 12.636},  {140.0, 3.845e-9, 16.149},  {150.0, 2.070e-9, 22.523},
    {180.0, 5.464e-10, 29.740}, {200.0, 2.789e-10, 37.105}, {250.0, 7.248e-11, 45.546},
    {300.0, 2.418e-11, 53.628}, {350.0, 9.518e-12, 53.298}, {400.0, 3.725e-12, 58.515},
    {450.0, 1.585e-12, 60.828}, {500.0, 6.967e-13, 63.822}, {600.0, 1.454e-13, 71.835},
    {700.0, 3.614e-14, 88.667}, {800.0, 1.170e-14, 124.64}, {900.0, 5.245e-15, 181.05},
    {1000.0, 3.019e-15, 268.00}, {1500.0, 0.0, 0.0},
}};

inline constexpr double kAtmosphereFloorKm = 100.0;
inline constexpr double kAtmosphereCeilingKm = 1500.0;

/// Index of the band containing `altitude_km`; clamps outside [100, 1500).
int density_band(double altitude_km);

/// Reference density in kg/m^3; zero above the ceiling.
double reference_density(double altitude_km);

/// Same as reference_density but generic over the scalar type so the
/// propagator can differentiate through it.
template <typename T>
T reference_density_t(const T& altitude_km, double altitude_value) {
  using std::exp;
  if (altitude_value >= kAtmosphereCeilingKm) return T(0.0);
  const DensityBand& b = kDensityBands[static_cast<std::size_t>(density_band(altitude_value))];
  return b.base_density * exp(-(altitude_km - b.base_altitude_km) / b.scale_height_km);
}

}  // namespace aolcorr
