#pragma once

#include <cmath>
#include <random>

#include "aolcorr/astro.hpp"

namespace aolcorr::test {

// Random LEO element set: a in [6578, 7578] km, e in [0, 0.05], i in [0, pi].
inline OsculatingElements random_leo(std::mt19937_64& rng, double e_max = 0.05) {
  std::uniform_real_distribution<double> a(6578.0, 7578.0);
  std::uniform_real_distribution<double> e(0.0, e_max);
  std::uniform_real_distribution<double> inc(0.0, kPi);
  std::uniform_real_distribution<double> ang(0.0, kTwoPi);
  OsculatingElements el;
  el.a = a(rng);
  el.e = e(rng);
  el.i = inc(rng);
  el.raan = ang(rng);
  el.argp = ang(rng);
  el.true_anomaly = ang(rng);
  return el;
}

inline OsculatingElements circular(double a, double inc_rad, double raan = 0.0, double u = 0.0) {
  OsculatingElements el;
  el.a = a;
  el.i = inc_rad;
  el.raan = raan;
  el.true_anomaly = u;
  return el;
}

inline double deg(double d) { return d * kPi / 180.0; }

}  // namespace aolcorr::test
