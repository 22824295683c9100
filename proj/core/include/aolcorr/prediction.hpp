#pragma once

namespace aolcorr {

/// Univariate Gaussian over the argument-of-latitude error.
struct GaussianPrediction {
  double mean = 0.0;      // rad (or normalized units before denormalization)
  double variance = 1.0;  // rad^2
};

}  // namespace aolcorr
