#pragma once

#include "aolcorr/aol_map.hpp"
#include "aolcorr/prediction.hpp"

namespace aolcorr {

inline constexpr double kDefaultInflation = 1e6;

struct CorrectionInputs {
  StateVector propagated;
  Covariance6 propagated_cov;  // ECI
  GaussianPrediction prediction;
  Covariance6 initial_rsw_cov{Mat6::Zero(), Frame::Rsw};
  double alpha = kDefaultInflation;
};

struct CorrectionResult {
  StateVector state;
  Covariance6 covariance;  // ECI, symmetrized
  Covariance6 rsw_cov;     // Lambda P_u Lambda^T + initial RSW covariance
  Mat6 inflated_cov = Mat6::Zero();  // ECI covariance after inflation, before the update
};

/// Index convention: RSW state order is (R, S, W, Rdot, Sdot, Wdot), zero
/// based, so along-track position is 1 and radial velocity is 3.
inline constexpr int kAlongTrackPos = 1;
inline constexpr int kRadialVel = 3;

/// 2x2 block of an RSW covariance on (along-track position, radial velocity).
Eigen::Matrix2d marginal_2d(const Covariance6& p_rsw);

/// Shifts the propagated state by the mapped AOL error, inflates the
/// covariance along the two correction axes by alpha, then performs a
/// Joseph-form update with the mapped AOL covariance as measurement noise.
/// Throws NumericalError when the innovation covariance, scaled to unit
/// diagonal, has a condition number above 1e12.
CorrectionResult correct(const CorrectionInputs& in);

}  // namespace aolcorr
