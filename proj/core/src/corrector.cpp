#include "aolcorr/corrector.hpp"

#include <cmath>
#include <sstream>

#include "aolcorr/error.hpp"

namespace aolcorr {

namespace {

constexpr double kMaxInnovationCondition = 1e12;

Eigen::Matrix2d inverse_2x2(const Eigen::Matrix2d& m) {
  const Eigen::Matrix2d sym = 0.5 * (m + m.transpose());
  const double det = sym.determinant();
  // The two axes carry km^2 and (km/s)^2, so the condition number is taken
  // on the diagonally scaled (correlation) matrix.
  double corr = 0.0, lmin = 0.0, lmax = 0.0;
  if (sym(0, 0) > 0.0 && sym(1, 1) > 0.0) {
    corr = std::abs(sym(0, 1)) / std::sqrt(sym(0, 0) * sym(1, 1));
    lmin = 1.0 - corr;
    lmax = 1.0 + corr;
  }
  if (!(lmin > 0.0) || !(lmax / lmin <= kMaxInnovationCondition) || !(det > 0.0) || !std::isfinite(det)) {
    std::ostringstream os;
    os << "correct: innovation covariance is singular or ill-conditioned (diagonal " << sym(0, 0) << ", "
       << sym(1, 1) << ", correlation " << corr << ")";
    throw NumericalError(os.str());
  }
  Eigen::Matrix2d inv;
  inv << sym(1, 1), -sym(0, 1), -sym(1, 0), sym(0, 0);
  return inv / det;
}

}  // namespace

Eigen::Matrix2d marginal_2d(const Covariance6& p_rsw) {
  Eigen::Matrix2d m;
  m << p_rsw.matrix(kAlongTrackPos, kAlongTrackPos), p_rsw.matrix(kAlongTrackPos, kRadialVel),
      p_rsw.matrix(kRadialVel, kAlongTrackPos), p_rsw.matrix(kRadialVel, kRadialVel);
  return m;
}

CorrectionResult correct(const CorrectionInputs& in) {
  if (!(in.alpha > 0.0)) throw InvalidInput("correct: alpha must be > 0");
  if (in.propagated_cov.frame != Frame::Eci) throw InvalidInput("correct: propagated covariance must be ECI");
  if (in.initial_rsw_cov.frame != Frame::Rsw) throw InvalidInput("correct: initial covariance must be RSW");
  if (!(in.prediction.variance >= 0.0) || !std::isfinite(in.prediction.mean)) {
    throw InvalidInput("correct: prediction must have finite mean and non-negative variance");
  }
  in.propagated_cov.validate();
  in.initial_rsw_cov.validate();

  const OsculatingElements el = cart_to_elements(in.propagated);
  const RotationEciRsw rot = eci_to_rsw(in.propagated);
  const Mat6 r6 = rot.block();
  const AolCorrection aol{in.prediction.mean, in.prediction.variance, el};

  CorrectionResult out;
  const Vec6 delta = map_error_to_rsw(aol).stacked();
  out.state = StateVector::from_stacked(in.propagated.epoch, in.propagated.stacked() + r6.transpose() * delta);

  out.rsw_cov = Covariance6{symmetrize(map_var_to_rsw(aol).matrix + in.initial_rsw_cov.matrix), Frame::Rsw};

  Mat6 select = Mat6::Zero();
  select(kAlongTrackPos, kAlongTrackPos) = 1.0;
  select(kRadialVel, kRadialVel) = 1.0;
  const Mat6 q_rsw = in.alpha * select * out.rsw_cov.matrix * select;
  const Mat6 p_prior = symmetrize(in.propagated_cov.matrix + r6.transpose() * q_rsw * r6);
  out.inflated_cov = p_prior;

  Eigen::Matrix<double, 2, 6> pick = Eigen::Matrix<double, 2, 6>::Zero();
  pick(0, kAlongTrackPos) = 1.0;
  pick(1, kRadialVel) = 1.0;
  const Eigen::Matrix<double, 2, 6> h = pick * rot.block();
  const Eigen::Matrix2d meas = marginal_2d(out.rsw_cov);

  const Eigen::Matrix2d innovation = h * p_prior * h.transpose() + meas;
  const Eigen::Matrix<double, 6, 2> gain = p_prior * h.transpose() * inverse_2x2(innovation);
  const Mat6 ikh = Mat6::Identity() - gain * h;
  const Mat6 post = ikh * p_prior * ikh.transpose() + gain * meas * gain.transpose();
  out.covariance = Covariance6{symmetrize(post), Frame::Eci};
  return out;
}

}  // namespace aolcorr
