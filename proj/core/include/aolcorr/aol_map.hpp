#pragma once

#include "aolcorr/astro.hpp"
#include "aolcorr/propagator.hpp"

namespace aolcorr {

/// Scalar AOL error and variance attached to the propagated osculating
/// elements it applies to.
struct AolCorrection {
  double delta_u = 0.0;  // rad
  double var_u = 0.0;    // rad^2
  OsculatingElements elements;
};

struct RswDelta {
  Vec3 position = Vec3::Zero();  // km
  Vec3 velocity = Vec3::Zero();  // km/s
  Vec6 stacked() const;
};

/// Position/velocity offsets in RSW produced by advancing the satellite by
/// delta_u along its osculating orbit. Cross-track components are always 0.
/// Requires |delta_u| < pi/2 and 1 + e cos f > 1e-12.
RswDelta map_error_to_rsw(const AolCorrection& c);

/// d(map_error_to_rsw)/d(delta_u), stacked (position, velocity).
Vec6 jacobian_lambda(const AolCorrection& c);

/// Lambda var_u Lambda^T (rank one, RSW frame).
Covariance6 map_var_to_rsw(const AolCorrection& c);

/// R^T (Lambda var_u Lambda^T) R with R the ECI->RSW rotation.
Covariance6 map_var_to_eci(const AolCorrection& c, const RotationEciRsw& rot);

}  // namespace aolcorr
