#include "aolcorr/aol_map.hpp"

#include <cmath>

#include "aolcorr/error.hpp"

namespace aolcorr {

namespace {

constexpr double kMinDenominator = 1e-12;

struct Terms {
  double r, e, f, h, du, den;
};

// u - omega is the true anomaly, so every cos(u - omega) below is cos f.
Terms terms(const AolCorrection& c) {
  if (!std::isfinite(c.delta_u) || std::abs(c.delta_u) >= kPi / 2.0) {
    throw InvalidInput("aol map: |delta_u| must be below pi/2");
  }
  const auto& el = c.elements;
  Terms t{el.radius(), el.e, el.true_anomaly, el.angular_momentum(), c.delta_u, 0.0};
  t.den = 1.0 + t.e * std::cos(t.f);
  if (!(t.den > kMinDenominator)) throw InvalidInput("aol map: 1 + e cos f is too small");
  return t;
}

}  // namespace

Vec6 RswDelta::stacked() const {
  Vec6 out;
  out << position, velocity;
  return out;
}

RswDelta map_error_to_rsw(const AolCorrection& c) {
  const Terms t = terms(c);
  const double mu_h = kMu / t.h;
  RswDelta d;
  d.position.x() = t.r * (1.0 - std::cos(t.du));
  d.position.y() =
      t.r * (2.0 * std::sin(t.du) - t.e * (std::sin(-t.f - 2.0 * t.du) + std::sin(t.f))) / (2.0 * t.den);
  d.position.z() = 0.0;
  d.velocity.x() = -mu_h * std::sin(t.du);
  d.velocity.y() = mu_h *
                   (2.0 - 2.0 * std::cos(t.du) +
                    t.e * (-std::cos(-t.f - 2.0 * t.du) + 2.0 * std::cos(t.du + t.f) - std::cos(t.f))) /
                   (2.0 * t.den);
  d.velocity.z() = 0.0;
  return d;
}

Vec6 jacobian_lambda(const AolCorrection& c) {
  const Terms t = terms(c);
  const double mu_h = kMu / t.h;
  Vec6 lam;
  lam(0) = t.r * std::sin(t.du);
  lam(1) = t.r * (std::cos(t.du) + t.e * std::cos(-t.f - 2.0 * t.du)) / t.den;
  lam(2) = 0.0;
  lam(3) = -mu_h * std::cos(t.du);
  lam(4) = mu_h * (std::sin(t.du) - t.e * (std::sin(-t.f - 2.0 * t.du) + std::sin(t.du + t.f))) / t.den;
  lam(5) = 0.0;
  return lam;
}

Covariance6 map_var_to_rsw(const AolCorrection& c) {
  if (!(c.var_u >= 0.0)) throw InvalidInput("aol map: var_u must be >= 0");
  const Vec6 lam = jacobian_lambda(c);
  return Covariance6{c.var_u * lam * lam.transpose(), Frame::Rsw};
}

Covariance6 map_var_to_eci(const AolCorrection& c, const RotationEciRsw& rot) {
  const Mat6 r6 = rot.block();
  return Covariance6{symmetrize(r6.transpose() * map_var_to_rsw(c).matrix * r6), Frame::Eci};
}

}  // namespace aolcorr
