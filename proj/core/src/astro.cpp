#include "aolcorr/astro.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "aolcorr/error.hpp"

namespace aolcorr {

Vec6 StateVector::stacked() const {
  Vec6 rv;
  rv << position, velocity;
  return rv;
}

StateVector StateVector::from_stacked(double epoch, const Vec6& rv) {
  return StateVector{epoch, rv.head<3>(), rv.tail<3>()};
}

bool is_valid_leo(const StateVector& s) {
  const double r = s.position.norm();
  const double v = s.velocity.norm();
  return std::isfinite(r) && std::isfinite(v) && r > kEarthRadius && v > 0.0 && v < 11.0;
}

double OsculatingElements::aol() const { return wrap_two_pi(argp + true_anomaly); }

double OsculatingElements::semi_latus_rectum() const { return a * (1.0 - e * e); }

double OsculatingElements::angular_momentum() const { return std::sqrt(kMu * semi_latus_rectum()); }

double OsculatingElements::radius() const {
  return semi_latus_rectum() / (1.0 + e * std::cos(true_anomaly));
}

double OsculatingElements::perigee_altitude() const { return a * (1.0 - e) - kEarthRadius; }

Mat6 RotationEciRsw::block() const {
  Mat6 out = Mat6::Zero();
  out.topLeftCorner<3, 3>() = matrix;
  out.bottomRightCorner<3, 3>() = matrix;
  return out;
}

double wrap_two_pi(double angle) {
  double out = std::fmod(angle, kTwoPi);
  if (out < 0.0) out += kTwoPi;
  // fmod of a value just below 0 can round back up to 2pi
  if (out >= kTwoPi) out = 0.0;
  return out;
}

double wrap_angle_diff(double u1, double u2) {
  double d = std::fmod(u1 - u2, kTwoPi);
  if (d > kPi) d -= kTwoPi;
  if (d <= -kPi) d += kTwoPi;
  return d;
}

double unwrap_near(double angle, double reference) {
  return reference + wrap_angle_diff(angle, reference);
}

namespace {

// Signed angle from `from` to `to` about `axis` (all in the same plane).
double plane_angle(const Vec3& from, const Vec3& to, const Vec3& axis) {
  return std::atan2(from.cross(to).dot(axis), from.dot(to));
}

}  // namespace

OsculatingElements cart_to_elements(const StateVector& s) {
  const Vec3& r = s.position;
  const Vec3& v = s.velocity;
  const double rn = r.norm();
  const double v2 = v.squaredNorm();
  if (!(rn > 0.0) || !std::isfinite(rn) || !std::isfinite(v2)) {
    throw InvalidInput("cart_to_elements: non-finite or zero position");
  }

  const double energy = 0.5 * v2 - kMu / rn;
  if (!(energy < 0.0)) {
    std::ostringstream os;
    os << "cart_to_elements: state is not elliptical (specific energy " << energy << " km^2/s^2)";
    throw InvalidInput(os.str());
  }

  const Vec3 h = r.cross(v);
  const double hn = h.norm();
  if (hn <= 0.0) throw InvalidInput("cart_to_elements: rectilinear state (r parallel to v)");
  const Vec3 h_hat = h / hn;

  const Vec3 e_vec = ((v2 - kMu / rn) * r - r.dot(v) * v) / kMu;

  OsculatingElements el;
  el.a = -kMu / (2.0 * energy);
  el.e = e_vec.norm();
  el.i = std::acos(std::clamp(h_hat.z(), -1.0, 1.0));

  Vec3 node(-h.y(), h.x(), 0.0);
  Vec3 node_hat;
  if (el.i < kDegenerateAngleTol || node.norm() < kDegenerateAngleTol * hn) {
    el.raan = 0.0;
    node_hat = Vec3::UnitX();
  } else {
    node_hat = node.normalized();
    el.raan = wrap_two_pi(std::atan2(node_hat.y(), node_hat.x()));
  }

  if (el.e < kDegenerateAngleTol) {
    el.argp = 0.0;
    el.true_anomaly = wrap_two_pi(plane_angle(node_hat, r, h_hat));
  } else {
    el.argp = wrap_two_pi(plane_angle(node_hat, e_vec, h_hat));
    el.true_anomaly = wrap_two_pi(plane_angle(e_vec, r, h_hat));
  }
  return el;
}

StateVector elements_to_cart(const OsculatingElements& el, double epoch) {
  if (!(el.a > 0.0) || !(el.e >= 0.0 && el.e < 1.0)) {
    throw InvalidInput("elements_to_cart: requires a > 0 and 0 <= e < 1");
  }
  const double p = el.semi_latus_rectum();
  const double cf = std::cos(el.true_anomaly);
  const double sf = std::sin(el.true_anomaly);
  const double r = p / (1.0 + el.e * cf);
  const double vk = std::sqrt(kMu / p);

  const Vec3 r_pf(r * cf, r * sf, 0.0);
  const Vec3 v_pf(-vk * sf, vk * (el.e + cf), 0.0);

  const Mat3 rot = (Eigen::AngleAxisd(el.raan, Vec3::UnitZ()) * Eigen::AngleAxisd(el.i, Vec3::UnitX()) *
                    Eigen::AngleAxisd(el.argp, Vec3::UnitZ()))
                       .toRotationMatrix();
  return StateVector{epoch, rot * r_pf, rot * v_pf};
}

RotationEciRsw eci_to_rsw(const StateVector& s) {
  const Vec3& r = s.position;
  const Vec3& v = s.velocity;
  const double rn = r.norm();
  const Vec3 h = r.cross(v);
  const double hn = h.norm();
  if (!(rn > 0.0) || !(hn > 1e-12 * rn * v.norm())) {
    throw InvalidInput("eci_to_rsw: position and velocity must be nonzero and non-parallel");
  }
  const Vec3 radial = r / rn;
  const Vec3 cross = h / hn;
  const Vec3 along = cross.cross(radial);

  RotationEciRsw out;
  out.matrix.row(0) = radial.transpose();
  out.matrix.row(1) = along.transpose();
  out.matrix.row(2) = cross.transpose();
  return out;
}

}  // namespace aolcorr
