#pragma once

#include <Eigen/Dense>

namespace aolcorr {

using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat6 = Eigen::Matrix<double, 6, 6>;

inline constexpr double kMu = 398600.4418;             // km^3/s^2
inline constexpr double kEarthRadius = 6378.137;       // km
inline constexpr double kEarthRotationRate = 7.2921159e-5;  // rad/s
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kTwoPi = 2.0 * kPi;
inline constexpr double kSecondsPerDay = 86400.0;

/// Angles below this are treated as exactly zero when choosing node/perigee.
inline constexpr double kDegenerateAngleTol = 1e-9;

/// ECI state. `epoch` counts seconds from the dataset reference epoch on a
/// single continuous scale (no leap seconds).
struct StateVector {
  double epoch = 0.0;
  Vec3 position = Vec3::Zero();  // km
  Vec3 velocity = Vec3::Zero();  // km/s

  Vec6 stacked() const;
  static StateVector from_stacked(double epoch, const Vec6& rv);
};

/// True when |r| exceeds the Earth radius and 0 < |v| < 11 km/s.
bool is_valid_leo(const StateVector& s);

/// Classical osculating elements, angles in [0, 2pi).
///
/// Degenerate conventions: for e < 1e-9 the argument of perigee is 0 and the
/// true anomaly is measured from the node; for i < 1e-9 the node is placed on
/// the x axis (raan = 0). The argument of latitude stays well defined in both.
struct OsculatingElements {
  double a = 0.0;             // km
  double e = 0.0;
  double i = 0.0;             // rad
  double raan = 0.0;          // rad
  double argp = 0.0;          // rad
  double true_anomaly = 0.0;  // rad

  double aol() const;               // argp + true_anomaly mod 2pi
  double semi_latus_rectum() const;  // km
  double angular_momentum() const;   // km^2/s
  double radius() const;             // km
  double perigee_altitude() const;   // km above the reference sphere
};

/// ECI -> RSW rotation. Rows are the radial, along-track and cross-track unit
/// vectors expressed in ECI.
struct RotationEciRsw {
  Mat3 matrix = Mat3::Identity();

  Mat6 block() const;
  Vec3 to_rsw(const Vec3& v) const { return matrix * v; }
  Vec3 to_eci(const Vec3& v) const { return matrix.transpose() * v; }
  Vec6 to_rsw(const Vec6& v) const { return block() * v; }
  Vec6 to_eci(const Vec6& v) const { return block().transpose() * v; }
};

OsculatingElements cart_to_elements(const StateVector& s);
StateVector elements_to_cart(const OsculatingElements& el, double epoch = 0.0);
RotationEciRsw eci_to_rsw(const StateVector& s);

/// Reduces an angle to [0, 2pi).
double wrap_two_pi(double angle);

/// (u1 - u2) wrapped to (-pi, pi].
double wrap_angle_diff(double u1, double u2);

/// Shifts `angle` by a multiple of 2pi so that it lands closest to `reference`.
double unwrap_near(double angle, double reference);

}  // namespace aolcorr
