#pragma once

#include <array>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "aolcorr/astro.hpp"

namespace aolcorr {

inline constexpr double kConsistencyProbability = 0.99;

/// e^T P^-1 e via Cholesky after symmetrization; a diagonal jitter of up to
/// 1e-9 * trace(P) is tried. nullopt when P is still not positive definite.
std::optional<double> mahalanobis_sq(const Eigen::VectorXd& e, const Eigen::MatrixXd& p);

double chi2_cdf(double x, int dof);
/// Inverse chi-square CDF by bisection on the regularized lower gamma.
double chi2_quantile(double p, int dof);

/// Percent of samples strictly below the chi-square `probability` quantile.
/// Throws InvalidInput for an empty set or dof outside {1, 2, 6}.
double consistency_pct(std::span<const double> md2, int dof, double probability = kConsistencyProbability);

struct ErrorSigmas {
  std::array<double, 6> rsw{};  // km x3, km/s x3
  double norm_position = 0.0;   // km
  double norm_velocity = 0.0;   // km/s
  std::size_t count = 0;
};

/// Sample standard deviations (n - 1) of each component and of the position
/// and velocity norms.
ErrorSigmas error_sigmas(std::span<const Vec6> errors);

/// Type-7 quantile of sorted data.
double quantile_sorted(std::span<const double> sorted, double p);

struct LetterValue {
  double tail = 0.25;  // lower probability p; upper is 1 - p
  double lower = 0.0;
  double upper = 0.0;
};

struct LetterValueSummary {
  std::size_t count = 0;
  double median = 0.0;
  std::vector<LetterValue> levels;  // p = 1/4, 1/8, ... (depth entries)
  double lower_fence = 0.0;         // q25 - 1.5 IQR
  double upper_fence = 0.0;         // q75 + 1.5 IQR
  std::vector<double> extremes;     // samples outside the fences, ascending
};

LetterValueSummary letter_values(std::span<const double> samples, int depth);

struct DayBin {
  int day = 0;  // covers [day, day + 1) days
  LetterValueSummary summary;
};

/// Groups values by floor(dt / 1 day) over [0, 7] days (dt == 7 d joins the
/// last bin); bins with fewer than two samples are omitted.
std::vector<DayBin> day_binned_letter_values(std::span<const double> dt_s, std::span<const double> values,
                                             int depth);

/// Columns: md2, empirical_cdf, chi2_cdf.
void write_mahalanobis_cdf_csv(std::ostream& out, std::span<const double> md2, int dof);

/// Columns: day, count, median, tail, lower, upper, lower_fence, upper_fence, extremes.
void write_day_bins_csv(std::ostream& out, std::span<const DayBin> bins);

}  // namespace aolcorr
