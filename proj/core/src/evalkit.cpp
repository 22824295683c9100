#include "aolcorr/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>

#include <boost/math/special_functions/gamma.hpp>

#include "aolcorr/csv.hpp"
#include "aolcorr/error.hpp"

namespace aolcorr {

std::optional<double> mahalanobis_sq(const Eigen::VectorXd& e, const Eigen::MatrixXd& p) {
  if (p.rows() != p.cols() || p.rows() != e.size()) throw InvalidInput("mahalanobis_sq: dimension mismatch");
  if (!p.allFinite() || !e.allFinite()) return std::nullopt;
  const Eigen::MatrixXd sym = 0.5 * (p + p.transpose());
  const double scale = std::max(sym.trace(), 0.0);
  for (double j : {0.0, 1e-15, 1e-12, 1e-9}) {
    Eigen::MatrixXd pj = sym;
    pj.diagonal().array() += j * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(pj);
    if (llt.info() != Eigen::Success || !(llt.matrixLLT().diagonal().minCoeff() > 0.0)) continue;
    const Eigen::VectorXd w = llt.matrixL().solve(e);
    return w.squaredNorm();
  }
  return std::nullopt;
}

double chi2_cdf(double x, int dof) {
  if (dof <= 0) throw InvalidInput("chi2_cdf: dof must be > 0");
  if (x <= 0.0) return 0.0;
  if (std::isinf(x)) return 1.0;
  return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidInput("chi2_quantile: p must be in (0, 1)");
  double lo = 0.0, hi = std::max(1.0, static_cast<double>(dof));
  while (chi2_cdf(hi, dof) < p) hi *= 2.0;
  for (int it = 0; it < 200 && hi - lo > 1e-14 * hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    (chi2_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double consistency_pct(std::span<const double> md2, int dof, double probability) {
  if (md2.empty()) throw InvalidInput("consistency_pct: no samples");
  if (dof != 1 && dof != 2 && dof != 6) throw InvalidInput("consistency_pct: dof must be 1, 2 or 6");
  const double threshold = chi2_quantile(probability, dof);
  const auto inside = std::count_if(md2.begin(), md2.end(), [&](double d) { return d < threshold; });
  return 100.0 * static_cast<double>(inside) / static_cast<double>(md2.size());
}

ErrorSigmas error_sigmas(std::span<const Vec6> errors) {
  if (errors.size() < 2) throw InvalidInput("error_sigmas: need at least two samples");
  const auto n = static_cast<double>(errors.size());
  auto stddev = [&](auto&& get) {
    double mean = 0.0;
    for (const auto& e : errors) mean += get(e);
    mean /= n;
    double ss = 0.0;
    for (const auto& e : errors) ss += (get(e) - mean) * (get(e) - mean);
    return std::sqrt(ss / (n - 1.0));
  };
  ErrorSigmas s;
  s.count = errors.size();
  for (int k = 0; k < 6; ++k) s.rsw[static_cast<std::size_t>(k)] = stddev([k](const Vec6& e) { return e(k); });
  s.norm_position = stddev([](const Vec6& e) { return e.head<3>().norm(); });
  s.norm_velocity = stddev([](const Vec6& e) { return e.tail<3>().norm(); });
  return s;
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw InvalidInput("quantile: no samples");
  if (!(p >= 0.0 && p <= 1.0)) throw InvalidInput("quantile: p must be in [0, 1]");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

LetterValueSummary letter_values(std::span<const double> samples, int depth) {
  if (samples.size() < 2) throw InvalidInput("letter_values: need at least two samples");
  if (depth < 1) throw InvalidInput("letter_values: depth must be >= 1");
  std::vector<double> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  LetterValueSummary out;
  out.count = sorted.size();
  out.median = quantile_sorted(sorted, 0.5);
  double p = 0.25;
  for (int d = 0; d < depth; ++d, p *= 0.5) {
    out.levels.push_back({p, quantile_sorted(sorted, p), quantile_sorted(sorted, 1.0 - p)});
  }
  const double iqr = out.levels.front().upper - out.levels.front().lower;
  out.lower_fence = out.levels.front().lower - 1.5 * iqr;
  out.upper_fence = out.levels.front().upper + 1.5 * iqr;
  for (double v : sorted) {
    if (v < out.lower_fence || v > out.upper_fence) out.extremes.push_back(v);
  }
  return out;
}

std::vector<DayBin> day_binned_letter_values(std::span<const double> dt_s, std::span<const double> values,
                                             int depth) {
  if (dt_s.size() != values.size()) throw InvalidInput("day bins: size mismatch");
  std::map<int, std::vector<double>> bins;
  for (std::size_t k = 0; k < dt_s.size(); ++k) {
    const double days = dt_s[k] / kSecondsPerDay;
    if (days < 0.0 || days > 7.0) continue;
    bins[std::min(static_cast<int>(std::floor(days)), 6)].push_back(values[k]);
  }
  std::vector<DayBin> out;
  for (auto& [day, v] : bins) {
    if (v.size() < 2) continue;
    out.push_back({day, letter_values(v, depth)});
  }
  return out;
}

void write_mahalanobis_cdf_csv(std::ostream& out, std::span<const double> md2, int dof) {
  if (md2.empty()) throw InvalidInput("mahalanobis cdf: no samples");
  std::vector<double> sorted(md2.begin(), md2.end());
  std::sort(sorted.begin(), sorted.end());
  out << "md2,empirical_cdf,chi2_cdf\n";
  const auto n = static_cast<double>(sorted.size());
  for (std::size_t k = 0; k < sorted.size(); ++k) {
    out << csv::format_double(sorted[k]) << ',' << csv::format_double(static_cast<double>(k + 1) / n) << ','
        << csv::format_double(chi2_cdf(sorted[k], dof)) << '\n';
  }
}

void write_day_bins_csv(std::ostream& out, std::span<const DayBin> bins) {
  out << "day,count,median,tail,lower,upper,lower_fence,upper_fence,extremes\n";
  for (const auto& b : bins) {
    for (const auto& lv : b.summary.levels) {
      out << b.day << ',' << b.summary.count << ',' << csv::format_double(b.summary.median) << ','
          << csv::format_double(lv.tail) << ',' << csv::format_double(lv.lower) << ','
          << csv::format_double(lv.upper) << ',' << csv::format_double(b.summary.lower_fence) << ','
          << csv::format_double(b.summary.upper_fence) << ',' << b.summary.extremes.size() << '\n';
    }
  }
}

}  // namespace aolcorr
