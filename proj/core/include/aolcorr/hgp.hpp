#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aolcorr/prediction.hpp"

namespace aolcorr {

/// k(a, b) = signal_variance * exp(-sum_d (a_d - b_d)^2 / theta_d).
struct GpParams {
  Eigen::VectorXd theta;        // per-dimension length parameters, > 0
  double signal_variance = 1.0;
  double noise_variance = 0.1;  // homoscedastic observation noise

  static GpParams unit(Eigen::Index dims, double noise = 0.1);
  void validate(Eigen::Index dims) const;
};

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpParams& p);
Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2, const GpParams& p);

struct GpFitOptions {
  bool optimize = true;
  bool optimize_noise = true;      // ignored when per-point noise is given
  int max_iterations = 60;
  std::size_t max_points = 4000;
  double min_log_param = -12.0;     // box on every log hyperparameter
  double max_log_param = 12.0;
};

/// Exact GP regression with zero prior mean on (centered) targets. Inputs are
/// rows of X. Per-point noise replaces the homoscedastic noise when given.
class GaussianProcess {
 public:
  GaussianProcess() = default;

  /// Optimizes hyperparameters (log space, quasi-Newton with backtracking on
  /// the analytic gradient) unless opt.optimize is false. The returned model
  /// never has a lower log marginal likelihood than `init`.
  static GaussianProcess fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& init,
                             const GpFitOptions& opt = {}, const Eigen::VectorXd& point_noise = {},
                             double prior_mean = 0.0);

  GaussianPrediction predict(const Eigen::VectorXd& x, bool include_noise = true) const;
  double log_marginal_likelihood() const { return lml_; }
  double initial_log_marginal_likelihood() const { return lml_initial_; }
  const GpParams& params() const { return params_; }
  const Eigen::MatrixXd& inputs() const { return x_; }
  const Eigen::VectorXd& targets() const { return y_; }
  const Eigen::VectorXd& point_noise() const { return point_noise_; }
  double prior_mean() const { return prior_mean_; }
  double jitter() const { return jitter_; }

 private:
  void condition();

  Eigen::MatrixXd x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd point_noise_;
  GpParams params_;
  double prior_mean_ = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double lml_ = 0.0;
  double lml_initial_ = 0.0;
  double jitter_ = 0.0;
};

/// Log marginal likelihood for fixed hyperparameters; throws NumericalError
/// if the kernel matrix stays indefinite after jitter escalation.
double gp_log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& p,
                                  const Eigen::VectorXd& point_noise = {});

struct HgpFitOptions {
  GpFitOptions gp;
  int max_rounds = 10;
  double tolerance = 1e-4;  // relative change of the main-GP negative log likelihood
};

/// Most-likely heteroscedastic GP: a main GP whose per-point noise comes from
/// a second GP fitted to log squared residuals.
class HeteroscedasticGp {
 public:
  HeteroscedasticGp() = default;
  HeteroscedasticGp(GaussianProcess main, GaussianProcess noise) : main_(std::move(main)), noise_(std::move(noise)) {}

  /// Mean and total variance (posterior plus predicted observation noise).
  GaussianPrediction predict(const Eigen::VectorXd& x) const;
  double noise_variance(const Eigen::VectorXd& x) const;
  double posterior_variance(const Eigen::VectorXd& x) const;

  const GaussianProcess& main() const { return main_; }
  const GaussianProcess& noise_model() const { return noise_; }
  bool converged = false;
  int rounds = 0;
  std::vector<double> nll_trace;

 private:
  GaussianProcess main_;
  GaussianProcess noise_;
};

HeteroscedasticGp fit_heteroscedastic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& init,
                                      const HgpFitOptions& opt = {});

/// "AOLHGP01\n", a JSON header line (dims, n, hyperparameters of both GPs,
/// noise-GP prior mean, optional normalization stats), then little-endian
/// float64 blocks: X (row-major), Y, log-noise targets.
void save_hgp(const std::filesystem::path& path, const HeteroscedasticGp& model,
              const std::string& normalization_json = "");
HeteroscedasticGp load_hgp(const std::filesystem::path& path, std::string* normalization_json = nullptr);

}  // namespace aolcorr
