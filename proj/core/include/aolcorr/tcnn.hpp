#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "aolcorr/prediction.hpp"

namespace aolcorr {

enum class Activation { Silu, Tanh };

std::string to_string(Activation a);
Activation parse_activation(const std::string& s);

struct TcnnArchitecture {
  int inputs = 31;
  std::vector<int> hidden{128, 128};
  Activation activation = Activation::Silu;
};

/// Feed-forward network with a Gaussian head: output 0 is the mean, output 1
/// the log-variance. Parameters live in one flat vector, layer by layer, each
/// layer stored as W (out x in, column-major) followed by b.
class Tcnn {
 public:
  /// Raw log-variance is clamped to this magnitude before exponentiation.
  static constexpr double kMaxLogVariance = 60.0;

  explicit Tcnn(TcnnArchitecture arch = {}, std::uint64_t seed = 0);

  const TcnnArchitecture& architecture() const { return arch_; }
  std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }
  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }

  /// Single input (length = inputs). Throws InvalidInput on bad size or
  /// non-finite values.
  GaussianPrediction forward(std::span<const double> z) const;

  /// Rows of `z` are samples. Writes means and variances.
  void forward_batch(const Eigen::MatrixXd& z, Eigen::VectorXd& mean, Eigen::VectorXd& variance) const;

  /// Mean batch NLL and its gradient w.r.t. parameters(). With beta > 0 every
  /// sample loss is weighted by variance^beta held constant.
  double loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Eigen::VectorXd& grad,
                           double beta = 0.0) const;

  /// Mean batch NLL without gradient.
  double loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) const;

 private:
  struct LayerView {
    Eigen::Index w_offset, b_offset;
    int in, out;
  };
  std::vector<LayerView> layers_;
  TcnnArchitecture arch_;
  Eigen::VectorXd params_;
};

/// 0.5 * ((y - mean)^2 / variance + ln variance).
double gaussian_nll(double mean, double variance, double y);

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

class Adam {
 public:
  explicit Adam(Eigen::Index n, AdamOptions opt = {});
  void step(Eigen::VectorXd& params, const Eigen::VectorXd& grad);
  long steps() const { return t_; }

 private:
  AdamOptions opt_;
  Eigen::VectorXd m_, v_;
  long t_ = 0;
};

struct TcnnTrainOptions {
  int max_epochs = 200;
  std::size_t batch_size = 4096;
  AdamOptions adam;
  int patience = 10;
  double holdout_fraction = 0.1;  // carved from the training rows for early stopping
  /// Optional group label per row (e.g. satellite id). When given, the
  /// holdout takes whole groups instead of individual rows.
  std::vector<int> groups;
  double beta_nll = 0.0;
  std::uint64_t seed = 0;
};

struct TcnnTrainResult {
  std::vector<double> train_loss;    // mean NLL per epoch
  std::vector<double> holdout_loss;  // empty when holdout_fraction == 0
  int best_epoch = 0;
  bool early_stopped = false;
};

/// Mini-batch Adam on normalized inputs/labels. Keeps the parameters with the
/// lowest holdout NLL. Throws NumericalError naming the step when the loss
/// becomes non-finite.
TcnnTrainResult train_tcnn(Tcnn& model, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                           const TcnnTrainOptions& opt);

/// File layout: "AOLTCNN1\n", one JSON header line (architecture, activation,
/// parameter count, optional normalization stats), then the parameters as
/// little-endian float64.
void save_tcnn(const std::filesystem::path& path, const Tcnn& model, const std::string& normalization_json = "");
Tcnn load_tcnn(const std::filesystem::path& path, std::string* normalization_json = nullptr);

}  // namespace aolcorr
