#include "aolcorr/tcnn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aolcorr/error.hpp"
#include "binio.hpp"

namespace aolcorr {

namespace {

constexpr char kMagic[] = "AOLTCNN1";

Eigen::ArrayXXd activate(const Eigen::ArrayXXd& a, Activation act) {
  if (act == Activation::Tanh) return a.tanh();
  return a / (1.0 + (-a).exp());
}

Eigen::ArrayXXd activate_grad(const Eigen::ArrayXXd& a, Activation act) {
  if (act == Activation::Tanh) return 1.0 - a.tanh().square();
  const Eigen::ArrayXXd s = 1.0 / (1.0 + (-a).exp());
  return s * (1.0 + a * (1.0 - s));
}

}  // namespace

std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "silu"; }

Activation parse_activation(const std::string& s) {
  if (s == "silu") return Activation::Silu;
  if (s == "tanh") return Activation::Tanh;
  throw InvalidInput("unknown activation '" + s + "'");
}

double gaussian_nll(double mean, double variance, double y) {
  if (!(variance > 0.0)) throw InvalidInput("gaussian_nll: variance must be > 0");
  const double r = y - mean;
  return 0.5 * (r * r / variance + std::log(variance));
}

Tcnn::Tcnn(TcnnArchitecture arch, std::uint64_t seed) : arch_(std::move(arch)) {
  if (arch_.inputs <= 0) throw InvalidInput("tcnn: input width must be > 0");
  std::vector<int> widths{arch_.inputs};
  for (int h : arch_.hidden) {
    if (h <= 0) throw InvalidInput("tcnn: hidden widths must be > 0");
    widths.push_back(h);
  }
  widths.push_back(2);
  Eigen::Index offset = 0;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    LayerView v{offset, offset + widths[l] * widths[l + 1], widths[l], widths[l + 1]};
    offset = v.b_offset + v.out;
    layers_.push_back(v);
  }
  params_.resize(offset);

  std::mt19937_64 rng(seed);
  for (const auto& v : layers_) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(v.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index k = v.w_offset; k < v.b_offset + v.out; ++k) params_(k) = u(rng);
  }
  const auto& head = layers_.back();
  params_(head.b_offset + 1) = 0.0;  // log-variance bias: unit variance
}

void Tcnn::forward_batch(const Eigen::MatrixXd& z, Eigen::VectorXd& mean, Eigen::VectorXd& variance) const {
  if (z.cols() != arch_.inputs) throw InvalidInput("tcnn: input width mismatch");
  if (!z.allFinite()) throw InvalidInput("tcnn: non-finite input");
  Eigen::MatrixXd h = z.transpose();
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& v = layers_[l];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + v.w_offset, v.out, v.in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + v.b_offset, v.out);
    Eigen::MatrixXd a = w * h;
    a.colwise() += b;
    h = l + 1 < layers_.size() ? activate(a.array(), arch_.activation).matrix() : a;
  }
  mean = h.row(0).transpose();
  variance = h.row(1).transpose().array().max(-kMaxLogVariance).min(kMaxLogVariance).exp();
}

GaussianPrediction Tcnn::forward(std::span<const double> z) const {
  if (static_cast<int>(z.size()) != arch_.inputs) throw InvalidInput("tcnn: input width mismatch");
  Eigen::MatrixXd row = Eigen::Map<const Eigen::RowVectorXd>(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::VectorXd m, v;
  forward_batch(row, m, v);
  return {m(0), v(0)};
}

double Tcnn::loss(const Eigen::MatrixXd& z, const Eigen::VectorXd& y) const {
  Eigen::VectorXd m, v;
  forward_batch(z, m, v);
  const Eigen::ArrayXd r = y - m;
  return 0.5 * (r.square() / v.array() + v.array().log()).mean();
}

double Tcnn::loss_and_gradient(const Eigen::MatrixXd& z, const Eigen::VectorXd& y, Eigen::VectorXd& grad,
                               double beta) const {
  if (z.rows() == 0) throw InvalidInput("tcnn: empty batch");
  if (z.rows() != y.size()) throw InvalidInput("tcnn: batch/label size mismatch");
  if (z.cols() != arch_.inputs) throw InvalidInput("tcnn: input width mismatch");
  const auto n = static_cast<double>(z.rows());

  std::vector<Eigen::MatrixXd> pre, post;
  post.push_back(z.transpose());
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& v = layers_[l];
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + v.w_offset, v.out, v.in);
    Eigen::Map<const Eigen::VectorXd> b(params_.data() + v.b_offset, v.out);
    Eigen::MatrixXd a = w * post.back();
    a.colwise() += b;
    pre.push_back(a);
    if (l + 1 < layers_.size()) post.push_back(activate(a.array(), arch_.activation).matrix());
  }

  const Eigen::ArrayXd mean = pre.back().row(0).transpose();
  const Eigen::ArrayXd raw = pre.back().row(1).transpose();
  const Eigen::ArrayXd logvar = raw.max(-kMaxLogVariance).min(kMaxLogVariance);
  const Eigen::ArrayXd var = logvar.exp();
  const Eigen::ArrayXd r = y.array() - mean;
  const Eigen::ArrayXd sample_loss = 0.5 * (r.square() / var + logvar);
  const Eigen::ArrayXd weight = beta > 0.0 ? Eigen::ArrayXd(var.pow(beta)) : Eigen::ArrayXd::Ones(var.size()).eval();
  const double total = (weight * sample_loss).mean();

  Eigen::MatrixXd delta(2, z.rows());
  delta.row(0) = (weight * (-r / var) / n).matrix().transpose();
  const Eigen::ArrayXd inside = (raw.abs() < kMaxLogVariance).cast<double>();
  delta.row(1) = (weight * inside * 0.5 * (1.0 - r.square() / var) / n).matrix().transpose();

  grad.setZero(params_.size());
  for (std::size_t l = layers_.size(); l-- > 0;) {
    const auto& v = layers_[l];
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + v.w_offset, v.out, v.in);
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + v.b_offset, v.out);
    gw.noalias() = delta * post[l].transpose();
    gb = delta.rowwise().sum();
    if (l == 0) break;
    Eigen::Map<const Eigen::MatrixXd> w(params_.data() + v.w_offset, v.out, v.in);
    Eigen::MatrixXd back = w.transpose() * delta;
    delta = (back.array() * activate_grad(pre[l - 1].array(), arch_.activation)).matrix();
  }
  return total;
}

Adam::Adam(Eigen::Index n, AdamOptions opt)
    : opt_(opt), m_(Eigen::VectorXd::Zero(n)), v_(Eigen::VectorXd::Zero(n)) {}

void Adam::step(Eigen::VectorXd& params, const Eigen::VectorXd& grad) {
  if (grad.size() != m_.size() || params.size() != m_.size()) throw InvalidInput("adam: size mismatch");
  ++t_;
  m_ = opt_.beta1 * m_ + (1.0 - opt_.beta1) * grad;
  v_ = opt_.beta2 * v_ + (1.0 - opt_.beta2) * grad.cwiseAbs2();
  const double c1 = 1.0 - std::pow(opt_.beta1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(opt_.beta2, static_cast<double>(t_));
  params.array() -= opt_.learning_rate * (m_.array() / c1) / ((v_.array() / c2).sqrt() + opt_.epsilon);
}

namespace {

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& z, std::span<const std::size_t> idx) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), z.cols());
  for (std::size_t k = 0; k < idx.size(); ++k) out.row(static_cast<Eigen::Index>(k)) = z.row(static_cast<Eigen::Index>(idx[k]));
  return out;
}

Eigen::VectorXd gather(const Eigen::VectorXd& y, std::span<const std::size_t> idx) {
  Eigen::VectorXd out(static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out(static_cast<Eigen::Index>(k)) = y(static_cast<Eigen::Index>(idx[k]));
  return out;
}

}  // namespace

TcnnTrainResult train_tcnn(Tcnn& model, const Eigen::MatrixXd& z, const Eigen::VectorXd& y,
                           const TcnnTrainOptions& opt) {
  if (z.rows() < 2 || z.rows() != y.size()) throw InvalidInput("train_tcnn: need matching inputs and labels");
  if (opt.batch_size == 0 || opt.max_epochs <= 0) throw InvalidInput("train_tcnn: bad batch size or epochs");
  if (!(opt.holdout_fraction >= 0.0 && opt.holdout_fraction < 1.0)) {
    throw InvalidInput("train_tcnn: holdout fraction must be in [0, 1)");
  }
  if (!opt.groups.empty() && opt.groups.size() != static_cast<std::size_t>(z.rows())) {
    throw InvalidInput("train_tcnn: one group label per row required");
  }
  std::mt19937_64 rng(opt.seed);
  std::vector<std::size_t> hold, fit;
  if (opt.groups.empty()) {
    std::vector<std::size_t> order(static_cast<std::size_t>(z.rows()));
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    const auto n = static_cast<std::size_t>(std::floor(opt.holdout_fraction * static_cast<double>(order.size())));
    hold.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n));
    fit.assign(order.begin() + static_cast<std::ptrdiff_t>(n), order.end());
  } else {
    std::vector<int> ids(opt.groups);
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::shuffle(ids.begin(), ids.end(), rng);
    auto n = static_cast<std::size_t>(std::llround(opt.holdout_fraction * static_cast<double>(ids.size())));
    if (opt.holdout_fraction > 0.0 && ids.size() > 1) n = std::clamp<std::size_t>(n, 1, ids.size() - 1);
    const std::set<int> held(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n));
    for (std::size_t r = 0; r < opt.groups.size(); ++r) (held.count(opt.groups[r]) ? hold : fit).push_back(r);
  }
  const std::size_t n_hold = hold.size();
  const Eigen::MatrixXd z_hold = gather_rows(z, hold);
  const Eigen::VectorXd y_hold = gather(y, hold);

  Adam adam(model.parameters().size(), opt.adam);
  TcnnTrainResult result;
  Eigen::VectorXd best = model.parameters();
  double best_loss = std::numeric_limits<double>::infinity();
  int since_best = 0;
  Eigen::VectorXd grad;
  for (int epoch = 0; epoch < opt.max_epochs; ++epoch) {
    std::shuffle(fit.begin(), fit.end(), rng);
    double sum = 0.0;
    for (std::size_t start = 0; start < fit.size(); start += opt.batch_size) {
      const std::size_t stop = std::min(fit.size(), start + opt.batch_size);
      const std::span<const std::size_t> idx(fit.data() + start, stop - start);
      const double l = model.loss_and_gradient(gather_rows(z, idx), gather(y, idx), grad, opt.beta_nll);
      if (!std::isfinite(l) || !grad.allFinite()) {
        throw NumericalError("train_tcnn: loss diverged at step " + std::to_string(adam.steps() + 1));
      }
      adam.step(model.parameters(), grad);
      sum += l * static_cast<double>(idx.size());
    }
    result.train_loss.push_back(sum / static_cast<double>(fit.size()));
    const double monitor = n_hold > 0 ? model.loss(z_hold, y_hold) : result.train_loss.back();
    if (n_hold > 0) result.holdout_loss.push_back(monitor);
    if (monitor < best_loss) {
      best_loss = monitor;
      best = model.parameters();
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= opt.patience) {
      result.early_stopped = true;
      break;
    }
  }
  model.parameters() = best;
  return result;
}

void save_tcnn(const std::filesystem::path& path, const Tcnn& model, const std::string& normalization_json) {
  nlohmann::json header;
  header["inputs"] = model.architecture().inputs;
  header["hidden"] = model.architecture().hidden;
  header["outputs"] = 2;
  header["activation"] = to_string(model.architecture().activation);
  header["output_heads"] = {"mean:identity", "variance:exp"};
  header["parameter_count"] = model.parameter_count();
  header["parameter_encoding"] = "float64-le";
  if (!normalization_json.empty()) header["normalization"] = nlohmann::json::parse(normalization_json);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kMagic << '\n' << header.dump() << '\n';
  binio::write_vector(out, model.parameters());
  if (!out) throw Error("write failed for " + path.string());
}

Tcnn load_tcnn(const std::filesystem::path& path, std::string* normalization_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string magic, header_line;
  std::getline(in, magic);
  if (magic != kMagic) throw ParseError("tcnn: bad magic in " + path.string(), 1);
  std::getline(in, header_line);
  nlohmann::json header;
  TcnnArchitecture arch;
  std::size_t count = 0;
  try {
    header = nlohmann::json::parse(header_line);
    arch.inputs = header.at("inputs").get<int>();
    arch.hidden = header.at("hidden").get<std::vector<int>>();
    arch.activation = parse_activation(header.at("activation").get<std::string>());
    count = header.at("parameter_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tcnn header: ") + e.what(), 2);
  }
  Tcnn model(arch, 0);
  if (count != model.parameter_count()) throw ParseError("tcnn: parameter count does not match architecture", 2);
  model.parameters() = binio::read_vector(in, static_cast<Eigen::Index>(count));
  if (normalization_json) {
    *normalization_json = header.contains("normalization") ? header["normalization"].dump() : std::string();
  }
  return model;
}

}  // namespace aolcorr
