#include "aolcorr/hgp.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "aolcorr/error.hpp"
#include "binio.hpp"

namespace aolcorr {

namespace {

constexpr char kMagic[] = "AOLHGP01";
constexpr double kJitterLevels[] = {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
// -E[ln chi^2_1]: removes the downward bias of log squared residuals.
constexpr double kLogChiSquareBias = 1.2703628454614782;
// Var[ln chi^2_1] = pi^2 / 2, the observation noise of the log-residual targets.
constexpr double kLogChiSquareVariance = std::numbers::pi * std::numbers::pi / 2.0;
constexpr double kNoiseModelLrThreshold = 3.0;
constexpr double kFlatSignalVariance = 1e-8;

struct Evaluation {
  double lml = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd grad;  // d lml / d log-parameters
  Eigen::LLT<Eigen::MatrixXd> llt;
  Eigen::VectorXd alpha;
  double jitter = 0.0;
};

Eigen::MatrixXd se_matrix(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2, const GpParams& p) {
  const Eigen::VectorXd inv = p.theta.cwiseInverse();
  const Eigen::MatrixXd a = x1 * inv.cwiseSqrt().asDiagonal();
  const Eigen::MatrixXd b = x2 * inv.cwiseSqrt().asDiagonal();
  Eigen::MatrixXd d2 = (-2.0 * a * b.transpose()).colwise() + a.rowwise().squaredNorm();
  d2.rowwise() += b.rowwise().squaredNorm().transpose();
  return p.signal_variance * (-d2.array().max(0.0)).exp().matrix();
}

Eigen::VectorXd noise_diagonal(Eigen::Index n, const GpParams& p, const Eigen::VectorXd& point_noise) {
  return point_noise.size() > 0 ? point_noise : Eigen::VectorXd::Constant(n, p.noise_variance);
}

// Layout of the log-parameter vector: log theta (dims), log signal, [log noise].
Eigen::VectorXd pack(const GpParams& p, bool with_noise) {
  const Eigen::Index d = p.theta.size();
  Eigen::VectorXd v(d + 1 + (with_noise ? 1 : 0));
  v.head(d) = p.theta.array().log().matrix();
  v(d) = std::log(p.signal_variance);
  if (with_noise) v(d + 1) = std::log(p.noise_variance);
  return v;
}

GpParams unpack(const Eigen::VectorXd& v, const GpParams& base, bool with_noise) {
  GpParams p = base;
  const Eigen::Index d = base.theta.size();
  p.theta = v.head(d).array().exp().matrix();
  p.signal_variance = std::exp(v(d));
  if (with_noise) p.noise_variance = std::exp(v(d + 1));
  return p;
}

Evaluation evaluate(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& p,
                    const Eigen::VectorXd& point_noise, bool with_noise, bool want_grad) {
  const Eigen::Index n = x.rows();
  const Eigen::MatrixXd kse = se_matrix(x, x, p);
  Eigen::MatrixXd k = kse;
  k.diagonal() += noise_diagonal(n, p, point_noise);
  Evaluation ev;
  const double scale = std::max(1.0, k.diagonal().mean());
  bool ok = false;
  for (double j : kJitterLevels) {
    Eigen::MatrixXd kj = k;
    kj.diagonal().array() += j * scale;
    ev.llt.compute(kj);
    if (ev.llt.info() == Eigen::Success && ev.llt.matrixLLT().diagonal().minCoeff() > 0.0) {
      ev.jitter = j * scale;
      ok = true;
      break;
    }
  }
  if (!ok) throw NumericalError("gp: kernel matrix not positive definite after jitter 1e-6");
  ev.alpha = ev.llt.solve(y);
  const double log_det = 2.0 * ev.llt.matrixLLT().diagonal().array().log().sum();
  ev.lml = -0.5 * y.dot(ev.alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
  if (!want_grad) return ev;

  const Eigen::MatrixXd l_inv = ev.llt.matrixL().solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd w = ev.alpha * ev.alpha.transpose();
  w.selfadjointView<Eigen::Lower>().rankUpdate(l_inv.transpose(), -1.0);  // alpha alpha^T - K^-1
  w.triangularView<Eigen::StrictlyUpper>() = w.transpose();
  const Eigen::Index d = x.cols();
  ev.grad.resize(d + 1 + (with_noise ? 1 : 0));
  const Eigen::MatrixXd wk = w.cwiseProduct(kse);
  // sum_ij wk_ij (x_ic - x_jc)^2 = 2 sum_i x_ic^2 rowsum_i - 2 x_c^T wk x_c for symmetric wk
  const Eigen::VectorXd rowsum = wk.rowwise().sum();
  for (Eigen::Index c = 0; c < d; ++c) {
    const Eigen::VectorXd xc = x.col(c);
    const double s = 2.0 * xc.cwiseAbs2().dot(rowsum) - 2.0 * xc.dot(wk * xc);
    ev.grad(c) = 0.5 * s / p.theta(c);
  }
  ev.grad(d) = 0.5 * wk.sum();
  if (with_noise) ev.grad(d + 1) = 0.5 * p.noise_variance * w.trace();
  return ev;
}

}  // namespace

GpParams GpParams::unit(Eigen::Index dims, double noise) {
  return GpParams{Eigen::VectorXd::Ones(dims), 1.0, noise};
}

void GpParams::validate(Eigen::Index dims) const {
  if (theta.size() != dims) throw InvalidInput("gp: theta size does not match input dimension");
  if (!(theta.array() > 0.0).all() || !theta.allFinite()) throw InvalidInput("gp: theta must be positive");
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) throw InvalidInput("gp: signal variance must be > 0");
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) throw InvalidInput("gp: noise variance must be >= 0");
}

double se_kernel(const Eigen::VectorXd& a, const Eigen::VectorXd& b, const GpParams& p) {
  p.validate(a.size());
  return p.signal_variance * std::exp(-((a - b).array().square() / p.theta.array()).sum());
}

Eigen::MatrixXd kernel_matrix(const Eigen::MatrixXd& x1, const Eigen::MatrixXd& x2, const GpParams& p) {
  p.validate(x1.cols());
  if (x2.cols() != x1.cols()) throw InvalidInput("gp: input dimension mismatch");
  return se_matrix(x1, x2, p);
}

double gp_log_marginal_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& p,
                                  const Eigen::VectorXd& point_noise) {
  p.validate(x.cols());
  return evaluate(x, y, p, point_noise, false, false).lml;
}

GaussianProcess GaussianProcess::fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& init,
                                     const GpFitOptions& opt, const Eigen::VectorXd& point_noise,
                                     double prior_mean) {
  if (x.rows() < 2 || x.rows() != y.size()) throw InvalidInput("gp fit: need n >= 2 matching inputs and targets");
  if (static_cast<std::size_t>(x.rows()) > opt.max_points) {
    throw InvalidInput("gp fit: " + std::to_string(x.rows()) + " points exceed the cap of " +
                       std::to_string(opt.max_points));
  }
  if (!x.allFinite() || !y.allFinite()) throw InvalidInput("gp fit: non-finite data");
  if (point_noise.size() != 0 && (point_noise.size() != y.size() || !(point_noise.array() > 0.0).all())) {
    throw InvalidInput("gp fit: per-point noise must be positive, one per target");
  }
  init.validate(x.cols());

  GaussianProcess gp;
  gp.x_ = x;
  gp.prior_mean_ = prior_mean;
  gp.y_ = y;
  gp.point_noise_ = point_noise;
  const Eigen::VectorXd yc = y.array() - prior_mean;
  const bool with_noise = opt.optimize_noise && point_noise.size() == 0;

  GpParams p = init;
  Evaluation ev = evaluate(x, yc, p, point_noise, with_noise, opt.optimize);
  gp.lml_initial_ = ev.lml;

  if (opt.optimize) {
    // Minimize f = -lml with BFGS in log space, clamped to the box.
    Eigen::VectorXd v = pack(p, with_noise);
    Eigen::VectorXd g = -ev.grad;
    double f = -ev.lml;
    const Eigen::Index m = v.size();
    Eigen::MatrixXd h = Eigen::MatrixXd::Identity(m, m);
    auto clamp = [&](Eigen::VectorXd u) {
      return Eigen::VectorXd(u.array().max(opt.min_log_param).min(opt.max_log_param));
    };
    for (int it = 0; it < opt.max_iterations; ++it) {
      if (g.lpNorm<Eigen::Infinity>() < 1e-5) break;
      Eigen::VectorXd dir = -h * g;
      if (dir.dot(g) >= 0.0) {
        h.setIdentity();
        dir = -g;
      }
      const double max_len = dir.lpNorm<Eigen::Infinity>();
      if (max_len > 2.0) dir *= 2.0 / max_len;
      double step = 1.0;
      bool accepted = false;
      Eigen::VectorXd v_new;
      Evaluation ev_new;
      for (int ls = 0; ls < 30; ++ls, step *= 0.5) {
        v_new = clamp(v + step * dir);
        try {
          ev_new = evaluate(x, yc, unpack(v_new, p, with_noise), point_noise, with_noise, true);
        } catch (const NumericalError&) {
          continue;
        }
        if (std::isfinite(ev_new.lml) && -ev_new.lml <= f + 1e-4 * (v_new - v).dot(g)) {
          accepted = true;
          break;
        }
      }
      if (!accepted) break;
      const Eigen::VectorXd s = v_new - v;
      const Eigen::VectorXd g_new = -ev_new.grad;
      const Eigen::VectorXd yk = g_new - g;
      const double sy = s.dot(yk);
      if (sy > 1e-12) {
        const double rho = 1.0 / sy;
        const Eigen::MatrixXd id = Eigen::MatrixXd::Identity(m, m);
        h = (id - rho * s * yk.transpose()) * h * (id - rho * yk * s.transpose()) + rho * s * s.transpose();
      }
      const double f_new = -ev_new.lml;
      const bool stalled = std::abs(f - f_new) <= 1e-8 * std::max(1.0, std::abs(f));
      v = v_new;
      g = g_new;
      f = f_new;
      p = unpack(v, p, with_noise);
      ev = std::move(ev_new);
      if (stalled) break;
    }
  }
  gp.params_ = p;
  gp.llt_ = std::move(ev.llt);
  gp.alpha_ = std::move(ev.alpha);
  gp.lml_ = ev.lml;
  gp.jitter_ = ev.jitter;
  return gp;
}

GaussianPrediction GaussianProcess::predict(const Eigen::VectorXd& x, bool include_noise) const {
  if (x_.rows() == 0) throw InvalidInput("gp predict: model not fitted");
  if (x.size() != x_.cols() || !x.allFinite()) throw InvalidInput("gp predict: bad query point");
  const Eigen::VectorXd ks = se_matrix(x_, x.transpose(), params_);
  const Eigen::VectorXd v = llt_.matrixL().solve(ks);
  double var = std::max(params_.signal_variance - v.squaredNorm(), 0.0);
  if (include_noise && point_noise_.size() == 0) var += params_.noise_variance;
  var = std::max(var, std::numeric_limits<double>::min());
  return {prior_mean_ + ks.dot(alpha_), var};
}

double HeteroscedasticGp::noise_variance(const Eigen::VectorXd& x) const {
  return std::exp(noise_.predict(x, false).mean);
}

double HeteroscedasticGp::posterior_variance(const Eigen::VectorXd& x) const {
  return main_.predict(x, false).variance;
}

GaussianPrediction HeteroscedasticGp::predict(const Eigen::VectorXd& x) const {
  const GaussianPrediction latent = main_.predict(x, false);
  return {latent.mean, latent.variance + noise_variance(x)};
}

HeteroscedasticGp fit_heteroscedastic(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const GpParams& init,
                                      const HgpFitOptions& opt) {
  const GaussianProcess homoscedastic = GaussianProcess::fit(x, y, init, opt.gp);
  GaussianProcess main = homoscedastic;
  const double floor = 1e-12 * std::max(1.0, (y.array() - y.mean()).square().mean());
  GpParams noise_params = GpParams::unit(x.cols());
  noise_params.theta = main.params().theta;
  bool first_noise = true;
  GaussianProcess noise;
  HeteroscedasticGp out;
  double prev_nll = -main.log_marginal_likelihood();
  out.nll_trace.push_back(prev_nll);
  // Later rounds start from the previous optimum and need fewer steps.
  GpFitOptions refine = opt.gp;
  refine.max_iterations = std::max(1, opt.gp.max_iterations / 3);
  for (int round = 1; round <= opt.max_rounds; ++round) {
    Eigen::VectorXd z(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      const GaussianPrediction pr = main.predict(x.row(i).transpose(), false);
      const double r = y(i) - pr.mean;
      // E[r^2 + var_f] = n_i; the constant offset is exact only at zero leverage
      // and otherwise errs toward larger noise.
      z(i) = std::log(std::max(r * r + pr.variance, floor)) + kLogChiSquareBias;
    }
    const double z_mean = z.mean();
    if (first_noise) {
      const double z_var = (z.array() - z_mean).square().mean();
      noise_params.signal_variance = std::max(z_var - kLogChiSquareVariance, 0.1);
      noise_params.noise_variance = kLogChiSquareVariance;
      first_noise = false;
    }
    GpFitOptions noise_opt = round == 1 ? opt.gp : refine;
    noise_opt.optimize_noise = false;
    noise = GaussianProcess::fit(x, z, noise_params, noise_opt, {}, z_mean);
    noise_params = noise.params();
    // Keep the homoscedastic fit unless the varying noise model wins a
    // likelihood-ratio test (chi^2 with two extra parameters at 95 percent).
    const double n_pts = static_cast<double>(y.size());
    const double lml_const = -0.5 * (z.array() - z_mean).square().sum() / kLogChiSquareVariance -
                             0.5 * n_pts * std::log(2.0 * std::numbers::pi * kLogChiSquareVariance);
    if (noise.log_marginal_likelihood() - lml_const < kNoiseModelLrThreshold) {
      GpFitOptions fixed = opt.gp;
      fixed.optimize = false;
      const double n0 = homoscedastic.params().noise_variance;
      GpParams flat = noise_params;
      flat.signal_variance = kFlatSignalVariance;
      noise = GaussianProcess::fit(x, Eigen::VectorXd::Constant(y.size(), std::log(n0)), flat, fixed, {}, std::log(n0));
      main = GaussianProcess::fit(x, y, homoscedastic.params(), fixed, Eigen::VectorXd::Constant(y.size(), n0));
      out.nll_trace.push_back(-main.log_marginal_likelihood());
      out.rounds = round;
      out.converged = true;
      break;
    }

    Eigen::VectorXd point_noise(y.size());
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      point_noise(i) = std::exp(noise.predict(x.row(i).transpose(), false).mean);
    }
    main = GaussianProcess::fit(x, y, main.params(), round == 1 ? opt.gp : refine, point_noise);
    const double nll = -main.log_marginal_likelihood();
    out.nll_trace.push_back(nll);
    out.rounds = round;
    if (std::abs(nll - prev_nll) <= opt.tolerance * std::max(std::abs(prev_nll), 1e-12)) {
      out.converged = true;
      break;
    }
    prev_nll = nll;
  }
  HeteroscedasticGp result(std::move(main), std::move(noise));
  result.converged = out.converged;
  result.rounds = out.rounds;
  result.nll_trace = std::move(out.nll_trace);
  return result;
}

namespace {

nlohmann::json params_json(const GpParams& p) {
  return {{"theta", std::vector<double>(p.theta.data(), p.theta.data() + p.theta.size())},
          {"signal_variance", p.signal_variance},
          {"noise_variance", p.noise_variance}};
}

GpParams params_from_json(const nlohmann::json& j) {
  GpParams p;
  const auto theta = j.at("theta").get<std::vector<double>>();
  p.theta = Eigen::Map<const Eigen::VectorXd>(theta.data(), static_cast<Eigen::Index>(theta.size()));
  p.signal_variance = j.at("signal_variance").get<double>();
  p.noise_variance = j.at("noise_variance").get<double>();
  return p;
}

}  // namespace

void save_hgp(const std::filesystem::path& path, const HeteroscedasticGp& model,
              const std::string& normalization_json) {
  const auto& m = model.main();
  const auto& nz = model.noise_model();
  if (m.inputs().rows() == 0 || nz.inputs().rows() != m.inputs().rows()) throw InvalidInput("save_hgp: model not fitted");
  nlohmann::json header;
  header["dims"] = m.inputs().cols();
  header["n"] = m.inputs().rows();
  header["kernel"] = "squared-exponential-ard";
  header["main"] = params_json(m.params());
  header["noise"] = params_json(nz.params());
  header["noise"]["prior_mean"] = nz.prior_mean();
  header["blocks"] = {"X row-major", "Y", "log-noise targets", "main point noise"};
  header["converged"] = model.converged;
  header["rounds"] = model.rounds;
  if (!normalization_json.empty()) header["normalization"] = nlohmann::json::parse(normalization_json);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << kMagic << '\n' << header.dump() << '\n';
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> xr = m.inputs();
  binio::write_vector(out, Eigen::Map<const Eigen::VectorXd>(xr.data(), xr.size()));
  binio::write_vector(out, m.targets());
  binio::write_vector(out, nz.targets());
  binio::write_vector(out, m.point_noise());
  if (!out) throw Error("write failed for " + path.string());
}

HeteroscedasticGp load_hgp(const std::filesystem::path& path, std::string* normalization_json) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot read " + path.string());
  std::string magic, line;
  std::getline(in, magic);
  if (magic != kMagic) throw ParseError("hgp: bad magic in " + path.string(), 1);
  std::getline(in, line);
  nlohmann::json header;
  Eigen::Index dims = 0, n = 0;
  GpParams main_params, noise_params;
  double noise_mean = 0.0;
  try {
    header = nlohmann::json::parse(line);
    dims = header.at("dims").get<Eigen::Index>();
    n = header.at("n").get<Eigen::Index>();
    main_params = params_from_json(header.at("main"));
    noise_params = params_from_json(header.at("noise"));
    noise_mean = header.at("noise").at("prior_mean").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("hgp header: ") + e.what(), 2);
  }
  if (dims <= 0 || n < 2) throw ParseError("hgp: bad dimensions", 2);
  const Eigen::VectorXd flat = binio::read_vector(in, dims * n);
  const Eigen::MatrixXd x = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      flat.data(), n, dims);
  const Eigen::VectorXd y = binio::read_vector(in, n);
  const Eigen::VectorXd z = binio::read_vector(in, n);
  const Eigen::VectorXd point_noise = binio::read_vector(in, n);
  GpFitOptions fixed;
  fixed.optimize = false;
  fixed.max_points = static_cast<std::size_t>(n);
  GaussianProcess noise = GaussianProcess::fit(x, z, noise_params, fixed, {}, noise_mean);
  GaussianProcess main = GaussianProcess::fit(x, y, main_params, fixed, point_noise);
  HeteroscedasticGp model(std::move(main), std::move(noise));
  model.converged = header.value("converged", false);
  model.rounds = header.value("rounds", 0);
  if (normalization_json) {
    *normalization_json = header.contains("normalization") ? header["normalization"].dump() : std::string();
  }
  return model;
}

}  // namespace aolcorr
