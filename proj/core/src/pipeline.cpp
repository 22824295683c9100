#include "aolcorr/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "aolcorr/corrector.hpp"
#include "aolcorr/csv.hpp"
#include "aolcorr/dataset.hpp"
#include "aolcorr/evalkit.hpp"
#include "aolcorr/hgp.hpp"
#include "aolcorr/simulation.hpp"
#include "aolcorr/tcnn.hpp"
#include "aolcorr/vcm.hpp"

namespace aolcorr {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::ostream& log_stream(const StageOptions& opt) { return opt.log ? *opt.log : std::clog; }

void info(const StageOptions& opt, const std::string& stage, const std::string& msg) {
  if (opt.verbose) log_stream(opt) << "[" << stage << "] " << msg << '\n';
}

template <class Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
  std::size_t workers = threads > 0 ? static_cast<std::size_t>(threads) : std::thread::hardware_concurrency();
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    for (std::size_t k = 0; k < n; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t k = next++; k < n; k = next++) {
        try {
          fn(k);
        } catch (...) {
          std::lock_guard lock(mu);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& p, const std::string& text) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw Error("cannot write " + p.string());
  out << text;
}

void require_file(const std::string& stage, const fs::path& p, const std::string& producer) {
  if (!fs::exists(p)) {
    throw StageError(stage, "missing artifact " + p.string() + " (produced by the " + producer + " stage)");
  }
}

// Paths of every stage artifact.
struct Layout {
  fs::path catalog, vcm_dir, dataset, split, normalization, summary, models, reports, corrected, report, manifest;

  explicit Layout(const PipelineConfig& cfg)
      : catalog(cfg.resolve(cfg.paths.catalog)),
        vcm_dir(cfg.resolve(cfg.paths.vcm_dir)),
        dataset(cfg.resolve(cfg.paths.dataset)),
        models(cfg.resolve(cfg.paths.models)),
        reports(cfg.resolve(cfg.paths.reports)) {
    split = dataset.parent_path() / artifact::kSplit;
    normalization = dataset.parent_path() / artifact::kNormalization;
    summary = reports / artifact::kDatasetSummary;
    corrected = reports / artifact::kCorrected;
    report = reports / artifact::kReport;
    manifest = cfg.paths.out_dir / artifact::kManifest;
  }

  fs::path vcm_file(int norad_id) const { return vcm_dir / (std::to_string(norad_id) + ".vcm.jsonl"); }
  fs::path model(const std::string& name) const {
    return models / (name == "tcnn" ? artifact::kTcnnModel : artifact::kHgpModel);
  }
};

void record_manifest(const PipelineConfig& cfg, const std::string& stage, const std::vector<fs::path>& inputs,
                     const std::vector<fs::path>& outputs) {
  const Layout lay(cfg);
  json m = json::object();
  if (fs::exists(lay.manifest)) {
    try {
      m = json::parse(read_text(lay.manifest));
    } catch (const json::exception&) {
      m = json::object();
    }
  }
  m["seed"] = cfg.seed;
  m["config_sha256"] = sha256_hex(config_to_json(cfg));
  auto hashes = [](const std::vector<fs::path>& files) {
    json h = json::object();
    for (const auto& f : files) h[f.generic_string()] = sha256_file(f);
    return h;
  };
  m["stages"][stage] = {{"inputs", hashes(inputs)}, {"outputs", hashes(outputs)}};
  write_text(lay.manifest, m.dump(2) + "\n");
}

std::map<int, SatelliteMeta> read_meta(const fs::path& catalog) {
  std::map<int, SatelliteMeta> meta;
  for (const auto& row : parse_catalog_file(catalog)) {
    meta[row.norad_id] = SatelliteMeta{row.norad_id, row.object_type.value_or(ObjectType::Unknown)};
  }
  return meta;
}

ErrorOptions error_options(const PipelineConfig& cfg) {
  ErrorOptions eo;
  eo.forward_horizon = cfg.horizon_days * kSecondsPerDay;
  eo.reverse_horizon = cfg.reverse_days * kSecondsPerDay;
  eo.settings = cfg.propagator;
  return eo;
}

RowSplit select_split(const PipelineConfig& cfg, const std::vector<DatasetRow>& rows, const json& split) {
  if (split.at("mode").get<std::string>() == "time") {
    return split_by_time(rows, split.at("train_end_s").get<double>());
  }
  SatelliteSplit s;
  s.train = split.at("train").get<std::vector<int>>();
  s.validation = split.at("validation").get<std::vector<int>>();
  (void)cfg;
  return apply_split(rows, s);
}

Eigen::MatrixXd tcnn_inputs(const std::vector<DatasetRow>& rows, const NormalizationStats& st) {
  Eigen::MatrixXd z(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(kFeatureCount));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const FeatureVector n = st.apply(rows[r].features);
    for (std::size_t c = 0; c < kFeatureCount; ++c) z(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = n[c];
  }
  return z;
}

Eigen::VectorXd labels(const std::vector<DatasetRow>& rows, const NormalizationStats& st) {
  Eigen::VectorXd y(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) y(static_cast<Eigen::Index>(r)) = st.normalize_label(rows[r].label);
  return y;
}

// Mean/std of the four GP inputs plus the label, stored with the GP model.
struct HgpScaling {
  std::array<double, 4> mean{}, stddev{};
  double label_mean = 0.0, label_stddev = 1.0;

  Eigen::VectorXd apply(const FeatureVector& fv) const {
    const HgpFeatures h = hgp_features(fv);
    Eigen::VectorXd x(4);
    for (int k = 0; k < 4; ++k) x(k) = (h[static_cast<std::size_t>(k)] - mean[static_cast<std::size_t>(k)]) / stddev[static_cast<std::size_t>(k)];
    return x;
  }

  json to_json() const {
    return {{"features", {"longest_reverse_du", "perigee_alt_km", "bc", "dt_prop_s"}},
            {"mean", mean},
            {"std", stddev},
            {"label", {{"mean", label_mean}, {"std", label_stddev}}}};
  }

  static HgpScaling from_json(const json& j) {
    HgpScaling s;
    s.mean = j.at("mean").get<std::array<double, 4>>();
    s.stddev = j.at("std").get<std::array<double, 4>>();
    s.label_mean = j.at("label").at("mean").get<double>();
    s.label_stddev = j.at("label").at("std").get<double>();
    return s;
  }

  static HgpScaling fit(const std::vector<DatasetRow>& rows, const NormalizationStats& st) {
    HgpScaling s;
    const auto n = static_cast<double>(rows.size());
    for (std::size_t k = 0; k < 4; ++k) {
      double sum = 0.0;
      for (const auto& r : rows) sum += hgp_features(r.features)[k];
      const double mean = sum / n;
      double ss = 0.0;
      for (const auto& r : rows) ss += std::pow(hgp_features(r.features)[k] - mean, 2);
      s.mean[k] = mean;
      s.stddev[k] = std::sqrt(ss / (n - 1.0));
      if (!(s.stddev[k] > 0.0)) s.stddev[k] = 1.0;
    }
    s.label_mean = st.label_mean;
    s.label_stddev = st.label_stddev;
    return s;
  }
};

// A loaded model mapping raw features to a denormalized AOL prediction.
struct Predictor {
  std::string name;
  std::optional<Tcnn> tcnn;
  NormalizationStats tcnn_norm;
  std::optional<HeteroscedasticGp> hgp;
  HgpScaling hgp_scale;

  GaussianPrediction predict(const FeatureVector& fv) const {
    if (tcnn) {
      const FeatureVector z = tcnn_norm.apply(fv);
      const GaussianPrediction p = tcnn->forward(z);
      return {tcnn_norm.denormalize_label(p.mean), tcnn_norm.denormalize_variance(p.variance)};
    }
    const GaussianPrediction p = hgp->predict(hgp_scale.apply(fv));
    return {p.mean * hgp_scale.label_stddev + hgp_scale.label_mean,
            p.variance * hgp_scale.label_stddev * hgp_scale.label_stddev};
  }
};

Predictor load_predictor(const std::string& name, const fs::path& path) {
  Predictor p;
  p.name = name;
  std::string norm;
  if (name == "tcnn") {
    p.tcnn = load_tcnn(path, &norm);
    if (norm.empty()) throw Error("tcnn model lacks normalization stats: " + path.string());
    p.tcnn_norm = normalization_from_json(norm);
  } else {
    p.hgp = load_hgp(path, &norm);
    if (norm.empty()) throw Error("hgp model lacks scaling: " + path.string());
    p.hgp_scale = HgpScaling::from_json(json::parse(norm));
  }
  return p;
}

std::vector<std::string> corrected_columns(const std::vector<std::string>& models) {
  std::vector<std::string> cols{"norad_id", "source_epoch_s", "target_epoch_s", "dt_s", "du_true_rad"};
  const char* comps[] = {"r", "s", "w", "vr", "vs", "vw"};
  auto add_block = [&](const std::string& prefix) {
    for (const char* c : comps) cols.push_back(prefix + "_err_" + c);
  };
  add_block("unc");
  cols.insert(cols.end(), {"unc_var_u", "unc_md2_u", "unc_md2_6d"});
  for (const auto& m : models) {
    cols.push_back(m + "_du_mean");
    cols.push_back(m + "_du_var");
    add_block(m);
    cols.insert(cols.end(), {m + "_md2_u", m + "_md2_2d", m + "_md2_6d"});
  }
  return cols;
}

double md2_or_nan(const std::optional<double>& v) { return v ? *v : std::numeric_limits<double>::quiet_NaN(); }

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr) != 1) {
    throw Error("sha256 failed");
  }
  std::ostringstream os;
  for (unsigned int k = 0; k < len; ++k) os << std::hex << std::setw(2) << std::setfill('0') << int(digest[k]);
  return os.str();
}

std::string sha256_file(const fs::path& path) { return sha256_hex(read_text(path)); }

void stage_filter_catalog(const fs::path& catalog_csv, const fs::path& out_txt, const StageOptions& opt) {
  const std::string stage = "filter-catalog";
  try {
    if (!fs::exists(catalog_csv)) throw StageError(stage, "missing input " + catalog_csv.string());
    const auto rows = parse_catalog_file(catalog_csv);
    const auto result = filter_catalog(rows);
    std::ostringstream os;
    for (int id : result.norad_ids) os << id << '\n';
    write_text(out_txt, os.str());
    info(opt, stage,
         std::to_string(result.norad_ids.size()) + " kept, " + std::to_string(result.incomplete) + " incomplete rows");
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void stage_simulate(const PipelineConfig& cfg, const StageOptions& opt) {
  const std::string stage = "simulate";
  try {
    const Layout lay(cfg);
    fs::create_directories(lay.vcm_dir);
    const Population pop = make_population(cfg);
    TrackingProfile tracking;
    tracking.cadence = cfg.simulation.cadence_hours * 3600.0;
    tracking.jitter_fraction = cfg.simulation.jitter_fraction;
    tracking.sigma_position = cfg.simulation.sigma_position_km;
    tracking.sigma_velocity = cfg.simulation.sigma_velocity_km_s;

    std::vector<std::optional<SyntheticSeries>> series(pop.satellites.size());
    parallel_for(pop.satellites.size(), cfg.threads, [&](std::size_t k) {
      const auto& sat = pop.satellites[k];
      try {
        series[k] = synthesize_vcm_series(sat, tracking, pop.weather, cfg.propagator,
                                          derive_seed(cfg.seed, "tracking", static_cast<std::uint64_t>(sat.norad_id)));
      } catch (const DecayError&) {
        series[k].reset();
      }
    });

    std::vector<CatalogRow> catalog;
    std::vector<fs::path> outputs;
    for (std::size_t k = 0; k < pop.satellites.size(); ++k) {
      if (!series[k]) {
        info(opt, stage, "satellite " + std::to_string(pop.satellites[k].norad_id) + " decayed; dropped");
        continue;
      }
      const fs::path file = lay.vcm_file(pop.satellites[k].norad_id);
      write_vcm_file(file, series[k]->records);
      outputs.push_back(file);
      catalog.push_back(pop.catalog[k]);
    }
    if (catalog.size() < 2) throw StageError(stage, "fewer than two satellites survived the simulation");
    std::ostringstream cat;
    write_catalog_csv(cat, catalog);
    write_text(lay.catalog, cat.str());
    outputs.insert(outputs.begin(), lay.catalog);
    info(opt, stage, std::to_string(catalog.size()) + " satellites written to " + lay.vcm_dir.string());
    record_manifest(cfg, stage, {}, outputs);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void stage_gen_dataset(const PipelineConfig& cfg, const StageOptions& opt) {
  const std::string stage = "gen-dataset";
  try {
    const Layout lay(cfg);
    require_file(stage, lay.catalog, "simulate");
    const auto meta = read_meta(lay.catalog);
    std::vector<int> ids;
    for (const auto& [id, _] : meta) {
      require_file(stage, lay.vcm_file(id), "simulate");
      ids.push_back(id);
    }
    const ForceConfig base = to_force_config(cfg.prediction_force);
    const ErrorOptions eo = error_options(cfg);

    std::vector<std::vector<DatasetRow>> per_sat(ids.size());
    std::vector<ErrorReport> reports(ids.size());
    parallel_for(ids.size(), cfg.threads, [&](std::size_t k) {
      const auto series = parse_vcm_file(lay.vcm_file(ids[k]));
      reports[k] = compute_errors(series, base, eo);
      per_sat[k] = assemble_rows(reports[k], series, meta.at(ids[k]));
    });

    std::vector<DatasetRow> rows;
    json summary = json::array();
    for (std::size_t k = 0; k < ids.size(); ++k) {
      rows.insert(rows.end(), per_sat[k].begin(), per_sat[k].end());
      summary.push_back({{"norad_id", ids[k]},
                         {"forward_samples", reports[k].forward.size()},
                         {"reverse_samples", reports[k].reverse.size()},
                         {"decayed", reports[k].decayed},
                         {"outliers", reports[k].outliers}});
    }
    if (rows.size() < 2) throw StageError(stage, "dataset has fewer than two samples");
    write_dataset_file(lay.dataset, rows);

    json split;
    if (cfg.split.mode == SplitMode::Time) {
      split = {{"mode", "time"}, {"train_end_s", cfg.split.train_end_days * kSecondsPerDay}};
    } else {
      const SatelliteSplit s = split_by_satellite(ids, cfg.split.train_fraction, derive_seed(cfg.seed, "split"));
      split = {{"mode", "satellite"}, {"train", s.train}, {"validation", s.validation}};
    }
    const RowSplit rs = select_split(cfg, rows, split);
    if (rs.train.size() < 2 || rs.validation.empty()) {
      throw StageError(stage, "split leaves too few training or validation samples");
    }
    split["train_samples"] = rs.train.size();
    split["validation_samples"] = rs.validation.size();
    write_text(lay.split, split.dump(2) + "\n");
    const NormalizationStats norm = fit_normalization(rs.train);
    write_text(lay.normalization, normalization_to_json(norm) + "\n");
    write_text(lay.summary, json{{"satellites", summary}, {"samples", rows.size()}}.dump(2) + "\n");
    info(opt, stage,
         std::to_string(rows.size()) + " samples, " + std::to_string(rs.train.size()) + " train / " +
             std::to_string(rs.validation.size()) + " validation");
    std::vector<fs::path> inputs{lay.catalog};
    for (int id : ids) inputs.push_back(lay.vcm_file(id));
    record_manifest(cfg, stage, inputs, {lay.dataset, lay.split, lay.normalization, lay.summary});
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void stage_train(const PipelineConfig& cfg, const StageOptions& opt) {
  const std::string stage = "train";
  try {
    const Layout lay(cfg);
    require_file(stage, lay.dataset, "gen-dataset");
    require_file(stage, lay.split, "gen-dataset");
    require_file(stage, lay.normalization, "gen-dataset");
    const auto rows = read_dataset_file(lay.dataset);
    const RowSplit rs = select_split(cfg, rows, json::parse(read_text(lay.split)));
    const std::string norm_text = read_text(lay.normalization);
    const NormalizationStats norm = normalization_from_json(norm_text);
    fs::create_directories(lay.models);
    std::vector<fs::path> outputs;

    if (cfg.uses_model("tcnn")) {
      TcnnArchitecture arch;
      arch.inputs = static_cast<int>(kFeatureCount);
      arch.hidden = cfg.tcnn.hidden;
      arch.activation = parse_activation(cfg.tcnn.activation);
      Tcnn model(arch, derive_seed(cfg.seed, "tcnn-init"));
      TcnnTrainOptions to;
      to.max_epochs = cfg.tcnn.max_epochs;
      to.batch_size = cfg.tcnn.batch_size;
      to.adam.learning_rate = cfg.tcnn.learning_rate;
      to.patience = cfg.tcnn.patience;
      to.holdout_fraction = cfg.tcnn.holdout_fraction;
      to.beta_nll = cfg.tcnn.beta_nll;
      to.seed = derive_seed(cfg.seed, "tcnn-train");
      for (const auto& r : rs.train) to.groups.push_back(r.norad_id);
      const auto result = train_tcnn(model, tcnn_inputs(rs.train, norm), labels(rs.train, norm), to);
      save_tcnn(lay.model("tcnn"), model, norm_text);
      std::ostringstream loss;
      loss << "epoch,train_nll,holdout_nll\n";
      for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
        loss << e << ',' << csv::format_double(result.train_loss[e]) << ','
             << (e < result.holdout_loss.size() ? csv::format_double(result.holdout_loss[e]) : std::string()) << '\n';
      }
      write_text(lay.models / artifact::kTcnnLoss, loss.str());
      outputs.push_back(lay.model("tcnn"));
      outputs.push_back(lay.models / artifact::kTcnnLoss);
      info(opt, stage,
           "tcnn: " + std::to_string(result.train_loss.size()) + " epochs, best " + std::to_string(result.best_epoch));
    }

    if (cfg.uses_model("hgp")) {
      const std::size_t stride =
          std::max(cfg.hgp.downsample_every, (rs.train.size() + cfg.hgp.max_points - 1) / cfg.hgp.max_points);
      const auto sub = downsample_every_n(rs.train, stride);
      const HgpScaling scale = HgpScaling::fit(rs.train, norm);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(sub.size()), 4);
      Eigen::VectorXd y(static_cast<Eigen::Index>(sub.size()));
      for (std::size_t r = 0; r < sub.size(); ++r) {
        x.row(static_cast<Eigen::Index>(r)) = scale.apply(sub[r].features).transpose();
        y(static_cast<Eigen::Index>(r)) = norm.normalize_label(sub[r].label);
      }
      HgpFitOptions ho;
      ho.gp.max_points = cfg.hgp.max_points;
      ho.gp.max_iterations = cfg.hgp.max_iterations;
      ho.max_rounds = cfg.hgp.max_rounds;
      const auto model = fit_heteroscedastic(x, y, GpParams::unit(4, 0.1), ho);
      save_hgp(lay.model("hgp"), model, scale.to_json().dump());
      outputs.push_back(lay.model("hgp"));
      info(opt, stage,
           "hgp: " + std::to_string(sub.size()) + " points (stride " + std::to_string(stride) + "), " +
               std::to_string(model.rounds) + " rounds" + (model.converged ? "" : " (not converged)"));
    }
    record_manifest(cfg, stage, {lay.dataset, lay.split, lay.normalization}, outputs);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void stage_correct(const PipelineConfig& cfg, const StageOptions& opt) {
  const std::string stage = "correct";
  try {
    const Layout lay(cfg);
    require_file(stage, lay.dataset, "gen-dataset");
    require_file(stage, lay.split, "gen-dataset");
    std::vector<Predictor> predictors;
    std::vector<fs::path> inputs{lay.dataset, lay.split};
    for (const auto& m : cfg.models) {
      require_file(stage, lay.model(m), "train");
      predictors.push_back(load_predictor(m, lay.model(m)));
      inputs.push_back(lay.model(m));
    }
    const auto rows = read_dataset_file(lay.dataset);
    const RowSplit rs = select_split(cfg, rows, json::parse(read_text(lay.split)));

    // Validation rows grouped by satellite, then by source epoch.
    std::map<int, std::map<double, std::vector<const DatasetRow*>>> groups;
    for (const auto& r : rs.validation) groups[r.norad_id][r.source_epoch].push_back(&r);
    std::vector<int> ids;
    for (const auto& [id, _] : groups) {
      require_file(stage, lay.vcm_file(id), "simulate");
      ids.push_back(id);
      inputs.push_back(lay.vcm_file(id));
    }

    const ForceConfig base = to_force_config(cfg.prediction_force);
    const std::vector<std::string> cols = corrected_columns(cfg.models);
    std::vector<std::string> chunks(ids.size());
    parallel_for(ids.size(), cfg.threads, [&](std::size_t k) {
      const auto series = parse_vcm_file(lay.vcm_file(ids[k]));
      std::map<double, const VcmRecord*> by_epoch;
      for (const auto& rec : series) by_epoch[rec.epoch] = &rec;
      std::ostringstream out;
      for (const auto& [src_epoch, group] : groups.at(ids[k])) {
        const auto src_it = by_epoch.find(src_epoch);
        if (src_it == by_epoch.end()) throw Error("source epoch not found in VCM series");
        const VcmRecord src = floor_velocity_sigmas(*src_it->second);
        const Covariance6 p0 = rsw_sigmas_to_eci_cov(src);
        const Covariance6 p_rsw0 = rsw_sigmas_to_rsw_cov(src);
        std::vector<double> epochs;
        for (const auto* r : group) epochs.push_back(r->target_epoch);
        const auto stm = propagate_stm_to_epochs(src.state(), prediction_force(src, base), cfg.propagator, epochs,
                                                 src.space_weather());
        for (std::size_t t = 0; t < group.size(); ++t) {
          if (!stm[t]) continue;
          const DatasetRow& row = *group[t];
          const auto tgt_it = by_epoch.find(row.target_epoch);
          if (tgt_it == by_epoch.end()) throw Error("target epoch not found in VCM series");
          const StateVector ref = tgt_it->second->state();
          const StateVector& prop = stm[t]->state;
          const Mat6 p_prop = symmetrize(stm[t]->stm * p0.matrix * stm[t]->stm.transpose());
          const RotationEciRsw rot_ref = eci_to_rsw(ref);
          const Mat6 r6 = rot_ref.block();

          const Vec6 e_unc = ref.stacked() - prop.stacked();
          const Mat6 p_prop_rsw = r6 * p_prop * r6.transpose();
          const double r_norm = prop.position.norm();
          const double var_u_unc = p_prop_rsw(kAlongTrackPos, kAlongTrackPos) / (r_norm * r_norm);
          out << row.norad_id << ',' << csv::format_double(row.source_epoch) << ','
              << csv::format_double(row.target_epoch) << ',' << csv::format_double(row.target_epoch - row.source_epoch)
              << ',' << csv::format_double(row.label);
          const Vec6 e_unc_rsw = r6 * e_unc;
          for (int c = 0; c < 6; ++c) out << ',' << csv::format_double(e_unc_rsw(c));
          out << ',' << csv::format_double(var_u_unc) << ','
              << csv::format_double(row.label * row.label / var_u_unc) << ','
              << csv::format_double(md2_or_nan(mahalanobis_sq(e_unc, p_prop)));

          for (const auto& pred : predictors) {
            const GaussianPrediction g = pred.predict(row.features);
            CorrectionInputs in;
            in.propagated = prop;
            in.propagated_cov = Covariance6{p_prop, Frame::Eci};
            in.prediction = g;
            in.initial_rsw_cov = p_rsw0;
            in.alpha = cfg.alpha;
            out << ',' << csv::format_double(g.mean) << ',' << csv::format_double(g.variance);
            std::optional<CorrectionResult> res;
            try {
              res = correct(in);
            } catch (const Error&) {
              res.reset();
            }
            const double nan = std::numeric_limits<double>::quiet_NaN();
            if (!res) {
              for (int c = 0; c < 9; ++c) out << ',' << csv::format_double(nan);
              continue;
            }
            const Vec6 e_cor = ref.stacked() - res->state.stacked();
            const Vec6 e_cor_rsw = r6 * e_cor;
            for (int c = 0; c < 6; ++c) out << ',' << csv::format_double(e_cor_rsw(c));
            const double du_res = row.label - g.mean;
            const Mat6 p_cor_rsw = r6 * res->covariance.matrix * r6.transpose();
            Eigen::Vector2d e2(e_cor_rsw(kAlongTrackPos), e_cor_rsw(kRadialVel));
            const Eigen::Matrix2d p2 = marginal_2d(Covariance6{p_cor_rsw, Frame::Rsw});
            out << ',' << csv::format_double(du_res * du_res / g.variance) << ','
                << csv::format_double(md2_or_nan(mahalanobis_sq(e2, p2))) << ','
                << csv::format_double(md2_or_nan(mahalanobis_sq(e_cor, res->covariance.matrix)));
          }
          out << '\n';
        }
      }
      chunks[k] = out.str();
    });

    std::ostringstream all;
    for (std::size_t c = 0; c < cols.size(); ++c) all << (c ? "," : "") << cols[c];
    all << '\n';
    for (const auto& ch : chunks) all << ch;
    fs::create_directories(lay.reports);
    write_text(lay.corrected, all.str());
    info(opt, stage, "corrected samples written to " + lay.corrected.string());
    record_manifest(cfg, stage, inputs, {lay.corrected});
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

namespace {

struct Table {
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<double>> rows;

  const std::vector<double>& row(std::size_t r) const { return rows[r]; }
  double at(std::size_t r, const std::string& col) const { return rows[r][index.at(col)]; }
  bool has(const std::string& col) const { return index.count(col) > 0; }
};

Table read_table(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  std::string line;
  if (!csv::read_line(in, line)) throw ParseError("empty file " + path.string(), 1);
  Table t;
  const auto header = csv::split_line(line);
  for (std::size_t k = 0; k < header.size(); ++k) t.index[header[k]] = k;
  long n = 1;
  while (csv::read_line(in, line)) {
    ++n;
    if (line.empty()) continue;
    const auto f = csv::split_line(line);
    if (f.size() != header.size()) throw ParseError("wrong number of fields in " + path.string(), n);
    std::vector<double> v(f.size());
    for (std::size_t k = 0; k < f.size(); ++k) v[k] = csv::parse_double(f[k]);
    t.rows.push_back(std::move(v));
  }
  return t;
}

json sigma_json(const ErrorSigmas& s) {
  return {{"sigma_R_r_km", s.rsw[0]},          {"sigma_R_s_km", s.rsw[1]},
          {"sigma_R_w_km", s.rsw[2]},          {"sigma_V_r_m_s", s.rsw[3] * 1e3},
          {"sigma_V_s_m_s", s.rsw[4] * 1e3},   {"sigma_V_w_m_s", s.rsw[5] * 1e3},
          {"sigma_norm_R_km", s.norm_position}, {"sigma_norm_V_m_s", s.norm_velocity * 1e3},
          {"count", s.count}};
}

}  // namespace

void stage_evaluate(const PipelineConfig& cfg, const StageOptions& opt) {
  const std::string stage = "evaluate";
  try {
    const Layout lay(cfg);
    for (const auto& m : cfg.models) require_file(stage, lay.model(m), "train");
    require_file(stage, lay.corrected, "correct");
    const Table t = read_table(lay.corrected);
    for (const auto& m : cfg.models) {
      if (!t.has(m + "_md2_6d")) throw StageError(stage, lay.corrected.string() + " has no columns for " + m);
    }
    if (t.rows.size() < 2) throw StageError(stage, "fewer than two corrected samples");

    const double horizon_start = (cfg.horizon_days - 1.0) * kSecondsPerDay;
    std::vector<double> dt;
    for (std::size_t r = 0; r < t.rows.size(); ++r) dt.push_back(t.at(r, "dt_s"));

    json report;
    report["samples"] = t.rows.size();
    report["thresholds"] = {{"chi2_99_dof1", chi2_quantile(0.99, 1)},
                            {"chi2_99_dof2", chi2_quantile(0.99, 2)},
                            {"chi2_99_dof6", chi2_quantile(0.99, 6)}};
    std::vector<fs::path> outputs{lay.report};

    auto block = [&](const std::string& prefix, bool corrected) {
      std::vector<Vec6> errors, errors_horizon;
      std::vector<double> md_u, md_2d, md_6d, residual_u;
      std::size_t excluded = 0;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        Vec6 e;
        const char* comps[] = {"r", "s", "w", "vr", "vs", "vw"};
        for (int c = 0; c < 6; ++c) e(c) = t.at(r, prefix + "_err_" + comps[c]);
        if (!e.allFinite()) {
          ++excluded;
          continue;
        }
        errors.push_back(e);
        if (dt[r] >= horizon_start) errors_horizon.push_back(e);
        const double mu = t.at(r, prefix + "_md2_u");
        const double m6 = t.at(r, prefix + "_md2_6d");
        if (std::isfinite(mu)) md_u.push_back(mu);
        if (std::isfinite(m6)) md_6d.push_back(m6);
        else ++excluded;
        if (corrected) {
          const double m2 = t.at(r, prefix + "_md2_2d");
          if (std::isfinite(m2)) md_2d.push_back(m2);
          residual_u.push_back(t.at(r, "du_true_rad") - t.at(r, prefix + "_du_mean"));
        } else {
          residual_u.push_back(t.at(r, "du_true_rad"));
        }
      }
      json b = sigma_json(error_sigmas(errors));
      if (errors_horizon.size() >= 2) b["final_day"] = sigma_json(error_sigmas(errors_horizon));
      b["pct_D_u"] = consistency_pct(md_u, 1);
      b["pct_D_6d"] = consistency_pct(md_6d, 6);
      if (corrected && !md_2d.empty()) b["pct_D_2d"] = consistency_pct(md_2d, 2);
      b["excluded"] = excluded;
      const fs::path cdf6 = lay.reports / ("cdf_md2_6d_" + prefix + ".csv");
      const fs::path cdfu = lay.reports / ("cdf_md2_u_" + prefix + ".csv");
      const fs::path bins = lay.reports / ("aol_error_by_day_" + prefix + ".csv");
      std::ostringstream a, c, d;
      write_mahalanobis_cdf_csv(a, md_6d, 6);
      write_mahalanobis_cdf_csv(c, md_u, 1);
      std::vector<double> dt_kept;
      for (std::size_t r = 0; r < t.rows.size(); ++r) {
        if (std::isfinite(t.at(r, prefix + "_err_r"))) dt_kept.push_back(dt[r]);
      }
      write_day_bins_csv(d, day_binned_letter_values(dt_kept, residual_u, 4));
      write_text(cdf6, a.str());
      write_text(cdfu, c.str());
      write_text(bins, d.str());
      outputs.insert(outputs.end(), {cdf6, cdfu, bins});
      return b;
    };

    report["uncorrected"] = block("unc", false);
    for (const auto& m : cfg.models) report[m] = block(m, true);
    write_text(lay.report, report.dump(2) + "\n");
    info(opt, stage, "report written to " + lay.report.string());
    std::vector<fs::path> inputs{lay.corrected};
    for (const auto& m : cfg.models) inputs.push_back(lay.model(m));
    record_manifest(cfg, stage, inputs, outputs);
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"simulate", "gen-dataset", "train", "correct", "evaluate"};
  return names;
}

void run_stage(const std::string& name, const PipelineConfig& cfg, const StageOptions& opt) {
  if (name == "simulate") stage_simulate(cfg, opt);
  else if (name == "gen-dataset") stage_gen_dataset(cfg, opt);
  else if (name == "train") stage_train(cfg, opt);
  else if (name == "correct") stage_correct(cfg, opt);
  else if (name == "evaluate") stage_evaluate(cfg, opt);
  else throw InvalidInput("unknown stage '" + name + "'");
}

void run_all(const PipelineConfig& cfg, const StageOptions& opt) {
  fs::create_directories(cfg.paths.out_dir);
  for (const auto& s : stage_names()) run_stage(s, cfg, opt);
}

}  // namespace aolcorr
