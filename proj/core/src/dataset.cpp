#include "aolcorr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "aolcorr/csv.hpp"
#include "aolcorr/error.hpp"

namespace aolcorr {

const std::array<std::string, kFeatureCount>& feature_names() {
  static const auto names = [] {
    std::array<std::string, kFeatureCount> n;
    for (std::size_t k = 0; k < kReverseSlots; ++k) {
      n[feat::kReverseDt + k] = "rev_dt_" + std::to_string(k);
      n[feat::kReverseAol + k] = "rev_du_" + std::to_string(k);
    }
    n[feat::kPerigeeAltitude] = "perigee_alt_km";
    n[feat::kEccentricity] = "ecc";
    n[feat::kCosTrueAnomaly] = "cos_f";
    n[feat::kCosInclination] = "cos_i";
    n[feat::kBallisticCoefficient] = "bc";
    n[feat::kF10a] = "f10a";
    n[feat::kIsPayload] = "is_payload";
    n[feat::kIsRocketBody] = "is_rocket_body";
    n[feat::kDtProp] = "dt_prop_s";
    return n;
  }();
  return names;
}

ForceConfig prediction_force(const VcmRecord& rec, const ForceConfig& base) {
  ForceConfig cfg = base;
  cfg.ballistic_coefficient = rec.ballistic_coefficient;
  if (rec.srp_coefficient > 0.0) {
    cfg.srp_enabled = true;
    cfg.srp_coefficient = rec.srp_coefficient;
  }
  if (rec.geopotential_degree == 0 || rec.geopotential_degree == 2 || rec.geopotential_degree == 3 ||
      rec.geopotential_degree == 4) {
    cfg.zonal_degree = rec.geopotential_degree;
  }
  return cfg;
}

double aol_error(const StateVector& reference, const StateVector& propagated, double previous) {
  const double u_ref = cart_to_elements(reference).aol();
  const double u_prop = cart_to_elements(propagated).aol();
  return unwrap_near(wrap_angle_diff(u_ref, u_prop), previous);
}

namespace {

ErrorSample make_sample(const VcmRecord& src, std::size_t i, const VcmRecord& tgt, std::size_t j,
                        const StateVector& prop, double previous) {
  ErrorSample s;
  s.norad_id = src.norad_id;
  s.source_index = i;
  s.target_index = j;
  s.source_epoch = src.epoch;
  s.target_epoch = tgt.epoch;
  s.dt_prop = tgt.epoch - src.epoch;
  const StateVector ref = tgt.state();
  s.aol_error = aol_error(ref, prop, previous);
  s.rsw_error = eci_to_rsw(prop).to_rsw(Vec6(ref.stacked() - prop.stacked()));
  s.elements_at_target = cart_to_elements(prop);
  return s;
}

}  // namespace

ErrorReport compute_errors(std::span<const VcmRecord> series, const ForceConfig& cfg, const ErrorOptions& opt) {
  if (series.size() < 2) throw InvalidInput("compute_errors: need at least two records");
  if (!(opt.forward_horizon > 0.0) || !(opt.reverse_horizon >= 0.0)) {
    throw InvalidInput("compute_errors: horizons must be positive");
  }
  for (std::size_t k = 1; k < series.size(); ++k) {
    if (!(series[k].epoch > series[k - 1].epoch)) throw InvalidInput("compute_errors: epochs must increase");
    if (series[k].norad_id != series[0].norad_id) throw InvalidInput("compute_errors: mixed satellites");
  }

  ErrorReport report;
  for (std::size_t i = 0; i < series.size(); ++i) {
    const VcmRecord& src = series[i];
    // Reverse targets nearest-first, then forward targets in time order.
    std::vector<std::size_t> rev, fwd;
    for (std::size_t j = i; j-- > 0;) {
      if (src.epoch - series[j].epoch > opt.reverse_horizon) break;
      rev.push_back(j);
    }
    for (std::size_t j = i + 1; j < series.size(); ++j) {
      if (series[j].epoch - src.epoch > opt.forward_horizon) break;
      fwd.push_back(j);
    }
    if (rev.empty() && fwd.empty()) continue;

    std::vector<double> epochs;
    for (auto j : rev) epochs.push_back(series[j].epoch);
    for (auto j : fwd) epochs.push_back(series[j].epoch);
    const ForceConfig force = prediction_force(src, cfg);
    const auto states = propagate_to_epochs(src.state(), force, opt.settings, epochs, src.space_weather());

    auto run = [&](const std::vector<std::size_t>& targets, std::size_t offset, std::vector<ErrorSample>& out) {
      double previous = 0.0;
      for (std::size_t k = 0; k < targets.size(); ++k) {
        const auto& st = states[offset + k];
        if (!st) {
          report.decayed += targets.size() - k;
          break;
        }
        ErrorSample s = make_sample(src, i, series[targets[k]], targets[k], *st, previous);
        previous = s.aol_error;
        if (!std::isfinite(s.aol_error) || std::abs(s.aol_error) > opt.max_abs_aol_error) {
          ++report.outliers;
          continue;
        }
        out.push_back(std::move(s));
      }
    };
    run(rev, 0, report.reverse);
    run(fwd, rev.size(), report.forward);
  }
  return report;
}

FeatureVector build_features(const ErrorSample& sample, std::span<const ErrorSample> reverse,
                             const VcmRecord& source, const SatelliteMeta& meta) {
  FeatureVector fv{};
  double last = 0.0;
  for (std::size_t k = 0; k < reverse.size(); ++k) {
    const ErrorSample& r = reverse[k];
    if (r.dt_prop > 0.0 || -r.dt_prop > kReverseHorizon * (1.0 + 1e-12)) {
      throw InvalidInput("build_features: reverse sample outside the reverse window");
    }
    if (std::abs(r.dt_prop) < last) throw InvalidInput("build_features: reverse samples must be sorted by |dt|");
    last = std::abs(r.dt_prop);
    if (k < kReverseSlots) {
      fv[feat::kReverseDt + k] = r.dt_prop;
      fv[feat::kReverseAol + k] = r.aol_error;
    }
  }
  const OsculatingElements& el = sample.elements_at_target;
  fv[feat::kPerigeeAltitude] = el.perigee_altitude();
  fv[feat::kEccentricity] = el.e;
  fv[feat::kCosTrueAnomaly] = std::cos(el.true_anomaly);
  fv[feat::kCosInclination] = std::cos(el.i);
  fv[feat::kBallisticCoefficient] = source.ballistic_coefficient;
  fv[feat::kF10a] = source.f10a;
  fv[feat::kIsPayload] = meta.type == ObjectType::Payload ? 1.0 : 0.0;
  fv[feat::kIsRocketBody] = meta.type == ObjectType::RocketBody ? 1.0 : 0.0;
  fv[feat::kDtProp] = sample.dt_prop;
  return fv;
}

HgpFeatures hgp_features(const FeatureVector& fv) {
  double du = 0.0, longest = 0.0;
  for (std::size_t k = 0; k < kReverseSlots; ++k) {
    const double dt = std::abs(fv[feat::kReverseDt + k]);
    if (dt > longest) {
      longest = dt;
      du = fv[feat::kReverseAol + k];
    }
  }
  return {du, fv[feat::kPerigeeAltitude], fv[feat::kBallisticCoefficient], fv[feat::kDtProp]};
}

std::vector<DatasetRow> assemble_rows(const ErrorReport& report, std::span<const VcmRecord> series,
                                      const SatelliteMeta& meta) {
  std::map<std::size_t, std::vector<ErrorSample>> reverse_by_source;
  for (const auto& r : report.reverse) reverse_by_source[r.source_index].push_back(r);
  for (auto& [_, v] : reverse_by_source) {
    std::stable_sort(v.begin(), v.end(),
                     [](const ErrorSample& a, const ErrorSample& b) { return std::abs(a.dt_prop) < std::abs(b.dt_prop); });
  }
  const std::vector<ErrorSample> none;
  std::vector<DatasetRow> rows;
  rows.reserve(report.forward.size());
  for (const auto& s : report.forward) {
    if (s.source_index >= series.size()) throw InvalidInput("assemble_rows: sample does not match series");
    auto it = reverse_by_source.find(s.source_index);
    const auto& rev = it == reverse_by_source.end() ? none : it->second;
    DatasetRow row;
    row.norad_id = s.norad_id;
    row.source_epoch = s.source_epoch;
    row.target_epoch = s.target_epoch;
    row.features = build_features(s, rev, series[s.source_index], meta);
    row.label = s.aol_error;
    rows.push_back(row);
  }
  return rows;
}

FeatureVector NormalizationStats::apply(const FeatureVector& x) const {
  FeatureVector z;
  for (std::size_t k = 0; k < kFeatureCount; ++k) z[k] = passthrough[k] ? x[k] : (x[k] - mean[k]) / stddev[k];
  return z;
}

FeatureVector NormalizationStats::invert(const FeatureVector& z) const {
  FeatureVector x;
  for (std::size_t k = 0; k < kFeatureCount; ++k) x[k] = passthrough[k] ? z[k] : z[k] * stddev[k] + mean[k];
  return x;
}

namespace {

// Two-pass mean / sample standard deviation.
std::pair<double, double> moments(std::span<const DatasetRow> rows, auto&& get) {
  double sum = 0.0;
  for (const auto& r : rows) sum += get(r);
  const double mean = sum / static_cast<double>(rows.size());
  double ss = 0.0;
  for (const auto& r : rows) ss += (get(r) - mean) * (get(r) - mean);
  return {mean, std::sqrt(ss / static_cast<double>(rows.size() - 1))};
}

bool is_constant(std::span<const DatasetRow> rows, auto&& get) {
  const double first = get(rows.front());
  return std::all_of(rows.begin(), rows.end(), [&](const DatasetRow& r) { return get(r) == first; });
}

}  // namespace

NormalizationStats fit_normalization(std::span<const DatasetRow> rows, const NormalizationOptions& opt) {
  if (rows.size() < 2) throw InvalidInput("fit_normalization: need at least two rows");
  NormalizationStats st;
  const auto& names = feature_names();
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    auto get = [k](const DatasetRow& r) { return r.features[k]; };
    if (k == feat::kIsPayload || k == feat::kIsRocketBody) {
      st.passthrough[k] = true;
      st.mean[k] = 0.0;
      st.stddev[k] = 1.0;
      continue;
    }
    if (is_constant(rows, get)) {
      if (opt.pass_zero_columns && get(rows.front()) == 0.0) {
        st.passthrough[k] = true;
        st.mean[k] = 0.0;
        st.stddev[k] = 1.0;
        continue;
      }
      throw InvalidInput("fit_normalization: constant column " + names[k]);
    }
    std::tie(st.mean[k], st.stddev[k]) = moments(rows, get);
  }
  auto label = [](const DatasetRow& r) { return r.label; };
  if (is_constant(rows, label)) throw InvalidInput("fit_normalization: constant column label");
  std::tie(st.label_mean, st.label_stddev) = moments(rows, label);
  return st;
}

SatelliteSplit split_by_satellite(std::span<const int> norad_ids, double train_fraction, std::uint64_t seed) {
  std::vector<int> ids(norad_ids.begin(), norad_ids.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  if (ids.size() < 2) throw InvalidInput("split_by_satellite: need at least two satellites");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw InvalidInput("split_by_satellite: train fraction must be in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  std::shuffle(ids.begin(), ids.end(), rng);
  auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(ids.size())));
  n_train = std::clamp<std::size_t>(n_train, 1, ids.size() - 1);
  SatelliteSplit split;
  split.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_train));
  split.validation.assign(ids.begin() + static_cast<std::ptrdiff_t>(n_train), ids.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.validation.begin(), split.validation.end());
  return split;
}

RowSplit apply_split(std::span<const DatasetRow> rows, const SatelliteSplit& split) {
  const std::set<int> train(split.train.begin(), split.train.end());
  const std::set<int> val(split.validation.begin(), split.validation.end());
  RowSplit out;
  for (const auto& r : rows) {
    if (train.count(r.norad_id)) out.train.push_back(r);
    else if (val.count(r.norad_id)) out.validation.push_back(r);
  }
  return out;
}

RowSplit split_by_time(std::span<const DatasetRow> rows, double train_end) {
  RowSplit out;
  for (const auto& r : rows) {
    if (r.source_epoch >= train_end) out.validation.push_back(r);
    else if (r.target_epoch <= train_end) out.train.push_back(r);
  }
  return out;
}

std::vector<DatasetRow> downsample_every_n(std::span<const DatasetRow> rows, std::size_t n) {
  if (n == 0) throw InvalidInput("downsample_every_n: n must be >= 1");
  std::map<int, std::size_t> seen;
  std::vector<DatasetRow> out;
  for (const auto& r : rows) {
    if (seen[r.norad_id]++ % n == 0) out.push_back(r);
  }
  return out;
}

void write_dataset_csv(std::ostream& out, std::span<const DatasetRow> rows) {
  out << "norad_id,source_epoch_s,target_epoch_s";
  for (const auto& name : feature_names()) out << ',' << name;
  out << ",label_du_rad\n";
  for (const auto& r : rows) {
    out << r.norad_id << ',' << csv::format_double(r.source_epoch) << ',' << csv::format_double(r.target_epoch);
    for (double v : r.features) out << ',' << csv::format_double(v);
    out << ',' << csv::format_double(r.label) << '\n';
  }
}

std::vector<DatasetRow> read_dataset_csv(std::istream& in) {
  std::string line;
  if (!csv::read_line(in, line)) throw ParseError("dataset: empty file", 1);
  const auto header = csv::split_line(line);
  constexpr std::size_t kColumns = 3 + kFeatureCount + 1;
  if (header.size() != kColumns) throw ParseError("dataset: unexpected column count in header", 1);
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    if (header[3 + k] != feature_names()[k]) throw ParseError("dataset: unexpected column " + header[3 + k], 1);
  }
  std::vector<DatasetRow> rows;
  long line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto f = csv::split_line(line);
    if (f.size() != kColumns) throw ParseError("dataset: wrong number of fields", line_no);
    try {
      DatasetRow r;
      r.norad_id = static_cast<int>(csv::parse_int(f[0]));
      r.source_epoch = csv::parse_double(f[1]);
      r.target_epoch = csv::parse_double(f[2]);
      for (std::size_t k = 0; k < kFeatureCount; ++k) r.features[k] = csv::parse_double(f[3 + k]);
      r.label = csv::parse_double(f[3 + kFeatureCount]);
      rows.push_back(r);
    } catch (const ParseError& e) {
      throw ParseError(std::string("dataset: ") + e.what(), line_no);
    }
  }
  return rows;
}

void write_dataset_file(const std::filesystem::path& path, std::span<const DatasetRow> rows) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_dataset_csv(out, rows);
}

std::vector<DatasetRow> read_dataset_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read " + path.string());
  return read_dataset_csv(in);
}

std::string normalization_to_json(const NormalizationStats& stats) {
  nlohmann::json j;
  j["features"] = nlohmann::json::array();
  for (std::size_t k = 0; k < kFeatureCount; ++k) {
    j["features"].push_back({{"name", feature_names()[k]},
                             {"mean", stats.mean[k]},
                             {"std", stats.stddev[k]},
                             {"passthrough", stats.passthrough[k]}});
  }
  j["label"] = {{"mean", stats.label_mean}, {"std", stats.label_stddev}};
  return j.dump(2);
}

NormalizationStats normalization_from_json(const std::string& text) {
  NormalizationStats st;
  try {
    const auto j = nlohmann::json::parse(text);
    const auto& f = j.at("features");
    if (f.size() != kFeatureCount) throw ParseError("normalization: expected 31 features", 0);
    for (std::size_t k = 0; k < kFeatureCount; ++k) {
      if (f[k].at("name").get<std::string>() != feature_names()[k]) {
        throw ParseError("normalization: feature order mismatch at " + std::to_string(k), 0);
      }
      st.mean[k] = f[k].at("mean").get<double>();
      st.stddev[k] = f[k].at("std").get<double>();
      st.passthrough[k] = f[k].at("passthrough").get<bool>();
      if (!st.passthrough[k] && !(st.stddev[k] > 0.0)) throw ParseError("normalization: non-positive std", 0);
    }
    st.label_mean = j.at("label").at("mean").get<double>();
    st.label_stddev = j.at("label").at("std").get<double>();
    if (!(st.label_stddev > 0.0)) throw ParseError("normalization: non-positive label std", 0);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("normalization: ") + e.what(), 0);
  }
  return st;
}

}  // namespace aolcorr
