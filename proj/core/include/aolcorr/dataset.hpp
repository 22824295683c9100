#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "aolcorr/astro.hpp"
#include "aolcorr/propagator.hpp"
#include "aolcorr/vcm.hpp"

namespace aolcorr {

inline constexpr std::size_t kReverseSlots = 11;
inline constexpr std::size_t kFeatureCount = 31;
inline constexpr double kForwardHorizon = 7.0 * kSecondsPerDay;
inline constexpr double kReverseHorizon = 2.0 * kSecondsPerDay;
inline constexpr double kMaxAolError = 0.5;  // rad

/// Column layout of a feature vector.
namespace feat {
inline constexpr std::size_t kReverseDt = 0;                          // 11 slots
inline constexpr std::size_t kReverseAol = kReverseDt + kReverseSlots;  // 11 slots
inline constexpr std::size_t kPerigeeAltitude = 22;
inline constexpr std::size_t kEccentricity = 23;
inline constexpr std::size_t kCosTrueAnomaly = 24;
inline constexpr std::size_t kCosInclination = 25;
inline constexpr std::size_t kBallisticCoefficient = 26;
inline constexpr std::size_t kF10a = 27;
inline constexpr std::size_t kIsPayload = 28;
inline constexpr std::size_t kIsRocketBody = 29;
inline constexpr std::size_t kDtProp = 30;
}  // namespace feat

using FeatureVector = std::array<double, kFeatureCount>;
using HgpFeatures = std::array<double, 4>;

const std::array<std::string, kFeatureCount>& feature_names();

struct SatelliteMeta {
  int norad_id = 0;
  ObjectType type = ObjectType::Unknown;
};

/// Propagation error between a source record and a later (or earlier) record.
struct ErrorSample {
  int norad_id = 0;
  std::size_t source_index = 0;
  std::size_t target_index = 0;
  double source_epoch = 0.0;
  double target_epoch = 0.0;
  double dt_prop = 0.0;    // s, negative for reverse samples
  double aol_error = 0.0;  // rad, reference minus propagated
  Vec6 rsw_error = Vec6::Zero();  // reference minus propagated, RSW of the propagated state
  OsculatingElements elements_at_target;  // propagated
};

struct ErrorOptions {
  double forward_horizon = kForwardHorizon;
  double reverse_horizon = kReverseHorizon;
  double max_abs_aol_error = kMaxAolError;
  PropagatorSettings settings;
};

struct ErrorReport {
  std::vector<ErrorSample> forward;  // per source, ascending dt
  std::vector<ErrorSample> reverse;  // per source, ascending |dt|
  std::size_t decayed = 0;           // targets lost to decay
  std::size_t outliers = 0;          // targets dropped for |aol error| > max
};

/// Dynamics used when propagating from a record: `base` with the record's
/// ballistic and SRP coefficients and geopotential degree.
ForceConfig prediction_force(const VcmRecord& rec, const ForceConfig& base);

/// wrap(u_ref - u_prop), unwrapped towards `previous`.
double aol_error(const StateVector& reference, const StateVector& propagated, double previous = 0.0);

/// Propagates every record with the prediction dynamics to all other record
/// epochs inside the forward and reverse windows.
ErrorReport compute_errors(std::span<const VcmRecord> series, const ForceConfig& cfg, const ErrorOptions& opt = {});

/// `reverse` must hold samples of the same source, sorted by |dt| ascending,
/// none older than the reverse horizon.
FeatureVector build_features(const ErrorSample& sample, std::span<const ErrorSample> reverse,
                             const VcmRecord& source, const SatelliteMeta& meta);

/// [longest-|dt| reverse AOL error, perigee altitude, Bc, dt_prop].
HgpFeatures hgp_features(const FeatureVector& fv);

/// One labeled training/evaluation row.
struct DatasetRow {
  int norad_id = 0;
  double source_epoch = 0.0;
  double target_epoch = 0.0;
  FeatureVector features{};
  double label = 0.0;  // forward AOL error, rad
};

/// Feature rows for every forward sample of one satellite.
std::vector<DatasetRow> assemble_rows(const ErrorReport& report, std::span<const VcmRecord> series,
                                      const SatelliteMeta& meta);

struct NormalizationStats {
  std::array<double, kFeatureCount> mean{};
  std::array<double, kFeatureCount> stddev{};
  std::array<bool, kFeatureCount> passthrough{};  // left unscaled
  double label_mean = 0.0;
  double label_stddev = 1.0;

  FeatureVector apply(const FeatureVector& x) const;
  FeatureVector invert(const FeatureVector& z) const;
  double normalize_label(double y) const { return (y - label_mean) / label_stddev; }
  double denormalize_label(double z) const { return z * label_stddev + label_mean; }
  double denormalize_variance(double v) const { return v * label_stddev * label_stddev; }
};

struct NormalizationOptions {
  /// Columns that are identically zero (unused padding slots) are passed
  /// through instead of rejected.
  bool pass_zero_columns = true;
};

/// Throws InvalidInput naming the first constant column.
NormalizationStats fit_normalization(std::span<const DatasetRow> rows, const NormalizationOptions& opt = {});

struct SatelliteSplit {
  std::vector<int> train;
  std::vector<int> validation;
};

/// Shuffles the distinct ids with `seed` and keeps round(fraction * n) for
/// training (at least one per side).
SatelliteSplit split_by_satellite(std::span<const int> norad_ids, double train_fraction, std::uint64_t seed);

struct RowSplit {
  std::vector<DatasetRow> train;
  std::vector<DatasetRow> validation;
};

RowSplit apply_split(std::span<const DatasetRow> rows, const SatelliteSplit& split);

/// Training rows lie entirely inside the window (target <= train_end);
/// validation rows start at or after train_end.
RowSplit split_by_time(std::span<const DatasetRow> rows, double train_end);

/// Stride-n selection within each satellite, keeping row order.
std::vector<DatasetRow> downsample_every_n(std::span<const DatasetRow> rows, std::size_t n);

void write_dataset_csv(std::ostream& out, std::span<const DatasetRow> rows);
std::vector<DatasetRow> read_dataset_csv(std::istream& in);
void write_dataset_file(const std::filesystem::path& path, std::span<const DatasetRow> rows);
std::vector<DatasetRow> read_dataset_file(const std::filesystem::path& path);

std::string normalization_to_json(const NormalizationStats& stats);
NormalizationStats normalization_from_json(const std::string& text);

}  // namespace aolcorr
