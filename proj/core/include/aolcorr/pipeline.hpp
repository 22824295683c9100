#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "aolcorr/config.hpp"
#include "aolcorr/error.hpp"

namespace aolcorr {

/// Failure inside a pipeline stage; what() starts with the stage name.
class StageError : public Error {
 public:
  StageError(const std::string& stage, const std::string& what) : Error(stage + ": " + what), stage_(stage) {}
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

struct StageOptions {
  bool verbose = false;
  std::ostream* log = nullptr;  // std::clog when null
};

/// Artifact names below the configured directories.
namespace artifact {
inline constexpr const char* kSplit = "split.json";
inline constexpr const char* kNormalization = "normalization.json";
inline constexpr const char* kDatasetSummary = "dataset_summary.json";
inline constexpr const char* kTcnnModel = "tcnn.bin";
inline constexpr const char* kTcnnLoss = "tcnn_loss.csv";
inline constexpr const char* kHgpModel = "hgp.bin";
inline constexpr const char* kCorrected = "corrected_samples.csv";
inline constexpr const char* kReport = "report.json";
inline constexpr const char* kManifest = "manifest.json";
}  // namespace artifact

/// Writes the ids that pass filter_catalog, one per line.
void stage_filter_catalog(const std::filesystem::path& catalog_csv, const std::filesystem::path& out_txt,
                          const StageOptions& opt = {});

void stage_simulate(const PipelineConfig& cfg, const StageOptions& opt = {});
void stage_gen_dataset(const PipelineConfig& cfg, const StageOptions& opt = {});
void stage_train(const PipelineConfig& cfg, const StageOptions& opt = {});
void stage_correct(const PipelineConfig& cfg, const StageOptions& opt = {});
void stage_evaluate(const PipelineConfig& cfg, const StageOptions& opt = {});

/// simulate -> gen-dataset -> train -> correct -> evaluate.
void run_all(const PipelineConfig& cfg, const StageOptions& opt = {});

const std::vector<std::string>& stage_names();
void run_stage(const std::string& name, const PipelineConfig& cfg, const StageOptions& opt = {});

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

}  // namespace aolcorr
