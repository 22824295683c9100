#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "aolcorr/pipeline.hpp"

namespace {

struct Flags {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  bool verbose = false;
};

aolcorr::PipelineConfig load(const Flags& f) {
  auto cfg = aolcorr::load_config(f.config);
  if (f.seed) cfg.seed = *f.seed;
  if (!f.out.empty()) cfg.paths.out_dir = f.out;
  return cfg;
}

void add_common(CLI::App* cmd, Flags& f, bool needs_config = true) {
  auto* opt = cmd->add_option("--config", f.config, "pipeline config (JSON)")->check(CLI::ExistingFile);
  if (needs_config) opt->required();
  cmd->add_option("--seed", f.seed, "override the config seed");
  cmd->add_option("--out", f.out, "override paths.out_dir");
  cmd->add_flag("--verbose,-v", f.verbose, "log stage progress to stderr");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"AOL error prediction and orbit/covariance correction pipeline"};
  app.require_subcommand(1);
  Flags flags;

  std::string catalog_in, ids_out;
  auto* filter = app.add_subcommand("filter-catalog", "select large non-debris LEO objects from a satcat CSV");
  filter->add_option("catalog", catalog_in, "satcat CSV")->required()->check(CLI::ExistingFile);
  filter->add_option("output", ids_out, "output id list")->required();
  filter->add_flag("--verbose,-v", flags.verbose);

  std::string stage;
  auto* sim = app.add_subcommand("simulate", "synthesize VCM series and a catalog");
  auto* gen = app.add_subcommand("gen-dataset", "propagation errors, features and split");
  auto* train = app.add_subcommand("train", "train the configured models");
  auto* corr = app.add_subcommand("correct", "correct validation propagations with the trained models");
  auto* eval = app.add_subcommand("evaluate", "error and covariance-consistency report");
  auto* all = app.add_subcommand("run-all", "run every stage in order");
  for (auto* c : {sim, gen, train, corr, eval, all}) add_common(c, flags);
  all->add_option("--stage", stage, "run only this stage")
      ->check(CLI::IsMember({"simulate", "gen-dataset", "train", "correct", "evaluate"}));

  CLI11_PARSE(app, argc, argv);

  try {
    const aolcorr::StageOptions opt{flags.verbose, nullptr};
    if (filter->parsed()) {
      aolcorr::stage_filter_catalog(catalog_in, ids_out, opt);
      return 0;
    }
    const auto cfg = load(flags);
    if (all->parsed()) {
      if (stage.empty()) aolcorr::run_all(cfg, opt);
      else aolcorr::run_stage(stage, cfg, opt);
    } else {
      for (auto* c : {sim, gen, train, corr, eval}) {
        if (c->parsed()) aolcorr::run_stage(c->get_name(), cfg, opt);
      }
    }
  } catch (const std::exception& e) {
    std::cerr << "aolcorr: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
