#include <omp.h>

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "bpdl/experiment.hpp"
#include "bpdl/hierarchy.hpp"
#include "bpdl/version.hpp"

namespace {

struct CommonArgs {
  std::string config_path;
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 0;
};

void attach_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--seed", [&args](const CLI::results_t& res) {
        args.seed = std::stoull(res[0]);
        return true;
      },
      "override the master seed");
  cmd->add_option("--out", [&args](const CLI::results_t& res) {
        args.out_dir = res[0];
        return true;
      },
      "override the output directory");
  cmd->add_option("--threads", args.threads, "worker thread cap (0 = all cores)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spatial birth-death laboratory: exact simulation, correlation "
               "estimation, moment-hierarchy integration and kernel-inequality "
               "certification"};
  app.set_version_flag("--version", std::string(bpdl::kVersion));
  app.require_subcommand(1);

  CommonArgs args;
  using Runner = int (*)(const bpdl::ExperimentConfig&, const bpdl::CliOverrides&);
  Runner runner = nullptr;

  auto add = [&](const char* name, const char* desc, Runner fn) {
    CLI::App* cmd = app.add_subcommand(name, desc);
    attach_common(cmd, args);
    cmd->callback([&runner, fn]() { runner = fn; });
  };

  add("simulate", "run replicated event-driven simulations", bpdl::run_simulate);
  add("estimate", "estimate correlations and moments from stored snapshots",
      bpdl::run_estimate);
  add("hierarchy", "integrate the truncated correlation equations", bpdl::run_hierarchy);
  add("certify", "search and validate kernel-domination constants", bpdl::run_certify);
  add("bound", "evaluate the weighted-space operator norm bound", bpdl::run_bound);
  add("verify", "run the bundled pass/fail reference experiments", bpdl::run_verify);

  CLI11_PARSE(app, argc, argv);

  try {
    const bpdl::ExperimentConfig config = bpdl::load_config(args.config_path);
    bpdl::CliOverrides overrides;
    overrides.seed = args.seed;
    overrides.out_dir = args.out_dir;
    overrides.threads = args.threads;
    if (args.threads > 0) omp_set_num_threads(args.threads);
    return runner(config, overrides);
  } catch (const bpdl::ConfigError& err) {
    std::fprintf(stderr, "config error: %s\n", err.what());
    return bpdl::kConfigError;
  } catch (const bpdl::NumericFailure& err) {
    std::fprintf(stderr, "numerical failure: %s\n", err.what());
    return bpdl::kNumericBlowup;
  } catch (const std::exception& err) {
    std::fprintf(stderr, "error: %s\n", err.what());
    return 1;
  }
}
