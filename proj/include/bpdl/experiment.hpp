#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "bpdl/dynamics.hpp"
#include "bpdl/hierarchy.hpp"
#include "bpdl/kernels.hpp"

namespace bpdl {

// process exit codes shared by the CLI and the runners
enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,
  kConfigError = 2,
  kPopulationCap = 3,
  kNumericBlowup = 4,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunSection {
  double initial_density = 0.0;
  std::optional<std::string> initial_snapshot;
  double t_end = 0.0;
  std::vector<double> observation_times;
  int replicas = 1;
  uint64_t seed = 0;
  uint64_t population_cap = 1000000;
  uint64_t recompute_period = 100000;
  bool write_snapshots = false;
};

struct AnalysisSection {
  bool present = false;
  double pair_bin_width = 0.0;  // 0: no pair analysis
  double pair_r_max = 0.0;
  double window_side = 0.0;  // 0: no moment analysis
  int n_max = 4;
  std::optional<std::pair<double, double>> time_average;
  std::optional<std::pair<double, double>> fit_window;
};

struct HierarchySection {
  bool present = false;
  int grid_points = 1024;
  double t_end = 0.0;
  double dt = 0.0;
  ClosureRule closure = ClosureRule::Kirkwood;
  int output_stride = 1;
  double initial_density = 0.0;
  double kirkwood_floor = 1e-8;
  double blowup_cap = 1e3;
};

struct BoundSection {
  bool present = false;
  double weight_low = 0.0;
  double weight_high = 1.0;
};

struct CertifySection {
  bool present = false;
  uint64_t budget = 100000;
  int size_min = 2;
  int size_max = 6;
  int adversarial_rounds = 200;
};

struct EstimateSection {
  bool present = false;
  std::string snapshot_dir;
};

struct VerifySection {
  bool present = false;
  std::vector<std::string> checks;
};

struct ExperimentConfig {
  std::optional<Model> model;
  std::optional<Torus> torus;
  RunSection run;
  AnalysisSection analysis;
  HierarchySection hierarchy;
  BoundSection bound;
  CertifySection certify;
  EstimateSection estimate;
  VerifySection verify;
  std::string output_directory = "out";
};

// Strict parse: unknown keys, type mismatches and domain violations all throw
// ConfigError.
ExperimentConfig load_config(const std::filesystem::path& path);

struct CliOverrides {
  std::optional<uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 0;  // 0: library default
};

int run_simulate(const ExperimentConfig& config, const CliOverrides& overrides);
int run_estimate(const ExperimentConfig& config, const CliOverrides& overrides);
int run_hierarchy(const ExperimentConfig& config, const CliOverrides& overrides);
int run_certify(const ExperimentConfig& config, const CliOverrides& overrides);
int run_bound(const ExperimentConfig& config, const CliOverrides& overrides);
int run_verify(const ExperimentConfig& config, const CliOverrides& overrides);

// Self-contained acceptance checks with all thresholds pinned in code; the
// `verify` subcommand runs the ones named in the config and the acceptance
// suite calls them directly. Artifacts are written when out_dir is given.
struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

CheckResult check_stationary_law(uint64_t seed, int threads,
                                 const std::filesystem::path* out_dir);
CheckResult check_extinction_decay(uint64_t seed, int threads,
                                   const std::filesystem::path* out_dir);
CheckResult check_degenerate_exact(uint64_t seed, int threads,
                                   const std::filesystem::path* out_dir);

}  // namespace bpdl
