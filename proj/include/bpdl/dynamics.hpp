#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "bpdl/kernels.hpp"
#include "bpdl/point_config.hpp"
#include "bpdl/rng.hpp"

namespace bpdl {

// Model parameters: dispersal kernel a+, competition kernel a-, intrinsic
// mortality m. A point at x dies at rate m + sum_y a-(x-y); offspring of y
// appear at rate density a+(x-y).
struct Model {
  KernelPair kernels;
  double mortality;

  Model(KernelPair pair, double m) : kernels(std::move(pair)), mortality(m) {
    if (m < 0.0) throw std::invalid_argument("mortality must be nonnegative");
  }
};

// compensated accumulator; keeps the total death rate honest over long runs
class KahanSum {
 public:
  void reset(double v) {
    sum_ = v;
    carry_ = 0.0;
  }
  void add(double v) {
    const double y = v - carry_;
    const double t = sum_ + y;
    carry_ = (t - sum_) - y;
    sum_ = t;
  }
  double value() const { return sum_; }

 private:
  double sum_ = 0.0;
  double carry_ = 0.0;
};

struct BirthEvent {
  uint64_t parent;
  Vec position;  // already wrapped onto the torus
};

struct DeathEvent {
  uint64_t handle;
};

struct Event {
  double waiting_time;
  std::variant<BirthEvent, DeathEvent> action;
};

// Exact jump-chain state: configuration plus cached per-point death rates
// w(x) = m + sum_{y != x} a-(x-y), their compensated total D, and the total
// birth rate B = <a+> |gamma| (the dispersal kernel integrates out of the
// birth rate field). <a+> here is the truncated kernel mass, so B, the
// offspring displacement law and the death rates all describe the same
// truncated model.
class SimState {
 public:
  SimState(PointConfig config, const Model& model, uint64_t recompute_period = 100000);

  const PointConfig& config() const { return config_; }
  const Model& model() const { return model_; }
  double time() const { return time_; }
  uint64_t event_count() const { return events_; }
  size_t population() const { return config_.size(); }

  // (B, D)
  std::pair<double, double> total_rates() const {
    return {birth_rate_unit_ * static_cast<double>(config_.size()), total_death_.value()};
  }
  bool absorbing() const {
    if (config_.empty()) return true;  // float residue in D must not revive it
    auto [b, d] = total_rates();
    return b + d <= 0.0;
  }

  double death_rate_of(uint64_t handle) const { return death_rate_[config_.slot_of(handle)]; }

  // Samples waiting time ~ Exp(B+D), birth with probability B/(B+D) (parent
  // uniform, offspring displaced by a+/<a+>), otherwise death with the point
  // chosen proportionally to its cached rate. Throws std::logic_error in the
  // absorbing state.
  Event next_event(Rng& rng) const;

  // Advances time, applies the configuration change and updates the rate
  // caches incrementally; every `recompute_period` events the caches are
  // rebuilt from scratch and the relative drift recorded.
  void apply_event(const Event& event);

  // from-scratch rebuild; returns the relative drift of D it cancelled
  double audit();
  double max_audit_drift() const { return max_drift_; }

 private:
  void rebuild_caches();

  PointConfig config_;
  Model model_;
  std::vector<double> death_rate_;  // slot-parallel
  KahanSum total_death_;
  double birth_rate_unit_ = 0.0;  // truncated <a+>
  double time_ = 0.0;
  uint64_t events_ = 0;
  uint64_t recompute_period_;
  double max_drift_ = 0.0;
};

struct ObservationRow {
  double time;
  uint64_t population;
  double density;
};

struct SimulationOptions {
  std::vector<double> observation_times;  // ascending
  uint64_t population_cap = 1000000;
  uint64_t recompute_period = 100000;
  bool keep_snapshots = false;
};

struct Trajectory {
  std::vector<ObservationRow> rows;
  std::vector<PointConfig> snapshots;  // row-parallel when requested
  bool cap_hit = false;
  double max_audit_drift = 0.0;
  uint64_t events = 0;
  double final_time = 0.0;
};

// Runs the jump chain until every observation time is emitted, absorption
// freezes the state, or the population cap is exceeded (cap_hit; remaining
// observations are not emitted). Fully deterministic given the rng stream.
Trajectory simulate(PointConfig initial, const Model& model, const SimulationOptions& options,
                    Rng& rng);

// Poisson(initial_density) start per replica, independent derived rng
// streams, OpenMP fan-out. Results are indexed by replica and do not depend
// on the thread count.
std::vector<Trajectory> run_replicas(const Model& model, double initial_density,
                                     const Torus& torus, const SimulationOptions& options,
                                     int replicas, uint64_t master_seed, int threads = 0);

}  // namespace bpdl
