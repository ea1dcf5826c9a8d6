#include "bpdl/dynamics.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace bpdl {

SimState::SimState(PointConfig config, const Model& model, uint64_t recompute_period)
    : config_(std::move(config)),
      model_(model),
      recompute_period_(recompute_period == 0 ? 1 : recompute_period) {
  const double cutoff = model_.kernels.max_cutoff();
  if (cutoff > 0.0 && config_.torus().side <= 2.0 * cutoff)
    throw std::invalid_argument("torus side must exceed twice the kernel cutoff");
  birth_rate_unit_ = model_.kernels.dispersal.truncated_mass();
  rebuild_caches();
}

void SimState::rebuild_caches() {
  const KernelSpec& comp = model_.kernels.competition;
  const double m = model_.mortality;
  const double radius = comp.cutoff_radius();
  const size_t n = config_.size();

  death_rate_.assign(n, m);
  if (!comp.is_zero() && radius > 0.0) {
    for (uint32_t slot = 0; slot < n; ++slot) {
      double w = m;
      config_.for_neighbors(config_.position_at(slot), radius, config_.handle_at(slot),
                            [&](uint32_t, uint64_t, const Vec&, double d2) {
                              w += comp.radial(std::sqrt(d2));
                            });
      death_rate_[slot] = w;
    }
  }
  KahanSum fresh;
  fresh.reset(0.0);
  for (double w : death_rate_) fresh.add(w);
  total_death_ = fresh;
}

double SimState::audit() {
  const double cached_total = total_death_.value();
  const std::vector<double> cached_rates = death_rate_;
  rebuild_caches();
  const double fresh_total = total_death_.value();
  const double scale = std::max({std::abs(fresh_total), std::abs(cached_total), 1e-300});
  double drift = std::abs(fresh_total - cached_total) / scale;
  for (size_t s = 0; s < death_rate_.size(); ++s) {
    const double point_scale = std::max({death_rate_[s], model_.mortality, 1e-300});
    drift = std::max(drift, std::abs(death_rate_[s] - cached_rates[s]) / point_scale);
  }
  max_drift_ = std::max(max_drift_, drift);
  return drift;
}

Event SimState::next_event(Rng& rng) const {
  const auto [birth_total, death_total] = total_rates();
  const double total = birth_total + death_total;
  if (absorbing() || !(total > 0.0))
    throw std::logic_error("next_event called in the absorbing state");

  Event event;
  event.waiting_time = rng.exponential(total);

  if (rng.uniform() * total < birth_total) {
    const uint32_t parent_slot = static_cast<uint32_t>(rng.uniform_int(config_.size()));
    const Vec step = model_.kernels.dispersal.sample_displacement(rng);
    const Vec pos = config_.torus().wrap(vadd(config_.position_at(parent_slot), step));
    event.action = BirthEvent{config_.handle_at(parent_slot), pos};
  } else {
    // cache walk with prefix sums; the cached total can drift a hair ahead of
    // the per-point values, so the walk falls back to the last point
    const double target = rng.uniform() * death_total;
    double acc = 0.0;
    uint32_t slot = static_cast<uint32_t>(config_.size()) - 1;
    for (uint32_t s = 0; s < config_.size(); ++s) {
      acc += death_rate_[s];
      if (acc > target) {
        slot = s;
        break;
      }
    }
    event.action = DeathEvent{config_.handle_at(slot)};
  }
  return event;
}

void SimState::apply_event(const Event& event) {
  const KernelSpec& comp = model_.kernels.competition;
  const double radius = comp.cutoff_radius();

  if (const auto* birth = std::get_if<BirthEvent>(&event.action)) {
    if (!config_.contains(birth->parent))
      throw std::logic_error("stale birth event: parent handle absent");
    double w = model_.mortality;
    double pair_sum = 0.0;
    if (!comp.is_zero() && radius > 0.0) {
      config_.for_neighbors(birth->position, radius, PointConfig::kNoHandle,
                            [&](uint32_t slot, uint64_t, const Vec&, double d2) {
                              const double v = comp.radial(std::sqrt(d2));
                              death_rate_[slot] += v;
                              pair_sum += v;
                            });
    }
    config_.insert(birth->position);
    death_rate_.push_back(w + pair_sum);
    total_death_.add(w + 2.0 * pair_sum);
  } else {
    const auto& death = std::get<DeathEvent>(event.action);
    if (!config_.contains(death.handle))
      throw std::logic_error("stale death event: handle absent");
    const uint32_t slot = config_.slot_of(death.handle);
    const Vec pos = config_.position_at(slot);
    const double w_dead = death_rate_[slot];
    double pair_sum = 0.0;
    if (!comp.is_zero() && radius > 0.0) {
      const double m = model_.mortality;
      config_.for_neighbors(pos, radius, death.handle,
                            [&](uint32_t s, uint64_t, const Vec&, double d2) {
                              const double v = comp.radial(std::sqrt(d2));
                              // w >= m always holds exactly; keep the cache there
                              death_rate_[s] = std::max(death_rate_[s] - v, m);
                              pair_sum += v;
                            });
    }
    const auto rec = config_.remove(death.handle);
    if (rec.moved) death_rate_[rec.slot] = death_rate_.back();
    death_rate_.pop_back();
    total_death_.add(-(w_dead + pair_sum));
    if (config_.empty()) total_death_.reset(0.0);  // clear compensation residue
  }

  time_ += event.waiting_time;
  ++events_;
  if (events_ % recompute_period_ == 0) audit();
}

Trajectory simulate(PointConfig initial, const Model& model, const SimulationOptions& options,
                    Rng& rng) {
  SimState state(std::move(initial), model, options.recompute_period);
  Trajectory out;
  if (state.population() > options.population_cap) {
    out.cap_hit = true;
    return out;
  }

  auto emit = [&](double t_obs) {
    out.rows.push_back({t_obs, state.population(),
                        static_cast<double>(state.population()) / state.config().torus().volume()});
    if (options.keep_snapshots) out.snapshots.push_back(state.config());
  };

  size_t next_obs = 0;
  const auto& obs = options.observation_times;

  while (next_obs < obs.size()) {
    if (state.absorbing()) {
      // state is frozen; remaining observations all see it
      for (; next_obs < obs.size(); ++next_obs) emit(obs[next_obs]);
      break;
    }
    const Event event = state.next_event(rng);
    const double t_next = state.time() + event.waiting_time;
    while (next_obs < obs.size() && obs[next_obs] <= t_next) {
      emit(obs[next_obs]);
      ++next_obs;
    }
    state.apply_event(event);
    if (state.population() > options.population_cap) {
      out.cap_hit = true;
      break;
    }
  }

  out.max_audit_drift = state.max_audit_drift();
  out.events = state.event_count();
  out.final_time = state.time();
  return out;
}

std::vector<Trajectory> run_replicas(const Model& model, double initial_density,
                                     const Torus& torus, const SimulationOptions& options,
                                     int replicas, uint64_t master_seed, int threads) {
  std::vector<Trajectory> results(replicas);
  const double range = model.kernels.max_cutoff();
  if (threads <= 0) threads = omp_get_max_threads();

#pragma omp parallel for schedule(dynamic) num_threads(threads)
  for (int r = 0; r < replicas; ++r) {
    Rng init_rng(derive_seed(master_seed, "init", static_cast<uint64_t>(r)));
    Rng event_rng(derive_seed(master_seed, "events", static_cast<uint64_t>(r)));
    PointConfig config = sample_poisson(initial_density, torus, range, init_rng);
    results[r] = simulate(std::move(config), model, options, event_rng);
  }
  return results;
}

}  // namespace bpdl
