#include "bpdl/theory.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bpdl {

double operator_norm_bound_terms(double sup_plus, double sup_minus, double mass_plus,
                                 double mass_minus, double mortality, double weight_low,
                                 double weight_high) {
  const double gap = weight_high - weight_low;
  if (!(gap > 0.0))
    throw std::invalid_argument("operator_norm_bound: weight_high must exceed weight_low");
  const double e = std::numbers::e;
  return 4.0 * (sup_plus + sup_minus) / (e * e * gap * gap) +
         (mass_plus + mortality + mass_minus * std::exp(weight_high)) / (e * gap);
}

double operator_norm_bound(const NormBoundInput& input) {
  return operator_norm_bound_terms(
      input.kernels.dispersal.sup_norm(), input.kernels.competition.sup_norm(),
      input.kernels.dispersal.mass(), input.kernels.competition.mass(), input.mortality,
      input.weight_low, input.weight_high);
}

double pair_interaction_sum(const KernelSpec& kernel, const FiniteConfig& eta) {
  double q = 0.0;
  for (size_t i = 0; i < eta.size(); ++i)
    for (size_t j = 0; j < eta.size(); ++j) {
      if (i == j) continue;
      q += kernel.evaluate(vsub(eta[i], eta[j]));
    }
  return q;
}

double domination_margin(const KernelPair& pair, const FiniteConfig& eta, double b,
                         double theta) {
  return theta * pair_interaction_sum(pair.dispersal, eta) -
         b * static_cast<double>(eta.size()) - pair_interaction_sum(pair.competition, eta);
}

FiniteConfig sample_domination_config(const KernelPair& pair, int size, Rng& rng) {
  double scale = std::max(pair.dispersal.length_scale(), pair.competition.length_scale());
  if (scale <= 0.0) scale = 1.0;
  FiniteConfig eta(static_cast<size_t>(size));
  for (auto& x : eta) {
    const double u = rng.uniform();
    const double s = u < 0.5 ? 0.25 * scale : (u < 0.8 ? scale : 4.0 * scale);
    x = {0.0, 0.0, 0.0};
    for (int k = 0; k < pair.dim(); ++k) x[k] = rng.normal(0.0, s);
  }
  return eta;
}

namespace {

struct SampleStats {
  double max_margin;       // at the candidate (b, theta)
  double required_b;       // max over eta of (theta Q+ - Q-) / |eta|
};

SampleStats scan_sample(const KernelPair& pair, uint64_t budget, uint64_t seed, int size_min,
                        int size_max, double b, double theta) {
  double worst = -std::numeric_limits<double>::infinity();
  double breq = 0.0;
  const int64_t total = static_cast<int64_t>(budget);
#pragma omp parallel
  {
    double local_worst = -std::numeric_limits<double>::infinity();
    double local_breq = 0.0;
#pragma omp for schedule(static)
    for (int64_t i = 0; i < total; ++i) {
      Rng rng(derive_seed(seed, "config", static_cast<uint64_t>(i)));
      const int size = size_min + static_cast<int>(rng.uniform_int(
                                      static_cast<uint64_t>(size_max - size_min + 1)));
      const FiniteConfig eta = sample_domination_config(pair, size, rng);
      const double qp = pair_interaction_sum(pair.dispersal, eta);
      const double qm = pair_interaction_sum(pair.competition, eta);
      const double margin = theta * qp - b * static_cast<double>(eta.size()) - qm;
      local_worst = std::max(local_worst, margin);
      local_breq = std::max(local_breq, (theta * qp - qm) / static_cast<double>(eta.size()));
    }
#pragma omp critical
    {
      worst = std::max(worst, local_worst);
      breq = std::max(breq, local_breq);
    }
  }
  return {worst, breq};
}

}  // namespace

DominationCertificate find_domination_constants(const KernelPair& pair, uint64_t budget,
                                                uint64_t seed, int size_min, int size_max) {
  if (budget < 10000)
    throw std::invalid_argument("find_domination_constants: budget must be at least 10^4");
  if (size_min < 2 || size_max < size_min)
    throw std::invalid_argument("find_domination_constants: bad size range");

  DominationCertificate cert;
  cert.budget = budget;
  cert.seed = seed;
  cert.size_min = size_min;
  cert.size_max = size_max;

  const DispersalClass cls = classify_dispersal(pair);

  if (pair.dispersal.is_zero() || pair.dispersal.mass() <= 0.0) {
    // Q+ vanishes identically; any theta works with b = 0
    cert.b = 0.0;
    cert.theta = 1.0;
    cert.max_margin = scan_sample(pair, budget, derive_seed(seed, "validate"), size_min,
                                  size_max, cert.b, cert.theta)
                          .max_margin;
    cert.validated = cert.max_margin <= 0.0;
    return cert;
  }

  if (cls.short_dispersal && cls.theta > 0.0) {
    // pointwise domination; the truncated kernels must still satisfy it on
    // the dispersal support, so take the grid minimum as well
    double theta = cls.theta;
    const double r_hi = pair.dispersal.cutoff_radius();
    const int steps = 4096;
    for (int i = 0; i <= steps; ++i) {
      const double r = r_hi * static_cast<double>(i) / steps;
      const double ap = pair.dispersal.radial(r);
      if (ap > 0.0) theta = std::min(theta, pair.competition.radial(r) / ap);
    }
    if (theta > 0.0) {
      cert.b = 0.0;
      cert.theta = theta;
      cert.max_margin = scan_sample(pair, budget, derive_seed(seed, "validate"), size_min,
                                    size_max, cert.b, cert.theta)
                            .max_margin;
      cert.validated = cert.max_margin <= 0.0;
      return cert;
    }
  }

  // bounded search: theta descending from the ratio at the origin, the
  // smallest admissible b estimated from one sample with generous headroom,
  // then validated on fresh samples (re-estimating b if one still violates)
  const double sup_ratio = pair.competition.sup_norm() > 0.0
                               ? pair.competition.sup_norm() / pair.dispersal.sup_norm()
                               : 0.0;
  double theta0 = sup_ratio > 0.0 ? sup_ratio : 1.0;
  for (int k = 0; k < 24; ++k) {
    const double theta = theta0 * std::pow(0.5, k);
    const SampleStats req = scan_sample(pair, budget, derive_seed(seed, "search", k), size_min,
                                        size_max, 0.0, theta);
    double b = std::max(0.0, req.required_b) * 1.5 + 1e-9;
    for (int attempt = 0; attempt < 4; ++attempt) {
      const SampleStats fresh =
          scan_sample(pair, budget, derive_seed(seed, "fresh", k * 8 + attempt), size_min,
                      size_max, b, theta);
      if (fresh.max_margin <= 0.0) {
        cert.b = b;
        cert.theta = theta;
        cert.max_margin = fresh.max_margin;
        cert.validated = true;
        return cert;
      }
      b = std::max(b * 1.5, std::max(0.0, fresh.required_b) * 1.5 + 1e-9);
    }
  }

  cert.validated = false;
  cert.b = 0.0;
  cert.theta = 0.0;
  cert.max_margin = std::numeric_limits<double>::infinity();
  return cert;
}

double verify_domination(const DominationCertificate& cert, const KernelPair& pair,
                         std::span<const FiniteConfig> configs) {
  double worst = -std::numeric_limits<double>::infinity();
  for (const auto& eta : configs)
    worst = std::max(worst, domination_margin(pair, eta, cert.b, cert.theta));
  return worst;
}

double adversarial_max_margin(const KernelPair& pair, const DominationCertificate& cert,
                              std::vector<FiniteConfig> seeds, int rounds, Rng& rng) {
  double scale = std::max(pair.dispersal.length_scale(), pair.competition.length_scale());
  if (scale <= 0.0) scale = 1.0;
  double worst = -std::numeric_limits<double>::infinity();
  for (auto& eta : seeds) {
    double margin = domination_margin(pair, eta, cert.b, cert.theta);
    for (int round = 0; round < rounds; ++round) {
      const size_t pick = rng.uniform_int(eta.size());
      const double step = 0.2 * scale * std::pow(0.995, round);
      Vec backup = eta[pick];
      for (int k = 0; k < pair.dim(); ++k) eta[pick][k] += rng.normal(0.0, step);
      const double trial = domination_margin(pair, eta, cert.b, cert.theta);
      if (trial > margin) {
        margin = trial;
      } else {
        eta[pick] = backup;
      }
    }
    worst = std::max(worst, margin);
  }
  return worst;
}

double growth_envelope(const GrowthEnvelope& env, const Model& model, int n, double t) {
  const double mass_plus = model.kernels.dispersal.mass();
  if (!(mass_plus > 0.0) || model.mortality > mass_plus)
    throw std::invalid_argument("growth envelope needs <a+> > 0 and m <= <a+>");
  const bool short_disp = classify_dispersal(model.kernels).short_dispersal;
  if (env.delta > model.mortality || (!short_disp && env.delta >= model.mortality))
    throw std::invalid_argument(
        "growth envelope: delta must be < m (long dispersal) or <= m (short dispersal)");
  if (!(env.c > 0.0)) throw std::invalid_argument("growth envelope: C must be positive");
  return std::pow(env.c, n) * std::exp((mass_plus - env.delta) * n * t);
}

double decay_envelope(const DecayEnvelope& env, const Model& model, int n, double t) {
  const double mass_plus = model.kernels.dispersal.mass();
  if (!(model.mortality > mass_plus))
    throw std::invalid_argument("decay envelope needs m > <a+>");
  if (!(env.epsilon > 0.0) || !(env.epsilon < model.mortality - mass_plus))
    throw std::invalid_argument("decay envelope: epsilon must lie in (0, m - <a+>)");
  if (!(env.c > 0.0)) throw std::invalid_argument("decay envelope: C must be positive");
  return std::pow(env.c, n) * std::exp(-env.epsilon * t);
}

double aggregate_death_rate(const Model& model, const FiniteConfig& eta) {
  return model.mortality * static_cast<double>(eta.size()) +
         pair_interaction_sum(model.kernels.competition, eta);
}

double no_dispersal_envelope(double k0, const Model& model, const FiniteConfig& eta, double t) {
  if (model.kernels.dispersal.mass() != 0.0)
    throw std::invalid_argument("no-dispersal envelope requires <a+> = 0");
  return k0 * std::exp(-aggregate_death_rate(model, eta) * t);
}

}  // namespace bpdl
