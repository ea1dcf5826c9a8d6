#include <doctest.h>

#include <cmath>
#include <vector>

#include "bpdl/estimators.hpp"
#include "bpdl/theory.hpp"

using namespace bpdl;

TEST_SUITE_BEGIN("theory");

namespace {

KernelPair unit_gaussians(double sp, double sm, double cp = 1.0, double cm = 1.0) {
  return KernelPair(KernelSpec::gaussian(1, cp, sp), KernelSpec::gaussian(1, cm, sm));
}

}  // namespace

TEST_CASE("norm bound: frozen regression value") {
  // masses and sups all 1, m = 1, weights (0, 1); recomputed independently
  // at test-writing time: 8/e^2 + (2 + e)/e
  const double v = operator_norm_bound_terms(1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 1.0);
  CHECK(std::abs(v - 2.8184411482357862) <= 1e-9);
}

TEST_CASE("norm bound: zero kernels and zero mortality give zero") {
  NormBoundInput input{KernelPair(KernelSpec::zero(2), KernelSpec::zero(2)), 0.0, 0.0, 1.0};
  CHECK(operator_norm_bound(input) == 0.0);
}

TEST_CASE("norm bound: rejects a nonpositive weight gap") {
  NormBoundInput input{unit_gaussians(1.0, 1.0), 1.0, 1.0, 1.0};
  CHECK_THROWS_AS(operator_norm_bound(input), std::invalid_argument);
}

TEST_CASE("norm bound: monotone in every rate ingredient, decreasing in the gap") {
  Rng rng(1104);
  for (int trial = 0; trial < 100; ++trial) {
    const double sp = rng.uniform() * 3.0, sm = rng.uniform() * 3.0;
    const double mp = rng.uniform() * 3.0, mm = rng.uniform() * 3.0;
    const double m = rng.uniform() * 2.0;
    const double lo = rng.uniform() - 0.5;
    const double hi = lo + 0.1 + rng.uniform();
    const double base = operator_norm_bound_terms(sp, sm, mp, mm, m, lo, hi);
    const double bump = 0.1;
    CHECK(operator_norm_bound_terms(sp + bump, sm, mp, mm, m, lo, hi) >= base);
    CHECK(operator_norm_bound_terms(sp, sm + bump, mp, mm, m, lo, hi) >= base);
    CHECK(operator_norm_bound_terms(sp, sm, mp + bump, mm, m, lo, hi) >= base);
    CHECK(operator_norm_bound_terms(sp, sm, mp, mm + bump, m, lo, hi) >= base);
    CHECK(operator_norm_bound_terms(sp, sm, mp, mm, m + bump, lo, hi) >= base);
    // widening the gap at fixed upper weight only shrinks the bound
    CHECK(operator_norm_bound_terms(sp, sm, mp, mm, m, lo - bump, hi) <= base);
  }
}

TEST_CASE("pair interaction sums") {
  const KernelPair pair = unit_gaussians(1.0, 2.0);

  SUBCASE("singleton: both double sums are empty") {
    const FiniteConfig eta{{0.3, 0.0, 0.0}};
    CHECK(pair_interaction_sum(pair.dispersal, eta) == 0.0);
    CHECK(domination_margin(pair, eta, 0.7, 2.0) == doctest::Approx(-0.7));
  }
  SUBCASE("two points: closed form") {
    const double u = 0.8;
    const FiniteConfig eta{{0.0, 0.0, 0.0}, {u, 0.0, 0.0}};
    const double ap = pair.dispersal.radial(u), am = pair.competition.radial(u);
    const double theta = 0.4, b = 0.05;
    CHECK(domination_margin(pair, eta, b, theta) ==
          doctest::Approx(2.0 * (theta * ap - am) - 2.0 * b).epsilon(1e-12));
  }
}

TEST_CASE("certificate: proportional kernels dominate pointwise") {
  const KernelPair pair(KernelSpec::gaussian(1, 1.0, 1.0), KernelSpec::gaussian(1, 0.5, 1.0));
  const auto cert = find_domination_constants(pair, 10000, 31337);
  CHECK(cert.validated);
  CHECK(cert.b == 0.0);
  CHECK(cert.theta == doctest::Approx(0.5).epsilon(1e-9));
  CHECK(cert.max_margin <= 0.0);
}

TEST_CASE("certificate: compact dispersal against gaussian competition") {
  const KernelPair pair(KernelSpec::top_hat(1, 1.0, 1.0), KernelSpec::gaussian(1, 1.0, 1.0));
  const auto cert = find_domination_constants(pair, 10000, 4711);
  CHECK(cert.validated);
  CHECK(cert.b == 0.0);
  // ratio minimum sits at the rim of the dispersal support
  CHECK(cert.theta ==
        doctest::Approx(KernelSpec::gaussian(1, 1.0, 1.0).radial(1.0)).epsilon(1e-6));
  CHECK(cert.max_margin <= 0.0);
}

TEST_CASE("certificate: gaussian pair with wider competition validates cleanly") {
  const KernelPair pair = unit_gaussians(1.0, 2.0);
  const auto cert = find_domination_constants(pair, 20000, 90210);
  CHECK(cert.validated);
  CHECK(cert.max_margin <= 0.0);
  CHECK(cert.theta > 0.0);

  // a fresh sample of the same size must also show no violation
  std::vector<FiniteConfig> configs;
  Rng rng(777);
  for (int i = 0; i < 20000; ++i)
    configs.push_back(sample_domination_config(pair, 2 + static_cast<int>(rng.uniform_int(5)), rng));
  CHECK(verify_domination(cert, pair, configs) <= 0.0);
}

TEST_CASE("certificate: long-dispersal pair needs b > 0 and the search finds it") {
  // narrow competition against wide dispersal: no pointwise domination
  const KernelPair pair = unit_gaussians(2.0, 1.0);
  REQUIRE_FALSE(classify_dispersal(pair).short_dispersal);
  const auto cert = find_domination_constants(pair, 20000, 1234);
  CHECK(cert.validated);
  CHECK(cert.theta > 0.0);
  CHECK(cert.b > 0.0);
  CHECK(cert.max_margin <= 0.0);

  std::vector<FiniteConfig> configs;
  Rng rng(999);
  for (int i = 0; i < 20000; ++i)
    configs.push_back(sample_domination_config(pair, 2 + static_cast<int>(rng.uniform_int(5)), rng));
  CHECK(verify_domination(cert, pair, configs) <= 0.0);
}

TEST_CASE("certificate: adversarial refinement cannot break pointwise domination") {
  const KernelPair pair = unit_gaussians(1.0, 2.0);
  const auto cert = find_domination_constants(pair, 10000, 5150);
  REQUIRE(cert.validated);

  Rng rng(31);
  std::vector<FiniteConfig> seeds;
  for (int i = 0; i < 16; ++i)
    seeds.push_back(sample_domination_config(pair, 2 + static_cast<int>(rng.uniform_int(5)), rng));
  CHECK(adversarial_max_margin(pair, cert, std::move(seeds), 150, rng) <= 0.0);
}

TEST_CASE("certificate: budget precondition") {
  const KernelPair pair = unit_gaussians(1.0, 2.0);
  CHECK_THROWS_AS(find_domination_constants(pair, 100, 1), std::invalid_argument);
}

TEST_CASE("envelopes") {
  SUBCASE("decay case: frozen arithmetic") {
    const Model model(unit_gaussians(1.0, 1.0, 1.0, 0.2), 1.5);
    const DecayEnvelope env{2.0, 0.3};
    CHECK(decay_envelope(env, model, 3, 10.0) ==
          doctest::Approx(0.39829654694291154).epsilon(1e-12));
    CHECK(decay_envelope(env, model, 3, 0.0) == doctest::Approx(8.0));
    CHECK_THROWS_AS(decay_envelope(DecayEnvelope{2.0, 0.6}, model, 3, 1.0),
                    std::invalid_argument);  // epsilon beyond m - <a+>
    const Model subcritical(unit_gaussians(1.0, 1.0), 0.5);
    CHECK_THROWS_AS(decay_envelope(env, subcritical, 3, 1.0), std::invalid_argument);
  }

  SUBCASE("no-dispersal case: frozen arithmetic") {
    const Model model(KernelPair(KernelSpec::zero(1), KernelSpec::zero(1)), 0.2);
    const FiniteConfig eta{{0.0, 0.0, 0.0}, {1.0, 0.0, 0.0}, {2.0, 0.0, 0.0}, {3.0, 0.0, 0.0}};
    CHECK(aggregate_death_rate(model, eta) == doctest::Approx(0.8));
    CHECK(no_dispersal_envelope(1.0, model, eta, 5.0) ==
          doctest::Approx(0.018315638888734179).epsilon(1e-12));
    CHECK(no_dispersal_envelope(1.0, model, eta, 0.0) == doctest::Approx(1.0));
    const Model live(unit_gaussians(1.0, 1.0), 0.2);
    CHECK_THROWS_AS(no_dispersal_envelope(1.0, live, eta, 1.0), std::invalid_argument);
  }

  SUBCASE("no-dispersal with competition: pairwise terms enter the rate") {
    const Model model(KernelPair(KernelSpec::zero(1), KernelSpec::gaussian(1, 1.0, 1.0)), 0.1);
    const FiniteConfig paircfg{{0.0, 0.0, 0.0}, {0.5, 0.0, 0.0}};
    const double expected = 0.2 + 2.0 * model.kernels.competition.radial(0.5);
    CHECK(aggregate_death_rate(model, paircfg) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("growth case honours the dispersal-type constraint") {
    // short dispersal allows delta = m
    const Model short_model(unit_gaussians(1.0, 1.0), 0.5);
    REQUIRE(classify_dispersal(short_model.kernels).short_dispersal);
    CHECK(growth_envelope(GrowthEnvelope{2.0, 0.5}, short_model, 2, 1.0) ==
          doctest::Approx(4.0 * std::exp((1.0 - 0.5) * 2.0)));
    CHECK(growth_envelope(GrowthEnvelope{2.0, 0.5}, short_model, 2, 0.0) == doctest::Approx(4.0));

    // long dispersal requires delta strictly below m
    const Model long_model(unit_gaussians(2.0, 1.0), 0.5);
    REQUIRE_FALSE(classify_dispersal(long_model.kernels).short_dispersal);
    CHECK_THROWS_AS(growth_envelope(GrowthEnvelope{2.0, 0.5}, long_model, 2, 1.0),
                    std::invalid_argument);
    CHECK(growth_envelope(GrowthEnvelope{2.0, 0.4}, long_model, 2, 1.0) > 0.0);

    // the case itself needs m <= <a+>
    const Model supercritical(unit_gaussians(1.0, 1.0), 1.5);
    CHECK_THROWS_AS(growth_envelope(GrowthEnvelope{2.0, 0.1}, supercritical, 2, 1.0),
                    std::invalid_argument);
  }
}

TEST_CASE("simulated densities stay under a fitted decay envelope") {
  // supercritical mortality benchmark: fit the envelope constant on the early
  // window, then every later mean density must respect C e^{-eps t} within
  // Monte Carlo error
  const Torus torus(1, 100.0);
  const Model model(unit_gaussians(1.0, 1.0, 1.0, 0.2), 1.5);
  const DecayEnvelope env{1.0, 0.45};  // epsilon inside (0, m - <a+>) = (0, 0.5)

  SimulationOptions options;
  for (double t = 0.0; t <= 6.0 + 1e-9; t += 0.5) options.observation_times.push_back(t);
  const auto trajs = run_replicas(model, 1.0, torus, options, 50, 606060, 2);

  std::vector<MeanStderr> stats;
  for (size_t i = 0; i < options.observation_times.size(); ++i) {
    DensityAccumulator acc(torus.volume());
    for (const auto& traj : trajs) acc.add_replica(static_cast<int64_t>(traj.rows[i].population));
    stats.push_back(acc.density());
  }
  double c_fit = 0.0;
  for (size_t i = 0; i < stats.size(); ++i) {
    if (options.observation_times[i] <= 2.0 + 1e-9)
      c_fit = std::max(c_fit, stats[i].mean / decay_envelope(env, model, 1, options.observation_times[i]));
  }
  const DecayEnvelope fitted{c_fit, env.epsilon};
  for (size_t i = 0; i < stats.size(); ++i) {
    const double bound = decay_envelope(fitted, model, 1, options.observation_times[i]);
    CHECK(stats[i].mean <= bound + 3.0 * stats[i].se);
  }
}

TEST_SUITE_END();
