#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "bpdl/dynamics.hpp"
#include "bpdl/estimators.hpp"
#include "bpdl/rng.hpp"

using namespace bpdl;

TEST_SUITE_BEGIN("estimators");

namespace {

PointConfig poisson_config(double density, const Torus& torus, uint64_t seed, double range) {
  Rng rng(seed);
  return sample_poisson(density, torus, range, rng);
}

std::vector<double> uniform_edges(double width, double r_max) {
  std::vector<double> edges;
  for (double e = 0.0; e < r_max - 0.5 * width; e += width) edges.push_back(e);
  edges.push_back(r_max);
  return edges;
}

}  // namespace

TEST_CASE("density estimator basics") {
  DensityAccumulator acc(25.0);
  SUBCASE("all empty") {
    acc.add_replica(0);
    acc.add_replica(0);
    CHECK(acc.density().mean == 0.0);
    CHECK(acc.density().se == 0.0);
  }
  SUBCASE("single snapshot count over volume") {
    acc.add_replica(50);
    CHECK(acc.density().mean == doctest::Approx(2.0));
  }
}

TEST_CASE("density estimator is unbiased on Poisson input") {
  const Torus t(1, 50.0);
  DensityAccumulator acc(t.volume());
  for (int r = 0; r < 400; ++r)
    acc.add_replica(static_cast<int64_t>(poisson_config(3.0, t, 900 + r, 1.0).size()));
  const MeanStderr d = acc.density();
  CHECK(std::abs(d.mean - 3.0) <= 3.0 * d.se);
}

TEST_CASE("pair counts: two points at distance 0.5") {
  const Torus t(1, 10.0);
  PointConfig config(t, 1.0);
  config.insert(Vec{4.0, 0.0, 0.0});
  config.insert(Vec{4.5, 0.0, 0.0});
  const std::vector<double> edges{0.4, 0.6};
  const auto counts = pair_distance_counts(config, edges);
  REQUIRE(counts.size() == 1);
  CHECK(counts[0] == 2);  // ordered pairs, both orders

  PairCorrelationAccumulator acc(edges, t.volume(), t.dim);
  acc.add_replica(counts, 1);
  const auto bins = acc.estimate();
  CHECK(bins[0].k2 == doctest::Approx(0.5));  // 2 / (10 * 0.4)
}

TEST_CASE("pair counts: cell-list path equals the brute-force reference") {
  Rng rng(505);
  for (int trial = 0; trial < 20; ++trial) {
    const Torus t(1 + static_cast<int>(rng.uniform_int(2)), 24.0);
    PointConfig config(t, 1.5);
    const int n = 50 + static_cast<int>(rng.uniform_int(150));
    for (int i = 0; i < n; ++i) {
      Vec x{0.0, 0.0, 0.0};
      for (int k = 0; k < t.dim; ++k) x[k] = t.side * rng.uniform();
      config.insert(x);
    }
    const auto edges = uniform_edges(0.5, 8.0);
    CHECK(pair_distance_counts(config, edges) == pair_distance_counts_serial(config, edges));
  }
}

TEST_CASE("pair estimator is flat at kappa^2 on Poisson input") {
  const Torus t(1, 100.0);
  const auto edges = uniform_edges(0.5, 10.0);
  PairCorrelationAccumulator acc(edges, t.volume(), t.dim);
  for (int r = 0; r < 1000; ++r) {
    const auto config = poisson_config(2.0, t, 3000 + r, 10.0);
    acc.add_replica(pair_distance_counts(config, edges), 1);
  }
  for (const auto& bin : acc.estimate()) {
    CHECK(std::abs(bin.k2 - 4.0) <= 3.0 * bin.se);
    CHECK(bin.se > 0.0);
  }
}

TEST_CASE("pair estimator is flat at kappa^2 on 2-d Poisson input") {
  // validates the annulus normalization in two dimensions
  const Torus t(2, 40.0);
  const auto edges = uniform_edges(0.5, 6.0);
  PairCorrelationAccumulator acc(edges, t.volume(), t.dim);
  for (int r = 0; r < 300; ++r) {
    Rng rng(12000 + r);
    const auto config = sample_poisson(1.0, t, 6.0, rng);
    acc.add_replica(pair_distance_counts(config, edges), 1);
  }
  for (const auto& bin : acc.estimate()) CHECK(std::abs(bin.k2 - 1.0) <= 3.0 * bin.se);
}

TEST_CASE("shell volumes against direct geometry") {
  CHECK(shell_volume(1, 0.3, 0.7) == doctest::Approx(0.8));
  CHECK(shell_volume(2, 0.0, 2.0) == doctest::Approx(4.0 * std::numbers::pi));
  CHECK(shell_volume(3, 1.0, 2.0) ==
        doctest::Approx(4.0 / 3.0 * std::numbers::pi * (8.0 - 1.0)));
}

TEST_CASE("bin edges are validated") {
  const Torus t(1, 10.0);
  PointConfig config(t, 1.0);
  const std::vector<double> too_wide{0.0, 6.0};  // beyond L/2
  CHECK_THROWS_AS(pair_distance_counts(config, too_wide), std::invalid_argument);
  const std::vector<double> not_increasing{0.0, 0.5, 0.5};
  CHECK_THROWS_AS(pair_distance_counts(config, not_increasing), std::invalid_argument);
}

TEST_CASE("factorial moments of a deterministic count") {
  MomentAccumulator acc(4, 1.0);
  std::vector<int64_t> windows(300, 2);  // N = 2 always
  for (int r = 0; r < 4; ++r) acc.add_replica(windows);
  CHECK(acc.moment(1) == doctest::Approx(2.0));
  CHECK(acc.moment(2) == doctest::Approx(2.0));
  CHECK(acc.moment(3) == doctest::Approx(0.0));
  CHECK(acc.moment(4) == doctest::Approx(0.0));

  const MomentReport report = factorial_moments(acc);
  CHECK(report.sub_poissonian);
  CHECK(clustering_index(acc) == doctest::Approx(0.5));  // (k-1)/k with k = 2
}

TEST_CASE("factorial moments of Poisson counts are kappa^n") {
  Rng rng(616);
  MomentAccumulator acc(4, 1.0);
  std::vector<int64_t> windows(500);
  for (int r = 0; r < 40; ++r) {
    for (auto& w : windows) w = static_cast<int64_t>(rng.poisson(1.0));
    acc.add_replica(windows);
  }
  for (int n = 1; n <= 4; ++n)
    CHECK(std::abs(acc.moment(n) - 1.0) <= 3.0 * acc.moment_se(n));

  const MomentReport report = factorial_moments(acc);
  CHECK(report.sub_poissonian);
  const MeanStderr idx = clustering_index_stats(acc);
  CHECK(std::abs(idx.mean - 1.0) <= 3.0 * idx.se);
}

TEST_CASE("geometric counts defeat the sub-Poissonian gate") {
  // factorial-type growth: M_n = E prod (N - k) for geometric N grows like n!
  Rng rng(717);
  MomentAccumulator acc(4, 1.0);
  std::vector<int64_t> windows(500);
  for (int r = 0; r < 40; ++r) {
    for (auto& w : windows) {
      // geometric with mean 3
      int64_t n = 0;
      while (rng.uniform() < 0.75) ++n;
      w = n;
    }
    acc.add_replica(windows);
  }
  const MomentReport report = factorial_moments(acc);
  CHECK_FALSE(report.sub_poissonian);
  CHECK(clustering_index(acc) > 1.2);
}

TEST_CASE("moment accumulator enforces its preconditions") {
  MomentAccumulator small(4, 1.0);
  std::vector<int64_t> few(10, 1);
  small.add_replica(few);
  CHECK_THROWS_AS(factorial_moments(small), std::invalid_argument);  // < 1000 samples
  CHECK_THROWS_AS(MomentAccumulator(7, 1.0), std::invalid_argument);

  MomentAccumulator empty(2, 1.0);
  std::vector<int64_t> zeros(1200, 0);
  empty.add_replica(zeros);
  CHECK_THROWS_AS(clustering_index(empty), std::domain_error);  // M_1 = 0
  CHECK(factorial_moments(empty).sub_poissonian);               // vacuous
}

TEST_CASE("accumulators merge associatively and bit-identically") {
  const Torus t(1, 60.0);
  const auto edges = uniform_edges(0.5, 6.0);

  std::vector<PairCorrelationAccumulator> parts;
  std::vector<MomentAccumulator> mparts;
  for (int p = 0; p < 6; ++p) {
    parts.emplace_back(edges, t.volume(), t.dim);
    mparts.emplace_back(4, 1.0);
    for (int r = 0; r < 5; ++r) {
      const auto config = poisson_config(1.5, t, 7000 + 10 * p + r, 6.0);
      parts[p].add_replica(pair_distance_counts(config, edges), 1);
      mparts[p].add_replica(tiled_window_counts(config, 1.0));
    }
  }

  auto merged_in = [&](const std::vector<int>& order) {
    PairCorrelationAccumulator pacc(edges, t.volume(), t.dim);
    MomentAccumulator macc(4, 1.0);
    for (int i : order) {
      pacc.merge(parts[i]);
      macc.merge(mparts[i]);
    }
    std::vector<double> values;
    for (const auto& bin : pacc.estimate()) values.push_back(bin.k2);
    for (int n = 1; n <= 4; ++n) values.push_back(macc.moment(n));
    return values;
  };

  const auto forward = merged_in({0, 1, 2, 3, 4, 5});
  const auto shuffled = merged_in({3, 0, 5, 2, 4, 1});
  const auto backward = merged_in({5, 4, 3, 2, 1, 0});
  CHECK(forward == shuffled);  // bitwise
  CHECK(forward == backward);
}

TEST_CASE("sub-Poissonian verdicts come with a consistent pair bound") {
  // the fitted envelope must also cap the measured pair correlation
  const Torus t(1, 100.0);
  const auto edges = uniform_edges(0.5, 10.0);
  PairCorrelationAccumulator pacc(edges, t.volume(), t.dim);
  MomentAccumulator macc(4, 1.0);
  for (int r = 0; r < 400; ++r) {
    const auto config = poisson_config(2.0, t, 8800 + r, 10.0);
    pacc.add_replica(pair_distance_counts(config, edges), 1);
    macc.add_replica(tiled_window_counts(config, 1.0));
  }
  const MomentReport report = factorial_moments(macc);
  REQUIRE(report.sub_poissonian);
  for (const auto& bin : pacc.estimate()) {
    const double rel = bin.k2 > 0.0 ? bin.se / bin.k2 : 0.0;
    CHECK(bin.k2 <=
          report.envelope_c * report.envelope_kappa * report.envelope_kappa * (1.0 + 3.0 * rel));
  }
}

TEST_CASE("decay rate fit recovers the pure-death mortality") {
  const Torus t(1, 100.0);
  const Model model(KernelPair(KernelSpec::zero(1), KernelSpec::zero(1)), 0.2);
  SimulationOptions options;
  for (int k = 0; k <= 10; ++k) options.observation_times.push_back(0.5 * k);
  const auto trajs = run_replicas(model, 2.0, t, options, 200, 161616, 2);
  // one independent fit per replica; the mean then carries an honest error
  // (within a replica the residuals are autocorrelated)
  std::vector<double> rates;
  for (const auto& traj : trajs) {
    std::vector<double> densities;
    for (const auto& row : traj.rows) densities.push_back(row.density);
    rates.push_back(decay_rate_fit(options.observation_times, densities).mean);
  }
  double mean = 0.0, var = 0.0;
  for (double r : rates) mean += r;
  mean /= rates.size();
  for (double r : rates) var += (r - mean) * (r - mean);
  var /= (rates.size() - 1);
  const double se = std::sqrt(var / rates.size());
  CHECK(std::abs(mean - 0.2) <= 3.0 * se);
}

TEST_CASE("decay rate fit") {
  SUBCASE("exact exponential series") {
    std::vector<double> times, densities;
    for (int i = 0; i <= 20; ++i) {
      times.push_back(0.25 * i);
      densities.push_back(3.0 * std::exp(-0.2 * 0.25 * i));
    }
    const MeanStderr rate = decay_rate_fit(times, densities);
    CHECK(rate.mean == doctest::Approx(0.2).epsilon(1e-10));
    CHECK(rate.se <= 1e-10);
  }
  SUBCASE("constant series") {
    std::vector<double> times{0.0, 1.0, 2.0, 3.0};
    std::vector<double> densities{1.5, 1.5, 1.5, 1.5};
    CHECK(decay_rate_fit(times, densities).mean == doctest::Approx(0.0));
  }
  SUBCASE("nonpositive densities are rejected") {
    std::vector<double> times{0.0, 1.0, 2.0};
    std::vector<double> densities{1.0, 0.0, 1.0};
    CHECK_THROWS_AS(decay_rate_fit(times, densities), std::domain_error);
  }
}

TEST_CASE("window tiling covers the torus") {
  const Torus t(1, 10.0);
  PointConfig config(t, 1.0);
  for (double x : {0.5, 1.5, 1.7, 9.9}) config.insert(Vec{x, 0.0, 0.0});
  const auto counts = tiled_window_counts(config, 1.0);
  REQUIRE(counts.size() == 10);
  CHECK(counts[0] == 1);
  CHECK(counts[1] == 2);
  CHECK(counts[9] == 1);
  CHECK(std::accumulate(counts.begin(), counts.end(), int64_t{0}) == 4);
}

TEST_SUITE_END();
