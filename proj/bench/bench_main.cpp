// Timing comparison of the parallel/accelerated kernels against the serial
// reference implementations that the test suite uses as oracles.

#include <omp.h>

#include <chrono>
#include <cstdio>
#include <vector>

#include "bpdl/dynamics.hpp"
#include "bpdl/estimators.hpp"
#include "bpdl/hierarchy.hpp"
#include "bpdl/theory.hpp"

using namespace bpdl;

namespace {

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

template <typename F>
double time_call(F&& f, int repeats = 1) {
  const auto start = std::chrono::steady_clock::now();
  for (int i = 0; i < repeats; ++i) f();
  return seconds_since(start) / repeats;
}

void bench_neighbors() {
  std::printf("-- neighbor queries (cell list vs brute force)\n");
  Rng rng(1);
  for (size_t n : {1000u, 10000u, 40000u}) {
    const Torus torus(2, 200.0);
    PointConfig config(torus, 5.0);
    for (size_t i = 0; i < n; ++i)
      config.insert(Vec{torus.side * rng.uniform(), torus.side * rng.uniform(), 0.0});
    std::vector<Vec> queries(200);
    for (auto& q : queries) q = {torus.side * rng.uniform(), torus.side * rng.uniform(), 0.0};

    size_t sink = 0;
    const double cell = time_call([&] {
      for (const auto& q : queries) sink += config.neighbors_within(q, 5.0).size();
    });
    const double brute = time_call([&] {
      for (const auto& q : queries) sink += config.neighbors_within_brute(q, 5.0).size();
    });
    std::printf("   n=%6zu  cell %8.3f ms   brute %8.3f ms   speedup %6.1fx   (sink %zu)\n", n,
                1e3 * cell, 1e3 * brute, brute / cell, sink);
  }
}

void bench_pair_counts() {
  std::printf("-- pair-distance histograms (cell list + OpenMP vs serial O(n^2))\n");
  Rng rng(2);
  std::vector<double> edges;
  for (double e = 0.0; e <= 10.0 + 1e-9; e += 0.25) edges.push_back(e);
  for (size_t n : {2000u, 8000u, 20000u}) {
    const Torus torus(1, 2000.0);
    PointConfig config(torus, 10.0);
    for (size_t i = 0; i < n; ++i) config.insert(Vec{torus.side * rng.uniform(), 0.0, 0.0});

    int64_t sink = 0;
    const double fast = time_call([&] { sink += pair_distance_counts(config, edges)[3]; }, 3);
    const double slow = time_call([&] { sink += pair_distance_counts_serial(config, edges)[3]; });
    std::printf("   n=%6zu  fast %8.3f ms   serial %8.2f ms   speedup %6.1fx   (sink %lld)\n",
                n, 1e3 * fast, 1e3 * slow, slow / fast, static_cast<long long>(sink));
  }
}

void bench_hierarchy_rhs() {
  std::printf("-- pair-equation right-hand side (FFT vs direct quadrature)\n");
  const Model model(
      KernelPair(KernelSpec::gaussian(1, 1.0, 1.0), KernelSpec::gaussian(1, 0.3, 1.0)), 0.5);
  for (int n : {1024, 4096}) {
    HierarchySolver solver(model, 0.09 * n, n);
    HierarchyState state = solver.poisson_state(1.3);
    std::vector<double> out(n);
    const double fft = time_call(
        [&] { solver.rhs_k2(state, ClosureRule::Kirkwood, out); }, 50);
    const double direct_serial = time_call(
        [&] { solver.rhs_k2_direct(state, ClosureRule::Kirkwood, out, false); }, 3);
    const double direct_omp = time_call(
        [&] { solver.rhs_k2_direct(state, ClosureRule::Kirkwood, out, true); }, 3);
    std::printf(
        "   N=%5d  fft %8.3f ms   direct %8.2f ms   direct+omp %8.2f ms   fft speedup %6.1fx\n",
        n, 1e3 * fft, 1e3 * direct_serial, 1e3 * direct_omp, direct_serial / fft);
  }
}

void bench_replicas() {
  std::printf("-- replica fan-out (1 thread vs %d threads)\n", omp_get_max_threads());
  const Torus torus(1, 100.0);
  const Model model(
      KernelPair(KernelSpec::gaussian(1, 1.0, 1.0), KernelSpec::gaussian(1, 0.5, 1.0)), 0.0);
  SimulationOptions options;
  for (int k = 0; k <= 20; ++k) options.observation_times.push_back(k);
  const int replicas = 16;
  const double serial = time_call([&] {
    run_replicas(model, 2.0, torus, options, replicas, 42, 1);
  });
  const double parallel = time_call([&] {
    run_replicas(model, 2.0, torus, options, replicas, 42, 0);
  });
  std::printf("   %d replicas  serial %7.1f ms   parallel %7.1f ms   speedup %5.2fx\n",
              replicas, 1e3 * serial, 1e3 * parallel, serial / parallel);
}

void bench_certificate() {
  std::printf("-- domination-margin scan (OpenMP inside the search)\n");
  const KernelPair pair(KernelSpec::gaussian(1, 1.0, 1.0), KernelSpec::gaussian(1, 1.0, 2.0));
  const double t = time_call([&] { find_domination_constants(pair, 100000, 7); });
  std::printf("   budget 1e5, sizes 2..6: %7.1f ms\n", 1e3 * t);
}

}  // namespace

int main() {
  std::printf("bpdl benchmarks (threads=%d)\n", omp_get_max_threads());
  bench_neighbors();
  bench_pair_counts();
  bench_hierarchy_rhs();
  bench_replicas();
  bench_certificate();
  return 0;
}
