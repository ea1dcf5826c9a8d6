#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string_view>

namespace bpdl {

// splitmix64 finalizer, used only to derive and whiten seeds.
inline uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Seed of a named substream. All randomness in a run flows from one master
// seed through these, so every replica and every search worker replays
// independently of scheduling.
inline uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t index = 0) {
  uint64_t h = mix64(master);
  for (unsigned char c : tag) h = mix64(h ^ c);
  return mix64(h ^ index);
}

// mt19937_64 plus hand-rolled samplers. The engine itself is fully specified
// by the standard; the <random> distributions are not, so we roll our own to
// keep sequences identical across standard libraries.
class Rng {
 public:
  explicit Rng(uint64_t seed) : engine_(mix64(seed)) {}

  uint64_t raw() { return engine_(); }

  // uniform on [0,1), 53-bit resolution
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  // uniform on (0,1), endpoints excluded (safe under log)
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  // unbiased integer in [0, n)
  uint64_t uniform_int(uint64_t n) {
    if (n == 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
    const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    uint64_t v;
    do {
      v = engine_();
    } while (v >= limit);
    return v % n;
  }

  double exponential(double rate) { return -std::log(uniform_open()) / rate; }

  double normal(double mean = 0.0, double sd = 1.0) {
    if (have_spare_) {
      have_spare_ = false;
      return mean + sd * spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    have_spare_ = true;
    return mean + sd * u * f;
  }

  // Exact Poisson count: number of unit-rate arrivals before `mean`.
  // O(mean) draws, which is fine at the population scales run here.
  uint64_t poisson(double mean) {
    if (mean < 0.0 || !std::isfinite(mean))
      throw std::invalid_argument("Rng::poisson: mean must be finite and nonnegative");
    uint64_t n = 0;
    double acc = exponential(1.0);
    while (acc <= mean) {
      ++n;
      acc += exponential(1.0);
    }
    return n;
  }

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

}  // namespace bpdl
