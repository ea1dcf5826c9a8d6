#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

#include "bpdl/dynamics.hpp"
#include "bpdl/kernels.hpp"

namespace bpdl {

// Closure for the third-order correlation appearing in the pair equation:
//   Poisson   zero third cumulant,
//             k3(u,v) = k1 k2(u) + k1 k2(v) + k1 k2(u-v) - 2 k1^3
//   Kirkwood  superposition, k3(u,v) = k2(u) k2(v) k2(u-v) / k1^3
// Both are exact on Poisson data (k2 = k1^2).
enum class ClosureRule { Poisson, Kirkwood };

const char* closure_name(ClosureRule rule);

// raised when the numerical state leaves the closure's domain (density below
// the Kirkwood floor, excessive negativity clipping)
struct NumericFailure : std::domain_error {
  using std::domain_error::domain_error;
};

// Translation-invariant first and second correlation orders on a periodic
// 1-d displacement grid. k2 is stored in circular layout: index j holds the
// value at displacement (j <= N/2 ? j : j - N) * h, so index 0 is the origin.
struct HierarchyState {
  double time = 0.0;
  double k1 = 0.0;
  std::vector<double> k2;
};

struct IntegrationDiagnostics {
  double clipped_mass_total = 0.0;  // integral of negativity removed by clipping
  double max_step_clip = 0.0;
  double max_symmetry_error = 0.0;  // worst |k2(u) - k2(-u)| seen before re-enforcing
  bool blew_up = false;
  double blowup_time = 0.0;
  uint64_t steps = 0;
};

struct IntegrationResult {
  std::vector<HierarchyState> series;
  IntegrationDiagnostics diagnostics;
};

struct IntegrationOptions {
  double t_end = 0.0;
  double dt = 0.0;  // 0: use suggested_dt
  int output_stride = 1;
  double blowup_cap = 1e3;
  double clip_abort_fraction = 1e-6;  // clipped mass per step, relative to |k2|_1
};

// Time evolution of (k1, k2) for the translation-invariant model, truncated
// at second order with a pluggable closure:
//   dk1/dt    = (<a+> - m) k1 - integral a-(u) k2(u) du
//   dk2/dt(u) = -2 (m + a-(u)) k2(u) + 2 a+(u) k1 + 2 (a+ * k2)(u)
//               - 2 integral a-(v) k3(u, v) dv
// Kernels are sampled on the grid and the grid quadrature of those samples is
// used for every mass appearing above, so states that balance pointwise
// (e.g. a- = theta a+ with flat data) balance exactly on the grid too.
//
// Convolutions run through FFTW; rhs_k2_direct keeps the O(N^2) quadrature
// path as a reference.
class HierarchySolver {
 public:
  HierarchySolver(const Model& model, double side, int grid_points,
                  double kirkwood_floor = 1e-8);
  ~HierarchySolver();
  HierarchySolver(const HierarchySolver&) = delete;
  HierarchySolver& operator=(const HierarchySolver&) = delete;

  int grid_points() const { return n_; }
  double side() const { return side_; }
  double spacing() const { return h_; }
  double displacement(int j) const { return (j <= n_ / 2 ? j : j - n_) * h_; }
  int index_of(double u) const;  // nearest grid index, periodic

  double dispersal_grid_mass() const { return mass_plus_; }
  double competition_grid_mass() const { return mass_minus_; }
  std::span<const double> dispersal_grid() const { return aplus_; }
  std::span<const double> competition_grid() const { return aminus_; }

  double rhs_k1(const HierarchyState& state) const;
  void rhs_k2(const HierarchyState& state, ClosureRule closure, std::span<double> out);
  // direct quadrature (no FFT); `parallel` switches the OpenMP variant
  void rhs_k2_direct(const HierarchyState& state, ClosureRule closure, std::span<double> out,
                     bool parallel = false) const;

  double close_k3(ClosureRule closure, double k1, std::span<const double> k2, double u,
                  double v) const;

  // stability-guided default: 0.1 / (m + <a+> + |a-|_sup * k1)
  double suggested_dt(const HierarchyState& state) const;

  HierarchyState flat_state(double k1, double k2_value) const;
  HierarchyState poisson_state(double density) const;

  // Classical RK4 with the grid symmetry re-enforced and negative k2 values
  // clipped (and accounted) after every step. Stops early on blow-up.
  IntegrationResult integrate(HierarchyState initial, ClosureRule closure,
                              const IntegrationOptions& options);

 private:
  struct FftWorkspace;
  void convolve(std::span<const double> kernel_fft, std::span<const double> field,
                std::span<double> out);
  void closure_term(const HierarchyState& state, ClosureRule closure, std::span<double> out);

  double side_;
  int n_;
  double h_;
  double mortality_;
  double kirkwood_floor_;
  double sup_minus_;
  std::vector<double> aplus_, aminus_;
  double mass_plus_ = 0.0, mass_minus_ = 0.0;
  std::unique_ptr<FftWorkspace> fft_;
};

}  // namespace bpdl
