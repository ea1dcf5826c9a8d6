#include "bpdl/hierarchy.hpp"

#include <fftw3.h>
#include <omp.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <mutex>
#include <stdexcept>

namespace bpdl {

namespace {
// FFTW planning is not thread-safe; executing plans is.
std::mutex g_fftw_plan_mutex;
}  // namespace

const char* closure_name(ClosureRule rule) {
  return rule == ClosureRule::Poisson ? "poisson" : "kirkwood";
}

struct HierarchySolver::FftWorkspace {
  int n = 0;
  double* real = nullptr;
  fftw_complex* spec = nullptr;
  fftw_plan fwd = nullptr;
  fftw_plan bwd = nullptr;
  std::vector<double> aplus_spec;   // packed (re, im) pairs
  std::vector<double> aminus_spec;

  explicit FftWorkspace(int grid) : n(grid) {
    real = fftw_alloc_real(n);
    spec = fftw_alloc_complex(n / 2 + 1);
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fwd = fftw_plan_dft_r2c_1d(n, real, spec, FFTW_ESTIMATE);
    bwd = fftw_plan_dft_c2r_1d(n, spec, real, FFTW_ESTIMATE);
    if (!fwd || !bwd) throw std::runtime_error("fftw plan creation failed");
  }
  ~FftWorkspace() {
    std::lock_guard<std::mutex> lock(g_fftw_plan_mutex);
    fftw_destroy_plan(fwd);
    fftw_destroy_plan(bwd);
    fftw_free(real);
    fftw_free(spec);
  }

  std::vector<double> forward(std::span<const double> field) {
    std::memcpy(real, field.data(), sizeof(double) * n);
    fftw_execute(fwd);
    std::vector<double> packed(2 * (n / 2 + 1));
    for (int k = 0; k <= n / 2; ++k) {
      packed[2 * k] = spec[k][0];
      packed[2 * k + 1] = spec[k][1];
    }
    return packed;
  }
};

HierarchySolver::HierarchySolver(const Model& model, double side, int grid_points,
                                 double kirkwood_floor)
    : side_(side),
      n_(grid_points),
      mortality_(model.mortality),
      kirkwood_floor_(kirkwood_floor) {
  if (model.kernels.dim() != 1)
    throw std::invalid_argument("hierarchy solver supports dimension 1 only");
  if (n_ < 8 || n_ % 2 != 0) throw std::invalid_argument("grid size must be even and >= 8");
  if (!(side > 0.0)) throw std::invalid_argument("domain side must be positive");
  h_ = side_ / n_;

  const double cutoff = model.kernels.max_cutoff();
  if (cutoff > 0.0 && side_ <= 2.0 * cutoff)
    throw std::invalid_argument("domain side must exceed twice the kernel cutoff");
  for (const KernelSpec* k : {&model.kernels.dispersal, &model.kernels.competition}) {
    if (!k->is_zero() && h_ > k->length_scale() / 10.0)
      throw std::invalid_argument("grid too coarse: need h <= kernel length scale / 10");
  }

  aplus_.resize(n_);
  aminus_.resize(n_);
  for (int j = 0; j < n_; ++j) {
    const double r = std::abs(displacement(j));
    aplus_[j] = model.kernels.dispersal.radial(r);
    aminus_[j] = model.kernels.competition.radial(r);
  }
  for (int j = 0; j < n_; ++j) mass_plus_ += aplus_[j];
  for (int j = 0; j < n_; ++j) mass_minus_ += aminus_[j];
  mass_plus_ *= h_;
  mass_minus_ *= h_;
  sup_minus_ = model.kernels.competition.sup_norm();

  fft_ = std::make_unique<FftWorkspace>(n_);
  fft_->aplus_spec = fft_->forward(aplus_);
  fft_->aminus_spec = fft_->forward(aminus_);
}

HierarchySolver::~HierarchySolver() = default;

int HierarchySolver::index_of(double u) const {
  long j = std::lround(u / h_) % n_;
  if (j < 0) j += n_;
  return static_cast<int>(j);
}

double HierarchySolver::rhs_k1(const HierarchyState& state) const {
  double death_integral = 0.0;
  for (int j = 0; j < n_; ++j) death_integral += aminus_[j] * state.k2[j];
  death_integral *= h_;
  return (mass_plus_ - mortality_) * state.k1 - death_integral;
}

void HierarchySolver::convolve(std::span<const double> kernel_fft,
                               std::span<const double> field, std::span<double> out) {
  std::memcpy(fft_->real, field.data(), sizeof(double) * n_);
  fftw_execute(fft_->fwd);
  const double scale = h_ / n_;  // quadrature weight and FFTW's unnormalized inverse
  for (int k = 0; k <= n_ / 2; ++k) {
    const double ar = kernel_fft[2 * k], ai = kernel_fft[2 * k + 1];
    const double br = fft_->spec[k][0], bi = fft_->spec[k][1];
    fft_->spec[k][0] = (ar * br - ai * bi) * scale;
    fft_->spec[k][1] = (ar * bi + ai * br) * scale;
  }
  fftw_execute(fft_->bwd);
  std::memcpy(out.data(), fft_->real, sizeof(double) * n_);
}

void HierarchySolver::closure_term(const HierarchyState& state, ClosureRule closure,
                                   std::span<double> out) {
  // out[j] = integral a-(v) k3(u_j, v) dv
  const auto& k2 = state.k2;
  if (closure == ClosureRule::Poisson) {
    double iminus_k2 = 0.0;
    for (int j = 0; j < n_; ++j) iminus_k2 += aminus_[j] * k2[j];
    iminus_k2 *= h_;
    std::vector<double> conv(n_);
    convolve(fft_->aminus_spec, k2, conv);
    const double k1 = state.k1;
    for (int j = 0; j < n_; ++j)
      out[j] = k1 * (k2[j] * mass_minus_ + iminus_k2 + conv[j]) -
               2.0 * k1 * k1 * k1 * mass_minus_;
  } else {
    if (!(state.k1 > kirkwood_floor_))
      throw NumericFailure("kirkwood closure: k1 fell below the floor");
    std::vector<double> weighted(n_);
    for (int j = 0; j < n_; ++j) weighted[j] = aminus_[j] * k2[j];
    std::vector<double> conv(n_);
    convolve(fft_->forward(weighted), k2, conv);
    const double inv_k13 = 1.0 / (state.k1 * state.k1 * state.k1);
    for (int j = 0; j < n_; ++j) out[j] = k2[j] * conv[j] * inv_k13;
  }
}

void HierarchySolver::rhs_k2(const HierarchyState& state, ClosureRule closure,
                             std::span<double> out) {
  std::vector<double> conv_plus(n_);
  convolve(fft_->aplus_spec, state.k2, conv_plus);
  std::vector<double> k3_term(n_);
  closure_term(state, closure, k3_term);
  const double k1 = state.k1;
  for (int j = 0; j < n_; ++j) {
    out[j] = -2.0 * (mortality_ + aminus_[j]) * state.k2[j] + 2.0 * aplus_[j] * k1 +
             2.0 * conv_plus[j] - 2.0 * k3_term[j];
  }
}

double HierarchySolver::close_k3(ClosureRule closure, double k1, std::span<const double> k2,
                                 double u, double v) const {
  const double k2u = k2[index_of(u)];
  const double k2v = k2[index_of(v)];
  const double k2uv = k2[index_of(u - v)];
  if (closure == ClosureRule::Poisson) {
    return k1 * k2u + k1 * k2v + k1 * k2uv - 2.0 * k1 * k1 * k1;
  }
  if (!(k1 > kirkwood_floor_))
    throw NumericFailure("kirkwood closure: k1 fell below the floor");
  return k2u * k2v * k2uv / (k1 * k1 * k1);
}

void HierarchySolver::rhs_k2_direct(const HierarchyState& state, ClosureRule closure,
                                    std::span<double> out, bool parallel) const {
  const auto& k2 = state.k2;
  const double k1 = state.k1;
  if (closure == ClosureRule::Kirkwood && !(k1 > kirkwood_floor_))
    throw NumericFailure("kirkwood closure: k1 fell below the floor");

#pragma omp parallel for schedule(static) if (parallel)
  for (int i = 0; i < n_; ++i) {
    double conv = 0.0;
    double k3_int = 0.0;
    for (int j = 0; j < n_; ++j) {
      int diff = i - j;
      if (diff < 0) diff += n_;
      conv += aplus_[diff] * k2[j];
      double k3;
      if (closure == ClosureRule::Poisson) {
        k3 = k1 * (k2[i] + k2[j] + k2[diff]) - 2.0 * k1 * k1 * k1;
      } else {
        k3 = k2[i] * k2[j] * k2[diff] / (k1 * k1 * k1);
      }
      k3_int += aminus_[j] * k3;
    }
    conv *= h_;
    k3_int *= h_;
    out[i] = -2.0 * (mortality_ + aminus_[i]) * k2[i] + 2.0 * aplus_[i] * k1 + 2.0 * conv -
             2.0 * k3_int;
  }
}

double HierarchySolver::suggested_dt(const HierarchyState& state) const {
  const double scale = mortality_ + mass_plus_ + sup_minus_ * std::max(state.k1, 1.0);
  return scale > 0.0 ? 0.1 / scale : 0.1;
}

HierarchyState HierarchySolver::flat_state(double k1, double k2_value) const {
  HierarchyState s;
  s.k1 = k1;
  s.k2.assign(n_, k2_value);
  return s;
}

HierarchyState HierarchySolver::poisson_state(double density) const {
  return flat_state(density, density * density);
}

IntegrationResult HierarchySolver::integrate(HierarchyState initial, ClosureRule closure,
                                             const IntegrationOptions& options) {
  if (static_cast<int>(initial.k2.size()) != n_)
    throw std::invalid_argument("initial state does not match the grid");
  if (!(options.t_end > 0.0)) throw std::invalid_argument("t_end must be positive");

  double dt = options.dt > 0.0 ? options.dt : suggested_dt(initial);
  const uint64_t steps = static_cast<uint64_t>(std::ceil(options.t_end / dt - 1e-12));
  dt = options.t_end / static_cast<double>(steps);

  IntegrationResult result;
  result.series.push_back(initial);

  HierarchyState state = std::move(initial);
  std::vector<double> s1(n_), s2(n_), s3(n_), s4(n_);
  HierarchyState tmp;
  tmp.k2.resize(n_);

  auto stage = [&](const HierarchyState& base, double scale, const std::vector<double>& dk2,
                   double dk1) {
    tmp.k1 = base.k1 + scale * dk1;
    for (int j = 0; j < n_; ++j) tmp.k2[j] = base.k2[j] + scale * dk2[j];
  };

  for (uint64_t step = 0; step < steps; ++step) {
    const double r1 = rhs_k1(state);
    rhs_k2(state, closure, s1);
    stage(state, 0.5 * dt, s1, r1);
    const double r2 = rhs_k1(tmp);
    rhs_k2(tmp, closure, s2);
    stage(state, 0.5 * dt, s2, r2);
    const double r3 = rhs_k1(tmp);
    rhs_k2(tmp, closure, s3);
    stage(state, dt, s3, r3);
    const double r4 = rhs_k1(tmp);
    rhs_k2(tmp, closure, s4);

    state.k1 += dt / 6.0 * (r1 + 2.0 * r2 + 2.0 * r3 + r4);
    for (int j = 0; j < n_; ++j)
      state.k2[j] += dt / 6.0 * (s1[j] + 2.0 * s2[j] + 2.0 * s3[j] + s4[j]);
    state.time += dt;

    // re-enforce evenness: average with the mirrored grid
    double sym_err = 0.0;
    for (int j = 1; j < n_ / 2; ++j) {
      const double a = state.k2[j], b = state.k2[n_ - j];
      sym_err = std::max(sym_err, std::abs(a - b));
      const double avg = 0.5 * (a + b);
      state.k2[j] = avg;
      state.k2[n_ - j] = avg;
    }
    result.diagnostics.max_symmetry_error =
        std::max(result.diagnostics.max_symmetry_error, sym_err);

    // clip transient negativity from the closure; account what was removed
    double clipped = 0.0, l1 = 0.0;
    for (int j = 0; j < n_; ++j) {
      l1 += std::abs(state.k2[j]);
      if (state.k2[j] < 0.0) {
        clipped -= state.k2[j];
        state.k2[j] = 0.0;
      }
    }
    clipped *= h_;
    l1 *= h_;
    result.diagnostics.clipped_mass_total += clipped;
    result.diagnostics.max_step_clip = std::max(result.diagnostics.max_step_clip, clipped);
    if (l1 > 0.0 && clipped > options.clip_abort_fraction * l1)
      throw NumericFailure("closure produced excessive negativity; aborting");

    ++result.diagnostics.steps;

    if (!std::isfinite(state.k1) || state.k1 > options.blowup_cap) {
      result.diagnostics.blew_up = true;
      result.diagnostics.blowup_time = state.time;
      result.series.push_back(state);
      return result;
    }

    if ((step + 1) % static_cast<uint64_t>(std::max(options.output_stride, 1)) == 0 ||
        step + 1 == steps) {
      result.series.push_back(state);
    }
  }
  return result;
}

}  // namespace bpdl
