#include "bpdl/estimators.hpp"

#include <omp.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace bpdl {

namespace {

double sample_se(double sum, double sum_sq, int64_t n) {
  if (n < 2) return 0.0;
  const double mean = sum / static_cast<double>(n);
  double var = sum_sq / static_cast<double>(n) - mean * mean;
  var = std::max(var, 0.0);
  return std::sqrt(var / static_cast<double>(n - 1));
}

void check_edges(std::span<const double> edges, double half_side) {
  if (edges.size() < 2) throw std::invalid_argument("need at least two bin edges");
  for (size_t i = 1; i < edges.size(); ++i)
    if (!(edges[i] > edges[i - 1]))
      throw std::invalid_argument("bin edges must be strictly increasing");
  if (edges.front() < 0.0) throw std::invalid_argument("bin edges must be nonnegative");
  if (edges.back() > half_side)
    throw std::invalid_argument("pair bins must stay within half the torus side");
}

int bin_of(double r, std::span<const double> edges) {
  if (r < edges.front() || r >= edges.back()) return -1;
  const auto it = std::upper_bound(edges.begin(), edges.end(), r);
  return static_cast<int>(it - edges.begin()) - 1;
}

}  // namespace

MeanStderr DensityAccumulator::density() const {
  if (replicas_ == 0) return {0.0, 0.0};
  const double mean = static_cast<double>(sum_) / static_cast<double>(replicas_) / volume_;
  const double se =
      sample_se(static_cast<double>(sum_), static_cast<double>(sum_sq_), replicas_) / volume_;
  return {mean, se};
}

double shell_volume(int dim, double r_lo, double r_hi) {
  switch (dim) {
    case 1: return 2.0 * (r_hi - r_lo);
    case 2: return std::numbers::pi * (r_hi * r_hi - r_lo * r_lo);
    default:
      return 4.0 / 3.0 * std::numbers::pi * (r_hi * r_hi * r_hi - r_lo * r_lo * r_lo);
  }
}

std::vector<int64_t> pair_distance_counts(const PointConfig& config,
                                          std::span<const double> edges) {
  check_edges(edges, config.torus().half());
  const int nbins = static_cast<int>(edges.size()) - 1;
  const double r_max = edges.back();
  const int64_t n = static_cast<int64_t>(config.size());

  std::vector<int64_t> counts(nbins, 0);
#pragma omp parallel
  {
    std::vector<int64_t> local(nbins, 0);
#pragma omp for schedule(static)
    for (int64_t slot = 0; slot < n; ++slot) {
      const Vec x = config.position_at(static_cast<uint32_t>(slot));
      config.for_neighbors(x, r_max, config.handle_at(static_cast<uint32_t>(slot)),
                           [&](uint32_t, uint64_t, const Vec&, double d2) {
                             const int b = bin_of(std::sqrt(d2), edges);
                             if (b >= 0) ++local[b];
                           });
    }
#pragma omp critical
    for (int b = 0; b < nbins; ++b) counts[b] += local[b];
  }
  return counts;
}

std::vector<int64_t> pair_distance_counts_serial(const PointConfig& config,
                                                 std::span<const double> edges) {
  check_edges(edges, config.torus().half());
  std::vector<int64_t> counts(edges.size() - 1, 0);
  const size_t n = config.size();
  for (uint32_t i = 0; i < n; ++i) {
    for (uint32_t j = 0; j < n; ++j) {
      if (i == j) continue;
      const double r = config.torus().distance(config.position_at(i), config.position_at(j));
      const int b = bin_of(r, edges);
      if (b >= 0) ++counts[b];
    }
  }
  return counts;
}

PairCorrelationAccumulator::PairCorrelationAccumulator(std::vector<double> edges, double volume,
                                                       int dim)
    : edges_(std::move(edges)), volume_(volume), dim_(dim) {
  check_edges(edges_, std::numeric_limits<double>::infinity());
  sum_.assign(edges_.size() - 1, 0);
  sum_sq_.assign(edges_.size() - 1, 0);
}

void PairCorrelationAccumulator::add_replica(std::span<const int64_t> bin_counts,
                                             int64_t snapshots) {
  if (bin_counts.size() != sum_.size())
    throw std::invalid_argument("bin count size mismatch");
  if (snapshots_per_replica_ < 0) snapshots_per_replica_ = snapshots;
  if (snapshots != snapshots_per_replica_)
    throw std::invalid_argument("replicas must contribute equal snapshot counts");
  for (size_t b = 0; b < sum_.size(); ++b) {
    sum_[b] += bin_counts[b];
    sum_sq_[b] += bin_counts[b] * bin_counts[b];
  }
  ++replicas_;
}

void PairCorrelationAccumulator::merge(const PairCorrelationAccumulator& other) {
  if (other.replicas_ == 0) return;
  if (other.edges_ != edges_) throw std::invalid_argument("merging mismatched bin edges");
  if (snapshots_per_replica_ < 0) snapshots_per_replica_ = other.snapshots_per_replica_;
  if (other.snapshots_per_replica_ != snapshots_per_replica_)
    throw std::invalid_argument("replicas must contribute equal snapshot counts");
  for (size_t b = 0; b < sum_.size(); ++b) {
    sum_[b] += other.sum_[b];
    sum_sq_[b] += other.sum_sq_[b];
  }
  replicas_ += other.replicas_;
}

std::vector<PairBin> PairCorrelationAccumulator::estimate() const {
  std::vector<PairBin> bins(sum_.size());
  for (size_t b = 0; b < sum_.size(); ++b) {
    bins[b].r_lo = edges_[b];
    bins[b].r_hi = edges_[b + 1];
    if (replicas_ == 0) continue;
    const double norm = volume_ * shell_volume(dim_, edges_[b], edges_[b + 1]) *
                        static_cast<double>(std::max<int64_t>(snapshots_per_replica_, 1));
    bins[b].k2 = static_cast<double>(sum_[b]) / static_cast<double>(replicas_) / norm;
    bins[b].se = sample_se(static_cast<double>(sum_[b]), static_cast<double>(sum_sq_[b]),
                           replicas_) /
                 norm;
  }
  return bins;
}

CorrelationEstimate make_correlation_estimate(const DensityAccumulator& density,
                                              const PairCorrelationAccumulator& pairs,
                                              double time) {
  return {density.density(), pairs.estimate(), pairs.replicas(), time};
}

MomentAccumulator::MomentAccumulator(int n_max, double window_volume)
    : n_max_(n_max), window_volume_(window_volume) {
  if (n_max < 1 || n_max > 6) throw std::invalid_argument("n_max must lie in [1, 6]");
  sum_.assign(n_max_, 0.0);
  sum_sq_.assign(n_max_, 0.0);
}

void MomentAccumulator::add_replica(std::span<const int64_t> window_counts) {
  if (windows_per_replica_ < 0) windows_per_replica_ = static_cast<int64_t>(window_counts.size());
  if (static_cast<int64_t>(window_counts.size()) != windows_per_replica_)
    throw std::invalid_argument("replicas must contribute equal window counts");
  for (int n = 1; n <= n_max_; ++n) {
    double s = 0.0;
    for (int64_t c : window_counts) {
      double ff = 1.0;
      for (int k = 0; k < n; ++k) ff *= static_cast<double>(c - k);
      if (c >= n) s += ff;  // falling factorial vanishes for c < n
    }
    sum_[n - 1] += s;
    sum_sq_[n - 1] += s * s;
  }
  ++replicas_;
}

void MomentAccumulator::merge(const MomentAccumulator& other) {
  if (other.replicas_ == 0) return;
  if (other.n_max_ != n_max_ || other.window_volume_ != window_volume_)
    throw std::invalid_argument("merging mismatched moment accumulators");
  if (windows_per_replica_ < 0) windows_per_replica_ = other.windows_per_replica_;
  if (other.windows_per_replica_ != windows_per_replica_)
    throw std::invalid_argument("replicas must contribute equal window counts");
  for (int i = 0; i < n_max_; ++i) {
    sum_[i] += other.sum_[i];
    sum_sq_[i] += other.sum_sq_[i];
  }
  replicas_ += other.replicas_;
}

double MomentAccumulator::moment(int n) const {
  if (n < 1 || n > n_max_) throw std::out_of_range("moment order out of range");
  if (replicas_ == 0 || windows_per_replica_ <= 0) return 0.0;
  return sum_[n - 1] /
         (static_cast<double>(replicas_) * static_cast<double>(windows_per_replica_));
}

double MomentAccumulator::moment_se(int n) const {
  if (n < 1 || n > n_max_) throw std::out_of_range("moment order out of range");
  if (replicas_ < 2 || windows_per_replica_ <= 0) return 0.0;
  // spread of per-replica window means
  const double w = static_cast<double>(windows_per_replica_);
  return sample_se(sum_[n - 1] / w, sum_sq_[n - 1] / (w * w), replicas_);
}

MomentReport factorial_moments(const MomentAccumulator& acc) {
  if (acc.total_samples() < 1000)
    throw std::invalid_argument("factorial_moments: at least 1000 window samples required");

  MomentReport report;
  report.window_volume = acc.window_volume();
  report.replicas = acc.replicas();
  report.windows_per_replica = acc.windows_per_replica();
  for (int n = 1; n <= acc.n_max(); ++n) {
    report.moments.push_back(acc.moment(n));
    report.stderrs.push_back(acc.moment_se(n));
  }

  const double m1 = report.moments[0];
  if (m1 <= 0.0) {
    // empty windows everywhere: vacuously inside any envelope
    report.envelope_c = 0.0;
    report.envelope_kappa = 0.0;
    report.sub_poissonian = true;
    return report;
  }

  // tightest valid envelope across all measured orders
  double kv = m1;
  for (int n = 2; n <= acc.n_max(); ++n) {
    const double mn = report.moments[n - 1];
    if (mn > 0.0) kv = std::max(kv, std::pow(mn / m1, 1.0 / (n - 1)));
  }
  report.envelope_kappa = kv / acc.window_volume();
  report.envelope_c = m1 / kv;

  // verdict: anchor the envelope at (M_1, M_2) and require the higher
  // moments to stay below it within 3 sigma
  bool ok = true;
  if (acc.n_max() >= 2) {
    const double anchor = report.moments[1] / m1;  // kappa V of the anchored fit
    const double c_anchor = anchor > 0.0 ? m1 / anchor : 0.0;
    for (int n = 3; n <= acc.n_max(); ++n) {
      const double bound = c_anchor * std::pow(anchor, n);
      if (report.moments[n - 1] > bound + 3.0 * report.stderrs[n - 1]) {
        ok = false;
        break;
      }
    }
  }
  report.sub_poissonian = ok;
  return report;
}

double clustering_index(const MomentAccumulator& acc) {
  const double m1 = acc.moment(1);
  if (!(m1 > 0.0)) throw std::domain_error("clustering_index: M_1 must be positive");
  return acc.moment(2) / (m1 * m1);
}

MeanStderr clustering_index_stats(const MomentAccumulator& acc) {
  const double m1 = acc.moment(1);
  if (!(m1 > 0.0)) throw std::domain_error("clustering_index: M_1 must be positive");
  // delta-method error propagation from the moment spreads
  const double m2 = acc.moment(2);
  const double idx = m2 / (m1 * m1);
  const double rel1 = acc.moment_se(1) / m1;
  const double rel2 = m2 > 0.0 ? acc.moment_se(2) / m2 : 0.0;
  return {idx, idx * std::sqrt(4.0 * rel1 * rel1 + rel2 * rel2)};
}

MeanStderr decay_rate_fit(std::span<const double> times, std::span<const double> densities) {
  if (times.size() != densities.size() || times.size() < 3)
    throw std::invalid_argument("decay_rate_fit: need at least three matched samples");
  const size_t n = times.size();
  std::vector<double> y(n);
  for (size_t i = 0; i < n; ++i) {
    if (!(densities[i] > 0.0))
      throw std::domain_error("decay_rate_fit: densities must be positive on the fit window");
    y[i] = std::log(densities[i]);
  }
  double tbar = 0.0, ybar = 0.0;
  for (size_t i = 0; i < n; ++i) {
    tbar += times[i];
    ybar += y[i];
  }
  tbar /= static_cast<double>(n);
  ybar /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sxx += (times[i] - tbar) * (times[i] - tbar);
    sxy += (times[i] - tbar) * (y[i] - ybar);
  }
  if (!(sxx > 0.0)) throw std::invalid_argument("decay_rate_fit: degenerate time grid");
  const double slope = sxy / sxx;
  double ss_res = 0.0;
  for (size_t i = 0; i < n; ++i) {
    const double r = y[i] - ybar - slope * (times[i] - tbar);
    ss_res += r * r;
  }
  const double se = std::sqrt(ss_res / static_cast<double>(n - 2) / sxx);
  return {-slope, se};
}

std::vector<int64_t> tiled_window_counts(const PointConfig& config, double window_side) {
  const Torus& t = config.torus();
  if (!(window_side > 0.0) || window_side > t.side)
    throw std::invalid_argument("window side must lie in (0, L]");
  const int per_dim = static_cast<int>(std::floor(t.side / window_side));
  int total = 1;
  for (int k = 0; k < t.dim; ++k) total *= per_dim;

  std::vector<int64_t> counts(total, 0);
  for (uint32_t slot = 0; slot < config.size(); ++slot) {
    const Vec x = config.position_at(slot);
    bool covered = true;
    int idx = 0;
    for (int k = 0; k < t.dim; ++k) {
      const int c = static_cast<int>(x[k] / window_side);
      if (c >= per_dim) {
        covered = false;  // remainder strip beyond the last full window
        break;
      }
      idx = idx * per_dim + c;
    }
    if (covered) ++counts[idx];
  }
  return counts;
}

}  // namespace bpdl
