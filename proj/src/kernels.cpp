#include "bpdl/kernels.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace bpdl {

namespace {

constexpr double kPi = std::numbers::pi;

void check_dim(int dim) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("kernel dimension must be 1, 2 or 3");
}

// normalization of the radial exponential density rate^d/(s_d (d-1)!)
double exponential_peak(int dim, double rate) {
  switch (dim) {
    case 1: return rate / 2.0;
    case 2: return rate * rate / (2.0 * kPi);
    default: return rate * rate * rate / (8.0 * kPi);
  }
}

}  // namespace

double ball_volume(int dim, double radius) {
  switch (dim) {
    case 1: return 2.0 * radius;
    case 2: return kPi * radius * radius;
    default: return 4.0 / 3.0 * kPi * radius * radius * radius;
  }
}

double sphere_surface(int dim) {
  switch (dim) {
    case 1: return 2.0;
    case 2: return 2.0 * kPi;
    default: return 4.0 * kPi;
  }
}

const char* family_name(KernelFamily f) {
  switch (f) {
    case KernelFamily::Gaussian: return "gaussian";
    case KernelFamily::TopHat: return "top_hat";
    case KernelFamily::Exponential: return "exponential";
    default: return "zero";
  }
}

KernelSpec::KernelSpec(KernelFamily family, int dim, double p1, double p2, double tail_tol)
    : family_(family), dim_(dim), p1_(p1), p2_(p2), tail_tol_(tail_tol) {
  check_dim(dim);
  if (family_ != KernelFamily::Zero && !(tail_tol > 0.0 && tail_tol < 1.0))
    throw std::invalid_argument("tail_tol must lie in (0, 1)");

  switch (family_) {
    case KernelFamily::Gaussian:
      if (!(p1 > 0.0) || !(p2 > 0.0))
        throw std::invalid_argument("gaussian kernel needs amplitude > 0 and sigma > 0");
      mass_ = p1;
      sup_ = p1 * std::pow(2.0 * kPi * p2 * p2, -0.5 * dim_);
      break;
    case KernelFamily::TopHat:
      if (p1 < 0.0 || !(p2 > 0.0))
        throw std::invalid_argument("top-hat kernel needs height >= 0 and range > 0");
      mass_ = p1 * ball_volume(dim_, p2);
      sup_ = p1;
      break;
    case KernelFamily::Exponential:
      if (!(p1 > 0.0) || !(p2 > 0.0))
        throw std::invalid_argument("exponential kernel needs amplitude > 0 and rate > 0");
      mass_ = p1;
      sup_ = p1 * exponential_peak(dim_, p2);
      break;
    case KernelFamily::Zero:
      mass_ = 0.0;
      sup_ = 0.0;
      break;
  }

  // smallest radius whose excluded mass is <= tail_tol * mass
  switch (family_) {
    case KernelFamily::Zero:
      cutoff_ = 0.0;
      break;
    case KernelFamily::TopHat:
      cutoff_ = p2;  // compact support, exact
      break;
    default: {
      double hi = length_scale();
      int guard = 0;
      while (tail_fraction(hi) > tail_tol_ && ++guard < 1000) hi *= 2.0;
      double lo = 0.0;
      for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (tail_fraction(mid) > tail_tol_ ? lo : hi) = mid;
      }
      cutoff_ = hi;  // upper end keeps the excluded mass within tolerance
      break;
    }
  }
  truncated_mass_ = mass_ * (1.0 - tail_fraction(cutoff_));
}

KernelSpec KernelSpec::gaussian(int dim, double amplitude, double sigma, double tail_tol) {
  return KernelSpec(KernelFamily::Gaussian, dim, amplitude, sigma, tail_tol);
}

KernelSpec KernelSpec::top_hat(int dim, double height, double range, double tail_tol) {
  return KernelSpec(KernelFamily::TopHat, dim, height, range, tail_tol);
}

KernelSpec KernelSpec::exponential(int dim, double amplitude, double rate, double tail_tol) {
  return KernelSpec(KernelFamily::Exponential, dim, amplitude, rate, tail_tol);
}

KernelSpec KernelSpec::zero(int dim) {
  return KernelSpec(KernelFamily::Zero, dim, 0.0, 0.0, kDefaultTailTol);
}

KernelSpec KernelSpec::scaled(double factor) const {
  if (!(factor > 0.0)) throw std::invalid_argument("scale factor must be positive");
  if (is_zero()) return *this;
  return KernelSpec(family_, dim_, p1_ * factor, p2_, tail_tol_);
}

double KernelSpec::evaluate(std::span<const double> x) const {
  if (static_cast<int>(x.size()) != dim_)
    throw std::invalid_argument("kernel evaluate: coordinate dimension mismatch");
  double r2 = 0.0;
  for (double c : x) r2 += c * c;
  return radial(std::sqrt(r2));
}

double KernelSpec::radial(double r) const {
  if (family_ == KernelFamily::Zero || r > cutoff_) return 0.0;
  return radial_raw(r);
}

double KernelSpec::radial_raw(double r) const {
  switch (family_) {
    case KernelFamily::Gaussian:
      return sup_ * std::exp(-0.5 * r * r / (p2_ * p2_));
    case KernelFamily::TopHat:
      return r <= p2_ ? p1_ : 0.0;
    case KernelFamily::Exponential:
      return sup_ * std::exp(-p2_ * r);
    default:
      return 0.0;
  }
}

double KernelSpec::tail_fraction(double radius) const {
  if (radius <= 0.0) return family_ == KernelFamily::Zero ? 0.0 : 1.0;
  switch (family_) {
    case KernelFamily::Gaussian: {
      const double z = radius / (std::sqrt(2.0) * p2_);
      switch (dim_) {
        case 1: return std::erfc(z);
        case 2: return std::exp(-z * z);
        default:
          return std::erfc(z) + 2.0 * z * std::exp(-z * z) / std::sqrt(kPi);
      }
    }
    case KernelFamily::TopHat:
      if (radius >= p2_) return 0.0;
      return 1.0 - ball_volume(dim_, radius) / ball_volume(dim_, p2_);
    case KernelFamily::Exponential: {
      const double x = p2_ * radius;
      double sum = 1.0;
      if (dim_ >= 2) sum += x;
      if (dim_ >= 3) sum += 0.5 * x * x;
      return std::exp(-x) * sum;
    }
    default:
      return 0.0;
  }
}

double KernelSpec::length_scale() const {
  switch (family_) {
    case KernelFamily::Gaussian: return p2_;
    case KernelFamily::TopHat: return p2_;
    case KernelFamily::Exponential: return 1.0 / p2_;
    default: return 0.0;
  }
}

Vec KernelSpec::sample_displacement(Rng& rng) const {
  if (!(mass_ > 0.0))
    throw std::domain_error("sample_displacement: kernel has no density (zero mass)");

  // isotropic direction in dim_ dimensions
  auto direction = [&](double r) -> Vec {
    switch (dim_) {
      case 1:
        return {rng.uniform() < 0.5 ? -r : r, 0.0, 0.0};
      case 2: {
        const double phi = 2.0 * kPi * rng.uniform();
        return {r * std::cos(phi), r * std::sin(phi), 0.0};
      }
      default: {
        const double c = 2.0 * rng.uniform() - 1.0;  // cos(polar)
        const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
        const double phi = 2.0 * kPi * rng.uniform();
        return {r * s * std::cos(phi), r * s * std::sin(phi), r * c};
      }
    }
  };

  for (int attempt = 0; attempt < 1000000; ++attempt) {
    switch (family_) {
      case KernelFamily::Gaussian: {
        Vec x{0.0, 0.0, 0.0};
        for (int k = 0; k < dim_; ++k) x[k] = rng.normal(0.0, p2_);
        if (norm(x) <= cutoff_) return x;
        break;
      }
      case KernelFamily::TopHat: {
        // radius with density proportional to r^{d-1} on [0, range]
        const double r = p2_ * std::pow(rng.uniform(), 1.0 / dim_);
        return direction(r);
      }
      case KernelFamily::Exponential: {
        // Gamma(dim, 1/rate) radius as a sum of exponentials
        double r = 0.0;
        for (int k = 0; k < dim_; ++k) r += rng.exponential(p2_);
        if (r <= cutoff_) return direction(r);
        break;
      }
      default:
        throw std::domain_error("sample_displacement: zero kernel");
    }
  }
  throw std::logic_error("sample_displacement: rejection loop failed to terminate");
}

KernelPair::KernelPair(KernelSpec disp, KernelSpec comp)
    : dispersal(std::move(disp)), competition(std::move(comp)) {
  if (dispersal.dim() != competition.dim())
    throw std::invalid_argument("kernel pair dimensions differ");
}

double KernelPair::max_cutoff() const {
  return std::max(dispersal.cutoff_radius(), competition.cutoff_radius());
}

namespace {

// tail heaviness order used by the dispersal dichotomy
int tail_rank(KernelFamily f) {
  switch (f) {
    case KernelFamily::TopHat: return 0;
    case KernelFamily::Gaussian: return 1;
    case KernelFamily::Exponential: return 2;
    default: return -1;
  }
}

}  // namespace

DispersalClass classify_dispersal(const KernelPair& pair) {
  const KernelSpec& ap = pair.dispersal;
  const KernelSpec& am = pair.competition;

  if (ap.is_zero()) return {true, std::numeric_limits<double>::infinity()};
  if (am.is_zero()) return {false, 0.0};

  const int rp = tail_rank(ap.family());
  const int rm = tail_rank(am.family());

  if (rm > rp) {
    // a- has the strictly heavier tail: the ratio a-/a+ diverges at infinity,
    // so the infimum over the support of a+ is attained at a finite radius.
    double theta;
    if (ap.family() == KernelFamily::TopHat) {
      // a+ constant on its support; a- radially decreasing: infimum at the rim
      theta = am.radial_raw(ap.param2()) / ap.param1();
    } else {
      // gaussian a+, exponential a-: log-ratio is convex in r with the
      // minimum at r* = rate_minus * sigma_plus^2
      const double sigma = ap.param2();
      const double rate = am.param2();
      const double rstar = rate * sigma * sigma;
      theta = am.radial_raw(rstar) / ap.radial_raw(rstar);
    }
    return {true, theta};
  }

  if (rm == rp) {
    bool heavier_or_equal = false;
    switch (ap.family()) {
      case KernelFamily::TopHat: heavier_or_equal = am.param2() >= ap.param2(); break;
      case KernelFamily::Gaussian: heavier_or_equal = am.param2() >= ap.param2(); break;
      default: heavier_or_equal = am.param2() <= ap.param2(); break;  // smaller rate = heavier
    }
    if (heavier_or_equal) {
      // ratio is nondecreasing in |x|; infimum at the origin
      return {true, am.sup_norm() / ap.sup_norm()};
    }
    return {false, 0.0};
  }

  // a- decays strictly faster: for every theta > 0 some x has a- < theta a+
  return {false, 0.0};
}

}  // namespace bpdl
