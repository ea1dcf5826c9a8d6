#pragma once

#include <span>
#include <string>

#include "bpdl/rng.hpp"
#include "bpdl/vec.hpp"

namespace bpdl {

inline constexpr double kDefaultTailTol = 1e-6;

enum class KernelFamily { Gaussian, TopHat, Exponential, Zero };

const char* family_name(KernelFamily f);

// Isotropic nonnegative interaction kernel with a hard radial cutoff.
//
// The cutoff is the contract every consumer relies on: evaluate() is exactly
// zero beyond cutoff_radius(), and the cutoff is chosen so the excluded mass
// is at most tail_tol * mass(). The simulator, the moment solver and the
// inequality certifier all see the same truncated kernel, so they solve the
// same effective model.
class KernelSpec {
 public:
  // Gaussian: amplitude * (2 pi sigma^2)^{-d/2} exp(-|x|^2 / (2 sigma^2))
  static KernelSpec gaussian(int dim, double amplitude, double sigma,
                             double tail_tol = kDefaultTailTol);
  // TopHat: height on |x| <= range, zero outside
  static KernelSpec top_hat(int dim, double height, double range,
                            double tail_tol = kDefaultTailTol);
  // Exponential: amplitude * rate^d / (s_d (d-1)!) * exp(-rate |x|),
  // s_d the surface of the unit sphere; mass() is exactly `amplitude`.
  static KernelSpec exponential(int dim, double amplitude, double rate,
                                double tail_tol = kDefaultTailTol);
  static KernelSpec zero(int dim);

  // same family and shape with the amplitude multiplied by `factor`
  KernelSpec scaled(double factor) const;

  KernelFamily family() const { return family_; }
  int dim() const { return dim_; }
  double tail_tol() const { return tail_tol_; }
  bool is_zero() const { return family_ == KernelFamily::Zero; }

  double evaluate(const Vec& x) const { return radial(norm(x)); }
  // checked variant: throws if x.size() != dim()
  double evaluate(std::span<const double> x) const;
  double radial(double r) const;      // truncated value at |x| = r
  double radial_raw(double r) const;  // family value without the cutoff

  double mass() const { return mass_; }     // closed-form integral over R^d
  double sup_norm() const { return sup_; }  // value at the origin
  double cutoff_radius() const { return cutoff_; }
  double truncated_mass() const { return truncated_mass_; }
  // fraction of mass() outside radius R (analytic per family)
  double tail_fraction(double radius) const;

  double length_scale() const;  // sigma | range | 1/rate; 0 for Zero
  double param1() const { return p1_; }
  double param2() const { return p2_; }

  // Exact draw from the truncated kernel density (kernel / truncated_mass),
  // by family-specific sampling with rejection of the negligible tail.
  // Requires mass() > 0.
  Vec sample_displacement(Rng& rng) const;

 private:
  KernelSpec(KernelFamily family, int dim, double p1, double p2, double tail_tol);

  KernelFamily family_;
  int dim_;
  double p1_ = 0.0;  // amplitude | height
  double p2_ = 0.0;  // sigma | range | rate
  double tail_tol_ = kDefaultTailTol;
  double mass_ = 0.0;
  double sup_ = 0.0;
  double cutoff_ = 0.0;
  double truncated_mass_ = 0.0;
};

// Dispersal a+ and competition a- on a common dimension.
struct KernelPair {
  KernelSpec dispersal;
  KernelSpec competition;

  KernelPair(KernelSpec disp, KernelSpec comp);
  int dim() const { return dispersal.dim(); }
  double max_cutoff() const;
};

// Short dispersal: a- dominates theta * a+ pointwise for some theta > 0,
// i.e. the infimum of a-(x)/a+(x) over the support of a+ is positive.
// theta is +infinity when a+ is identically zero (the dichotomy does not
// apply there; callers must treat the sentinel explicitly).
struct DispersalClass {
  bool short_dispersal = false;
  double theta = 0.0;
};

// Decided by the tail asymptotics of the (untruncated) families; theta for
// the short case is the analytic infimum of the pointwise ratio.
DispersalClass classify_dispersal(const KernelPair& pair);

// d-ball volume and unit-sphere surface, d in {1,2,3}
double ball_volume(int dim, double radius);
double sphere_surface(int dim);

}  // namespace bpdl
