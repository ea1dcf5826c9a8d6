#pragma once

#include <cmath>
#include <stdexcept>

#include "bpdl/vec.hpp"

namespace bpdl {

// Periodic cube [0, L)^d with the minimum-image metric.
struct Torus {
  int dim = 1;
  double side = 1.0;

  Torus(int d, double length) : dim(d), side(length) {
    if (d < 1 || d > 3) throw std::invalid_argument("torus dimension must be 1, 2 or 3");
    if (!(length > 0.0)) throw std::invalid_argument("torus side must be positive");
  }

  double volume() const {
    double v = side;
    for (int k = 1; k < dim; ++k) v *= side;
    return v;
  }

  double half() const { return 0.5 * side; }

  Vec wrap(Vec x) const {
    for (int k = 0; k < dim; ++k) {
      double c = x[k] - side * std::floor(x[k] / side);
      if (c >= side) c -= side;  // guards the rounding case x == side
      if (c < 0.0) c += side;
      x[k] = c;
    }
    for (int k = dim; k < 3; ++k) x[k] = 0.0;
    return x;
  }

  // a - b wrapped into [-L/2, L/2]
  Vec min_image(const Vec& a, const Vec& b) const {
    Vec d{0.0, 0.0, 0.0};
    for (int k = 0; k < dim; ++k) {
      double c = a[k] - b[k];
      c -= side * std::round(c / side);
      d[k] = c;
    }
    return d;
  }

  double distance2(const Vec& a, const Vec& b) const { return norm2(min_image(a, b)); }
  double distance(const Vec& a, const Vec& b) const { return std::sqrt(distance2(a, b)); }
};

}  // namespace bpdl
