#pragma once

#include <array>
#include <cmath>

namespace bpdl {

// Points and displacements in up to three dimensions. Components beyond the
// active dimension are kept at zero so norms and arithmetic need no branching.
using Vec = std::array<double, 3>;

inline Vec vadd(const Vec& a, const Vec& b) {
  return {a[0] + b[0], a[1] + b[1], a[2] + b[2]};
}

inline Vec vsub(const Vec& a, const Vec& b) {
  return {a[0] - b[0], a[1] - b[1], a[2] - b[2]};
}

inline Vec vscale(const Vec& a, double s) { return {a[0] * s, a[1] * s, a[2] * s}; }

inline double norm2(const Vec& v) {
  return v[0] * v[0] + v[1] * v[1] + v[2] * v[2];
}

inline double norm(const Vec& v) { return std::sqrt(norm2(v)); }

}  // namespace bpdl
