#pragma once

// Test-only oracles, independent of the implementation paths they check:
// closed-form monomial integrals, finite differences, and log-log regression.

#include <cmath>
#include <random>
#include <vector>

#include "mhdfem/common.hpp"

namespace oracles {

/// a! b! c! / (a+b+c+3)! -- exact monomial integral over the reference tet.
inline double tet_monomial(int a, int b, int c) {
  long double r = 1.0L;
  for (int i = 1; i <= a + b + c + 3; ++i) r /= i;
  for (int i = 1; i <= a; ++i) r *= i;
  for (int i = 1; i <= b; ++i) r *= i;
  for (int i = 1; i <= c; ++i) r *= i;
  return static_cast<double>(r);
}

/// a! b! / (a+b+2)! -- exact monomial integral over the reference triangle.
inline double tri_monomial(int a, int b) {
  long double r = 1.0L;
  for (int i = 1; i <= a + b + 2; ++i) r /= i;
  for (int i = 1; i <= a; ++i) r *= i;
  for (int i = 1; i <= b; ++i) r *= i;
  return static_cast<double>(r);
}

/// Central finite-difference gradient of a scalar callable at x.
template <typename F>
mhdfem::Vec3 fd_gradient(const F& f, const mhdfem::Vec3& x, double step = 1e-5) {
  mhdfem::Vec3 g;
  for (int d = 0; d < 3; ++d) {
    mhdfem::Vec3 xp = x, xm = x;
    xp(d) += step;
    xm(d) -= step;
    g(d) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return g;
}

/// Central finite-difference Jacobian (rows = components) of a vector callable.
template <typename F>
mhdfem::Mat3 fd_jacobian(const F& f, const mhdfem::Vec3& x, double step = 1e-5) {
  mhdfem::Mat3 jac;
  for (int d = 0; d < 3; ++d) {
    mhdfem::Vec3 xp = x, xm = x;
    xp(d) += step;
    xm(d) -= step;
    jac.col(d) = (f(xp) - f(xm)) / (2.0 * step);
  }
  return jac;
}

/// Least-squares slope of log(e) against log(h).
inline double loglog_slope(const std::vector<double>& h, const std::vector<double>& e) {
  const int n = static_cast<int>(h.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (int i = 0; i < n; ++i) {
    const double x = std::log(h[i]);
    const double y = std::log(e[i]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

inline std::mt19937& rng() {
  static std::mt19937 gen(20240619u);
  return gen;
}

inline double uniform(double lo, double hi) {
  std::uniform_real_distribution<double> dist(lo, hi);
  return dist(rng());
}

inline mhdfem::Vec3 random_point_in_unit_cube() {
  return mhdfem::Vec3(uniform(0, 1), uniform(0, 1), uniform(0, 1));
}

}  // namespace oracles
