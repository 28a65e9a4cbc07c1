#pragma once

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <map>
#include <mutex>
#include <vector>

#include "mhdfem/common.hpp"

namespace mhdfem {

/// Quadrature rule on the reference tetrahedron {x,y,z >= 0, x+y+z <= 1}
/// or the reference triangle {x,y >= 0, x+y <= 1} (third coordinate zero).
struct QuadRule {
  std::vector<Vec3> points;
  std::vector<double> weights;
  int exactness_degree = 0;

  int size() const { return static_cast<int>(points.size()); }
};

/// Rule mapped to a physical element or face; weights carry the Jacobian.
struct MappedRule {
  std::vector<Vec3> points;
  std::vector<double> weights;

  int size() const { return static_cast<int>(points.size()); }
};

inline constexpr int kMaxQuadDegree = 30;

namespace detail {

/// Exact monomial integrals: over the reference tet
/// int x^a y^b z^c = a! b! c! / (a+b+c+3)!, over the reference triangle
/// int x^a y^b = a! b! / (a+b+2)!.
inline double tet_monomial_integral(int a, int b, int c) {
  double r = 1.0;
  int denom_up_to = a + b + c + 3;
  // a!b!c!/(a+b+c+3)! evaluated as a product of ratios to avoid overflow
  for (int i = 1; i <= denom_up_to; ++i) r /= i;
  for (int i = 1; i <= a; ++i) r *= i;
  for (int i = 1; i <= b; ++i) r *= i;
  for (int i = 1; i <= c; ++i) r *= i;
  return r;
}

inline double tri_monomial_integral(int a, int b) {
  double r = 1.0;
  for (int i = 1; i <= a + b + 2; ++i) r /= i;
  for (int i = 1; i <= a; ++i) r *= i;
  for (int i = 1; i <= b; ++i) r *= i;
  return r;
}

struct Rule1d {
  std::vector<double> nodes;    // on [0,1]
  std::vector<double> weights;  // for int_0^1 (1-u)^alpha f(u) du
};

/// Gauss-Jacobi rule on [0,1] with weight (1-u)^alpha (alpha=0 is plain Gauss),
/// built by Golub-Welsch from the monic Jacobi recurrence coefficients.
inline Rule1d gauss_jacobi_01(int n, int alpha) {
  const double a = static_cast<double>(alpha);
  const double b = 0.0;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Zero(n, n);
  auto alpha_k = [&](int k) -> double {
    if (k == 0) return (b - a) / (a + b + 2.0);
    const double s = 2.0 * k + a + b;
    return (b * b - a * a) / (s * (s + 2.0));
  };
  auto beta_k = [&](int k) -> double {
    const double s = 2.0 * k + a + b;
    return 4.0 * k * (k + a) * (k + b) * (k + a + b) /
           (s * s * (s + 1.0) * (s - 1.0));
  };
  for (int i = 0; i < n; ++i) {
    jac(i, i) = alpha_k(i);
    if (i + 1 < n) {
      const double off = std::sqrt(beta_k(i + 1));
      jac(i, i + 1) = off;
      jac(i + 1, i) = off;
    }
  }
  // mu0 = int_{-1}^{1} (1-x)^a dx = 2^{a+1}/(a+1)  (b = 0)
  const double mu0 = std::pow(2.0, a + 1.0) / (a + 1.0);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jac);
  Rule1d rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  const double scale = 1.0 / std::pow(2.0, a + 1.0);
  for (int i = 0; i < n; ++i) {
    const double x = es.eigenvalues()(i);
    const double v0 = es.eigenvectors()(0, i);
    rule.nodes[i] = 0.5 * (1.0 + x);
    rule.weights[i] = mu0 * v0 * v0 * scale;
  }
  return rule;
}

/// Conical-product (collapsed coordinates) tet rule, exact to 2m-1 in total degree.
inline QuadRule conical_tet(int degree) {
  const int m = degree / 2 + 1;
  const Rule1d ru = gauss_jacobi_01(m, 2);
  const Rule1d rv = gauss_jacobi_01(m, 1);
  const Rule1d rw = gauss_jacobi_01(m, 0);
  QuadRule rule;
  rule.exactness_degree = degree;
  rule.points.reserve(m * m * m);
  rule.weights.reserve(m * m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j)
      for (int l = 0; l < m; ++l) {
        const double u = ru.nodes[i], v = rv.nodes[j], w = rw.nodes[l];
        rule.points.emplace_back(u, v * (1.0 - u), w * (1.0 - u) * (1.0 - v));
        rule.weights.push_back(ru.weights[i] * rv.weights[j] * rw.weights[l]);
      }
  return rule;
}

inline QuadRule conical_tri(int degree) {
  const int m = degree / 2 + 1;
  const Rule1d ru = gauss_jacobi_01(m, 1);
  const Rule1d rv = gauss_jacobi_01(m, 0);
  QuadRule rule;
  rule.exactness_degree = degree;
  rule.points.reserve(m * m);
  rule.weights.reserve(m * m);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < m; ++j) {
      const double u = ru.nodes[i], v = rv.nodes[j];
      rule.points.emplace_back(u, v * (1.0 - u), 0.0);
      rule.weights.push_back(ru.weights[i] * rv.weights[j]);
    }
  return rule;
}

inline QuadRule table_tet(int degree) {
  QuadRule rule;
  rule.exactness_degree = degree;
  if (degree <= 1) {
    rule.points = {Vec3(0.25, 0.25, 0.25)};
    rule.weights = {1.0 / 6.0};
  } else {
    // classical symmetric 4-point rule, exact to degree 2
    const double s5 = std::sqrt(5.0);
    const double a = (5.0 - s5) / 20.0;
    const double b = (5.0 + 3.0 * s5) / 20.0;
    rule.points = {Vec3(a, a, a), Vec3(b, a, a), Vec3(a, b, a), Vec3(a, a, b)};
    rule.weights = {1.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0, 1.0 / 24.0};
  }
  return rule;
}

inline QuadRule table_tri(int degree) {
  QuadRule rule;
  rule.exactness_degree = degree;
  if (degree <= 1) {
    rule.points = {Vec3(1.0 / 3.0, 1.0 / 3.0, 0.0)};
    rule.weights = {0.5};
  } else {
    const double a = 1.0 / 6.0, b = 2.0 / 3.0;
    rule.points = {Vec3(a, a, 0.0), Vec3(b, a, 0.0), Vec3(a, b, 0.0)};
    rule.weights = {1.0 / 6.0, 1.0 / 6.0, 1.0 / 6.0};
  }
  return rule;
}

inline void validate_rule(const QuadRule& rule, bool is_tet) {
  const double measure = is_tet ? 1.0 / 6.0 : 0.5;
  double wsum = 0.0;
  for (double w : rule.weights) wsum += w;
  if (std::abs(wsum - measure) > 1e-14)
    throw ConsistencyError("quadrature: weight sum off reference measure");
  const int d = rule.exactness_degree;
  for (int a = 0; a <= d; ++a)
    for (int b = 0; a + b <= d; ++b)
      for (int c = 0; a + b + c <= d; ++c) {
        if (!is_tet && c > 0) continue;
        double q = 0.0;
        for (int i = 0; i < rule.size(); ++i) {
          const Vec3& p = rule.points[i];
          q += rule.weights[i] * std::pow(p.x(), a) * std::pow(p.y(), b) *
               (is_tet ? std::pow(p.z(), c) : 1.0);
        }
        const double exact = is_tet ? tet_monomial_integral(a, b, c)
                                    : tri_monomial_integral(a, b);
        if (std::abs(q - exact) > 1e-12 * std::abs(exact))
          throw ConsistencyError("quadrature: monomial exactness check failed");
      }
}

}  // namespace detail

/// Rule on the reference tetrahedron, exact for all polynomials of total
/// degree <= `degree`. Rules are cached and checked against the factorial
/// monomial formula the first time a degree is requested.
inline const QuadRule& tet_rule(int degree) {
  if (degree < 0 || degree > kMaxQuadDegree)
    throw UnsupportedError("tet_rule: unsupported degree " + std::to_string(degree));
  static std::map<int, QuadRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(degree);
  if (it == cache.end()) {
    QuadRule rule = degree <= 2 ? detail::table_tet(degree) : detail::conical_tet(degree);
    detail::validate_rule(rule, /*is_tet=*/true);
    it = cache.emplace(degree, std::move(rule)).first;
  }
  return it->second;
}

/// Rule on the reference triangle, same contract as tet_rule.
inline const QuadRule& tri_rule(int degree) {
  if (degree < 0 || degree > kMaxQuadDegree)
    throw UnsupportedError("tri_rule: unsupported degree " + std::to_string(degree));
  static std::map<int, QuadRule> cache;
  static std::mutex mtx;
  std::lock_guard<std::mutex> lock(mtx);
  auto it = cache.find(degree);
  if (it == cache.end()) {
    QuadRule rule = degree <= 2 ? detail::table_tri(degree) : detail::conical_tri(degree);
    detail::validate_rule(rule, /*is_tet=*/false);
    it = cache.emplace(degree, std::move(rule)).first;
  }
  return it->second;
}

/// Affine map of a reference-tet rule onto the tet (p0,p1,p2,p3);
/// mapped weights sum to the element volume.
inline MappedRule map_to_tet(const QuadRule& rule, const Vec3& p0, const Vec3& p1,
                             const Vec3& p2, const Vec3& p3) {
  Mat3 jac;
  jac.col(0) = p1 - p0;
  jac.col(1) = p2 - p0;
  jac.col(2) = p3 - p0;
  const double adet = std::abs(jac.determinant());
  MappedRule out;
  out.points.resize(rule.size());
  out.weights.resize(rule.size());
  for (int i = 0; i < rule.size(); ++i) {
    out.points[i] = p0 + jac * rule.points[i];
    out.weights[i] = rule.weights[i] * adet;
  }
  return out;
}

/// Affine map of a reference-triangle rule onto the face (a,b,c);
/// mapped weights sum to the face area.
inline MappedRule map_to_face(const QuadRule& rule, const Vec3& a, const Vec3& b,
                              const Vec3& c) {
  const Vec3 e1 = b - a;
  const Vec3 e2 = c - a;
  const double two_area = e1.cross(e2).norm();
  MappedRule out;
  out.points.resize(rule.size());
  out.weights.resize(rule.size());
  for (int i = 0; i < rule.size(); ++i) {
    out.points[i] = a + rule.points[i].x() * e1 + rule.points[i].y() * e2;
    out.weights[i] = rule.weights[i] * two_area;
  }
  return out;
}

}  // namespace mhdfem
