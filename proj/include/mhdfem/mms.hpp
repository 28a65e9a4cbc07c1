#pragma once

#include <cmath>
#include <functional>

#include "mhdfem/common.hpp"

namespace mhdfem {

using ScalarField = std::function<double(const Vec3&)>;
using VectorField = std::function<Vec3(const Vec3&)>;
using TensorField = std::function<Mat3(const Vec3&)>;

/// Closed-form trigonometric exact solution on (0,1)^3 and every derivative
/// the assembly and the error norms need. All evaluators are pure.
struct ExactSolution {
  VectorField u;
  TensorField grad_u;  // (grad u)_{ij} = d u_i / d x_j
  ScalarField p;
  VectorField grad_p;
  VectorField B;
  TensorField grad_B;
  VectorField curl_B;
  VectorField curl_curl_B;
  VectorField div_eps_u;  // row divergence of the symmetric gradient of u
};

/// The experiment solution: u is solenoidal (the third component carries a
/// minus sign so that div u = 0 identically), B is solenoidal, p has zero mean.
inline ExactSolution exact_solution() {
  const double pi = M_PI;
  ExactSolution ex;
  ex.u = [pi](const Vec3& x) {
    const double sx = std::sin(pi * x(0)), cx = std::cos(pi * x(0));
    const double sy = std::sin(pi * x(1)), cy = std::cos(pi * x(1));
    const double sz = std::sin(pi * x(2)), cz = std::cos(pi * x(2));
    return Vec3(sx * cy * cz, cx * sy * cz, -2.0 * cx * cy * sz);
  };
  ex.grad_u = [pi](const Vec3& x) {
    const double sx = std::sin(pi * x(0)), cx = std::cos(pi * x(0));
    const double sy = std::sin(pi * x(1)), cy = std::cos(pi * x(1));
    const double sz = std::sin(pi * x(2)), cz = std::cos(pi * x(2));
    Mat3 g;
    g << pi * cx * cy * cz, -pi * sx * sy * cz, -pi * sx * cy * sz,
        -pi * sx * sy * cz, pi * cx * cy * cz, -pi * cx * sy * sz,
        2.0 * pi * sx * cy * sz, 2.0 * pi * cx * sy * sz, -2.0 * pi * cx * cy * cz;
    return g;
  };
  ex.p = [](const Vec3& x) {
    return std::sin(x(0)) + std::sin(x(1)) - 2.0 * std::sin(x(2));
  };
  ex.grad_p = [](const Vec3& x) {
    return Vec3(std::cos(x(0)), std::cos(x(1)), -2.0 * std::cos(x(2)));
  };
  ex.B = [pi](const Vec3& x) {
    return Vec3(std::sin(pi * x(1)), std::sin(pi * x(2)), std::sin(pi * x(0)));
  };
  ex.grad_B = [pi](const Vec3& x) {
    Mat3 g = Mat3::Zero();
    g(0, 1) = pi * std::cos(pi * x(1));
    g(1, 2) = pi * std::cos(pi * x(2));
    g(2, 0) = pi * std::cos(pi * x(0));
    return g;
  };
  ex.curl_B = [pi](const Vec3& x) {
    return Vec3(-pi * std::cos(pi * x(2)), -pi * std::cos(pi * x(0)),
                -pi * std::cos(pi * x(1)));
  };
  ex.curl_curl_B = [pi, B = ex.B](const Vec3& x) { return Vec3(pi * pi * B(x)); };
  // div u = 0, so div eps(u) = Laplacian(u)/2 = -(3/2) pi^2 u
  ex.div_eps_u = [pi, u = ex.u](const Vec3& x) {
    return Vec3(-1.5 * pi * pi * u(x));
  };
  return ex;
}

/// Fluid and magnetic advective fields; the experiments bind chi = u and
/// Theta = B, the magneto-convective runs bind chi = 0.
struct AdvectionFields {
  bool chi_is_u = true;    // otherwise chi = 0
  bool theta_is_B = true;  // otherwise Theta = 0
  VectorField chi;
  VectorField theta;
};

inline AdvectionFields advection_fields(const ExactSolution& ex, bool chi_is_u,
                                        bool theta_is_B) {
  AdvectionFields fields;
  fields.chi_is_u = chi_is_u;
  fields.theta_is_B = theta_is_B;
  fields.chi = chi_is_u ? ex.u : VectorField([](const Vec3&) { return Vec3::Zero(); });
  fields.theta =
      theta_is_B ? ex.B : VectorField([](const Vec3&) { return Vec3::Zero(); });
  return fields;
}

struct PhysicalParams {
  double sigma_s = 1.0;
  double sigma_m = 1.0;
  double nu_s = 1.0;
  double nu_m = 1.0;
};

struct Forcing {
  VectorField f;  // momentum load
  VectorField G;  // magnetic load
};

/// Analytically derived loads:
///   f = sigma_S u - nu_S div eps(u) + (grad u) chi + Theta x curl B - grad p
///   G = sigma_M B + nu_M curl curl B - curl(u x Theta)
/// with curl(u x B) = (grad u) B - (grad B) u for the solenoidal pair (u, B).
inline Forcing forcing(const PhysicalParams& params, const ExactSolution& ex,
                       const AdvectionFields& fields) {
  Forcing out;
  out.f = [params, ex, fields](const Vec3& x) {
    Vec3 f = params.sigma_s * ex.u(x) - params.nu_s * ex.div_eps_u(x) - ex.grad_p(x);
    if (fields.chi_is_u) f += ex.grad_u(x) * ex.u(x);
    if (fields.theta_is_B) f += ex.B(x).cross(ex.curl_B(x));
    return f;
  };
  out.G = [params, ex, fields](const Vec3& x) {
    Vec3 g = params.sigma_m * ex.B(x) + params.nu_m * ex.curl_curl_B(x);
    if (fields.theta_is_B) g -= ex.grad_u(x) * ex.B(x) - ex.grad_B(x) * ex.u(x);
    return g;
  };
  return out;
}

/// Boundary data bundle: full velocity trace (tangential data enters the SIP
/// form Nitsche-style, the normal moments feed the essential BDM constraints),
/// the exact magnetic field for the nodal B.n constraints, and the curl trace
/// feeding the natural flux term.
struct BoundaryData {
  VectorField g_u;
  VectorField g_B;
  VectorField j;  // curl B on the boundary
};

inline BoundaryData boundary_data(const ExactSolution& ex) {
  return BoundaryData{ex.u, ex.B, ex.curl_B};
}

inline BoundaryData homogeneous_boundary_data() {
  auto zero = [](const Vec3&) { return Vec3(Vec3::Zero()); };
  return BoundaryData{zero, zero, zero};
}

}  // namespace mhdfem
