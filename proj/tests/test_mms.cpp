#include "mhdfem/mms.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "mhdfem/fespace.hpp"
#include "mhdfem/mesh.hpp"
#include "mhdfem/quadrature.hpp"
#include "support/oracles.hpp"

using namespace mhdfem;

namespace {

double fd_divergence(const VectorField& f, const Vec3& x, double step = 1e-5) {
  double div = 0.0;
  for (int d = 0; d < 3; ++d) {
    Vec3 xp = x, xm = x;
    xp(d) += step;
    xm(d) -= step;
    div += (f(xp)(d) - f(xm)(d)) / (2.0 * step);
  }
  return div;
}

Vec3 fd_curl(const VectorField& f, const Vec3& x, double step = 1e-5) {
  const Mat3 jac = oracles::fd_jacobian(f, x, step);
  return Vec3(jac(2, 1) - jac(1, 2), jac(0, 2) - jac(2, 0), jac(1, 0) - jac(0, 1));
}

}  // namespace

TEST(Mms, PointValues) {
  auto ex = exact_solution();
  const Vec3 u = ex.u(Vec3(0.5, 0.0, 0.0));
  EXPECT_NEAR(u(0), 1.0, 1e-15);
  EXPECT_NEAR(u(1), 0.0, 1e-15);
  EXPECT_NEAR(u(2), 0.0, 1e-15);
}

TEST(Mms, VelocityIsSolenoidal) {
  auto ex = exact_solution();
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x = oracles::random_point_in_unit_cube();
    EXPECT_NEAR(ex.grad_u(x).trace(), 0.0, 1e-12);
    EXPECT_NEAR(fd_divergence(ex.u, x), 0.0, 1e-8);
  }
}

TEST(Mms, MagneticIsSolenoidal) {
  auto ex = exact_solution();
  for (int i = 0; i < 1000; ++i) {
    const Vec3 x = oracles::random_point_in_unit_cube();
    EXPECT_NEAR(ex.grad_B(x).trace(), 0.0, 1e-12);
  }
}

TEST(Mms, CurlOfMagneticField) {
  auto ex = exact_solution();
  const double pi = M_PI;
  for (int i = 0; i < 50; ++i) {
    const Vec3 x = oracles::random_point_in_unit_cube();
    const Vec3 expected(-pi * std::cos(pi * x(2)), -pi * std::cos(pi * x(0)),
                        -pi * std::cos(pi * x(1)));
    EXPECT_NEAR((ex.curl_B(x) - expected).norm(), 0.0, 1e-14);
    EXPECT_NEAR((fd_curl(ex.B, x) - expected).norm(), 0.0, 1e-7);
  }
}

TEST(Mms, DerivativesAgreeWithFiniteDifferences) {
  auto ex = exact_solution();
  for (int i = 0; i < 100; ++i) {
    const Vec3 x = oracles::random_point_in_unit_cube();
    EXPECT_LE((oracles::fd_jacobian(ex.u, x) - ex.grad_u(x)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((oracles::fd_jacobian(ex.B, x) - ex.grad_B(x)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((oracles::fd_gradient(ex.p, x) - ex.grad_p(x)).cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE((fd_curl(ex.curl_B, x) - ex.curl_curl_B(x)).cwiseAbs().maxCoeff(), 1e-6);
    // div eps(u) = Laplacian(u)/2 since div u = 0; check row by row by FD of grad_u
    Mat3 d2[3];  // d2[d] = FD derivative of grad_u in direction d
    for (int d = 0; d < 3; ++d) {
      Vec3 xp = x, xm = x;
      xp(d) += 1e-5;
      xm(d) -= 1e-5;
      d2[d] = (ex.grad_u(xp) - ex.grad_u(xm)) / 2e-5;
    }
    Vec3 div_eps;
    for (int r = 0; r < 3; ++r) {
      double acc = 0.0;
      for (int c = 0; c < 3; ++c) acc += 0.5 * (d2[c](r, c) + d2[c](c, r));
      div_eps(r) = acc;
    }
    EXPECT_LE((div_eps - ex.div_eps_u(x)).cwiseAbs().maxCoeff(), 1e-6);
  }
}

TEST(Mms, VelocityNormalTraceVanishesOnBoundary) {
  auto ex = exact_solution();
  auto mesh = generate_structured_cube(2);
  const auto& rule = tri_rule(6);
  for (const auto& face : mesh.faces) {
    if (!face.is_boundary) continue;
    auto mapped = map_to_face(rule, mesh.vertices[face.vertex_ids[0]],
                              mesh.vertices[face.vertex_ids[1]],
                              mesh.vertices[face.vertex_ids[2]]);
    for (int p = 0; p < mapped.size(); ++p)
      EXPECT_NEAR(ex.u(mapped.points[p]).dot(face.n_f), 0.0, 1e-12);
  }
}

TEST(Mms, AdvectionBindingsSatisfyFieldRequirements) {
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  // div chi = 0 and chi.n = 0 on the boundary; Theta happens to be solenoidal
  for (int i = 0; i < 200; ++i) {
    const Vec3 x = oracles::random_point_in_unit_cube();
    EXPECT_NEAR(fd_divergence(fields.chi, x), 0.0, 1e-8);
  }
  auto zero_fields = advection_fields(ex, false, false);
  EXPECT_NEAR(zero_fields.chi(Vec3(0.3, 0.4, 0.5)).norm(), 0.0, 0.0);
  EXPECT_NEAR(zero_fields.theta(Vec3(0.3, 0.4, 0.5)).norm(), 0.0, 0.0);
}

TEST(Mms, ForcingReactionOnlyCases) {
  auto ex = exact_solution();
  // sigma_S = 1, nu_S = 0, chi = Theta = 0, and no pressure gradient -> f = u
  ExactSolution no_p = ex;
  no_p.p = [](const Vec3&) { return 0.0; };
  no_p.grad_p = [](const Vec3&) { return Vec3(Vec3::Zero()); };
  PhysicalParams params;
  params.sigma_s = 1.0;
  params.nu_s = 0.0;
  params.sigma_m = 1.0;
  params.nu_m = 0.0;
  auto fields = advection_fields(ex, false, false);
  auto loads = forcing(params, no_p, fields);
  for (int i = 0; i < 20; ++i) {
    const Vec3 x = oracles::random_point_in_unit_cube();
    EXPECT_NEAR((loads.f(x) - ex.u(x)).norm(), 0.0, 1e-14);
    EXPECT_NEAR((loads.G(x) - ex.B(x)).norm(), 0.0, 1e-14);
  }
}

TEST(Mms, WeakResidualOnCompactlySupportedTestFields) {
  // quadrature of sigma_S (u,w) + nu_S (eps u, eps w) + ((grad u) chi, w)
  //   - (curl B x Theta, w) + (p, div w) - (f, w) must vanish for test fields
  // with zero boundary trace
  auto ex = exact_solution();
  PhysicalParams params;
  params.sigma_s = 1.0;
  params.nu_s = 1e-5;
  params.sigma_m = 1.0;
  params.nu_m = 1e-5;
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);

  auto mesh = generate_structured_cube(2);
  const auto geo = compute_geometry(mesh);
  const auto& rule = tet_rule(kSmoothMomentDegree);

  std::mt19937 gen(4242u);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  for (int trial = 0; trial < 20; ++trial) {
    // random quadratic polynomial per component, multiplied by the cube bubble
    Eigen::Matrix<double, 3, 10> c;
    for (int i = 0; i < c.size(); ++i) c(i) = d(gen);
    auto bubble = [](const Vec3& x) {
      return x(0) * (1 - x(0)) * x(1) * (1 - x(1)) * x(2) * (1 - x(2));
    };
    const auto& exps = detail::monomial_exponents(2);
    auto w_field = [&](const Vec3& x) {
      Vec3 v = Vec3::Zero();
      for (int s = 0; s < 10; ++s) v += c.col(s) * detail::mono_eval(exps[s], x);
      return Vec3(v * bubble(x));
    };
    auto grad_w = [&](const Vec3& x) { return oracles::fd_jacobian(w_field, x, 1e-6); };

    double residual = 0.0, scale = 0.0;
    for (int t = 0; t < mesh.n_tets(); ++t) {
      const ElemGeom& g = geo[t];
      for (int p = 0; p < rule.size(); ++p) {
        const Vec3 x = g.p0 + g.jac * rule.points[p];
        const double wq = rule.weights[p] * g.det;
        const Vec3 w = w_field(x);
        const Mat3 gw = grad_w(x);
        const Mat3 eps_u = 0.5 * (ex.grad_u(x) + ex.grad_u(x).transpose());
        const Mat3 eps_w = 0.5 * (gw + gw.transpose());
        double term = params.sigma_s * ex.u(x).dot(w);
        term += params.nu_s * (eps_u.cwiseProduct(eps_w)).sum();
        term += (ex.grad_u(x) * fields.chi(x)).dot(w);
        term -= (ex.curl_B(x).cross(fields.theta(x))).dot(w);
        term += ex.p(x) * gw.trace();
        term -= loads.f(x).dot(w);
        residual += wq * term;
        scale += wq * std::abs(loads.f(x).dot(w));
      }
    }
    EXPECT_LE(std::abs(residual), 1e-8 * std::max(scale, 1e-30)) << "trial " << trial;
  }
}

TEST(Mms, BoundaryDataConsistentWithExactSolution) {
  auto ex = exact_solution();
  auto bc = boundary_data(ex);
  // g_u at a point of the face x = 0
  const Vec3 x0(0.0, 0.5, 0.5);
  EXPECT_NEAR((bc.g_u(x0) - ex.u(x0)).norm(), 0.0, 0.0);
  EXPECT_NEAR(bc.g_u(x0)(0), 0.0, 1e-15);  // u.n = 0 there

  // g_B at the corner: B(0,0,0) = 0, all constrained components vanish
  EXPECT_NEAR(bc.g_B(Vec3(0, 0, 0)).norm(), 0.0, 1e-15);

  // j on the face x = 1 equals curl B restricted there (symbolic oracle)
  for (double s : {0.1, 0.4, 0.9}) {
    const Vec3 x(1.0, s, 0.5 * s);
    EXPECT_NEAR((bc.j(x) - ex.curl_B(x)).norm(), 0.0, 0.0);
    EXPECT_NEAR((bc.j(x) - fd_curl(ex.B, x)).norm(), 0.0, 1e-7);
  }
}
