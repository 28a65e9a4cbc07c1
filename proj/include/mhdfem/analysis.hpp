#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mhdfem/system.hpp"

namespace mhdfem {

/// All error norms of one solve. The energy norm satisfies
/// err_u_stab^2 = err_u_S^2 + err_u_upw^2 + err_u_cip^2 by construction;
/// the jump weights carry the run's penalty parameters.
struct ErrorReport {
  double err_u_L2 = 0.0;
  double err_u_H1 = 0.0;  // broken gradient seminorm
  double err_u_S = 0.0;
  double err_u_upw = 0.0;
  double err_u_cip = 0.0;
  double err_u_stab = 0.0;
  double err_u_1h = 0.0;
  double err_p_L2 = 0.0;
  double err_B_L2 = 0.0;
  double err_B_H1 = 0.0;  // gradient seminorm
  double err_B_M = 0.0;
};

inline std::vector<std::pair<std::string, double>> error_entries(const ErrorReport& r) {
  return {{"err_u_L2", r.err_u_L2},   {"err_u_H1", r.err_u_H1},
          {"err_u_S", r.err_u_S},     {"err_u_upw", r.err_u_upw},
          {"err_u_cip", r.err_u_cip}, {"err_u_stab", r.err_u_stab},
          {"err_p_L2", r.err_p_L2},   {"err_B_L2", r.err_B_L2},
          {"err_B_H1", r.err_B_H1},   {"err_B_M", r.err_B_M}};
}

/// An all-zero "exact solution", turning compute_errors into a norm evaluator
/// for discrete fields.
inline ExactSolution zero_exact_solution() {
  ExactSolution ex;
  auto zero_v = [](const Vec3&) { return Vec3(Vec3::Zero()); };
  auto zero_m = [](const Vec3&) { return Mat3(Mat3::Zero()); };
  auto zero_s = [](const Vec3&) { return 0.0; };
  ex.u = zero_v;
  ex.grad_u = zero_m;
  ex.p = zero_s;
  ex.grad_p = zero_v;
  ex.B = zero_v;
  ex.grad_B = zero_m;
  ex.curl_B = zero_v;
  ex.curl_curl_B = zero_v;
  ex.div_eps_u = zero_v;
  return ex;
}

/// Norms of (exact - discrete), evaluated with the assembly quadrature so that
/// the energy seminorms match the assembled forms algebraically. Interior
/// jumps of the error equal minus the jumps of the discrete field; on boundary
/// faces the error trace is g_u - u_h.
inline ErrorReport compute_errors(const FESpaceTriple& spaces, const Solution& sol,
                                  const ExactSolution& exact, const BoundaryData& bc,
                                  const PhysicalParams& params, const StabParams& stab,
                                  const AdvectionFields& fields) {
  const BdmVelocitySpace& V = spaces.velocity;
  const LagrangeMagneticSpace& W = spaces.magnetic;
  const PressureSpace& Q = spaces.pressure;
  const TetMesh& mesh = V.mesh();
  const int k = V.degree();

  double l2_u = 0, grad_u = 0, eps_u = 0, l2_p = 0, l2_B = 0, grad_B = 0;
  double jump_u = 0, upw = 0, cip = 0;

  const QuadRule& vrule = tet_rule(assembly_degree(k));
  VelocityBasisEval basis;
  double N[10], modes[4];
  Vec3 gradN[10];
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const ElemGeom& g = V.geometry(t);
    for (int p = 0; p < vrule.size(); ++p) {
      const Vec3 x = g.p0 + g.jac * vrule.points[p];
      const double w = vrule.weights[p] * g.det;

      V.eval_basis(t, vrule.points[p], basis);
      Vec3 uh = Vec3::Zero();
      Mat3 guh = Mat3::Zero();
      for (int i = 0; i < V.n_local_dofs(); ++i) {
        const double c = sol.u[V.global_dof(t, i)];
        uh += c * basis.value[i];
        guh += c * basis.grad[i];
      }
      const Vec3 eu = exact.u(x) - uh;
      const Mat3 geu = exact.grad_u(x) - guh;
      const Mat3 epse = 0.5 * (geu + geu.transpose());
      l2_u += w * eu.squaredNorm();
      grad_u += w * geu.squaredNorm();
      eps_u += w * epse.squaredNorm();

      const double pe = exact.p(x) - Q.eval(t, vrule.points[p], sol.p);
      l2_p += w * pe * pe;
      (void)modes;

      W.eval_scalar_basis(t, vrule.points[p], N, gradN);
      Vec3 Bh = Vec3::Zero();
      Mat3 gBh = Mat3::Zero();
      for (int a = 0; a < W.n_local_nodes(); ++a)
        for (int c = 0; c < 3; ++c) {
          const double coef = sol.B[3 * W.local_node(t, a) + c];
          Bh(c) += coef * N[a];
          gBh.row(c) += coef * gradN[a].transpose();
        }
      const Vec3 eB = exact.B(x) - Bh;
      const Mat3 geB = exact.grad_B(x) - gBh;
      l2_B += w * eB.squaredNorm();
      grad_B += w * geB.squaredNorm();
    }
  }

  const QuadRule& frule = tri_rule(assembly_degree(k));
  for (int f = 0; f < mesh.n_faces(); ++f) {
    const FaceRecord& face = mesh.faces[f];
    auto mapped = map_to_face(frule, mesh.vertices[face.vertex_ids[0]],
                              mesh.vertices[face.vertex_ids[1]],
                              mesh.vertices[face.vertex_ids[2]]);
    double jump_sq = 0.0;
    double upw_full = 0.0, upw_plain = 0.0, chi_n_max = 0.0;
    double cip_theta_jump = 0.0, cip_grad_theta = 0.0;
    double cip_jump_plain = 0.0, cip_grad_plain = 0.0, theta_max2 = 0.0;
    for (int p = 0; p < mapped.size(); ++p) {
      const Vec3& x = mapped.points[p];
      const double w = mapped.weights[p];
      Vec3 jump;
      Mat3 gjump = Mat3::Zero();
      {
        const int t = face.owner_tet;
        V.eval_basis(t, V.map_to_reference(t, x), basis);
        Vec3 uh = Vec3::Zero();
        Mat3 guh = Mat3::Zero();
        for (int i = 0; i < V.n_local_dofs(); ++i) {
          const double c = sol.u[V.global_dof(t, i)];
          uh += c * basis.value[i];
          guh += c * basis.grad[i];
        }
        if (face.is_boundary) {
          jump = bc.g_u(x) - uh;
          gjump.setZero();  // gradient jumps live on interior faces only
        } else {
          jump = -uh;
          gjump = -guh;
        }
      }
      if (!face.is_boundary) {
        const int t = face.neighbor_tet;
        V.eval_basis(t, V.map_to_reference(t, x), basis);
        for (int i = 0; i < V.n_local_dofs(); ++i) {
          const double c = sol.u[V.global_dof(t, i)];
          jump += c * basis.value[i];
          gjump += c * basis.grad[i];
        }
      }
      jump_sq += w * jump.squaredNorm();
      if (!face.is_boundary) {
        const double chi_n = fields.chi(x).dot(face.n_f);
        chi_n_max = std::max(chi_n_max, std::abs(chi_n));
        upw_full += w * std::abs(chi_n) * jump.squaredNorm();
        upw_plain += w * jump.squaredNorm();
        const Vec3 theta = fields.theta(x);
        theta_max2 = std::max(theta_max2, theta.squaredNorm());
        cip_theta_jump += w * theta.cross(jump).squaredNorm();
        cip_grad_theta += w * (gjump * theta).squaredNorm();
        cip_jump_plain += w * jump.squaredNorm();
        cip_grad_plain += w * gjump.squaredNorm();
      }
    }
    jump_u += jump_sq / face.h_f;
    if (!face.is_boundary) {
      const double h2 = face.h_f * face.h_f;
      if (stab.variant == FormVariant::full) {
        upw += stab.mu_c * upw_full;
        cip += stab.mu_j1 * cip_theta_jump + stab.mu_j2 * h2 * cip_grad_theta;
      } else {
        upw += stab.mu_c * chi_n_max * upw_plain;
        cip += theta_max2 * (stab.mu_j1 * cip_jump_plain + stab.mu_j2 * h2 * cip_grad_plain);
      }
    }
  }

  ErrorReport r;
  r.err_u_L2 = std::sqrt(l2_u);
  r.err_u_H1 = std::sqrt(grad_u);
  r.err_u_S = std::sqrt(params.sigma_s * l2_u + params.nu_s * eps_u +
                        params.nu_s * stab.mu_a * jump_u);
  r.err_u_upw = std::sqrt(upw);
  r.err_u_cip = std::sqrt(cip);
  r.err_u_stab = std::sqrt(r.err_u_S * r.err_u_S + upw + cip);
  r.err_u_1h = std::sqrt(l2_u + eps_u + stab.mu_a * jump_u);
  r.err_p_L2 = std::sqrt(l2_p);
  r.err_B_L2 = std::sqrt(l2_B);
  r.err_B_H1 = std::sqrt(grad_B);
  r.err_B_M = std::sqrt(params.sigma_m * l2_B + params.nu_m * grad_B);
  return r;
}

/// Squared curl and divergence seminorms of a discrete magnetic field
/// (the a^M coercivity identity oracle).
inline std::pair<double, double> magnetic_curl_div_sq(const LagrangeMagneticSpace& W,
                                                      const Eigen::VectorXd& coeffs) {
  const QuadRule& rule = tet_rule(assembly_degree(W.degree()));
  double curl_sq = 0.0, div_sq = 0.0;
  double N[10];
  Vec3 gradN[10];
  for (int t = 0; t < W.mesh().n_tets(); ++t) {
    const double det = W.geometry(t).det;
    for (int p = 0; p < rule.size(); ++p) {
      W.eval_scalar_basis(t, rule.points[p], N, gradN);
      Vec3 curl = Vec3::Zero();
      double div = 0.0;
      for (int a = 0; a < W.n_local_nodes(); ++a)
        for (int c = 0; c < 3; ++c) {
          const double coef = coeffs[3 * W.local_node(t, a) + c];
          curl += coef * detail::lagrange_curl(gradN[a], c);
          div += coef * gradN[a](c);
        }
      curl_sq += rule.weights[p] * det * curl.squaredNorm();
      div_sq += rule.weights[p] * det * div * div;
    }
  }
  return {curl_sq, div_sq};
}

/// Rate table: consecutive-pair rates log(e1/e2)/log(h1/h2) and the
/// least-squares slope of log e against log h.
struct RateTable {
  std::vector<std::string> norms;
  std::vector<std::vector<double>> pairwise;  // [norm][level-1]
  std::vector<double> least_squares;          // [norm]
};

inline RateTable convergence_rates(const std::vector<std::pair<double, ErrorReport>>& runs) {
  if (runs.size() < 2)
    throw ConfigError("convergence_rates: need at least two mesh levels");
  for (std::size_t i = 1; i < runs.size(); ++i)
    if (!(runs[i].first < runs[i - 1].first))
      throw ConfigError("convergence_rates: h must be strictly decreasing");

  RateTable table;
  const auto names = error_entries(runs[0].second);
  for (const auto& [name, _] : names) table.norms.push_back(name);
  table.pairwise.assign(table.norms.size(), {});
  table.least_squares.assign(table.norms.size(), 0.0);

  for (std::size_t n = 0; n < table.norms.size(); ++n) {
    std::vector<double> h, e;
    for (const auto& [hi, rep] : runs) {
      h.push_back(hi);
      e.push_back(error_entries(rep)[n].second);
    }
    for (std::size_t i = 1; i < h.size(); ++i) {
      const double num = std::log(e[i - 1] / e[i]);
      const double den = std::log(h[i - 1] / h[i]);
      table.pairwise[n].push_back((e[i - 1] == 0.0 && e[i] == 0.0) ? 0.0 : num / den);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double m = static_cast<double>(h.size());
    bool valid = true;
    for (std::size_t i = 0; i < h.size(); ++i) {
      if (e[i] <= 0.0) valid = false;
    }
    if (valid) {
      for (std::size_t i = 0; i < h.size(); ++i) {
        const double lx = std::log(h[i]), ly = std::log(e[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
      }
      table.least_squares[n] = (m * sxy - sx * sy) / (m * sxx - sx * sx);
    }
  }
  return table;
}

/// The regime quantities Lambda_S, Lambda_M, with the four Lambda_S entries
/// exposed for term-by-term diagnostics. Face L-infinity norms are approximated
/// by maxima over face quadrature points; h defaults to h_max.
struct RegimeDiagnostics {
  double lambda_S = 0.0;
  double lambda_M = 0.0;
  double entry_reaction = 0.0;   // sigma_S h^2
  double entry_chi = 0.0;        // max_f ||chi.n_f|| h
  double entry_theta = 0.0;      // max_f ||Theta||^2 h
  double entry_diffusion = 0.0;  // nu_S (1 + mu_a + 1/mu_a)
};

inline RegimeDiagnostics regime_from_quantities(const PhysicalParams& params,
                                                const StabParams& stab, double chi_n_max,
                                                double theta_max2, double h) {
  RegimeDiagnostics d;
  d.entry_reaction = params.sigma_s * h * h;
  d.entry_chi = chi_n_max * h;
  d.entry_theta = theta_max2 * h;
  d.entry_diffusion = params.nu_s * (1.0 + stab.mu_a + 1.0 / stab.mu_a);
  d.lambda_S = std::sqrt(
      std::max({d.entry_reaction, d.entry_chi, d.entry_theta, d.entry_diffusion}));
  d.lambda_M = std::sqrt(std::max(params.sigma_m * h * h, params.nu_m));
  return d;
}

inline RegimeDiagnostics regime_diagnostics(const PhysicalParams& params,
                                            const StabParams& stab,
                                            const AdvectionFields& fields,
                                            const TetMesh& mesh, int quad_degree = 6) {
  const MeshMetrics metrics = mesh_metrics(mesh);
  const double h = metrics.h_max;
  double chi_n_max = 0.0, theta_max2 = 0.0;
  const QuadRule& rule = tri_rule(quad_degree);
  for (const auto& face : mesh.faces) {
    if (face.is_boundary) continue;
    auto mapped = map_to_face(rule, mesh.vertices[face.vertex_ids[0]],
                              mesh.vertices[face.vertex_ids[1]],
                              mesh.vertices[face.vertex_ids[2]]);
    for (int p = 0; p < mapped.size(); ++p) {
      chi_n_max = std::max(chi_n_max, std::abs(fields.chi(mapped.points[p]).dot(face.n_f)));
      theta_max2 = std::max(theta_max2, fields.theta(mapped.points[p]).squaredNorm());
    }
  }
  return regime_from_quantities(params, stab, chi_n_max, theta_max2, h);
}

}  // namespace mhdfem
