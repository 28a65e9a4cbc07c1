#pragma once

#include <Eigen/Sparse>

#include <functional>
#include <mutex>
#include <thread>
#include <vector>

#include "mhdfem/fespace.hpp"
#include "mhdfem/mms.hpp"

namespace mhdfem {

enum class Scheme { mfStab, fStab };
enum class FormVariant { full, simplified };

/// Stabilization parameters and scheme switches. fStab drops the CIP form
/// entirely; the simplified variant replaces pointwise upwind/CIP weights by
/// face-constant L-infinity factors.
struct StabParams {
  double mu_a = 10.0;
  double mu_c = 1.0;
  double mu_j1 = 5.0;
  double mu_j2 = 0.01;
  Scheme scheme = Scheme::mfStab;
  FormVariant variant = FormVariant::full;
};

using Triplet = Eigen::Triplet<double>;
using TripletList = std::vector<Triplet>;

/// Assembly quadrature degree for matrix terms of a degree-k scheme.
inline int assembly_degree(int k) { return 2 * k + 2; }

namespace detail {

/// Deterministic parallel loop: each thread fills its own triplet list over a
/// contiguous chunk; chunks are concatenated in order, so any thread count
/// yields the same sequence as the serial loop.
template <typename KernelFactory>
TripletList parallel_assemble(int n_items, int n_threads, KernelFactory&& make_kernel) {
  n_threads = std::max(1, std::min(n_threads, n_items > 0 ? n_items : 1));
  if (n_threads == 1) {
    TripletList out;
    auto kernel = make_kernel();
    for (int i = 0; i < n_items; ++i) kernel(i, out);
    return out;
  }
  std::vector<TripletList> parts(n_threads);
  std::vector<std::thread> workers;
  const int chunk = (n_items + n_threads - 1) / n_threads;
  for (int w = 0; w < n_threads; ++w) {
    const int lo = w * chunk;
    const int hi = std::min(n_items, lo + chunk);
    workers.emplace_back([lo, hi, &parts, w, &make_kernel]() {
      auto kernel = make_kernel();
      for (int i = lo; i < hi; ++i) kernel(i, parts[w]);
    });
  }
  for (auto& t : workers) t.join();
  TripletList out;
  std::size_t total = 0;
  for (const auto& p : parts) total += p.size();
  out.reserve(total);
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

/// Trace data of all velocity basis functions living on one face: the owner
/// block first, then (on interior faces) the neighbor block.
struct FaceTrace {
  const FaceRecord* face = nullptr;
  MappedRule mapped;
  int n_sides = 1;
  int n_local = 0;
  std::vector<int> global;      // n_sides * n_local
  std::vector<double> sign;     // jump sign: +1 owner, -1 neighbor
  // per quad point p, per row r: value and physical gradient of the trace
  std::vector<std::vector<Vec3>> value;
  std::vector<std::vector<Mat3>> grad;

  void build(const BdmVelocitySpace& space, int f, const QuadRule& rule,
             VelocityBasisEval& scratch) {
    const TetMesh& mesh = space.mesh();
    face = &mesh.faces[f];
    mapped = map_to_face(rule, mesh.vertices[face->vertex_ids[0]],
                         mesh.vertices[face->vertex_ids[1]],
                         mesh.vertices[face->vertex_ids[2]]);
    n_sides = face->is_boundary ? 1 : 2;
    n_local = space.n_local_dofs();
    const int rows = n_sides * n_local;
    global.resize(rows);
    sign.resize(rows);
    value.assign(mapped.size(), std::vector<Vec3>(rows));
    grad.assign(mapped.size(), std::vector<Mat3>(rows));
    for (int side = 0; side < n_sides; ++side) {
      const int tet = side == 0 ? face->owner_tet : face->neighbor_tet;
      for (int i = 0; i < n_local; ++i) {
        global[side * n_local + i] = space.global_dof(tet, i);
        sign[side * n_local + i] = side == 0 ? 1.0 : -1.0;
      }
      for (int p = 0; p < mapped.size(); ++p) {
        space.eval_basis(tet, space.map_to_reference(tet, mapped.points[p]), scratch);
        for (int i = 0; i < n_local; ++i) {
          value[p][side * n_local + i] = scratch.value[i];
          grad[p][side * n_local + i] = scratch.grad[i];
        }
      }
    }
  }

  double avg_factor() const { return n_sides == 2 ? 0.5 : 1.0; }
};

}  // namespace detail

/// sigma-weighted velocity mass block.
inline TripletList assemble_mass_velocity(const BdmVelocitySpace& space, double sigma,
                                          int n_threads = 1) {
  const QuadRule& rule = tet_rule(assembly_degree(space.degree()));
  const int nl = space.n_local_dofs();
  return detail::parallel_assemble(space.mesh().n_tets(), n_threads, [&]() {
    return [&space, &rule, nl, sigma, basis = VelocityBasisEval{}](
               int t, TripletList& out) mutable {
      const double det = space.geometry(t).det;
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nl, nl);
      for (int p = 0; p < rule.size(); ++p) {
        space.eval_basis(t, rule.points[p], basis);
        const double w = sigma * rule.weights[p] * det;
        for (int i = 0; i < nl; ++i)
          for (int j = 0; j < nl; ++j)
            local(i, j) += w * basis.value[i].dot(basis.value[j]);
      }
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j)
          out.emplace_back(space.global_dof(t, i), space.global_dof(t, j), local(i, j));
    };
  });
}

/// nu_S-weighted SIP form: volume (eps_h u, eps_h v) plus consistency and
/// penalty terms over all faces ([.] = trace on boundary faces).
/// Inhomogeneous tangential data g enters Nitsche-style on the right-hand side:
///   rhs += mu_a nu_S h_f^{-1} (g, v)_f - nu_S (g, eps_h(v) n_f)_f.
inline std::pair<TripletList, Eigen::VectorXd> assemble_fluid_diffusion(
    const BdmVelocitySpace& space, double nu_s, double mu_a, const VectorField& g_u,
    int n_threads = 1) {
  const int nl = space.n_local_dofs();
  const QuadRule& vrule = tet_rule(assembly_degree(space.degree()));
  const QuadRule& frule = tri_rule(assembly_degree(space.degree()));

  TripletList trips = detail::parallel_assemble(space.mesh().n_tets(), n_threads, [&]() {
    return [&space, &vrule, nl, nu_s, basis = VelocityBasisEval{}](
               int t, TripletList& out) mutable {
      const double det = space.geometry(t).det;
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nl, nl);
      for (int p = 0; p < vrule.size(); ++p) {
        space.eval_basis(t, vrule.points[p], basis);
        const double w = nu_s * vrule.weights[p] * det;
        for (int i = 0; i < nl; ++i) {
          const Mat3 eps_i = 0.5 * (basis.grad[i] + basis.grad[i].transpose());
          for (int j = 0; j <= i; ++j) {
            const Mat3 eps_j = 0.5 * (basis.grad[j] + basis.grad[j].transpose());
            const double v = w * eps_i.cwiseProduct(eps_j).sum();
            local(i, j) += v;
            if (j != i) local(j, i) += v;
          }
        }
      }
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j)
          out.emplace_back(space.global_dof(t, i), space.global_dof(t, j), local(i, j));
    };
  });

  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(space.n_dofs());
  std::mutex rhs_mutex;
  TripletList face_trips =
      detail::parallel_assemble(space.mesh().n_faces(), n_threads, [&]() {
        return [&space, &frule, nu_s, mu_a, &g_u, &rhs, &rhs_mutex,
                trace = detail::FaceTrace{},
                scratch = VelocityBasisEval{}](int f, TripletList& out) mutable {
          trace.build(space, f, frule, scratch);
          const FaceRecord& face = *trace.face;
          const double avg = trace.avg_factor();
          const double penalty = mu_a / face.h_f;
          const int rows = trace.n_sides * trace.n_local;
          Eigen::MatrixXd local = Eigen::MatrixXd::Zero(rows, rows);
          Eigen::VectorXd local_rhs = Eigen::VectorXd::Zero(rows);
          for (int p = 0; p < trace.mapped.size(); ++p) {
            const double w = nu_s * trace.mapped.weights[p];
            for (int r = 0; r < rows; ++r) {
              const Vec3 jump_r = trace.sign[r] * trace.value[p][r];
              const Mat3 eps_r =
                  0.5 * (trace.grad[p][r] + trace.grad[p][r].transpose());
              const Vec3 avg_eps_n_r = avg * (eps_r * face.n_f);
              for (int c = 0; c < rows; ++c) {
                const Vec3 jump_c = trace.sign[c] * trace.value[p][c];
                const Mat3 eps_c =
                    0.5 * (trace.grad[p][c] + trace.grad[p][c].transpose());
                const Vec3 avg_eps_n_c = avg * (eps_c * face.n_f);
                local(r, c) += w * (-avg_eps_n_c.dot(jump_r) - jump_c.dot(avg_eps_n_r) +
                                    penalty * jump_c.dot(jump_r));
              }
              if (face.is_boundary) {
                const Vec3 g = g_u(trace.mapped.points[p]);
                local_rhs[r] += w * (penalty * g.dot(trace.value[p][r]) -
                                     g.dot(avg_eps_n_r));
              }
            }
          }
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < rows; ++c)
              out.emplace_back(trace.global[r], trace.global[c], local(r, c));
          if (face.is_boundary) {
            std::lock_guard<std::mutex> lock(rhs_mutex);
            for (int r = 0; r < rows; ++r) rhs[trace.global[r]] += local_rhs[r];
          }
        };
      });
  trips.insert(trips.end(), face_trips.begin(), face_trips.end());
  return {std::move(trips), std::move(rhs)};
}

/// Convection form c_h. The volume term is assembled in split skew-symmetric
/// form, which coincides with ((grad_h u) chi, v) for exactly solenoidal chi
/// with vanishing boundary flux and makes c_h(v,v) = |v|^2_upw hold pointwise
/// at the quadrature level. Interior faces carry the centered flux and the
/// upwind penalty (pointwise |chi.n| or its face maximum in the simplified
/// variant); boundary faces carry the (chi.n)(u.v)/2 closure term.
inline TripletList assemble_fluid_convection(const BdmVelocitySpace& space,
                                             const VectorField& chi, double mu_c,
                                             FormVariant variant, int n_threads = 1) {
  const int nl = space.n_local_dofs();
  const QuadRule& vrule = tet_rule(assembly_degree(space.degree()));
  const QuadRule& frule = tri_rule(assembly_degree(space.degree()));

  TripletList trips = detail::parallel_assemble(space.mesh().n_tets(), n_threads, [&]() {
    return [&space, &vrule, nl, &chi, basis = VelocityBasisEval{}](
               int t, TripletList& out) mutable {
      const ElemGeom& g = space.geometry(t);
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nl, nl);
      for (int p = 0; p < vrule.size(); ++p) {
        space.eval_basis(t, vrule.points[p], basis);
        const Vec3 chi_q = chi(g.p0 + g.jac * vrule.points[p]);
        const double w = 0.5 * vrule.weights[p] * g.det;
        for (int i = 0; i < nl; ++i)
          for (int j = 0; j < nl; ++j)
            local(i, j) += w * ((basis.grad[j] * chi_q).dot(basis.value[i]) -
                                (basis.grad[i] * chi_q).dot(basis.value[j]));
      }
      for (int i = 0; i < nl; ++i)
        for (int j = 0; j < nl; ++j)
          out.emplace_back(space.global_dof(t, i), space.global_dof(t, j), local(i, j));
    };
  });

  TripletList face_trips =
      detail::parallel_assemble(space.mesh().n_faces(), n_threads, [&]() {
        return [&space, &frule, &chi, mu_c, variant, trace = detail::FaceTrace{},
                scratch = VelocityBasisEval{}](int f, TripletList& out) mutable {
          trace.build(space, f, frule, scratch);
          const FaceRecord& face = *trace.face;
          const int rows = trace.n_sides * trace.n_local;
          Eigen::MatrixXd local = Eigen::MatrixXd::Zero(rows, rows);

          std::vector<double> chi_n(trace.mapped.size());
          double chi_n_max = 0.0;
          for (int p = 0; p < trace.mapped.size(); ++p) {
            chi_n[p] = chi(trace.mapped.points[p]).dot(face.n_f);
            chi_n_max = std::max(chi_n_max, std::abs(chi_n[p]));
          }

          if (face.is_boundary) {
            for (int p = 0; p < trace.mapped.size(); ++p) {
              const double w = 0.5 * trace.mapped.weights[p] * chi_n[p];
              if (w == 0.0) continue;
              for (int r = 0; r < rows; ++r)
                for (int c = 0; c < rows; ++c)
                  local(r, c) += w * trace.value[p][c].dot(trace.value[p][r]);
            }
          } else {
            for (int p = 0; p < trace.mapped.size(); ++p) {
              const double w = trace.mapped.weights[p];
              const double upwind =
                  mu_c * (variant == FormVariant::full ? std::abs(chi_n[p]) : chi_n_max);
              for (int r = 0; r < rows; ++r) {
                const Vec3 jump_r = trace.sign[r] * trace.value[p][r];
                const Vec3 avg_r = 0.5 * trace.value[p][r];
                for (int c = 0; c < rows; ++c) {
                  const Vec3 jump_c = trace.sign[c] * trace.value[p][c];
                  const Vec3 avg_c = 0.5 * trace.value[p][c];
                  local(r, c) +=
                      w * (0.5 * chi_n[p] * (avg_c.dot(jump_r) - jump_c.dot(avg_r)) +
                           upwind * jump_c.dot(jump_r));
                }
              }
            }
          }
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < rows; ++c)
              out.emplace_back(trace.global[r], trace.global[c], local(r, c));
        };
      });
  trips.insert(trips.end(), face_trips.begin(), face_trips.end());
  return trips;
}

/// CIP coupling stabilization J_h on interior faces. Full variant penalizes
/// Theta x [u] and h_f^2 ([grad u] Theta); the simplified variant uses the
/// face maximum of |Theta|^2 with plain jumps.
inline TripletList assemble_cip(const BdmVelocitySpace& space, const VectorField& theta,
                                double mu_j1, double mu_j2, FormVariant variant,
                                int n_threads = 1) {
  const QuadRule& frule = tri_rule(assembly_degree(space.degree()));
  return detail::parallel_assemble(space.mesh().n_faces(), n_threads, [&]() {
    return [&space, &frule, &theta, mu_j1, mu_j2, variant, trace = detail::FaceTrace{},
            scratch = VelocityBasisEval{}](int f, TripletList& out) mutable {
      if (space.mesh().faces[f].is_boundary) return;
      trace.build(space, f, frule, scratch);
      const FaceRecord& face = *trace.face;
      const int rows = trace.n_sides * trace.n_local;
      const double h2 = face.h_f * face.h_f;
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(rows, rows);

      double theta_max2 = 0.0;
      std::vector<Vec3> theta_q(trace.mapped.size());
      for (int p = 0; p < trace.mapped.size(); ++p) {
        theta_q[p] = theta(trace.mapped.points[p]);
        theta_max2 = std::max(theta_max2, theta_q[p].squaredNorm());
      }

      for (int p = 0; p < trace.mapped.size(); ++p) {
        const double w = trace.mapped.weights[p];
        if (variant == FormVariant::full) {
          for (int r = 0; r < rows; ++r) {
            const Vec3 tj_r = theta_q[p].cross(trace.sign[r] * trace.value[p][r]);
            const Vec3 gj_r = (trace.sign[r] * trace.grad[p][r]) * theta_q[p];
            for (int c = 0; c < rows; ++c) {
              const Vec3 tj_c = theta_q[p].cross(trace.sign[c] * trace.value[p][c]);
              const Vec3 gj_c = (trace.sign[c] * trace.grad[p][c]) * theta_q[p];
              local(r, c) += w * (mu_j1 * tj_c.dot(tj_r) + mu_j2 * h2 * gj_c.dot(gj_r));
            }
          }
        } else {
          for (int r = 0; r < rows; ++r) {
            const Vec3 jump_r = trace.sign[r] * trace.value[p][r];
            const Mat3 gjump_r = trace.sign[r] * trace.grad[p][r];
            for (int c = 0; c < rows; ++c) {
              const Vec3 jump_c = trace.sign[c] * trace.value[p][c];
              const Mat3 gjump_c = trace.sign[c] * trace.grad[p][c];
              local(r, c) += w * theta_max2 *
                             (mu_j1 * jump_c.dot(jump_r) +
                              mu_j2 * h2 * gjump_c.cwiseProduct(gjump_r).sum());
            }
          }
        }
      }
      for (int r = 0; r < rows; ++r)
        for (int c = 0; c < rows; ++c)
          out.emplace_back(trace.global[r], trace.global[c], local(r, c));
    };
  });
}

namespace detail {

/// Curl and divergence of the vector Lagrange basis field N_a e_c.
inline Vec3 lagrange_curl(const Vec3& gradN, int c) {
  Vec3 e = Vec3::Zero();
  e(c) = 1.0;
  return gradN.cross(e);
}

}  // namespace detail

/// Magnetic stiffness nu_M [(curl B, curl H) + (div B, div H)].
inline TripletList assemble_magnetic_stiffness(const LagrangeMagneticSpace& space,
                                               double nu_m, int n_threads = 1) {
  const QuadRule& rule = tet_rule(assembly_degree(space.degree()));
  const int nn = space.n_local_nodes();
  return detail::parallel_assemble(space.mesh().n_tets(), n_threads, [&]() {
    return [&space, &rule, nn, nu_m](int t, TripletList& out) {
      const double det = space.geometry(t).det;
      double N[10];
      Vec3 gradN[10];
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(3 * nn, 3 * nn);
      for (int p = 0; p < rule.size(); ++p) {
        space.eval_scalar_basis(t, rule.points[p], N, gradN);
        const double w = nu_m * rule.weights[p] * det;
        for (int a = 0; a < nn; ++a)
          for (int ca = 0; ca < 3; ++ca) {
            const Vec3 curl_a = detail::lagrange_curl(gradN[a], ca);
            const double div_a = gradN[a](ca);
            for (int b = 0; b < nn; ++b)
              for (int cb = 0; cb < 3; ++cb) {
                const Vec3 curl_b = detail::lagrange_curl(gradN[b], cb);
                const double div_b = gradN[b](cb);
                local(3 * a + ca, 3 * b + cb) +=
                    w * (curl_a.dot(curl_b) + div_a * div_b);
              }
          }
      }
      for (int a = 0; a < nn; ++a)
        for (int ca = 0; ca < 3; ++ca)
          for (int b = 0; b < nn; ++b)
            for (int cb = 0; cb < 3; ++cb)
              out.emplace_back(3 * space.local_node(t, a) + ca,
                               3 * space.local_node(t, b) + cb,
                               local(3 * a + ca, 3 * b + cb));
    };
  });
}

/// sigma_M magnetic mass block.
inline TripletList assemble_mass_magnetic(const LagrangeMagneticSpace& space,
                                          double sigma, int n_threads = 1) {
  const QuadRule& rule = tet_rule(assembly_degree(space.degree()));
  const int nn = space.n_local_nodes();
  return detail::parallel_assemble(space.mesh().n_tets(), n_threads, [&]() {
    return [&space, &rule, nn, sigma](int t, TripletList& out) {
      const double det = space.geometry(t).det;
      double N[10];
      Vec3 gradN[10];
      Eigen::MatrixXd scalar = Eigen::MatrixXd::Zero(nn, nn);
      for (int p = 0; p < rule.size(); ++p) {
        space.eval_scalar_basis(t, rule.points[p], N, gradN);
        const double w = sigma * rule.weights[p] * det;
        for (int a = 0; a < nn; ++a)
          for (int b = 0; b < nn; ++b) scalar(a, b) += w * N[a] * N[b];
      }
      for (int a = 0; a < nn; ++a)
        for (int b = 0; b < nn; ++b)
          for (int c = 0; c < 3; ++c)
            out.emplace_back(3 * space.local_node(t, a) + c,
                             3 * space.local_node(t, b) + c, scalar(a, b));
    };
  });
}

/// Coupling block D with D(i_v, j_H) = (curl(phi_H) x Theta, phi_v).
/// The scheme uses -D in the momentum row and +D^T in the magnetic row, so the
/// pair drops out of the quadratic form exactly.
inline TripletList assemble_coupling(const LagrangeMagneticSpace& space_W,
                                     const BdmVelocitySpace& space_V,
                                     const VectorField& theta, int n_threads = 1) {
  const QuadRule& rule = tet_rule(assembly_degree(space_V.degree()));
  const int nn = space_W.n_local_nodes();
  const int nv = space_V.n_local_dofs();
  return detail::parallel_assemble(space_V.mesh().n_tets(), n_threads, [&]() {
    return [&space_W, &space_V, &rule, nn, nv, &theta,
            basis = VelocityBasisEval{}](int t, TripletList& out) mutable {
      const ElemGeom& g = space_V.geometry(t);
      double N[10];
      Vec3 gradN[10];
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nv, 3 * nn);
      for (int p = 0; p < rule.size(); ++p) {
        space_V.eval_basis(t, rule.points[p], basis);
        space_W.eval_scalar_basis(t, rule.points[p], N, gradN);
        const Vec3 theta_q = theta(g.p0 + g.jac * rule.points[p]);
        const double w = rule.weights[p] * g.det;
        for (int b = 0; b < nn; ++b)
          for (int cb = 0; cb < 3; ++cb) {
            const Vec3 curl_theta =
                detail::lagrange_curl(gradN[b], cb).cross(theta_q);
            for (int i = 0; i < nv; ++i)
              local(i, 3 * b + cb) += w * curl_theta.dot(basis.value[i]);
          }
      }
      for (int i = 0; i < nv; ++i)
        for (int b = 0; b < nn; ++b)
          for (int cb = 0; cb < 3; ++cb)
            out.emplace_back(space_V.global_dof(t, i), 3 * space_W.local_node(t, b) + cb,
                             local(i, 3 * b + cb));
    };
  });
}

/// Divergence block b(v, q) = (div v, q); rows are pressure modes.
/// Integrands are polynomial, so the block is exact.
inline TripletList assemble_divergence(const BdmVelocitySpace& space_V,
                                       const PressureSpace& space_Q, int n_threads = 1) {
  const QuadRule& rule = tet_rule(assembly_degree(space_V.degree()));
  const int nv = space_V.n_local_dofs();
  const int nm = space_Q.n_modes();
  return detail::parallel_assemble(space_V.mesh().n_tets(), n_threads, [&]() {
    return [&space_V, &space_Q, &rule, nv, nm,
            basis = VelocityBasisEval{}](int t, TripletList& out) mutable {
      const double det = space_V.geometry(t).det;
      double modes[4];
      Eigen::MatrixXd local = Eigen::MatrixXd::Zero(nm, nv);
      for (int p = 0; p < rule.size(); ++p) {
        space_V.eval_basis(t, rule.points[p], basis);
        space_Q.eval_modes(t, rule.points[p], modes);
        const double w = rule.weights[p] * det;
        for (int m = 0; m < nm; ++m)
          for (int j = 0; j < nv; ++j) local(m, j) += w * basis.div[j] * modes[m];
      }
      for (int m = 0; m < nm; ++m)
        for (int j = 0; j < nv; ++j)
          out.emplace_back(space_Q.global_dof(t, m), space_V.global_dof(t, j),
                           local(m, j));
    };
  });
}

/// Load vectors. Volume terms use high-degree rules so that gradient-type
/// perturbations of f stay orthogonal to the discretely divergence-free space
/// (pressure robustness is checked at the 1e-8 level). The magnetic right-hand
/// side carries the two boundary consistency terms of the inhomogeneous data
/// reconstruction: nu_M (j x n, H) and (Theta.n)(g_u . H).
struct LoadVectors {
  Eigen::VectorXd rhs_u;
  Eigen::VectorXd rhs_B;
};

inline LoadVectors assemble_load(const BdmVelocitySpace& space_V,
                                 const LagrangeMagneticSpace& space_W,
                                 const VectorField& f, const VectorField& G,
                                 const VectorField& natural_flux_j,
                                 const VectorField& g_u, const VectorField& theta,
                                 double nu_m, int quad_degree = kSmoothMomentDegree) {
  LoadVectors out;
  out.rhs_u = Eigen::VectorXd::Zero(space_V.n_dofs());
  out.rhs_B = Eigen::VectorXd::Zero(space_W.n_dofs());
  const TetMesh& mesh = space_V.mesh();
  const QuadRule& rule = tet_rule(quad_degree);
  VelocityBasisEval basis;
  double N[10];
  Vec3 gradN[10];
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const ElemGeom& g = space_V.geometry(t);
    for (int p = 0; p < rule.size(); ++p) {
      const Vec3 x = g.p0 + g.jac * rule.points[p];
      const double w = rule.weights[p] * g.det;
      space_V.eval_basis(t, rule.points[p], basis);
      const Vec3 fq = f(x);
      for (int i = 0; i < space_V.n_local_dofs(); ++i)
        out.rhs_u[space_V.global_dof(t, i)] += w * fq.dot(basis.value[i]);
      space_W.eval_scalar_basis(t, rule.points[p], N, gradN);
      const Vec3 Gq = G(x);
      for (int a = 0; a < space_W.n_local_nodes(); ++a)
        for (int c = 0; c < 3; ++c)
          out.rhs_B[3 * space_W.local_node(t, a) + c] += w * Gq(c) * N[a];
    }
  }
  const QuadRule& frule = tri_rule(quad_degree);
  for (int fi = 0; fi < mesh.n_faces(); ++fi) {
    const FaceRecord& face = mesh.faces[fi];
    if (!face.is_boundary) continue;
    auto mapped = map_to_face(frule, mesh.vertices[face.vertex_ids[0]],
                              mesh.vertices[face.vertex_ids[1]],
                              mesh.vertices[face.vertex_ids[2]]);
    const int t = face.owner_tet;
    const ElemGeom& g = space_W.geometry(t);
    for (int p = 0; p < mapped.size(); ++p) {
      const Vec3& x = mapped.points[p];
      const Vec3 term = nu_m * natural_flux_j(x).cross(face.n_f) +
                        theta(x).dot(face.n_f) * g_u(x);
      space_W.eval_scalar_basis(t, g.jac_inv * (x - g.p0), N, gradN);
      for (int a = 0; a < space_W.n_local_nodes(); ++a)
        for (int c = 0; c < 3; ++c)
          out.rhs_B[3 * space_W.local_node(t, a) + c] +=
              mapped.weights[p] * term(c) * N[a];
    }
  }
  return out;
}

/// Canonical triplet compression: stable sort by (row, col), then accumulate
/// runs in order. Serial and chunk-merged parallel assemblies produce the same
/// triplet sequence, so the compressed list is bitwise identical.
inline TripletList compress_triplets(TripletList trips) {
  std::stable_sort(trips.begin(), trips.end(), [](const Triplet& a, const Triplet& b) {
    return a.row() != b.row() ? a.row() < b.row() : a.col() < b.col();
  });
  TripletList out;
  out.reserve(trips.size());
  for (const auto& t : trips) {
    if (!out.empty() && out.back().row() == t.row() && out.back().col() == t.col())
      out.back() = Triplet(t.row(), t.col(), out.back().value() + t.value());
    else
      out.push_back(t);
  }
  return out;
}

}  // namespace mhdfem
