#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include <sstream>
#include <vector>

#include "mhdfem/forms.hpp"

namespace mhdfem {

/// Coupled saddle-point system in the unknown ordering [u; p; B; lambda].
/// lambda is the single multiplier enforcing the zero-mean pressure constraint
/// through the mean-value functional of the pressure space.
struct BlockSystem {
  int n_u = 0;
  int n_p = 0;
  int n_B = 0;
  TripletList triplets;  // canonical-compressed
  Eigen::VectorXd rhs;
  std::vector<std::pair<int, double>> constraints;  // global dof -> prescribed value
  bool constrained = false;

  int off_u() const { return 0; }
  int off_p() const { return n_u; }
  int off_B() const { return n_u + n_p; }
  int off_lambda() const { return n_u + n_p + n_B; }
  int dim() const { return n_u + n_p + n_B + 1; }

  Eigen::SparseMatrix<double> matrix() const {
    Eigen::SparseMatrix<double> mat(dim(), dim());
    mat.setFromTriplets(triplets.begin(), triplets.end());
    return mat;
  }
};

/// Coordinate-format text dump (row col value per line).
inline std::string dump_coo(const TripletList& trips) {
  std::ostringstream out;
  out.precision(17);
  for (const auto& t : trips) out << t.row() << " " << t.col() << " " << t.value() << "\n";
  return out.str();
}

namespace detail {

inline void append_shifted(TripletList& dst, const TripletList& src, int row_off,
                           int col_off, double scale = 1.0, bool transpose = false) {
  dst.reserve(dst.size() + src.size());
  for (const auto& t : src) {
    const int r = transpose ? t.col() : t.row();
    const int c = transpose ? t.row() : t.col();
    dst.emplace_back(r + row_off, c + col_off, scale * t.value());
  }
}

}  // namespace detail

/// Assemble the full block system of the stabilized scheme.
inline BlockSystem assemble_system(const FESpaceTriple& spaces,
                                   const PhysicalParams& params, const StabParams& stab,
                                   const AdvectionFields& fields, const Forcing& loads,
                                   const BoundaryData& bc, int n_threads = 1) {
  const BdmVelocitySpace& V = spaces.velocity;
  const LagrangeMagneticSpace& W = spaces.magnetic;
  const PressureSpace& Q = spaces.pressure;
  if (&V.mesh() != &W.mesh() || &V.mesh() != &Q.mesh())
    throw ConsistencyError("assemble_system: spaces built on different meshes");

  BlockSystem sys;
  sys.n_u = V.n_dofs();
  sys.n_p = Q.n_dofs();
  sys.n_B = W.n_dofs();
  sys.rhs = Eigen::VectorXd::Zero(sys.dim());

  TripletList all;

  // momentum row
  detail::append_shifted(all, assemble_mass_velocity(V, params.sigma_s, n_threads), 0, 0);
  auto [sip, sip_rhs] =
      assemble_fluid_diffusion(V, params.nu_s, stab.mu_a, bc.g_u, n_threads);
  detail::append_shifted(all, sip, 0, 0);
  sys.rhs.segment(0, sys.n_u) += sip_rhs;
  detail::append_shifted(
      all, assemble_fluid_convection(V, fields.chi, stab.mu_c, stab.variant, n_threads),
      0, 0);
  if (stab.scheme == Scheme::mfStab)
    detail::append_shifted(
        all, assemble_cip(V, fields.theta, stab.mu_j1, stab.mu_j2, stab.variant, n_threads),
        0, 0);

  const TripletList coupling = assemble_coupling(W, V, fields.theta, n_threads);
  detail::append_shifted(all, coupling, 0, sys.off_B(), -1.0);

  const TripletList bdiv = assemble_divergence(V, Q, n_threads);
  detail::append_shifted(all, bdiv, 0, sys.off_p(), 1.0, /*transpose=*/true);

  // mass-conservation row, with the lambda column for the zero-mean constraint
  detail::append_shifted(all, bdiv, sys.off_p(), 0);
  const Eigen::VectorXd mean = Q.mean_functional();
  for (int i = 0; i < sys.n_p; ++i) {
    if (mean[i] == 0.0) continue;
    all.emplace_back(sys.off_p() + i, sys.off_lambda(), mean[i]);
    all.emplace_back(sys.off_lambda(), sys.off_p() + i, mean[i]);
  }

  // magnetic row
  detail::append_shifted(all, assemble_mass_magnetic(W, params.sigma_m, n_threads),
                         sys.off_B(), sys.off_B());
  detail::append_shifted(all, assemble_magnetic_stiffness(W, params.nu_m, n_threads),
                         sys.off_B(), sys.off_B());
  detail::append_shifted(all, coupling, sys.off_B(), 0, 1.0, /*transpose=*/true);

  sys.triplets = compress_triplets(std::move(all));

  const LoadVectors load = assemble_load(V, W, loads.f, loads.G, bc.j, bc.g_u,
                                         fields.theta, params.nu_m);
  sys.rhs.segment(0, sys.n_u) += load.rhs_u;
  sys.rhs.segment(sys.off_B(), sys.n_B) += load.rhs_B;

  // essential constraints: u.n face moments on the boundary, B.n nodal values
  for (auto [dof, value] : V.boundary_normal_constraints(bc.g_u))
    sys.constraints.emplace_back(dof, value);
  for (auto [node, axis] : W.boundary_normal_constraints())
    sys.constraints.emplace_back(sys.off_B() + 3 * node + axis,
                                 bc.g_B(W.node_position(node))(axis));
  return sys;
}

/// Symmetric constraint elimination: constrained rows and columns are zeroed
/// (column values moved to the right-hand side), the diagonal set to 1 and the
/// right-hand side to the prescribed value. The result is independent of the
/// order of the constraint list.
inline void apply_constraints(BlockSystem& sys) {
  if (sys.constrained) return;
  std::vector<char> is_fixed(sys.dim(), 0);
  std::vector<double> value(sys.dim(), 0.0);
  for (auto [dof, v] : sys.constraints) {
    is_fixed[dof] = 1;
    value[dof] = v;
  }
  TripletList kept;
  kept.reserve(sys.triplets.size());
  for (const auto& t : sys.triplets) {
    if (is_fixed[t.row()]) continue;
    if (is_fixed[t.col()]) {
      sys.rhs[t.row()] -= t.value() * value[t.col()];
      continue;
    }
    kept.push_back(t);
  }
  for (int i = 0; i < sys.dim(); ++i)
    if (is_fixed[i]) {
      kept.emplace_back(i, i, 1.0);
      sys.rhs[i] = value[i];
    }
  sys.triplets = compress_triplets(std::move(kept));
  sys.constrained = true;
}

/// Solution blocks plus solver diagnostics.
struct Solution {
  Eigen::VectorXd u;
  Eigen::VectorXd p;
  Eigen::VectorXd B;
  double lambda = 0.0;
  double residual = 0.0;  // ||Ax-b|| / ||b||
  int factor_nonzeros = 0;
};

/// Sparse direct LU with one step of iterative refinement.
inline Solution solve(const BlockSystem& sys) {
  if (!sys.constrained)
    throw ConsistencyError("solve: apply_constraints before solving");
  Eigen::SparseMatrix<double> mat = sys.matrix();
  mat.makeCompressed();
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.analyzePattern(mat);
  lu.factorize(mat);
  if (lu.info() != Eigen::Success)
    throw SolverError("solve: singular factorization (" + lu.lastErrorMessage() + ")");
  Eigen::VectorXd x = lu.solve(sys.rhs);
  x += lu.solve(sys.rhs - mat * x);

  Solution sol;
  sol.u = x.segment(0, sys.n_u);
  sol.p = x.segment(sys.off_p(), sys.n_p);
  sol.B = x.segment(sys.off_B(), sys.n_B);
  sol.lambda = x[sys.off_lambda()];
  const double bnorm = sys.rhs.norm();
  sol.residual = bnorm > 0.0 ? (mat * x - sys.rhs).norm() / bnorm : (mat * x).norm();
  sol.factor_nonzeros = static_cast<int>(mat.nonZeros());
  return sol;
}

/// Max over elements of the L2(E) norm of div u_h (exactly divergence-free
/// velocities make this vanish up to solver precision).
inline double check_discrete_divergence(const Eigen::VectorXd& u_coeffs,
                                        const BdmVelocitySpace& V) {
  const QuadRule& rule = tet_rule(2 * V.degree());
  VelocityBasisEval basis;
  double worst = 0.0;
  for (int t = 0; t < V.mesh().n_tets(); ++t) {
    double norm2 = 0.0;
    for (int p = 0; p < rule.size(); ++p) {
      V.eval_basis(t, rule.points[p], basis);
      double div = 0.0;
      for (int i = 0; i < V.n_local_dofs(); ++i)
        div += u_coeffs[V.global_dof(t, i)] * basis.div[i];
      norm2 += rule.weights[p] * V.geometry(t).det * div * div;
    }
    worst = std::max(worst, std::sqrt(norm2));
  }
  return worst;
}

/// Plain-text solution dump with block headers.
inline std::string dump_solution(const Solution& sol) {
  std::ostringstream out;
  out.precision(17);
  out << "velocity " << sol.u.size() << "\n";
  for (int i = 0; i < sol.u.size(); ++i) out << sol.u[i] << "\n";
  out << "pressure " << sol.p.size() << "\n";
  for (int i = 0; i < sol.p.size(); ++i) out << sol.p[i] << "\n";
  out << "magnetic " << sol.B.size() << "\n";
  for (int i = 0; i < sol.B.size(); ++i) out << sol.B[i] << "\n";
  return out.str();
}

}  // namespace mhdfem
