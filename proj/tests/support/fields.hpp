#pragma once

// Point location on the structured Kuhn meshes and piecewise fields built on
// them, for tests that need globally continuous discrete fields.

#include <algorithm>
#include <cmath>

#include "mhdfem/fespace.hpp"
#include "mhdfem/mesh.hpp"

namespace testfields {

using mhdfem::Vec3;

/// Locates the tet of generate_structured_cube(n) containing x, matching the
/// generator's cell/permutation ordering.
struct StructuredLocator {
  int n = 1;

  int locate(const Vec3& x) const {
    int cell[3];
    double frac[3];
    for (int d = 0; d < 3; ++d) {
      double scaled = std::min(std::max(x(d) * n, 0.0), double(n) - 1e-13);
      cell[d] = static_cast<int>(scaled);
      if (cell[d] > n - 1) cell[d] = n - 1;
      frac[d] = scaled - cell[d];
    }
    static constexpr int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                        {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
    int which = 0;
    for (int p = 0; p < 6; ++p) {
      if (frac[perms[p][0]] >= frac[perms[p][1]] - 1e-14 &&
          frac[perms[p][1]] >= frac[perms[p][2]] - 1e-14) {
        which = p;
        break;
      }
    }
    const int cell_index = (cell[0] * n + cell[1]) * n + cell[2];
    return cell_index * 6 + which;
  }
};

/// Evaluator for a coefficient vector of the vector Lagrange space, global in
/// position (continuous fields only).
class LagrangeFieldEvaluator {
public:
  LagrangeFieldEvaluator(const mhdfem::LagrangeMagneticSpace& space, int n,
                         Eigen::VectorXd coeffs)
      : space_(&space), locator_{n}, coeffs_(std::move(coeffs)) {}

  Vec3 operator()(const Vec3& x) const {
    const int t = locator_.locate(x);
    const auto& g = space_->geometry(t);
    return space_->eval(t, g.jac_inv * (x - g.p0), coeffs_);
  }

private:
  const mhdfem::LagrangeMagneticSpace* space_;
  StructuredLocator locator_;
  Eigen::VectorXd coeffs_;
};

/// Global evaluators for coefficient vectors of the velocity, pressure, and
/// magnetic spaces on structured meshes (position-based, via the locator).
class DiscreteSolutionEvaluator {
public:
  DiscreteSolutionEvaluator(const mhdfem::FESpaceTriple& spaces, int n,
                            Eigen::VectorXd u, Eigen::VectorXd p, Eigen::VectorXd B)
      : spaces_(&spaces), locator_{n}, u_(std::move(u)), p_(std::move(p)),
        B_(std::move(B)) {}

  Vec3 velocity(const Vec3& x) const {
    const auto& V = spaces_->velocity;
    const int t = locator_.locate(x);
    mhdfem::VelocityBasisEval basis;
    return V.eval(t, V.map_to_reference(t, x), u_, basis);
  }

  mhdfem::Mat3 velocity_grad(const Vec3& x) const {
    const auto& V = spaces_->velocity;
    const int t = locator_.locate(x);
    mhdfem::VelocityBasisEval basis;
    V.eval_basis(t, V.map_to_reference(t, x), basis);
    mhdfem::Mat3 g = mhdfem::Mat3::Zero();
    for (int i = 0; i < V.n_local_dofs(); ++i)
      g += u_[V.global_dof(t, i)] * basis.grad[i];
    return g;
  }

  double pressure(const Vec3& x) const {
    const auto& Q = spaces_->pressure;
    const int t = locator_.locate(x);
    const auto& g = spaces_->velocity.geometry(t);
    return Q.eval(t, g.jac_inv * (x - g.p0), p_);
  }

  Vec3 magnetic(const Vec3& x) const {
    const auto& W = spaces_->magnetic;
    const int t = locator_.locate(x);
    const auto& g = W.geometry(t);
    return W.eval(t, g.jac_inv * (x - g.p0), B_);
  }

  mhdfem::Mat3 magnetic_grad(const Vec3& x) const {
    const auto& W = spaces_->magnetic;
    const int t = locator_.locate(x);
    const auto& g = W.geometry(t);
    double N[10];
    Vec3 gradN[10];
    W.eval_scalar_basis(t, g.jac_inv * (x - g.p0), N, gradN);
    mhdfem::Mat3 out = mhdfem::Mat3::Zero();
    for (int a = 0; a < W.n_local_nodes(); ++a)
      for (int c = 0; c < 3; ++c)
        out.row(c) += B_[3 * W.local_node(t, a) + c] * gradN[a].transpose();
    return out;
  }

private:
  const mhdfem::FESpaceTriple* spaces_;
  StructuredLocator locator_;
  Eigen::VectorXd u_, p_, B_;
};

}  // namespace testfields
