#pragma once

#include <Eigen/Dense>

#include <array>
#include <map>
#include <utility>
#include <vector>

#include "mhdfem/mesh.hpp"
#include "mhdfem/mms.hpp"
#include "mhdfem/quadrature.hpp"

namespace mhdfem {

/// Default quadrature degree for interpolation / projection moments of smooth
/// (non-polynomial) fields. High enough that the interpolation identities
/// (commuting divergence, moment orthogonality) hold to ~1e-12 on coarse meshes.
inline constexpr int kSmoothMomentDegree = 20;

struct ElemGeom {
  Vec3 p0;
  Mat3 jac;      // columns p1-p0, p2-p0, p3-p0
  Mat3 jac_inv;
  double det = 0.0;  // positive (tets are positively oriented)
};

inline std::vector<ElemGeom> compute_geometry(const TetMesh& mesh) {
  std::vector<ElemGeom> geo(mesh.n_tets());
  for (int t = 0; t < mesh.n_tets(); ++t) {
    const auto& tet = mesh.tets[t];
    ElemGeom& g = geo[t];
    g.p0 = mesh.vertices[tet[0]];
    g.jac.col(0) = mesh.vertices[tet[1]] - g.p0;
    g.jac.col(1) = mesh.vertices[tet[2]] - g.p0;
    g.jac.col(2) = mesh.vertices[tet[3]] - g.p0;
    g.det = g.jac.determinant();
    if (!(g.det > 0.0))
      throw DegenerateElementError("fespace: tet " + std::to_string(t) +
                                   " has non-positive Jacobian");
    g.jac_inv = g.jac.inverse();
  }
  return geo;
}

namespace detail {

inline int n_scalar_monomials(int k) { return (k + 1) * (k + 2) * (k + 3) / 6; }

/// Scalar monomial exponents on the reference tet, total degree <= k,
/// graded lexicographic: 1, x, y, z, x^2, xy, xz, y^2, yz, z^2, ...
inline const std::vector<std::array<int, 3>>& monomial_exponents(int k) {
  static std::map<int, std::vector<std::array<int, 3>>> cache;
  auto it = cache.find(k);
  if (it == cache.end()) {
    std::vector<std::array<int, 3>> exps;
    for (int d = 0; d <= k; ++d)
      for (int a = d; a >= 0; --a)
        for (int b = d - a; b >= 0; --b) exps.push_back({a, b, d - a - b});
    it = cache.emplace(k, std::move(exps)).first;
  }
  return it->second;
}

inline double mono_eval(const std::array<int, 3>& e, const Vec3& x) {
  double v = 1.0;
  for (int i = 0; i < e[0]; ++i) v *= x(0);
  for (int i = 0; i < e[1]; ++i) v *= x(1);
  for (int i = 0; i < e[2]; ++i) v *= x(2);
  return v;
}

inline Vec3 mono_grad(const std::array<int, 3>& e, const Vec3& x) {
  Vec3 g = Vec3::Zero();
  for (int d = 0; d < 3; ++d) {
    if (e[d] == 0) continue;
    std::array<int, 3> r = e;
    r[d] -= 1;
    g(d) = e[d] * mono_eval(r, x);
  }
  return g;
}

/// Lowest-order first-kind edge-element fields {a + b x xi} on the reference tet.
inline Vec3 nedelec0(int j, const Vec3& xi) {
  switch (j) {
    case 0: return Vec3(1, 0, 0);
    case 1: return Vec3(0, 1, 0);
    case 2: return Vec3(0, 0, 1);
    case 3: return Vec3(1, 0, 0).cross(xi);
    case 4: return Vec3(0, 1, 0).cross(xi);
    default: return Vec3(0, 0, 1).cross(xi);
  }
}

}  // namespace detail

/// Orthonormal polynomial basis of P_k on a physical face, built from the
/// face's own geometry (sorted vertices fix the frame), so both incident tets
/// generate identical degree-of-freedom functionals.
struct FaceMomentBasis {
  Vec3 origin;
  Vec3 t1, t2;                       // in-plane orthonormal frame
  Eigen::MatrixXd coeff;             // q_i = sum_j coeff(i,j) * m_j(s,t)
  int degree = 1;

  int size() const { return static_cast<int>(coeff.rows()); }

  static int n_monomials(int k) { return (k + 1) * (k + 2) / 2; }

  void local_coords(const Vec3& x, double& s, double& t) const {
    s = (x - origin).dot(t1);
    t = (x - origin).dot(t2);
  }

  double mono(int j, double s, double t) const {
    static constexpr int ex[6][2] = {{0, 0}, {1, 0}, {0, 1}, {2, 0}, {1, 1}, {0, 2}};
    double v = 1.0;
    for (int i = 0; i < ex[j][0]; ++i) v *= s;
    for (int i = 0; i < ex[j][1]; ++i) v *= t;
    return v;
  }

  void eval(const Vec3& x, double* q) const {
    double s, t;
    local_coords(x, s, t);
    const int n = size();
    for (int i = 0; i < n; ++i) {
      double acc = 0.0;
      for (int j = 0; j <= i; ++j) acc += coeff(i, j) * mono(j, s, t);
      q[i] = acc;
    }
  }
};

/// Per-basis-function evaluation buffers for the velocity space.
struct VelocityBasisEval {
  std::vector<Vec3> value;
  std::vector<Mat3> grad;  // physical gradient, rows components
  std::vector<double> div;
};

/// H(div)-conforming BDM velocity space of degree k in {1,2}.
///
/// Degrees of freedom: per face, moments of the normal trace against the
/// face's orthonormal P_k basis (the fixed face normal n_f makes the
/// functional identical from both sides, which gives normal-trace continuity
/// without orientation tables); for k=2, six interior moments against the
/// covariantly mapped lowest-order edge-element space. The local basis is
/// expressed through the contravariant Piola transform of reference-tet
/// vector monomials.
class BdmVelocitySpace {
public:
  BdmVelocitySpace(const TetMesh& mesh, int degree) : mesh_(&mesh), degree_(degree) {
    if (degree != 1 && degree != 2)
      throw ConfigError("build_velocity_space: degree must be 1 or 2, got " +
                        std::to_string(degree));
    geo_ = compute_geometry(mesh);
    nf_ = FaceMomentBasis::n_monomials(degree);
    ni_ = degree == 2 ? 6 : 0;
    n_local_ = 3 * detail::n_scalar_monomials(degree);
    build_face_bases();
    build_local_bases();
  }

  int degree() const { return degree_; }
  int n_dofs() const { return mesh_->n_faces() * nf_ + mesh_->n_tets() * ni_; }
  int n_local_dofs() const { return n_local_; }
  int face_dofs_per_face() const { return nf_; }
  int interior_dofs_per_tet() const { return ni_; }
  const TetMesh& mesh() const { return *mesh_; }
  const ElemGeom& geometry(int tet) const { return geo_[tet]; }
  const FaceMomentBasis& face_basis(int f) const { return face_basis_[f]; }

  int global_dof(int tet, int local) const {
    if (local < 4 * nf_) {
      const int lf = local / nf_;
      return mesh_->tet_faces[tet][lf] * nf_ + (local % nf_);
    }
    return mesh_->n_faces() * nf_ + tet * ni_ + (local - 4 * nf_);
  }

  Vec3 map_to_reference(int tet, const Vec3& x) const {
    return geo_[tet].jac_inv * (x - geo_[tet].p0);
  }

  /// Values, physical gradients and divergences of all local basis functions
  /// at a reference point, via the Piola transform v = (1/det J) J vhat.
  void eval_basis(int tet, const Vec3& xi, VelocityBasisEval& out) const {
    const auto& exps = detail::monomial_exponents(degree_);
    const int ns = static_cast<int>(exps.size());
    double mono[10];
    Vec3 mono_grad[10];
    for (int s = 0; s < ns; ++s) {
      mono[s] = detail::mono_eval(exps[s], xi);
      mono_grad[s] = detail::mono_grad(exps[s], xi);
    }
    const ElemGeom& g = geo_[tet];
    const Eigen::MatrixXd& X = coeff_[tet];
    out.value.assign(n_local_, Vec3::Zero());
    out.grad.assign(n_local_, Mat3::Zero());
    out.div.assign(n_local_, 0.0);
    for (int i = 0; i < n_local_; ++i) {
      Vec3 vhat = Vec3::Zero();
      Mat3 ghat = Mat3::Zero();  // d vhat_c / d xi_d
      for (int s = 0; s < ns; ++s)
        for (int c = 0; c < 3; ++c) {
          const double w = X(3 * s + c, i);
          if (w == 0.0) continue;
          vhat(c) += w * mono[s];
          ghat.row(c) += w * mono_grad[s].transpose();
        }
      out.value[i] = (g.jac * vhat) / g.det;
      out.grad[i] = (g.jac * ghat * g.jac_inv) / g.det;
      out.div[i] = ghat.trace() / g.det;
    }
  }

  /// Moments of a smooth field against one face's DOF functionals.
  void field_face_moments(int f, const VectorField& field, double* out,
                          int quad_degree = kSmoothMomentDegree) const {
    const FaceRecord& face = mesh_->faces[f];
    auto mapped = map_to_face(tri_rule(quad_degree), mesh_->vertices[face.vertex_ids[0]],
                              mesh_->vertices[face.vertex_ids[1]],
                              mesh_->vertices[face.vertex_ids[2]]);
    for (int i = 0; i < nf_; ++i) out[i] = 0.0;
    double q[6];
    for (int p = 0; p < mapped.size(); ++p) {
      face_basis_[f].eval(mapped.points[p], q);
      const double vn = field(mapped.points[p]).dot(face.n_f) * mapped.weights[p];
      for (int i = 0; i < nf_; ++i) out[i] += vn * q[i];
    }
  }

  /// The BDM interpolation operator: face normal moments plus (k=2) interior
  /// edge-element moments of the field.
  Eigen::VectorXd interpolate(const VectorField& field,
                              int quad_degree = kSmoothMomentDegree) const {
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(n_dofs());
    double moments[6];
    for (int f = 0; f < mesh_->n_faces(); ++f) {
      field_face_moments(f, field, moments, quad_degree);
      for (int i = 0; i < nf_; ++i) coeffs[f * nf_ + i] = moments[i];
    }
    if (ni_ > 0) {
      const QuadRule& rule = tet_rule(quad_degree);
      for (int t = 0; t < mesh_->n_tets(); ++t) {
        const ElemGeom& g = geo_[t];
        const Mat3 jinv_t = g.jac_inv.transpose();
        for (int j = 0; j < ni_; ++j) {
          double acc = 0.0;
          for (int p = 0; p < rule.size(); ++p) {
            const Vec3 x = g.p0 + g.jac * rule.points[p];
            acc += rule.weights[p] * g.det *
                   field(x).dot(jinv_t * detail::nedelec0(j, rule.points[p]));
          }
          coeffs[mesh_->n_faces() * nf_ + t * ni_ + j] = acc;
        }
      }
    }
    return coeffs;
  }

  /// Essential constraints for the boundary normal trace: the boundary face
  /// moment DOFs with values taken from g.n (zero for homogeneous data).
  std::vector<std::pair<int, double>> boundary_normal_constraints(
      const VectorField& g, int quad_degree = kSmoothMomentDegree) const {
    std::vector<std::pair<int, double>> out;
    double moments[6];
    for (int f = 0; f < mesh_->n_faces(); ++f) {
      if (!mesh_->faces[f].is_boundary) continue;
      field_face_moments(f, g, moments, quad_degree);
      for (int i = 0; i < nf_; ++i) out.emplace_back(f * nf_ + i, moments[i]);
    }
    return out;
  }

  /// Evaluate a coefficient vector at a reference point of a tet.
  Vec3 eval(int tet, const Vec3& xi, const Eigen::VectorXd& coeffs,
            VelocityBasisEval& scratch) const {
    eval_basis(tet, xi, scratch);
    Vec3 v = Vec3::Zero();
    for (int i = 0; i < n_local_; ++i) v += coeffs[global_dof(tet, i)] * scratch.value[i];
    return v;
  }

private:
  void build_face_bases() {
    face_basis_.resize(mesh_->n_faces());
    const QuadRule& rule = tri_rule(2 * degree_ + 2);
    for (int f = 0; f < mesh_->n_faces(); ++f) {
      const auto& ids = mesh_->faces[f].vertex_ids;  // sorted: deterministic frame
      const Vec3& a = mesh_->vertices[ids[0]];
      const Vec3& b = mesh_->vertices[ids[1]];
      const Vec3& c = mesh_->vertices[ids[2]];
      FaceMomentBasis& basis = face_basis_[f];
      basis.degree = degree_;
      basis.origin = a;
      basis.t1 = (b - a).normalized();
      const Vec3 w = (c - a) - (c - a).dot(basis.t1) * basis.t1;
      basis.t2 = w.normalized();
      basis.coeff = Eigen::MatrixXd::Identity(nf_, nf_);

      auto mapped = map_to_face(rule, a, b, c);
      Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(nf_, nf_);
      for (int p = 0; p < mapped.size(); ++p) {
        double s, t;
        basis.local_coords(mapped.points[p], s, t);
        for (int i = 0; i < nf_; ++i)
          for (int j = 0; j < nf_; ++j)
            gram(i, j) += mapped.weights[p] * basis.mono(i, s, t) * basis.mono(j, s, t);
      }
      const Eigen::MatrixXd L = gram.llt().matrixL();
      basis.coeff = L.triangularView<Eigen::Lower>().solve(
          Eigen::MatrixXd::Identity(nf_, nf_));
    }
  }

  void build_local_bases() {
    const auto& exps = detail::monomial_exponents(degree_);
    const int ns = static_cast<int>(exps.size());
    const QuadRule& vol_rule = tet_rule(2 * degree_ + 2);
    const QuadRule& face_rule = tri_rule(2 * degree_ + 2);
    coeff_.resize(mesh_->n_tets());

    Eigen::MatrixXd dofmat(n_local_, n_local_);
    double q[6];
    for (int t = 0; t < mesh_->n_tets(); ++t) {
      const ElemGeom& g = geo_[t];
      dofmat.setZero();
      // face moment rows
      for (int lf = 0; lf < 4; ++lf) {
        const int f = mesh_->tet_faces[t][lf];
        const FaceRecord& face = mesh_->faces[f];
        auto mapped = map_to_face(face_rule, mesh_->vertices[face.vertex_ids[0]],
                                  mesh_->vertices[face.vertex_ids[1]],
                                  mesh_->vertices[face.vertex_ids[2]]);
        for (int p = 0; p < mapped.size(); ++p) {
          const Vec3 xi = g.jac_inv * (mapped.points[p] - g.p0);
          face_basis_[f].eval(mapped.points[p], q);
          for (int s = 0; s < ns; ++s) {
            const double m = detail::mono_eval(exps[s], xi);
            for (int c = 0; c < 3; ++c) {
              // Piola value of monomial basis (3s+c) dotted with n_f
              const double vn = (g.jac.col(c) * (m / g.det)).dot(face.n_f);
              for (int i = 0; i < nf_; ++i)
                dofmat(lf * nf_ + i, 3 * s + c) += mapped.weights[p] * vn * q[i];
            }
          }
        }
      }
      // interior moment rows (k = 2)
      if (ni_ > 0) {
        const Mat3 jinv_t = g.jac_inv.transpose();
        for (int p = 0; p < vol_rule.size(); ++p) {
          const Vec3& xi = vol_rule.points[p];
          const double w = vol_rule.weights[p] * g.det;
          Vec3 ned[6];
          for (int j = 0; j < ni_; ++j) ned[j] = jinv_t * detail::nedelec0(j, xi);
          for (int s = 0; s < ns; ++s) {
            const double m = detail::mono_eval(exps[s], xi);
            for (int c = 0; c < 3; ++c) {
              const Vec3 val = g.jac.col(c) * (m / g.det);
              for (int j = 0; j < ni_; ++j)
                dofmat(4 * nf_ + j, 3 * s + c) += w * val.dot(ned[j]);
            }
          }
        }
      }
      coeff_[t] = dofmat.partialPivLu().solve(
          Eigen::MatrixXd::Identity(n_local_, n_local_));
    }
  }

  const TetMesh* mesh_;
  int degree_;
  int nf_ = 0;       // face moments per face
  int ni_ = 0;       // interior moments per tet
  int n_local_ = 0;  // 12 or 30
  std::vector<ElemGeom> geo_;
  std::vector<FaceMomentBasis> face_basis_;
  std::vector<Eigen::MatrixXd> coeff_;  // reference monomial coefficients per tet
};

/// Continuous vector Lagrange magnetic space of degree k in {1,2}.
/// Nodes are mesh vertices (k=1) plus edge midpoints (k=2); each node carries
/// three component DOFs. Boundary B.n constraints are nodal per axis-aligned
/// boundary plane: one component on a face, two on an edge, three at a corner.
class LagrangeMagneticSpace {
public:
  LagrangeMagneticSpace(const TetMesh& mesh, int degree) : mesh_(&mesh), degree_(degree) {
    if (degree != 1 && degree != 2)
      throw ConfigError("build_magnetic_space: degree must be 1 or 2, got " +
                        std::to_string(degree));
    geo_ = compute_geometry(mesh);
    build_nodes();
    build_constraints();
  }

  int degree() const { return degree_; }
  int n_nodes() const { return static_cast<int>(node_pos_.size()); }
  int n_dofs() const { return 3 * n_nodes(); }
  int n_local_nodes() const { return degree_ == 1 ? 4 : 10; }
  const TetMesh& mesh() const { return *mesh_; }
  const ElemGeom& geometry(int tet) const { return geo_[tet]; }
  const Vec3& node_position(int node) const { return node_pos_[node]; }

  int local_node(int tet, int a) const { return tet_nodes_[tet][a]; }
  int global_dof(int node, int comp) const { return 3 * node + comp; }

  /// Scalar shape values and physical gradients at a reference point.
  void eval_scalar_basis(int tet, const Vec3& xi, double* N, Vec3* gradN) const {
    const double l0 = 1.0 - xi(0) - xi(1) - xi(2);
    const double l[4] = {l0, xi(0), xi(1), xi(2)};
    static const Vec3 gl[4] = {Vec3(-1, -1, -1), Vec3(1, 0, 0), Vec3(0, 1, 0),
                               Vec3(0, 0, 1)};
    const Mat3 jinv_t = geo_[tet].jac_inv.transpose();
    if (degree_ == 1) {
      for (int a = 0; a < 4; ++a) {
        N[a] = l[a];
        gradN[a] = jinv_t * gl[a];
      }
      return;
    }
    for (int a = 0; a < 4; ++a) {
      N[a] = l[a] * (2.0 * l[a] - 1.0);
      gradN[a] = jinv_t * ((4.0 * l[a] - 1.0) * gl[a]);
    }
    static constexpr int edge[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (int e = 0; e < 6; ++e) {
      const int a = edge[e][0], b = edge[e][1];
      N[4 + e] = 4.0 * l[a] * l[b];
      gradN[4 + e] = jinv_t * (4.0 * (l[a] * gl[b] + l[b] * gl[a]));
    }
  }

  /// (node, axis) pairs to constrain for B.n boundary data.
  const std::vector<std::pair<int, int>>& boundary_normal_constraints() const {
    return constraints_;
  }

  /// Pointwise nodal interpolation.
  Eigen::VectorXd nodal_interpolate(const VectorField& field) const {
    Eigen::VectorXd coeffs(n_dofs());
    for (int n = 0; n < n_nodes(); ++n) {
      const Vec3 v = field(node_pos_[n]);
      for (int c = 0; c < 3; ++c) coeffs[3 * n + c] = v(c);
    }
    return coeffs;
  }

  Vec3 eval(int tet, const Vec3& xi, const Eigen::VectorXd& coeffs) const {
    double N[10];
    Vec3 gradN[10];
    eval_scalar_basis(tet, xi, N, gradN);
    Vec3 v = Vec3::Zero();
    for (int a = 0; a < n_local_nodes(); ++a) {
      const int node = tet_nodes_[tet][a];
      for (int c = 0; c < 3; ++c) v(c) += coeffs[3 * node + c] * N[a];
    }
    return v;
  }

private:
  void build_nodes() {
    node_pos_.assign(mesh_->vertices.begin(), mesh_->vertices.end());
    tet_nodes_.resize(mesh_->n_tets());
    if (degree_ == 1) {
      for (int t = 0; t < mesh_->n_tets(); ++t)
        for (int a = 0; a < 4; ++a) tet_nodes_[t].push_back(mesh_->tets[t][a]);
      return;
    }
    static constexpr int edge[6][2] = {{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
    for (int t = 0; t < mesh_->n_tets(); ++t)
      for (const auto& e : edge) {
        int a = mesh_->tets[t][e[0]], b = mesh_->tets[t][e[1]];
        if (a > b) std::swap(a, b);
        edge_node_.emplace(std::make_pair(a, b), 0);
      }
    int next = mesh_->n_vertices();
    for (auto& [key, id] : edge_node_) {
      id = next++;
      node_pos_.push_back(0.5 * (mesh_->vertices[key.first] + mesh_->vertices[key.second]));
    }
    for (int t = 0; t < mesh_->n_tets(); ++t) {
      tet_nodes_[t].reserve(10);
      for (int a = 0; a < 4; ++a) tet_nodes_[t].push_back(mesh_->tets[t][a]);
      for (const auto& e : edge) {
        int a = mesh_->tets[t][e[0]], b = mesh_->tets[t][e[1]];
        if (a > b) std::swap(a, b);
        tet_nodes_[t].push_back(edge_node_.at({a, b}));
      }
    }
  }

  void build_constraints() {
    if (mesh_->has_non_axis_boundary)
      throw UnsupportedError(
          "build_magnetic_space: non-axis-aligned boundary facet; nodal B.n "
          "constraints support axis-aligned boundaries only");
    std::map<std::pair<int, int>, bool> seen;
    for (int f = 0; f < mesh_->n_faces(); ++f) {
      const FaceRecord& face = mesh_->faces[f];
      if (!face.is_boundary) continue;
      int axis = -1;
      for (int a = 0; a < 3; ++a)
        if (std::abs(std::abs(face.n_f(a)) - 1.0) < 1e-12) axis = a;
      if (axis < 0)
        throw UnsupportedError("build_magnetic_space: non-axis-aligned boundary face");
      for (int v : face.vertex_ids) seen.emplace(std::make_pair(v, axis), true);
      if (degree_ == 2) {
        // the three edge nodes of the face lie on the same plane
        const auto& ids = face.vertex_ids;
        const std::pair<int, int> edges[3] = {
            {ids[0], ids[1]}, {ids[0], ids[2]}, {ids[1], ids[2]}};
        for (auto e : edges)
          seen.emplace(std::make_pair(edge_node_.at(e), axis), true);
      }
    }
    constraints_.reserve(seen.size());
    for (const auto& [key, _] : seen) constraints_.push_back(key);
  }

  const TetMesh* mesh_;
  int degree_;
  std::vector<ElemGeom> geo_;
  std::vector<Vec3> node_pos_;
  std::vector<std::vector<int>> tet_nodes_;
  std::vector<std::pair<int, int>> constraints_;
  std::map<std::pair<int, int>, int> edge_node_;  // sorted vertex pair -> node id
};

/// Discontinuous modal pressure space of degree k-1, orthonormal per element.
/// The reference-element orthonormalization is shared; the affine map only
/// rescales by 1/sqrt(det J).
class PressureSpace {
public:
  PressureSpace(const TetMesh& mesh, int velocity_degree)
      : mesh_(&mesh), degree_(velocity_degree - 1) {
    if (velocity_degree != 1 && velocity_degree != 2)
      throw ConfigError("build_pressure_space: degree must be 1 or 2");
    geo_ = compute_geometry(mesh);
    n_modes_ = detail::n_scalar_monomials(degree_);
    build_reference_orthonormalization();
  }

  int degree() const { return degree_; }
  int n_modes() const { return n_modes_; }
  int n_dofs() const { return mesh_->n_tets() * n_modes_; }
  const TetMesh& mesh() const { return *mesh_; }
  int global_dof(int tet, int mode) const { return tet * n_modes_ + mode; }

  /// Mode values at a reference point of a tet.
  void eval_modes(int tet, const Vec3& xi, double* vals) const {
    const auto& exps = detail::monomial_exponents(degree_);
    double m[4];
    for (int s = 0; s < n_modes_; ++s) m[s] = detail::mono_eval(exps[s], xi);
    const double scale = 1.0 / std::sqrt(geo_[tet].det);
    for (int i = 0; i < n_modes_; ++i) {
      double acc = 0.0;
      for (int j = 0; j <= i; ++j) acc += ref_coeff_(i, j) * m[j];
      vals[i] = scale * acc;
    }
  }

  double eval(int tet, const Vec3& xi, const Eigen::VectorXd& coeffs) const {
    double vals[4];
    eval_modes(tet, xi, vals);
    double v = 0.0;
    for (int i = 0; i < n_modes_; ++i) v += coeffs[global_dof(tet, i)] * vals[i];
    return v;
  }

  /// Vector m with m . coeffs = integral of the pressure field.
  Eigen::VectorXd mean_functional() const {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(n_dofs());
    // the first mode is c/sqrt(detJ) with c = ref_coeff_(0,0); (q0,1)_E = c*detJ/sqrt(detJ)*6/6
    for (int t = 0; t < mesh_->n_tets(); ++t)
      m[global_dof(t, 0)] = ref_coeff_(0, 0) * std::sqrt(geo_[t].det) / 6.0;
    return m;
  }

  /// Elementwise L2 projection of a scalar field.
  Eigen::VectorXd project(const ScalarField& f,
                          int quad_degree = kSmoothMomentDegree) const {
    const QuadRule& rule = tet_rule(quad_degree);
    Eigen::VectorXd coeffs = Eigen::VectorXd::Zero(n_dofs());
    double vals[4];
    for (int t = 0; t < mesh_->n_tets(); ++t) {
      const ElemGeom& g = geo_[t];
      for (int p = 0; p < rule.size(); ++p) {
        eval_modes(t, rule.points[p], vals);
        const double fw = f(g.p0 + g.jac * rule.points[p]) * rule.weights[p] * g.det;
        for (int i = 0; i < n_modes_; ++i) coeffs[global_dof(t, i)] += fw * vals[i];
      }
    }
    return coeffs;
  }

private:
  void build_reference_orthonormalization() {
    // Gram of reference monomials under the unit-density reference measure;
    // physical Gram is detJ times this for affine elements.
    const auto& exps = detail::monomial_exponents(degree_);
    Eigen::MatrixXd gram(n_modes_, n_modes_);
    const QuadRule& rule = tet_rule(2 * std::max(degree_, 1));
    gram.setZero();
    for (int p = 0; p < rule.size(); ++p)
      for (int i = 0; i < n_modes_; ++i)
        for (int j = 0; j < n_modes_; ++j)
          gram(i, j) += rule.weights[p] * detail::mono_eval(exps[i], rule.points[p]) *
                        detail::mono_eval(exps[j], rule.points[p]);
    const Eigen::MatrixXd L = gram.llt().matrixL();
    ref_coeff_ =
        L.triangularView<Eigen::Lower>().solve(Eigen::MatrixXd::Identity(n_modes_, n_modes_));
  }

  const TetMesh* mesh_;
  int degree_;  // polynomial degree of the pressure (k - 1)
  int n_modes_ = 1;
  std::vector<ElemGeom> geo_;
  Eigen::MatrixXd ref_coeff_;
};

/// The discrete space triple of the scheme.
struct FESpaceTriple {
  BdmVelocitySpace velocity;
  LagrangeMagneticSpace magnetic;
  PressureSpace pressure;

  FESpaceTriple(const TetMesh& mesh, int degree)
      : velocity(mesh, degree), magnetic(mesh, degree), pressure(mesh, degree) {}
};

}  // namespace mhdfem
