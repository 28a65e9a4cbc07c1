#include "mhdfem/system.hpp"

#include <gtest/gtest.h>

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <random>

#include "mhdfem/analysis.hpp"
#include "support/oracles.hpp"

using namespace mhdfem;

namespace {

const VectorField kZero = [](const Vec3&) { return Vec3(Vec3::Zero()); };

Eigen::VectorXd random_vec(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = d(gen);
  return x;
}

struct CaseResult {
  Solution sol;
  ErrorReport report;
  double div_check = 0.0;
  double u_1h = 0.0;
};

CaseResult solve_case(const FESpaceTriple& spaces, const PhysicalParams& params,
                      const StabParams& stab, bool chi_is_u, bool theta_is_B,
                      bool with_natural_flux = true) {
  auto ex = exact_solution();
  auto fields = advection_fields(ex, chi_is_u, theta_is_B);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  if (!with_natural_flux) bc.j = kZero;
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc);
  apply_constraints(sys);
  CaseResult out;
  out.sol = solve(sys);
  out.report = compute_errors(spaces, out.sol, ex, bc, params, stab, fields);
  out.div_check = check_discrete_divergence(out.sol.u, spaces.velocity);
  auto self = compute_errors(spaces, out.sol, zero_exact_solution(),
                             homogeneous_boundary_data(), params, stab, fields);
  out.u_1h = self.err_u_1h;
  return out;
}

/// Random sample of the discretely divergence-free subspace with zero normal
/// boundary trace, via a constrained L2 projection.
Eigen::VectorXd sample_divfree(const FESpaceTriple& spaces, unsigned seed) {
  const BdmVelocitySpace& V = spaces.velocity;
  const PressureSpace& Q = spaces.pressure;
  BlockSystem sys;
  sys.n_u = V.n_dofs();
  sys.n_p = Q.n_dofs();
  sys.n_B = 0;
  sys.rhs = Eigen::VectorXd::Zero(sys.dim());

  TripletList all;
  const TripletList mass = assemble_mass_velocity(V, 1.0);
  detail::append_shifted(all, mass, 0, 0);
  const TripletList bdiv = assemble_divergence(V, Q);
  detail::append_shifted(all, bdiv, 0, sys.off_p(), 1.0, true);
  detail::append_shifted(all, bdiv, sys.off_p(), 0);
  const Eigen::VectorXd mean = Q.mean_functional();
  for (int i = 0; i < sys.n_p; ++i) {
    if (mean[i] == 0.0) continue;
    all.emplace_back(sys.off_p() + i, sys.off_lambda(), mean[i]);
    all.emplace_back(sys.off_lambda(), sys.off_p() + i, mean[i]);
  }
  sys.triplets = compress_triplets(std::move(all));

  Eigen::SparseMatrix<double> m(sys.n_u, sys.n_u);
  m.setFromTriplets(mass.begin(), mass.end());
  sys.rhs.segment(0, sys.n_u) = m * random_vec(sys.n_u, seed);
  for (auto [dof, val] : V.boundary_normal_constraints(kZero, 4))
    sys.constraints.emplace_back(dof, val);
  apply_constraints(sys);
  return solve(sys).u;
}

}  // namespace

TEST(System, HomogeneousDataGivesZeroSolution) {
  auto mesh = generate_structured_cube(1);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;  // all ones
  StabParams stab;
  auto fields = advection_fields(exact_solution(), false, false);
  Forcing loads{kZero, kZero};
  auto bc = homogeneous_boundary_data();
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc);
  apply_constraints(sys);
  auto sol = solve(sys);
  EXPECT_NEAR(sol.u.norm(), 0.0, 1e-13);
  EXPECT_NEAR(sol.p.norm(), 0.0, 1e-13);
  EXPECT_NEAR(sol.B.norm(), 0.0, 1e-13);
}

TEST(System, CraftedSpdSystemSolvedExactly) {
  BlockSystem sys;
  sys.n_u = 1;
  sys.n_p = 0;
  sys.n_B = 0;
  sys.triplets = {Triplet(0, 0, 2.0), Triplet(0, 1, 1.0), Triplet(1, 0, 1.0),
                  Triplet(1, 1, 3.0)};
  sys.rhs = Eigen::VectorXd(2);
  sys.rhs << 5.0, 10.0;
  apply_constraints(sys);
  auto sol = solve(sys);
  // exact: x = (1, 3)
  EXPECT_NEAR(sol.u[0], 1.0, 1e-14);
  EXPECT_NEAR(sol.lambda, 3.0, 1e-14);
  EXPECT_LE(sol.residual, 1e-14);
}

TEST(System, DiffusionDominatedResidualSmall) {
  auto mesh = generate_structured_cube(1);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams stab;
  auto r = solve_case(spaces, params, stab, true, true);
  EXPECT_LE(r.sol.residual, 1e-11);
}

TEST(System, PermutedOrderingGivesSameSolution) {
  auto mesh = generate_structured_cube(1);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams stab;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc);
  apply_constraints(sys);
  auto sol = solve(sys);

  const int n = sys.dim();
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;
  std::mt19937 gen(3u);
  std::shuffle(perm.begin(), perm.end(), gen);

  BlockSystem permuted = sys;
  permuted.triplets.clear();
  for (const auto& t : sys.triplets)
    permuted.triplets.emplace_back(perm[t.row()], perm[t.col()], t.value());
  permuted.triplets = compress_triplets(std::move(permuted.triplets));
  for (int i = 0; i < n; ++i) permuted.rhs[perm[i]] = sys.rhs[i];
  // solve the permuted system directly through Eigen and un-permute
  Eigen::SparseMatrix<double> mat(n, n);
  mat.setFromTriplets(permuted.triplets.begin(), permuted.triplets.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>> lu(mat);
  ASSERT_EQ(lu.info(), Eigen::Success);
  Eigen::VectorXd y = lu.solve(permuted.rhs);
  Eigen::VectorXd x(n);
  for (int i = 0; i < n; ++i) x[i] = y[perm[i]];

  EXPECT_LE((x.segment(0, sys.n_u) - sol.u).norm(), 1e-10 * (1.0 + sol.u.norm()));
  EXPECT_LE((x.segment(sys.off_B(), sys.n_B) - sol.B).norm(),
            1e-10 * (1.0 + sol.B.norm()));
}

TEST(System, ConstrainingEverythingYieldsIdentity) {
  BlockSystem sys;
  sys.n_u = 2;
  sys.n_p = 0;
  sys.n_B = 0;
  sys.triplets = {Triplet(0, 0, 4.0), Triplet(0, 1, 1.0), Triplet(1, 1, 2.0),
                  Triplet(2, 2, 1.0), Triplet(0, 2, 3.0)};
  sys.rhs = Eigen::VectorXd::Zero(3);
  sys.constraints = {{0, 1.5}, {1, -2.0}, {2, 0.25}};
  apply_constraints(sys);
  ASSERT_EQ(sys.triplets.size(), 3u);
  for (const auto& t : sys.triplets) {
    EXPECT_EQ(t.row(), t.col());
    EXPECT_EQ(t.value(), 1.0);
  }
  auto sol = solve(sys);
  EXPECT_NEAR(sol.u[0], 1.5, 1e-15);
  EXPECT_NEAR(sol.u[1], -2.0, 1e-15);
  EXPECT_NEAR(sol.lambda, 0.25, 1e-15);
}

TEST(System, ConstraintEliminationOrderIndependent) {
  auto mesh = generate_structured_cube(1);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams stab;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  auto sys1 = assemble_system(spaces, params, stab, fields, loads, bc);
  auto sys2 = sys1;
  std::mt19937 gen(5u);
  std::shuffle(sys2.constraints.begin(), sys2.constraints.end(), gen);
  apply_constraints(sys1);
  apply_constraints(sys2);
  ASSERT_EQ(sys1.triplets.size(), sys2.triplets.size());
  for (std::size_t i = 0; i < sys1.triplets.size(); ++i)
    EXPECT_EQ(sys1.triplets[i].value(), sys2.triplets[i].value());
  EXPECT_EQ((sys1.rhs - sys2.rhs).norm(), 0.0);
}

TEST(System, PrescribedConstraintValuesReproduced) {
  auto mesh = generate_structured_cube(1);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams stab;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc);
  apply_constraints(sys);
  auto sol = solve(sys);
  Eigen::VectorXd x(sys.dim());
  x << sol.u, sol.p, sol.B, sol.lambda;
  for (auto [dof, val] : sys.constraints) EXPECT_NEAR(x[dof], val, 1e-12);
}

TEST(System, VelocitySparsityIsFaceAdjacent) {
  auto mesh = generate_structured_cube(2);
  FESpaceTriple spaces(mesh, 1);
  const BdmVelocitySpace& V = spaces.velocity;
  PhysicalParams params;
  StabParams stab;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc);

  // tets incident to a velocity dof (k=1: the face's owner and neighbor)
  auto dof_tets = [&](int dof) {
    const int f = dof / V.face_dofs_per_face();
    std::vector<int> tets = {mesh.faces[f].owner_tet};
    if (!mesh.faces[f].is_boundary) tets.push_back(mesh.faces[f].neighbor_tet);
    return tets;
  };
  auto share_face = [&](int ta, int tb) {
    if (ta == tb) return true;
    for (int la = 0; la < 4; ++la)
      for (int lb = 0; lb < 4; ++lb)
        if (mesh.tet_faces[ta][la] == mesh.tet_faces[tb][lb]) return true;
    return false;
  };
  for (const auto& t : sys.triplets) {
    if (t.row() >= sys.n_u || t.col() >= sys.n_u) continue;
    if (t.value() == 0.0) continue;
    bool adjacent = false;
    for (int ta : dof_tets(t.row()))
      for (int tb : dof_tets(t.col()))
        adjacent = adjacent || share_face(ta, tb);
    EXPECT_TRUE(adjacent) << "dofs " << t.row() << "," << t.col();
  }
}

TEST(System, DiagonalBlocksSymmetricPartPsdOnConstrainedSubspace) {
  auto mesh = generate_structured_cube(2);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams stab;  // mu_a = 10, k = 1: the paper's penalty
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  auto sys = assemble_system(spaces, params, stab, fields, loads, bc);

  std::vector<char> fixed(sys.dim(), 0);
  for (auto [dof, val] : sys.constraints) fixed[dof] = 1;
  auto check_block = [&](int off, int n) {
    std::vector<int> keep;
    for (int i = 0; i < n; ++i)
      if (!fixed[off + i]) keep.push_back(off + i);
    Eigen::MatrixXd dense = Eigen::MatrixXd::Zero(keep.size(), keep.size());
    std::vector<int> where(sys.dim(), -1);
    for (std::size_t i = 0; i < keep.size(); ++i) where[keep[i]] = int(i);
    for (const auto& t : sys.triplets) {
      if (t.row() < off || t.row() >= off + n || t.col() < off || t.col() >= off + n)
        continue;
      if (where[t.row()] < 0 || where[t.col()] < 0) continue;
      dense(where[t.row()], where[t.col()]) += t.value();
    }
    Eigen::MatrixXd sym = 0.5 * (dense + dense.transpose());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
    const double scale = sym.cwiseAbs().maxCoeff();
    EXPECT_GE(es.eigenvalues().minCoeff(), -1e-10 * scale);
  };
  check_block(0, sys.n_u);
  check_block(sys.off_B(), sys.n_B);
}

TEST(System, DiscreteDivergenceChecks) {
  auto mesh = generate_structured_cube(2);
  FESpaceTriple spaces(mesh, 1);

  // zero solution
  EXPECT_EQ(check_discrete_divergence(Eigen::VectorXd::Zero(spaces.velocity.n_dofs()),
                                      spaces.velocity),
            0.0);

  // solved case: exactly divergence-free up to solver precision
  PhysicalParams params;
  StabParams stab;
  auto r = solve_case(spaces, params, stab, true, true);
  EXPECT_LE(r.div_check, 1e-9 * r.u_1h);

  // random coefficients: generically nonzero
  EXPECT_GT(check_discrete_divergence(random_vec(spaces.velocity.n_dofs(), 3u),
                                      spaces.velocity),
            1e-3);
}

TEST(System, SolvedPressureHasZeroMean) {
  auto mesh = generate_structured_cube(2);
  for (int k : {1, 2}) {
    FESpaceTriple spaces(mesh, k);
    PhysicalParams params;
    StabParams stab;
    stab.mu_a = k == 1 ? 10.0 : 20.0;
    auto r = solve_case(spaces, params, stab, true, true);
    EXPECT_LE(std::abs(spaces.pressure.mean_functional().dot(r.sol.p)),
              1e-10 * (1.0 + r.sol.p.norm()));
  }
}

TEST(System, SchemesCoincideWhenThetaVanishes) {
  auto mesh = generate_structured_cube(2);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams mf, f;
  mf.scheme = Scheme::mfStab;
  f.scheme = Scheme::fStab;
  auto rm = solve_case(spaces, params, mf, true, false);
  auto rf = solve_case(spaces, params, f, true, false);
  EXPECT_LE((rm.sol.u - rf.sol.u).norm(), 1e-10 * (1.0 + rm.sol.u.norm()));
  EXPECT_LE((rm.sol.p - rf.sol.p).norm(), 1e-10 * (1.0 + rm.sol.p.norm()));
  EXPECT_LE((rm.sol.B - rf.sol.B).norm(), 1e-10 * (1.0 + rm.sol.B.norm()));
}

TEST(System, SchemesDifferExactlyByCipBlock) {
  auto mesh = generate_structured_cube(1);
  FESpaceTriple spaces(mesh, 1);
  PhysicalParams params;
  StabParams mf, f;
  mf.scheme = Scheme::mfStab;
  f.scheme = Scheme::fStab;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  auto loads = forcing(params, ex, fields);
  auto bc = boundary_data(ex);
  auto sys_mf = assemble_system(spaces, params, mf, fields, loads, bc);
  auto sys_f = assemble_system(spaces, params, f, fields, loads, bc);
  auto cip = compress_triplets(
      assemble_cip(spaces.velocity, fields.theta, mf.mu_j1, mf.mu_j2, mf.variant));

  Eigen::SparseMatrix<double> diff =
      sys_mf.matrix() - sys_f.matrix();
  Eigen::SparseMatrix<double> cip_mat(sys_mf.dim(), sys_mf.dim());
  cip_mat.setFromTriplets(cip.begin(), cip.end());
  const double scale = Eigen::MatrixXd(sys_mf.matrix()).cwiseAbs().maxCoeff();
  EXPECT_LE(Eigen::MatrixXd(diff - cip_mat).cwiseAbs().maxCoeff(), 1e-14 * scale);
}

TEST(System, CoercivityIdentitySuite) {
  // A_stab(v,H;v,H) = sigma_S||v||^2 + nu_S a^S_h(v,v) + |v|^2_upw + |v|^2_cip
  //                 + sigma_M||H||^2 + nu_M(||curl H||^2 + ||div H||^2)
  auto mesh = generate_structured_cube(2);
  FESpaceTriple spaces(mesh, 1);
  const BdmVelocitySpace& V = spaces.velocity;
  const LagrangeMagneticSpace& W = spaces.magnetic;
  auto ex = exact_solution();
  auto fields = advection_fields(ex, true, true);
  PhysicalParams params;
  params.nu_s = 1e-3;
  params.nu_m = 0.5;
  StabParams stab;

  auto [sip, sip_rhs] = assemble_fluid_diffusion(V, params.nu_s, stab.mu_a, kZero);
  auto conv = assemble_fluid_convection(V, fields.chi, stab.mu_c, stab.variant);
  auto cip = assemble_cip(V, fields.theta, stab.mu_j1, stab.mu_j2, stab.variant);
  auto mass_u = assemble_mass_velocity(V, params.sigma_s);
  auto mass_B = assemble_mass_magnetic(W, params.sigma_m);
  auto stiff_B = assemble_magnetic_stiffness(W, params.nu_m);
  auto coupling = assemble_coupling(W, V, fields.theta);

  auto to_mat = [](const TripletList& t, int r, int c) {
    Eigen::SparseMatrix<double> m(r, c);
    auto ct = compress_triplets(t);
    m.setFromTriplets(ct.begin(), ct.end());
    return m;
  };
  const int nu = V.n_dofs(), nb = W.n_dofs();
  auto sip_m = to_mat(sip, nu, nu);
  auto conv_m = to_mat(conv, nu, nu);
  auto cip_m = to_mat(cip, nu, nu);
  auto mu_m = to_mat(mass_u, nu, nu);
  auto mb_m = to_mat(mass_B, nb, nb);
  auto sb_m = to_mat(stiff_B, nb, nb);
  auto d_m = to_mat(coupling, nu, nb);

  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd v = sample_divfree(spaces, 1000u + trial);
    Eigen::VectorXd H = random_vec(nb, 2000u + trial);

    const double astab = v.dot(mu_m * v) + v.dot(sip_m * v) + v.dot(conv_m * v) +
                         v.dot(cip_m * v) - v.dot(d_m * H) + H.dot(d_m.transpose() * v) +
                         H.dot(mb_m * H) + H.dot(sb_m * H);

    Solution sol;
    sol.u = v;
    sol.p = Eigen::VectorXd::Zero(spaces.pressure.n_dofs());
    sol.B = H;
    auto norms = compute_errors(spaces, sol, zero_exact_solution(),
                                homogeneous_boundary_data(), params, stab, fields);
    auto [curl_sq, div_sq] = magnetic_curl_div_sq(W, H);
    const double expected =
        params.sigma_s * norms.err_u_L2 * norms.err_u_L2 + v.dot(sip_m * v) +
        norms.err_u_upw * norms.err_u_upw + norms.err_u_cip * norms.err_u_cip +
        params.sigma_m * norms.err_B_L2 * norms.err_B_L2 +
        params.nu_m * (curl_sq + div_sq);
    EXPECT_NEAR(astab, expected, 1e-9 * std::abs(expected)) << "trial " << trial;

    // the upwind identity on the divergence-free sample
    EXPECT_NEAR(v.dot(conv_m * v), norms.err_u_upw * norms.err_u_upw,
                1e-9 * std::max(1.0, norms.err_u_upw * norms.err_u_upw));
  }
}

TEST(System, DroppingNaturalFluxDegradesMagneticRate) {
  PhysicalParams params;
  StabParams stab;
  std::vector<double> h, e_with, e_without;
  for (int n : {2, 4}) {
    auto mesh = generate_structured_cube(n);
    FESpaceTriple spaces(mesh, 1);
    auto with = solve_case(spaces, params, stab, true, true, true);
    auto without = solve_case(spaces, params, stab, true, true, false);
    h.push_back(mesh_metrics(mesh).h_max);
    e_with.push_back(with.report.err_B_H1);
    e_without.push_back(without.report.err_B_H1);
  }
  const double rate_with = std::log(e_with[0] / e_with[1]) / std::log(h[0] / h[1]);
  const double rate_without =
      std::log(e_without[0] / e_without[1]) / std::log(h[0] / h[1]);
  EXPECT_GE(rate_with, 0.8);
  EXPECT_LT(rate_without, rate_with - 0.25);
}
