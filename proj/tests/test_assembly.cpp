#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <mshom/assembly.hpp>
#include <mshom/fem_basis.hpp>

#include <Eigen/Eigenvalues>

#include <random>

using namespace mshom;

namespace {
TensorSampler constant_tensor(double s) {
  return [s](const Vec3&) { return (s * Mat3::Identity()).eval(); };
}

double max_abs(const SpMat& A) {
  double m = 0.0;
  for (int k = 0; k < A.outerSize(); ++k)
    for (SpMat::InnerIterator it(A, k); it; ++it) m = std::max(m, std::abs(it.value()));
  return m;
}
} // namespace

// === scalar stiffness =======================================================

TEST_CASE("stiffness is symmetric with zero row sums (constants in the kernel)") {
  const BoxMesh mesh = BoxMesh::create(Vec3(0, 0, 0), Vec3(1, 2, 1), {3, 2, 4});
  const SpMat K = assemble_stiffness_full(mesh, constant_tensor(1.0));
  const SpMat Kt = SpMat(K.transpose());
  CHECK(max_abs(SpMat(K - Kt)) <= 1e-13);
  const VectorXd ones = VectorXd::Ones(mesh.node_count());
  CHECK((K * ones).cwiseAbs().maxCoeff() <= 1e-12);
  for (int n = 0; n < mesh.node_count(); ++n) CHECK(K.coeff(n, n) > 0.0);
}

TEST_CASE("doubling the coefficient exactly doubles every stiffness entry") {
  const BoxMesh mesh = BoxMesh::unit_cell(2);
  const SpMat K1 = assemble_stiffness_full(mesh, constant_tensor(1.0));
  const SpMat K2 = assemble_stiffness_full(mesh, constant_tensor(2.0));
  CHECK(max_abs(SpMat(K2 - SpMat(2.0 * K1))) <= 1e-13);
}

TEST_CASE("stiffness energy of a linear function equals coeff * |grad|^2 * volume") {
  // u = 2x - y + 0.5z has constant gradient (2,-1,0.5); with coefficient c*I the
  // energy integral is c*|g|^2*V, which Gauss quadrature integrates exactly.
  const BoxMesh mesh = BoxMesh::create(Vec3(0, 0, 0), Vec3(1.5, 1, 2), {3, 3, 3});
  const SpMat K = assemble_stiffness_full(mesh, constant_tensor(0.7));
  VectorXd u(mesh.node_count());
  for (int n = 0; n < mesh.node_count(); ++n) {
    const Vec3 p = mesh.node_position(n);
    u[n] = 2.0 * p[0] - p[1] + 0.5 * p[2];
  }
  const Vec3 g(2.0, -1.0, 0.5);
  CHECK(u.dot(K * u) == doctest::Approx(0.7 * g.squaredNorm() * mesh.volume()).epsilon(1e-12));
}

TEST_CASE("non-finite coefficient sample names the offending element") {
  const BoxMesh mesh = BoxMesh::unit_cell(2);
  const TensorSampler bad = [](const Vec3& x) {
    Mat3 m = Mat3::Identity();
    if (x[0] > 0.5) m(0, 0) = std::numeric_limits<double>::quiet_NaN();
    return m;
  };
  CHECK_THROWS_AS(assemble_stiffness_full(mesh, bad), AssemblyError);
  try {
    assemble_stiffness_full(mesh, bad);
  } catch (const AssemblyError& e) {
    CHECK(std::string(e.what()).find("element") != std::string::npos);
  }
}

// === mass matrices ==========================================================

TEST_CASE("unit-weight nodal mass: 1^T M 1 equals the box volume") {
  const BoxMesh mesh = BoxMesh::create(Vec3(-1, 0, 2), Vec3(2, 0.5, 3), {4, 3, 5});
  const SpMat M = assemble_mass_nodal_full(mesh);
  const VectorXd ones = VectorXd::Ones(mesh.node_count());
  CHECK(ones.dot(M * ones) == doctest::Approx(mesh.volume()).epsilon(1e-12));
}

TEST_CASE("edge mass on a 2^3 mesh is SPD (dense eigensolve)") {
  const BoxMesh mesh = BoxMesh::unit_cell(2);
  const SpMat M = assemble_mass_edge_full(mesh);
  const Eigen::MatrixXd Md = Eigen::MatrixXd(M);
  CHECK((Md - Md.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Md);
  CHECK(es.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("edge mass reproduces the L2 norm of a constant field") {
  const BoxMesh mesh = BoxMesh::create(Vec3(0, 0, 0), Vec3(1, 2, 1), {3, 3, 3});
  const SpMat M = assemble_mass_edge_full(mesh);
  // dof vector of the constant (1,0,0): h_x on every x-edge
  VectorXd u = VectorXd::Zero(mesh.edge_count());
  for (int e = 0; e < mesh.edge_count(); ++e)
    if (mesh.edge_axis(e) == 0) u[e] = mesh.spacing()[0];
  CHECK(u.dot(M * u) == doctest::Approx(mesh.volume()).epsilon(1e-12));
}

// === curl-curl and the discrete de Rham identity ============================

TEST_CASE("curl of every discrete gradient vanishes identically") {
  const BoxMesh mesh = BoxMesh::unit_cell(3);
  const SpMat K = assemble_curl_curl_full(mesh, constant_tensor(1.0));
  const SpMat G = discrete_gradient(mesh);
  std::mt19937 rng(7);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 5; ++trial) {
    VectorXd p(mesh.node_count());
    for (int n = 0; n < mesh.node_count(); ++n) p[n] = gauss(rng);
    const VectorXd g = G * p;
    // exact cancellation up to floating-point roundoff, in energy and residual
    CHECK(std::abs(g.dot(K * g)) <= 1e-10 * g.squaredNorm());
    CHECK((K * g).cwiseAbs().maxCoeff() <= 1e-10 * g.norm());
  }
}

TEST_CASE("curl-curl form is positive on a loop field and matches direct integration") {
  const BoxMesh mesh = BoxMesh::unit_cell(3);
  const SpMat K = assemble_curl_curl_full(mesh, constant_tensor(1.0));
  // circulation +1 around one interior face (two x-edges, two y-edges)
  VectorXd u = VectorXd::Zero(mesh.edge_count());
  u[mesh.edge_index(0, 1, 1, 1)] = 1.0;
  u[mesh.edge_index(1, 2, 1, 1)] = 1.0;
  u[mesh.edge_index(0, 1, 2, 1)] = -1.0;
  u[mesh.edge_index(1, 1, 1, 1)] = -1.0;
  const double quad_form = u.dot(K * u);
  CHECK(quad_form > 0.0);

  // independent evaluation: integrate |curl u_h|^2 by the same Gauss rule but
  // straight from the basis curls, bypassing the assembled matrix
  const Vec3 h = mesh.spacing();
  double direct = 0.0;
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto edges = mesh.element_edges(el);
    for (const Vec3& q : GaussQ2::points()) {
      const auto C = EdgeBasis::curls(q, h);
      Vec3 c = Vec3::Zero();
      for (int m = 0; m < 12; ++m) c += u[edges[m]] * C[m];
      direct += GaussQ2::weight * mesh.element_volume() * c.squaredNorm();
    }
  }
  CHECK(quad_form == doctest::Approx(direct).epsilon(1e-12));
}

// === constrained systems ====================================================

TEST_CASE("dirichlet map on a 1^3 mesh leaves no free nodes") {
  const auto mesh = std::make_shared<BoxMesh>(BoxMesh::unit_cell(1));
  const SparseSystem sys = assemble_scalar(mesh, constant_tensor(1.0), nullptr,
                                           ScalarBoundary::DirichletZero);
  CHECK(sys.map.n_free == 0);
  CHECK(sys.A.rows() == 0);
}

TEST_CASE("periodic map identifies opposite faces and pins one node") {
  const BoxMesh mesh = BoxMesh::unit_cell(2);
  const DofMap map = nodal_periodic_pinned(mesh);
  CHECK(map.n_free == 2 * 2 * 2 - 1); // representatives minus the pinned one
  // a face node and its opposite wrap to the same representative
  CHECK(map.rep[mesh.node_index(2, 1, 1)] == map.rep[mesh.node_index(0, 1, 1)]);
  CHECK(map.rep[mesh.node_index(1, 2, 0)] == map.rep[mesh.node_index(1, 0, 0)]);
  // expansion places the same value on identified dofs
  VectorXd free = VectorXd::LinSpaced(map.n_free, 1.0, map.n_free);
  const VectorXd full = map.expand(free);
  CHECK(full[mesh.node_index(2, 1, 1)] == full[mesh.node_index(0, 1, 1)]);
  CHECK(full[0] == 0.0);
}

TEST_CASE("tangential-zero map frees exactly the interior edges") {
  const BoxMesh mesh = BoxMesh::unit_cell(2);
  const DofMap map = edge_tangential_zero(mesh);
  // interior x-edges: those not lying in a boundary plane of y or z
  int interior = 0;
  for (int e = 0; e < mesh.edge_count(); ++e)
    if (!mesh.edge_on_boundary(e)) ++interior;
  CHECK(map.n_free == interior);
  CHECK(map.n_free == 3 * 2 * 1 * 1); // per family: 2 intervals x 1 x 1 interior planes
}
