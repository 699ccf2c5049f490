#include "mshom/assembly.hpp"

#include <cmath>

namespace mshom {

namespace {

[[noreturn]] void bad_sample(int el, const char* what) {
  throw AssemblyError("non-finite " + std::string(what) +
                      " sampled in element " + std::to_string(el));
}

void check_finite(const Mat3& m, int el, const char* what) {
  if (!m.allFinite()) bad_sample(el, what);
}
void check_finite(double s, int el, const char* what) {
  if (!std::isfinite(s)) bad_sample(el, what);
}
void check_finite(const Vec3& v, int el, const char* what) {
  if (!v.allFinite()) bad_sample(el, what);
}

} // namespace

DofMap identity_map(int n) {
  DofMap m;
  m.n_full = n;
  m.n_free = n;
  m.rep.resize(n);
  m.free_of_rep.resize(n);
  for (int d = 0; d < n; ++d) {
    m.rep[d] = d;
    m.free_of_rep[d] = d;
  }
  return m;
}

DofMap nodal_all_free(const BoxMesh& mesh) {
  return identity_map(mesh.node_count());
}

DofMap nodal_dirichlet_zero(const BoxMesh& mesh) {
  DofMap m;
  m.n_full = mesh.node_count();
  m.rep.resize(m.n_full);
  m.free_of_rep.assign(m.n_full, -1);
  int f = 0;
  for (int d = 0; d < m.n_full; ++d) {
    m.rep[d] = d;
    if (!mesh.node_on_boundary(d)) m.free_of_rep[d] = f++;
  }
  m.n_free = f;
  return m;
}

DofMap nodal_periodic_pinned(const BoxMesh& mesh) {
  DofMap m;
  m.n_full = mesh.node_count();
  m.rep.resize(m.n_full);
  m.free_of_rep.assign(m.n_full, -1);
  const auto d3 = mesh.divisions();
  for (int d = 0; d < m.n_full; ++d) {
    auto c = mesh.node_coords(d);
    for (int a = 0; a < 3; ++a)
      if (c[a] == d3[a]) c[a] = 0;
    m.rep[d] = mesh.node_index(c[0], c[1], c[2]);
  }
  int f = 0;
  for (int d = 0; d < m.n_full; ++d) {
    if (m.rep[d] != d) continue;   // not a representative
    if (d == 0) continue;          // pin the constant
    m.free_of_rep[d] = f++;
  }
  m.n_free = f;
  return m;
}

DofMap edge_all_free(const BoxMesh& mesh) {
  DofMap m;
  m.n_full = mesh.edge_count();
  m.n_free = m.n_full;
  m.rep.resize(m.n_full);
  m.free_of_rep.resize(m.n_full);
  for (int d = 0; d < m.n_full; ++d) {
    m.rep[d] = d;
    m.free_of_rep[d] = d;
  }
  return m;
}

DofMap edge_tangential_zero(const BoxMesh& mesh) {
  DofMap m;
  m.n_full = mesh.edge_count();
  m.rep.resize(m.n_full);
  m.free_of_rep.assign(m.n_full, -1);
  int f = 0;
  for (int d = 0; d < m.n_full; ++d) {
    m.rep[d] = d;
    if (!mesh.edge_on_boundary(d)) m.free_of_rep[d] = f++;
  }
  m.n_free = f;
  return m;
}

SpMat prolongation(const DofMap& map) {
  SpMat P(map.n_full, map.n_free);
  std::vector<Triplet> trip;
  trip.reserve(map.n_full);
  for (int d = 0; d < map.n_full; ++d) {
    const int f = map.free_index(d);
    if (f >= 0) trip.emplace_back(d, f, 1.0);
  }
  P.setFromTriplets(trip.begin(), trip.end());
  return P;
}

SpMat reduce(const SpMat& full, const DofMap& map) {
  const SpMat P = prolongation(map);
  SpMat out = P.transpose() * full * P;
  out.makeCompressed();
  return out;
}

SpMat assemble_stiffness_full(const BoxMesh& mesh, const TensorSampler& coeff,
                              const ScalarSampler* reaction) {
  const Vec3 h = mesh.spacing();
  const double wq = GaussQ2::weight * mesh.element_volume();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(mesh.element_count()) * 64);
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto nodes = mesh.element_nodes(el);
    const Vec3 x0 = mesh.element_origin(el);
    Eigen::Matrix<double, 8, 8> Ke = Eigen::Matrix<double, 8, 8>::Zero();
    for (const Vec3& u : GaussQ2::points()) {
      const Vec3 xq = x0 + u.cwiseProduct(h);
      const Mat3 a = coeff(xq);
      check_finite(a, el, "coefficient");
      const auto g = Q1Basis::gradients(u, h);
      double r = 0.0;
      std::array<double, 8> N{};
      if (reaction) {
        r = (*reaction)(xq);
        check_finite(r, el, "reaction");
        N = Q1Basis::values(u);
      }
      for (int i = 0; i < 8; ++i) {
        const Vec3 agi = a * g[i];
        for (int j = 0; j < 8; ++j) {
          double v = agi.dot(g[j]);
          if (reaction) v += r * N[i] * N[j];
          Ke(i, j) += wq * v;
        }
      }
    }
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        trip.emplace_back(nodes[i], nodes[j], Ke(i, j));
  }
  SpMat K(mesh.node_count(), mesh.node_count());
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  return K;
}

SpMat assemble_curl_curl_full(const BoxMesh& mesh, const TensorSampler& coeff) {
  const Vec3 h = mesh.spacing();
  const double wq = GaussQ2::weight * mesh.element_volume();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(mesh.element_count()) * 144);
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto edges = mesh.element_edges(el);
    const Vec3 x0 = mesh.element_origin(el);
    Eigen::Matrix<double, 12, 12> Ke = Eigen::Matrix<double, 12, 12>::Zero();
    for (const Vec3& u : GaussQ2::points()) {
      const Vec3 xq = x0 + u.cwiseProduct(h);
      const Mat3 c = coeff(xq);
      check_finite(c, el, "coefficient");
      const auto C = EdgeBasis::curls(u, h);
      for (int i = 0; i < 12; ++i) {
        const Vec3 cci = c * C[i];
        for (int j = 0; j < 12; ++j) Ke(i, j) += wq * cci.dot(C[j]);
      }
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        trip.emplace_back(edges[i], edges[j], Ke(i, j));
  }
  SpMat K(mesh.edge_count(), mesh.edge_count());
  K.setFromTriplets(trip.begin(), trip.end());
  K.makeCompressed();
  return K;
}

SpMat assemble_mass_nodal_full(const BoxMesh& mesh, const ScalarSampler* w) {
  const Vec3 h = mesh.spacing();
  const double wq = GaussQ2::weight * mesh.element_volume();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(mesh.element_count()) * 64);
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto nodes = mesh.element_nodes(el);
    const Vec3 x0 = mesh.element_origin(el);
    Eigen::Matrix<double, 8, 8> Me = Eigen::Matrix<double, 8, 8>::Zero();
    for (const Vec3& u : GaussQ2::points()) {
      double wv = 1.0;
      if (w) {
        wv = (*w)(x0 + u.cwiseProduct(h));
        check_finite(wv, el, "weight");
      }
      const auto N = Q1Basis::values(u);
      for (int i = 0; i < 8; ++i)
        for (int j = 0; j < 8; ++j)
          Me(i, j) += wq * wv * N[i] * N[j];
    }
    for (int i = 0; i < 8; ++i)
      for (int j = 0; j < 8; ++j)
        trip.emplace_back(nodes[i], nodes[j], Me(i, j));
  }
  SpMat M(mesh.node_count(), mesh.node_count());
  M.setFromTriplets(trip.begin(), trip.end());
  M.makeCompressed();
  return M;
}

SpMat assemble_mass_edge_full(const BoxMesh& mesh, const TensorSampler* W) {
  const Vec3 h = mesh.spacing();
  const double wq = GaussQ2::weight * mesh.element_volume();
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(mesh.element_count()) * 144);
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto edges = mesh.element_edges(el);
    const Vec3 x0 = mesh.element_origin(el);
    Eigen::Matrix<double, 12, 12> Me = Eigen::Matrix<double, 12, 12>::Zero();
    for (const Vec3& u : GaussQ2::points()) {
      Mat3 wv = Mat3::Identity();
      if (W) {
        wv = (*W)(x0 + u.cwiseProduct(h));
        check_finite(wv, el, "weight");
      }
      const auto Wb = EdgeBasis::values(u, h);
      for (int i = 0; i < 12; ++i) {
        const Vec3 wi = wv * Wb[i];
        for (int j = 0; j < 12; ++j) Me(i, j) += wq * wi.dot(Wb[j]);
      }
    }
    for (int i = 0; i < 12; ++i)
      for (int j = 0; j < 12; ++j)
        trip.emplace_back(edges[i], edges[j], Me(i, j));
  }
  SpMat M(mesh.edge_count(), mesh.edge_count());
  M.setFromTriplets(trip.begin(), trip.end());
  M.makeCompressed();
  return M;
}

VectorXd assemble_nodal_load_full(const BoxMesh& mesh, const VectorSampler* g,
                                  const ScalarSampler* s) {
  const Vec3 h = mesh.spacing();
  const double wq = GaussQ2::weight * mesh.element_volume();
  VectorXd b = VectorXd::Zero(mesh.node_count());
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto nodes = mesh.element_nodes(el);
    const Vec3 x0 = mesh.element_origin(el);
    for (const Vec3& u : GaussQ2::points()) {
      const Vec3 xq = x0 + u.cwiseProduct(h);
      if (g) {
        const Vec3 gv = (*g)(xq);
        check_finite(gv, el, "load");
        const auto grad = Q1Basis::gradients(u, h);
        for (int i = 0; i < 8; ++i) b[nodes[i]] += wq * gv.dot(grad[i]);
      }
      if (s) {
        const double sv = (*s)(xq);
        check_finite(sv, el, "load");
        const auto N = Q1Basis::values(u);
        for (int i = 0; i < 8; ++i) b[nodes[i]] += wq * sv * N[i];
      }
    }
  }
  return b;
}

VectorXd assemble_edge_load_full(const BoxMesh& mesh, const VectorSampler* gc,
                                 const VectorSampler* gv) {
  const Vec3 h = mesh.spacing();
  const double wq = GaussQ2::weight * mesh.element_volume();
  VectorXd b = VectorXd::Zero(mesh.edge_count());
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto edges = mesh.element_edges(el);
    const Vec3 x0 = mesh.element_origin(el);
    for (const Vec3& u : GaussQ2::points()) {
      const Vec3 xq = x0 + u.cwiseProduct(h);
      if (gc) {
        const Vec3 v = (*gc)(xq);
        check_finite(v, el, "load");
        const auto C = EdgeBasis::curls(u, h);
        for (int i = 0; i < 12; ++i) b[edges[i]] += wq * v.dot(C[i]);
      }
      if (gv) {
        const Vec3 v = (*gv)(xq);
        check_finite(v, el, "load");
        const auto W = EdgeBasis::values(u, h);
        for (int i = 0; i < 12; ++i) b[edges[i]] += wq * v.dot(W[i]);
      }
    }
  }
  return b;
}

SpMat discrete_gradient(const BoxMesh& mesh) {
  SpMat G(mesh.edge_count(), mesh.node_count());
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(mesh.edge_count()) * 2);
  for (int e = 0; e < mesh.edge_count(); ++e) {
    const auto [tail, head] = mesh.edge_nodes(e);
    trip.emplace_back(e, head, 1.0);
    trip.emplace_back(e, tail, -1.0);
  }
  G.setFromTriplets(trip.begin(), trip.end());
  G.makeCompressed();
  return G;
}

SparseSystem assemble_scalar(const MeshPtr& mesh, const TensorSampler& coeff,
                             const ScalarSampler* reaction, ScalarBoundary bc) {
  SparseSystem sys;
  switch (bc) {
    case ScalarBoundary::DirichletZero: sys.map = nodal_dirichlet_zero(*mesh); break;
    case ScalarBoundary::PeriodicPinned: sys.map = nodal_periodic_pinned(*mesh); break;
    case ScalarBoundary::None: sys.map = nodal_all_free(*mesh); break;
  }
  sys.A = reduce(assemble_stiffness_full(*mesh, coeff, reaction), sys.map);
  sys.b = VectorXd::Zero(sys.map.n_free);
  sys.kind = MatrixKind::SymmetricPositiveDefinite;
  return sys;
}

SparseSystem assemble_curl_curl(const MeshPtr& mesh, const TensorSampler& coeff) {
  SparseSystem sys;
  sys.map = edge_tangential_zero(*mesh);
  sys.A = reduce(assemble_curl_curl_full(*mesh, coeff), sys.map);
  sys.b = VectorXd::Zero(sys.map.n_free);
  sys.kind = MatrixKind::SymmetricIndefinite; // semi-definite: gradients in kernel
  return sys;
}

SparseSystem assemble_mass(const MeshPtr& mesh, FemSpace space,
                           const ScalarSampler* nodal_weight,
                           const TensorSampler* edge_weight) {
  SparseSystem sys;
  if (space == FemSpace::NodalQ1) {
    sys.map = nodal_all_free(*mesh);
    sys.A = assemble_mass_nodal_full(*mesh, nodal_weight);
  } else {
    sys.map = edge_all_free(*mesh);
    sys.A = assemble_mass_edge_full(*mesh, edge_weight);
  }
  sys.b = VectorXd::Zero(sys.map.n_free);
  sys.kind = MatrixKind::SymmetricPositiveDefinite;
  return sys;
}

SparseSystem build_saddle(const SpMat& K, const SpMat& B, const VectorXd& f) {
  const int n = static_cast<int>(K.rows());
  const int m = static_cast<int>(B.cols());
  std::vector<Triplet> trip;
  trip.reserve(static_cast<size_t>(K.nonZeros()) + 2 * B.nonZeros());
  for (int c = 0; c < K.outerSize(); ++c)
    for (SpMat::InnerIterator it(K, c); it; ++it)
      trip.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()), it.value());
  for (int c = 0; c < B.outerSize(); ++c)
    for (SpMat::InnerIterator it(B, c); it; ++it) {
      const int r = static_cast<int>(it.row());
      const int cc = static_cast<int>(it.col());
      trip.emplace_back(r, n + cc, it.value());
      trip.emplace_back(n + cc, r, it.value());
    }
  SparseSystem sys;
  sys.A.resize(n + m, n + m);
  sys.A.setFromTriplets(trip.begin(), trip.end());
  sys.A.makeCompressed();
  sys.b = VectorXd::Zero(n + m);
  sys.b.head(n) = f;
  DofMap map;
  map.n_full = n + m;
  map.n_free = n + m;
  map.rep.resize(map.n_full);
  map.free_of_rep.resize(map.n_full);
  for (int d = 0; d < map.n_full; ++d) {
    map.rep[d] = d;
    map.free_of_rep[d] = d;
  }
  sys.map = map;
  sys.kind = MatrixKind::SymmetricIndefinite;
  return sys;
}

} // namespace mshom
