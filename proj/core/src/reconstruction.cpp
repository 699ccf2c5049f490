#include "mshom/reconstruction.hpp"

#include <cmath>

#include "mshom/effective.hpp"

namespace mshom {

namespace {

template <typename T>
using Rows3 = Eigen::Matrix<T, Eigen::Dynamic, 3>;

template <typename T>
Rows3<T> dq_gradient_impl(const NodalField<T>& f) {
  if (!f.mesh) throw StencilError("difference quotient: field has no mesh");
  const BoxMesh& mesh = *f.mesh;
  if (f.values.size() != mesh.node_count())
    throw StencilError("difference quotient: field size does not match its mesh");
  const auto& div = mesh.divisions();
  for (int a = 0; a < 3; ++a)
    if (div[a] < 2)
      throw StencilError("difference quotient: axis " + std::to_string(a) +
                         " has fewer than 3 node planes");
  const Vec3 h = mesh.spacing();
  Rows3<T> out(mesh.node_count(), 3);
  for (int n = 0; n < mesh.node_count(); ++n) {
    const auto c = mesh.node_coords(n);
    for (int a = 0; a < 3; ++a) {
      auto shifted = [&](int offset) {
        auto cc = c;
        cc[a] += offset;
        return f.values[mesh.node_index(cc[0], cc[1], cc[2])];
      };
      T d;
      if (c[a] == 0) {
        d = (T(-3.0) * shifted(0) + T(4.0) * shifted(1) - shifted(2)) / (2.0 * h[a]);
      } else if (c[a] == div[a]) {
        d = (T(3.0) * shifted(0) - T(4.0) * shifted(-1) + shifted(-2)) / (2.0 * h[a]);
      } else {
        d = (shifted(1) - shifted(-1)) / (2.0 * h[a]);
      }
      out(n, a) = d;
    }
  }
  return out;
}

template <typename T>
std::array<Rows3<T>, 3> dq_hessian_impl(const NodalField<T>& f) {
  const Rows3<T> g = dq_gradient_impl(f);
  std::array<Rows3<T>, 3> out;
  for (int k = 0; k < 3; ++k)
    out[k] = dq_gradient_impl(NodalField<T>(f.mesh, g.col(k)));
  return out;
}

/// Curl of a nodal 3-vector array by the same difference quotients.
Rows3<double> dq_curl(const MeshPtr& mesh, const Rows3<double>& W) {
  std::array<Rows3<double>, 3> g;
  for (int k = 0; k < 3; ++k)
    g[k] = dq_gradient_impl(ScalarField(mesh, W.col(k)));
  Rows3<double> out(W.rows(), 3);
  out.col(0) = g[2].col(1) - g[1].col(2);
  out.col(1) = g[0].col(2) - g[2].col(0);
  out.col(2) = g[1].col(0) - g[0].col(1);
  return out;
}

/// Trilinear interpolation weights of one point, shared across many nodal
/// arrays living on the same mesh.
struct PointWeights {
  std::array<int, 8> nodes;
  std::array<double, 8> w;
};

PointWeights weights_at(const BoxMesh& mesh, const Vec3& p) {
  const auto [el, u] = mesh.locate(p);
  PointWeights pw;
  pw.nodes = mesh.element_nodes(el);
  pw.w = Q1Basis::values(u);
  return pw;
}

template <typename Derived>
typename Derived::Scalar interp(const PointWeights& pw,
                                const Eigen::MatrixBase<Derived>& column) {
  typename Derived::Scalar out{};
  for (int l = 0; l < 8; ++l) out += pw.w[l] * column[pw.nodes[l]];
  return out;
}

Vec3 interp_rows(const PointWeights& pw, const Rows3<double>& rows) {
  Vec3 out = Vec3::Zero();
  for (int l = 0; l < 8; ++l) out += pw.w[l] * rows.row(pw.nodes[l]).transpose();
  return out;
}

/// One located point on the cell mesh with every basis quantity the corrector
/// evaluations need (scalar values and gradients, edge-element values).
struct CellPoint {
  std::array<int, 8> nodes;
  std::array<double, 8> N;
  std::array<Vec3, 8> G;
  std::array<int, 12> edges;
  std::array<Vec3, 12> W;
};

CellPoint cell_point(const BoxMesh& mesh, const Vec3& xi) {
  const auto [el, u] = mesh.locate(xi);
  CellPoint cp;
  cp.nodes = mesh.element_nodes(el);
  cp.N = Q1Basis::values(u);
  cp.G = Q1Basis::gradients(u, mesh.spacing());
  cp.edges = mesh.element_edges(el);
  cp.W = EdgeBasis::values(u, mesh.spacing());
  return cp;
}

double cell_value(const CellPoint& cp, const ScalarField& f) {
  double out = 0.0;
  for (int l = 0; l < 8; ++l) out += cp.N[l] * f.values[cp.nodes[l]];
  return out;
}

Vec3 cell_gradient(const CellPoint& cp, const ScalarField& f) {
  Vec3 out = Vec3::Zero();
  for (int l = 0; l < 8; ++l) out += cp.G[l] * f.values[cp.nodes[l]];
  return out;
}

Vec3 cell_edge_value(const CellPoint& cp, const EdgeField& f) {
  Vec3 out = Vec3::Zero();
  for (int m = 0; m < 12; ++m) out += cp.W[m] * f.values[cp.edges[m]];
  return out;
}

/// Wrapped cell coordinate xi = (x / eps) mod 1, componentwise in [0, 1].
Vec3 wrap_cell(const Vec3& x, double eps) {
  Vec3 xi;
  for (int a = 0; a < 3; ++a) {
    const double v = x[a] / eps;
    double frac = v - std::floor(v);
    if (frac < 0.0) frac = 0.0;
    if (frac > 1.0) frac = 1.0;
    xi[a] = frac;
  }
  return xi;
}

/// Coarse-mesh derivative arrays feeding one reconstruction pass.  Every array
/// is produced once per time index; evaluation nodes then only interpolate.
struct CoarseData {
  // wavefunction
  VectorXcd psi;
  Rows3<Complex> dpsi;
  std::array<Rows3<Complex>, 3> d2psi;
  // electric field (nodal recovery of the edge dofs)
  Rows3<double> E0;
  std::array<Rows3<double>, 3> dE;                 // [k](n,l) = d_l E_k
  std::array<std::array<Rows3<double>, 3>, 3> d2E; // [k][l](n,m) = d_m d_l E_k
  Rows3<double> WE;                                // mu_hat dH/dt = -curl E0
  Rows3<double> curlWE;
  // magnetic field
  Rows3<double> H0;
  std::array<Rows3<double>, 3> dH;
  std::array<std::array<Rows3<double>, 3>, 3> d2H;
  Rows3<double> WH; // eta_hat dE/dt
  Rows3<double> curlWH;
};

CoarseData prepare(const HomogenizedTrajectory& traj, int t_index, int order,
                   bool want_psi, bool want_E, bool want_H, const Mat3& eta_hat) {
  const HomogenizedState& st = traj.states[static_cast<std::size_t>(t_index)];
  const MeshPtr& mesh = traj.mesh;
  CoarseData cd;
  if (want_psi) {
    cd.psi = st.psi.values;
    if (order >= 1) cd.dpsi = dq_gradient_impl(st.psi);
    if (order >= 2) cd.d2psi = dq_hessian_impl(st.psi);
  }
  if (want_E) {
    cd.E0 = recover_nodal(st.E).values;
    if (order >= 1) {
      for (int k = 0; k < 3; ++k)
        cd.dE[k] = dq_gradient_impl(ScalarField(mesh, cd.E0.col(k)));
      // The field law makes the product mu_hat dH/dt equal to -curl E, so the
      // curl-corrector weight needs no tensor: recover the curl fresh.
      cd.WE = -recover_nodal_curl(st.E).values;
    }
    if (order >= 2) {
      for (int k = 0; k < 3; ++k)
        cd.d2E[k] = dq_hessian_impl(ScalarField(mesh, cd.E0.col(k)));
      cd.curlWE = dq_curl(mesh, cd.WE);
    }
  }
  if (want_H) {
    cd.H0 = st.H.values;
    if (order >= 1) {
      for (int k = 0; k < 3; ++k)
        cd.dH[k] = dq_gradient_impl(ScalarField(mesh, cd.H0.col(k)));
      const Rows3<double> Edot = recover_nodal(st.E_dot).values;
      cd.WH = Edot * eta_hat.transpose(); // row-wise eta_hat * Edot
    }
    if (order >= 2) {
      for (int k = 0; k < 3; ++k)
        cd.d2H[k] = dq_hessian_impl(ScalarField(mesh, cd.H0.col(k)));
      cd.curlWH = dq_curl(mesh, cd.WH);
    }
  }
  return cd;
}

MultiscaleField evaluate(const HomogenizedTrajectory& traj,
                         const CellFunctionSet& cells,
                         const PeriodicMedium& medium, int order,
                         const MeshPtr& eval_mesh, int t_index, bool want_psi,
                         bool want_E, bool want_H) {
  if (order < 0 || order > 2)
    throw ConfigError("reconstruct.order", "order must be 0, 1, or 2");
  if (!traj.mesh)
    throw ConfigError("reconstruct.trajectory", "trajectory has no mesh");
  if (t_index < 0 || t_index >= static_cast<int>(traj.states.size()))
    throw ConfigError("reconstruct.t_index",
                      "time index " + std::to_string(t_index) +
                          " outside the stored range [0, " +
                          std::to_string(traj.states.size()) + ")");
  if (!eval_mesh)
    throw ConfigError("reconstruct.eval_mesh", "evaluation mesh is empty");
  medium.validate();
  if (order > 0 && !cells.mesh)
    throw ConfigError("reconstruct.cells", "cell function set has no mesh");

  using C = PeriodicMedium::Coefficient;
  const Mat3 eta_hat = (want_H && order > 0)
                           ? homogenize_scalar(medium, C::Eta, cells)
                           : Mat3::Identity();
  const CoarseData cd =
      prepare(traj, t_index, order, want_psi, want_E, want_H, eta_hat);
  const double eps = medium.epsilon;
  const double eps2 = eps * eps;

  const int slot_eta = CellFunctionSet::curl_slot(C::Eta);
  const int slot_mu = CellFunctionSet::curl_slot(C::Mu);
  const int ia = static_cast<int>(C::A);
  const int ie = static_cast<int>(C::Eta);
  const int im = static_cast<int>(C::Mu);
  const auto& th_a = cells.theta1_dirichlet[ia];
  const auto& th_e = cells.theta1_dirichlet[ie];
  const auto& th_m = cells.theta1_dirichlet[im];

  MultiscaleField out;
  out.mesh = eval_mesh;
  out.order = order;
  out.t = traj.states[static_cast<std::size_t>(t_index)].t;
  const int n_eval = eval_mesh->node_count();
  out.psi.resize(want_psi ? n_eval : 0);
  out.E.resize(want_E ? n_eval : 0, 3);
  out.H.resize(want_H ? n_eval : 0, 3);

  const BoxMesh& coarse = *traj.mesh;

  // Per-point expansions, shared by the node loop and the edge-moment pass.
  // cp is unused (and may be null) at order 0.
  const auto eval_psi_at = [&](const PointWeights& pw, const CellPoint* cp) {
    Complex val = interp(pw, cd.psi);
    if (order == 0) return val;
    for (int k = 0; k < 3; ++k)
      val += eps * cell_value(*cp, th_a[k]) * interp(pw, cd.dpsi.col(k));
    if (order >= 2)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
          val += eps2 * cell_value(*cp, cells.theta2[ia][k][l]) *
                 interp(pw, cd.d2psi[k].col(l));
    return val;
  };

  // Corrector-only part of the electric-field expansion (orders >= 1); the
  // leading term is added by the caller so that the nodal output can use the
  // recovered nodal representation while the edge moments use the native
  // edge-element one.
  const auto eval_E_corr = [&](const PointWeights& pw, const CellPoint& cp) {
    const Vec3 E0x = interp_rows(pw, cd.E0);
    Vec3 v = Vec3::Zero();
    for (int k = 0; k < 3; ++k) {
      const Vec3 gradEk = interp_rows(pw, cd.dE[k]);
      v += cell_gradient(cp, th_e[k]) * E0x[k];
      v += eps * cell_value(cp, th_e[k]) * gradEk;
      if (order >= 2)
        for (int l = 0; l < 3; ++l) {
          v += eps * cell_gradient(cp, cells.theta2[ie][k][l]) * gradEk[l];
          v += eps2 * cell_value(cp, cells.theta2[ie][k][l]) *
               interp_rows(pw, cd.d2E[k][l]);
        }
    }
    const Vec3 WEx = interp_rows(pw, cd.WE);
    Vec3 t1 = Vec3::Zero();
    for (int p = 0; p < 3; ++p)
      t1 += cell_edge_value(cp, cells.Theta1[slot_mu][p]) * WEx[p];
    v -= eps * t1;
    if (order >= 2) {
      const Vec3 cWx = interp_rows(pw, cd.curlWE);
      Vec3 t2 = Vec3::Zero();
      for (int p = 0; p < 3; ++p)
        t2 += cell_edge_value(cp, cells.Theta2[slot_mu][p]) * cWx[p];
      v -= eps2 * t2;
    }
    return v;
  };

  const auto eval_E_at = [&](const PointWeights& pw, const CellPoint* cp) {
    Vec3 v = interp_rows(pw, cd.E0);
    if (order > 0) v += eval_E_corr(pw, *cp);
    return v;
  };

  const auto eval_H_at = [&](const PointWeights& pw, const CellPoint* cp) {
    const Vec3 H0x = interp_rows(pw, cd.H0);
    if (order == 0) return H0x;
    Vec3 v = H0x;
    for (int k = 0; k < 3; ++k) {
      const Vec3 gradHk = interp_rows(pw, cd.dH[k]);
      v += cell_gradient(*cp, th_m[k]) * H0x[k];
      v += eps * cell_value(*cp, th_m[k]) * gradHk;
      if (order >= 2)
        for (int l = 0; l < 3; ++l) {
          v += eps * cell_gradient(*cp, cells.theta2[im][k][l]) * gradHk[l];
          v += eps2 * cell_value(*cp, cells.theta2[im][k][l]) *
               interp_rows(pw, cd.d2H[k][l]);
        }
    }
    const Vec3 WHx = interp_rows(pw, cd.WH);
    Vec3 t1 = Vec3::Zero();
    for (int p = 0; p < 3; ++p)
      t1 += cell_edge_value(*cp, cells.Theta1[slot_eta][p]) * WHx[p];
    v += eps * t1;
    if (order >= 2) {
      const Vec3 cWx = interp_rows(pw, cd.curlWH);
      Vec3 t2 = Vec3::Zero();
      for (int p = 0; p < 3; ++p)
        t2 += cell_edge_value(*cp, cells.Theta2[slot_eta][p]) * cWx[p];
      v += eps2 * t2;
    }
    return v;
  };

  for (int n = 0; n < n_eval; ++n) {
    const Vec3 x = eval_mesh->node_position(n);
    const PointWeights pw = weights_at(coarse, x);
    CellPoint cp;
    if (order > 0) cp = cell_point(*cells.mesh, wrap_cell(x, eps));
    if (want_psi) out.psi[n] = eval_psi_at(pw, &cp);
    if (want_E) out.E.row(n) = eval_E_at(pw, &cp).transpose();
    if (want_H) out.H.row(n) = eval_H_at(pw, &cp).transpose();
  }

  if (want_E) {
    // The leading term is evaluated in its native edge-element representation;
    // tangential components are single-valued along every eval-mesh edge
    // (fine edges on coarse faces run tangentially to them), so the moments
    // are insensitive to which adjacent element locate() picks.
    const EdgeField& E_native = traj.states[static_cast<std::size_t>(t_index)].E;
    out.E_edges = interpolate_to_edges(eval_mesh, [&](const Vec3& x) {
      Vec3 v = E_native.evaluate(x);
      if (order > 0) {
        const PointWeights pw = weights_at(coarse, x);
        const CellPoint cp = cell_point(*cells.mesh, wrap_cell(x, eps));
        v += eval_E_corr(pw, cp);
      }
      return v;
    });
  }
  return out;
}

} // namespace

Rows3<double> dq_gradient(const ScalarField& f) { return dq_gradient_impl(f); }
Rows3<Complex> dq_gradient(const ComplexField& f) { return dq_gradient_impl(f); }

std::array<Rows3<double>, 3> dq_hessian(const ScalarField& f) {
  return dq_hessian_impl(f);
}
std::array<Rows3<Complex>, 3> dq_hessian(const ComplexField& f) {
  return dq_hessian_impl(f);
}

MultiscaleField reconstruct_psi(const HomogenizedTrajectory& traj,
                                const CellFunctionSet& cells,
                                const PeriodicMedium& medium, int order,
                                const MeshPtr& eval_mesh, int t_index) {
  return evaluate(traj, cells, medium, order, eval_mesh, t_index, true, false,
                  false);
}

MultiscaleField reconstruct_E(const HomogenizedTrajectory& traj,
                              const CellFunctionSet& cells,
                              const PeriodicMedium& medium, int order,
                              const MeshPtr& eval_mesh, int t_index) {
  return evaluate(traj, cells, medium, order, eval_mesh, t_index, false, true,
                  false);
}

MultiscaleField reconstruct_H(const HomogenizedTrajectory& traj,
                              const CellFunctionSet& cells,
                              const PeriodicMedium& medium, int order,
                              const MeshPtr& eval_mesh, int t_index) {
  return evaluate(traj, cells, medium, order, eval_mesh, t_index, false, false,
                  true);
}

MultiscaleField reconstruct_state(const HomogenizedTrajectory& traj,
                                  const CellFunctionSet& cells,
                                  const PeriodicMedium& medium, int order,
                                  const MeshPtr& eval_mesh, int t_index) {
  return evaluate(traj, cells, medium, order, eval_mesh, t_index, true, true,
                  true);
}

} // namespace mshom
