#pragma once

#include <array>

#include "mshom/cell_problems.hpp"
#include "mshom/coupled.hpp"

namespace mshom {

/// Nodal gradient from second-order difference quotients on the structured
/// grid: central stencils at interior nodes, three-point one-sided stencils on
/// the boundary (both exact on quadratics).  Row n holds the gradient at node
/// n.  Throws StencilError when an axis has fewer than 3 node planes.
Eigen::Matrix<double, Eigen::Dynamic, 3> dq_gradient(const ScalarField& f);
Eigen::Matrix<Complex, Eigen::Dynamic, 3> dq_gradient(const ComplexField& f);

/// Hessian by nested difference quotients: result[k](n, l) = d^2 f / dx_k dx_l
/// at node n.  Mixed entries are symmetric to roundoff because the axis
/// operators commute.
std::array<Eigen::Matrix<double, Eigen::Dynamic, 3>, 3>
dq_hessian(const ScalarField& f);
std::array<Eigen::Matrix<Complex, Eigen::Dynamic, 3>, 3>
dq_hessian(const ComplexField& f);

/// Corrector-augmented fields sampled at the nodes of an evaluation mesh.
/// Order 0 is the plain interpolant of the coarse solution; orders 1 and 2 add
/// the cell-function terms scaled by epsilon and epsilon^2.
struct MultiscaleField {
  MeshPtr mesh;   ///< evaluation mesh
  int order = 0;  ///< 0, 1, or 2
  double t = 0.0;
  VectorXcd psi;                              ///< wavefunction at nodes
  Eigen::Matrix<double, Eigen::Dynamic, 3> E; ///< electric field at nodes
  Eigen::Matrix<double, Eigen::Dynamic, 3> H; ///< magnetic field at nodes
  /// Tangential edge moments of the same electric-field expansion, sampled at
  /// the evaluation mesh's edge midpoints.  This is the representation to use
  /// for H(curl) comparisons against an edge-element solution: when the
  /// evaluation mesh equals the coarse mesh and the correctors vanish, it
  /// reproduces the stored edge dofs exactly (tangential traces are
  /// single-valued), which a round trip through nodal recovery does not.
  EdgeField E_edges;
};

/// Wavefunction expansion: psi0 + eps theta_k (d_k psi0)
/// + eps^2 theta_kl (d_k d_l psi0), with the zero-trace corrector family of
/// the kinetic coefficient evaluated at the wrapped cell coordinate
/// xi = (x / eps) mod 1 and the coarse derivatives taken by difference
/// quotients, interpolated trilinearly to each evaluation node.
MultiscaleField reconstruct_psi(const HomogenizedTrajectory& traj,
                                const CellFunctionSet& cells,
                                const PeriodicMedium& medium, int order,
                                const MeshPtr& eval_mesh, int t_index);

/// Electric field expansion: the coarse edge field is first recovered to
/// nodal vectors, then augmented with the gradient-of-product corrector of
/// the eta scalar family (expanded by the product rule into a cell-gradient
/// part and an eps-scaled coarse-gradient part) and the curl-family corrector
/// terms -eps Theta1_mu W - eps^2 Theta2_mu curl(W), where W is the field-law
/// product mu_hat dH/dt = -curl E, recovered fresh from the stored E.
MultiscaleField reconstruct_E(const HomogenizedTrajectory& traj,
                              const CellFunctionSet& cells,
                              const PeriodicMedium& medium, int order,
                              const MeshPtr& eval_mesh, int t_index);

/// Magnetic field expansion, the mirror of reconstruct_E with the mu and eta
/// roles swapped and positive curl-corrector signs:
/// + eps Theta1_eta W + eps^2 Theta2_eta curl(W) with W = eta_hat dE/dt from
/// the stored E_dot (eta_hat re-derived from the cell functions).
MultiscaleField reconstruct_H(const HomogenizedTrajectory& traj,
                              const CellFunctionSet& cells,
                              const PeriodicMedium& medium, int order,
                              const MeshPtr& eval_mesh, int t_index);

/// All three expansions in one pass over the evaluation nodes (the shared
/// coarse-derivative preparation is done once).
MultiscaleField reconstruct_state(const HomogenizedTrajectory& traj,
                                  const CellFunctionSet& cells,
                                  const PeriodicMedium& medium, int order,
                                  const MeshPtr& eval_mesh, int t_index);

} // namespace mshom
