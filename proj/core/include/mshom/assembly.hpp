#pragma once

#include <optional>
#include <vector>

#include "mshom/fields.hpp"

namespace mshom {

/// Maps full mesh dofs (nodes or edges) to the free unknowns of a constrained
/// system.  Periodic identification first maps a dof to its representative;
/// constrained representatives carry free index -1 and expand to zero.
struct DofMap {
  int n_full = 0;
  int n_free = 0;
  std::vector<int> rep;          // representative full dof (identity unless periodic)
  std::vector<int> free_of_rep;  // free index of a representative, -1 if constrained

  int free_index(int full) const { return free_of_rep[rep[full]]; }

  template <typename T>
  Eigen::Matrix<T, Eigen::Dynamic, 1>
  expand(const Eigen::Matrix<T, Eigen::Dynamic, 1>& free) const {
    Eigen::Matrix<T, Eigen::Dynamic, 1> full =
        Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(n_full);
    for (int d = 0; d < n_full; ++d) {
      const int f = free_index(d);
      if (f >= 0) full[d] = free[f];
    }
    return full;
  }

  template <typename T>
  Eigen::Matrix<T, Eigen::Dynamic, 1>
  restrict(const Eigen::Matrix<T, Eigen::Dynamic, 1>& full) const {
    // Transpose of the prolongation: contributions of identified dofs add up.
    Eigen::Matrix<T, Eigen::Dynamic, 1> free =
        Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(n_free);
    for (int d = 0; d < n_full; ++d) {
      const int f = free_index(d);
      if (f >= 0) free[f] += full[d];
    }
    return free;
  }
};

/// Identity map over `n` dofs (no constraints); for systems built by hand.
DofMap identity_map(int n);

DofMap nodal_all_free(const BoxMesh& mesh);
DofMap nodal_dirichlet_zero(const BoxMesh& mesh);
/// Opposite faces identified; the representative of node lattice coordinate
/// div wraps to 0; representative node 0 is pinned to fix the constant.
DofMap nodal_periodic_pinned(const BoxMesh& mesh);
DofMap edge_all_free(const BoxMesh& mesh);
DofMap edge_tangential_zero(const BoxMesh& mesh);

/// 0/1 prolongation matrix (n_full x n_free) realizing DofMap::expand.
SpMat prolongation(const DofMap& map);

enum class MatrixKind { SymmetricPositiveDefinite, SymmetricIndefinite };

/// A reduced linear system on the free dofs of `map`.
struct SparseSystem {
  SpMat A;
  VectorXd b;
  DofMap map;
  MatrixKind kind = MatrixKind::SymmetricPositiveDefinite;
};

struct ComplexSparseSystem {
  SpMatC A;
  VectorXcd b;
  DofMap map;
};

// --- full-dof element assembly (no constraints applied) ---

/// Stiffness (coeff grad u, grad v) plus optional reaction (r u, v), nodal Q1.
SpMat assemble_stiffness_full(const BoxMesh& mesh, const TensorSampler& coeff,
                              const ScalarSampler* reaction = nullptr);

/// Curl-curl form (coeff curl u, curl v) on edge elements.
SpMat assemble_curl_curl_full(const BoxMesh& mesh, const TensorSampler& coeff);

/// Nodal mass (w u, v); unit weight when w is null.
SpMat assemble_mass_nodal_full(const BoxMesh& mesh, const ScalarSampler* w = nullptr);

/// Edge-element mass (W u, v) with 3x3 weight; identity when W is null.
SpMat assemble_mass_edge_full(const BoxMesh& mesh, const TensorSampler* W = nullptr);

/// Nodal load functional F(v) = (g, grad v) + (s, v); either part may be null.
VectorXd assemble_nodal_load_full(const BoxMesh& mesh, const VectorSampler* g,
                                  const ScalarSampler* s);

/// Edge load functional F(v) = (gc, curl v) + (gv, v); either part may be null.
VectorXd assemble_edge_load_full(const BoxMesh& mesh, const VectorSampler* gc,
                                 const VectorSampler* gv);

/// Signed node-to-edge incidence (edge_count x node_count): the exact discrete
/// gradient, (G p)_e = p(head) - p(tail).  Gradients of trilinear functions are
/// reproduced exactly by the edge space, so curl . G = 0 holds identically.
SpMat discrete_gradient(const BoxMesh& mesh);

/// Galerkin reduction P^T A P onto the free dofs of `map`.
SpMat reduce(const SpMat& full, const DofMap& map);

// --- constrained-system conveniences ---

enum class ScalarBoundary { DirichletZero, PeriodicPinned, None };

/// Reduced scalar stiffness system (zero rhs) under the requested boundary
/// treatment.  `None` leaves every node free (singular pure-Neumann operator).
SparseSystem assemble_scalar(const MeshPtr& mesh, const TensorSampler& coeff,
                             const ScalarSampler* reaction, ScalarBoundary bc);

/// Reduced curl-curl system on tangential-zero edges (zero rhs).  The operator
/// alone is only positive semi-definite (gradients are its kernel); it is
/// meant as a building block for saddle systems or mass-augmented solves.
SparseSystem assemble_curl_curl(const MeshPtr& mesh, const TensorSampler& coeff);

enum class FemSpace { NodalQ1, Edge };

/// Unconstrained mass system (all dofs free, zero rhs).
SparseSystem assemble_mass(const MeshPtr& mesh, FemSpace space,
                           const ScalarSampler* nodal_weight = nullptr,
                           const TensorSampler* edge_weight = nullptr);

/// Symmetric indefinite block system [[K, B], [B^T, 0]] with rhs (f, 0).
SparseSystem build_saddle(const SpMat& K, const SpMat& B, const VectorXd& f);

} // namespace mshom
