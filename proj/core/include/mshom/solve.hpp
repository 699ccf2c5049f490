#pragma once

#include "mshom/assembly.hpp"

namespace mshom {

struct SolveStats {
  int iterations = 0;
  double residual = 0.0; // relative ||b - A x|| / ||b||
  bool used_direct_fallback = false;
};

/// Solves the reduced system to a relative residual ||b - A x|| / ||b|| <= tol.
///
/// Method selection follows the matrix kind: conjugate gradients for SPD,
/// MINRES for symmetric indefinite.  Iterations are capped at 10 * dimension;
/// if the Krylov solve stalls, one deterministic sparse-LU attempt is made
/// before reporting SolverError with the final residual.  All paths are
/// single-threaded and bitwise reproducible.
VectorXd solve(const SparseSystem& sys, double tol, SolveStats* stats = nullptr);

/// Complex (non-Hermitian) systems: BiCGStab with diagonal preconditioning,
/// optional warm start, same residual contract and fallback.
VectorXcd solve(const ComplexSparseSystem& sys, double tol,
                SolveStats* stats = nullptr, const VectorXcd* guess = nullptr);

} // namespace mshom
