#pragma once

#include "mshom/coupled.hpp"

namespace mshom {

/// Fine-mesh evolution of the oscillatory problem with the true coefficients
/// sampled at x/epsilon, used as the stand-in for the exact solution when
/// measuring approximation errors.
struct ReferenceTrajectory {
  HomogenizedTrajectory trajectory;
  PeriodicMedium medium;
  int fine_divisions_per_cell = 0;
};

/// Runs the same Crank-Nicolson/fixed-point scheme as run(), but on the unit
/// cube meshed with cells_per_axis * fine_divisions_per_cell elements per axis
/// and with every assembly sampling the oscillatory coefficients.  The initial
/// wavefunction is the ground state of the oscillatory Hamiltonian; the time
/// grid comes from params (params.divisions is ignored here, the mesh is set
/// by the cell count).  Demands 1/epsilon integral, inclusion faces aligned to
/// the fine grid, and an edge-dof count within max_edge_dofs.
ReferenceTrajectory run_reference(const PeriodicMedium& medium,
                                  int fine_divisions_per_cell,
                                  const SolverParams& params,
                                  const XcSpec& xc = {},
                                  const SourceSpec& source = {},
                                  long max_edge_dofs = 2000000);

} // namespace mshom
