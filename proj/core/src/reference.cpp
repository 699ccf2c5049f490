#include "mshom/reference.hpp"

#include <cmath>
#include <string>

#include "mshom/cell_problems.hpp"

namespace mshom {

ReferenceTrajectory run_reference(const PeriodicMedium& medium,
                                  int fine_divisions_per_cell,
                                  const SolverParams& params, const XcSpec& xc,
                                  const SourceSpec& source, long max_edge_dofs) {
  medium.validate();
  params.validate();
  if (fine_divisions_per_cell < 2)
    throw ConfigError("reference.fine_divisions_per_cell",
                      "needs at least 2 divisions per cell");

  const int cells = medium.cells_per_axis();
  if (std::abs(1.0 / medium.epsilon - cells) > 1e-9)
    throw ConfigError("medium.epsilon",
                      "1/epsilon must be a whole number of cells per axis");
  require_aligned(medium, fine_divisions_per_cell);

  const long total = static_cast<long>(cells) * fine_divisions_per_cell;
  const long edges = 3L * total * total * (total + 1);
  if (edges > max_edge_dofs)
    throw ConfigError(
        "reference.fine_divisions_per_cell",
        "fine mesh would carry " + std::to_string(edges) +
            " edge unknowns, above the cap of " + std::to_string(max_edge_dofs) +
            "; lower the resolution or raise the cap");

  const MeshPtr mesh =
      std::make_shared<BoxMesh>(BoxMesh::unit_cell(static_cast<int>(total)));

  ReferenceTrajectory out;
  out.trajectory = run_coupled(MaterialModel::oscillatory(mesh, medium), params,
                               xc, source);
  out.medium = medium;
  out.fine_divisions_per_cell = fine_divisions_per_cell;
  return out;
}

} // namespace mshom
