#pragma once

#include "mshom/fem_basis.hpp"
#include "mshom/mesh.hpp"

namespace mshom {

/// Scalar finite-element function with one value per mesh node (trilinear).
template <typename T>
struct NodalField {
  MeshPtr mesh;
  Eigen::Matrix<T, Eigen::Dynamic, 1> values;

  NodalField() = default;
  explicit NodalField(MeshPtr m)
      : mesh(std::move(m)),
        values(Eigen::Matrix<T, Eigen::Dynamic, 1>::Zero(mesh->node_count())) {}
  NodalField(MeshPtr m, Eigen::Matrix<T, Eigen::Dynamic, 1> v)
      : mesh(std::move(m)), values(std::move(v)) {}

  /// Trilinear interpolation; throws OutOfDomainError outside the box.
  T interpolate(const Vec3& p) const {
    const auto [el, u] = mesh->locate(p);
    const auto nodes = mesh->element_nodes(el);
    const auto N = Q1Basis::values(u);
    T out{};
    for (int l = 0; l < 8; ++l) out += N[l] * values[nodes[l]];
    return out;
  }

  /// Gradient of the trilinear interpolant (discontinuous across elements).
  Eigen::Matrix<T, 3, 1> gradient(const Vec3& p) const {
    const auto [el, u] = mesh->locate(p);
    const auto nodes = mesh->element_nodes(el);
    const auto g = Q1Basis::gradients(u, mesh->spacing());
    Eigen::Matrix<T, 3, 1> out = Eigen::Matrix<T, 3, 1>::Zero();
    for (int l = 0; l < 8; ++l) out += g[l] * values[nodes[l]];
    return out;
  }
};

using ScalarField = NodalField<double>;
using ComplexField = NodalField<Complex>;

/// Lowest-order edge-element function; one circulation value
/// (field strength times edge length) per mesh edge.
struct EdgeField {
  MeshPtr mesh;
  VectorXd values;

  EdgeField() = default;
  explicit EdgeField(MeshPtr m)
      : mesh(std::move(m)), values(VectorXd::Zero(mesh->edge_count())) {}
  EdgeField(MeshPtr m, VectorXd v) : mesh(std::move(m)), values(std::move(v)) {}

  /// Point value of the edge interpolant.
  Vec3 evaluate(const Vec3& p) const {
    const auto [el, u] = mesh->locate(p);
    const auto edges = mesh->element_edges(el);
    const auto W = EdgeBasis::values(u, mesh->spacing());
    Vec3 out = Vec3::Zero();
    for (int m = 0; m < 12; ++m) out += values[edges[m]] * W[m];
    return out;
  }

  /// Pointwise curl of the edge interpolant.
  Vec3 curl(const Vec3& p) const {
    const auto [el, u] = mesh->locate(p);
    const auto edges = mesh->element_edges(el);
    const auto C = EdgeBasis::curls(u, mesh->spacing());
    Vec3 out = Vec3::Zero();
    for (int m = 0; m < 12; ++m) out += values[edges[m]] * C[m];
    return out;
  }
};

/// Componentwise-trilinear 3-vector field with one vector per node.
struct NodalVectorField {
  MeshPtr mesh;
  Eigen::Matrix<double, Eigen::Dynamic, 3> values; // row per node

  NodalVectorField() = default;
  explicit NodalVectorField(MeshPtr m)
      : mesh(std::move(m)),
        values(Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(mesh->node_count(), 3)) {}

  Vec3 at(int node) const { return values.row(node).transpose(); }

  Vec3 interpolate(const Vec3& p) const {
    const auto [el, u] = mesh->locate(p);
    const auto nodes = mesh->element_nodes(el);
    const auto N = Q1Basis::values(u);
    Vec3 out = Vec3::Zero();
    for (int l = 0; l < 8; ++l) out += N[l] * values.row(nodes[l]).transpose();
    return out;
  }
};

/// Edge interpolant of an analytic vector field: each circulation dof is the
/// midpoint-value approximation of the line integral, exact for fields that
/// vary linearly along the edge.
EdgeField interpolate_to_edges(const MeshPtr& mesh, const VectorSampler& f);

/// Edge interpolant of a componentwise-trilinear nodal vector field (the
/// midpoint value equals the endpoint average, so this is exact circulation
/// of the trilinear interpolant along each edge).
EdgeField interpolate_to_edges(const NodalVectorField& f);

/// Nodal recovery of an edge field: volume-weighted average of element-center
/// evaluations over the elements touching each node.
NodalVectorField recover_nodal(const EdgeField& e);

/// Nodal recovery of the curl of an edge field, same averaging.
NodalVectorField recover_nodal_curl(const EdgeField& e);

/// Nodal interpolant of an analytic vector field.
NodalVectorField interpolate_to_nodes(const MeshPtr& mesh, const VectorSampler& f);

} // namespace mshom
