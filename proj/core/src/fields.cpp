#include "mshom/fields.hpp"

namespace mshom {

EdgeField interpolate_to_edges(const MeshPtr& mesh, const VectorSampler& f) {
  EdgeField out(mesh);
  const Vec3 h = mesh->spacing();
  for (int e = 0; e < mesh->edge_count(); ++e) {
    const int axis = mesh->edge_axis(e);
    out.values[e] = f(mesh->edge_midpoint(e))[axis] * h[axis];
  }
  return out;
}

EdgeField interpolate_to_edges(const NodalVectorField& f) {
  EdgeField out(f.mesh);
  const Vec3 h = f.mesh->spacing();
  for (int e = 0; e < f.mesh->edge_count(); ++e) {
    const int axis = f.mesh->edge_axis(e);
    const auto [a, b] = f.mesh->edge_nodes(e);
    out.values[e] = 0.5 * (f.values(a, axis) + f.values(b, axis)) * h[axis];
  }
  return out;
}

namespace {

template <typename CenterValue>
NodalVectorField average_element_centers(const MeshPtr& mesh, CenterValue&& value) {
  // Uniform spacing: every adjacent element carries the same volume weight,
  // so the recovery is a plain average over the 1..8 elements at each node.
  NodalVectorField out(mesh);
  VectorXd weight = VectorXd::Zero(mesh->node_count());
  const Vec3 center(0.5, 0.5, 0.5);
  for (int el = 0; el < mesh->element_count(); ++el) {
    const Vec3 v = value(el, center);
    for (int n : mesh->element_nodes(el)) {
      out.values.row(n) += v.transpose();
      weight[n] += 1.0;
    }
  }
  for (int n = 0; n < mesh->node_count(); ++n) out.values.row(n) /= weight[n];
  return out;
}

} // namespace

NodalVectorField recover_nodal(const EdgeField& e) {
  const Vec3 h = e.mesh->spacing();
  return average_element_centers(e.mesh, [&](int el, const Vec3& u) {
    const auto edges = e.mesh->element_edges(el);
    const auto W = EdgeBasis::values(u, h);
    Vec3 v = Vec3::Zero();
    for (int m = 0; m < 12; ++m) v += e.values[edges[m]] * W[m];
    return v;
  });
}

NodalVectorField recover_nodal_curl(const EdgeField& e) {
  const Vec3 h = e.mesh->spacing();
  return average_element_centers(e.mesh, [&](int el, const Vec3& u) {
    const auto edges = e.mesh->element_edges(el);
    const auto C = EdgeBasis::curls(u, h);
    Vec3 v = Vec3::Zero();
    for (int m = 0; m < 12; ++m) v += e.values[edges[m]] * C[m];
    return v;
  });
}

NodalVectorField interpolate_to_nodes(const MeshPtr& mesh, const VectorSampler& f) {
  NodalVectorField out(mesh);
  for (int n = 0; n < mesh->node_count(); ++n)
    out.values.row(n) = f(mesh->node_position(n)).transpose();
  return out;
}

} // namespace mshom
