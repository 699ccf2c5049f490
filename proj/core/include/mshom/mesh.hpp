#pragma once

#include <array>
#include <memory>

#include "mshom/errors.hpp"
#include "mshom/types.hpp"

namespace mshom {

/// Structured axis-aligned hexahedral mesh of a box.
///
/// Numbering is deterministic and purely arithmetic:
///   - nodes: lexicographic with x fastest, then y, then z;
///   - edges: all x-directed edges first, then y-, then z-directed,
///     each family lexicographic like the nodes;
///   - elements: lexicographic like the nodes.
/// Every edge is directed from its lower-index node to its higher-index node,
/// i.e. along the positive coordinate axis.
class BoxMesh {
public:
  BoxMesh() = default;

  /// Builds a mesh with divisions[a] >= 1 elements along axis a.
  /// Throws ConfigError for non-positive divisions or degenerate extents.
  static BoxMesh create(const Vec3& origin, const Vec3& extents,
                        const std::array<int, 3>& divisions);

  /// Unit cell Q = (0,1)^3 with n divisions per axis.
  static BoxMesh unit_cell(int n) {
    return create(Vec3::Zero(), Vec3::Ones(), {n, n, n});
  }

  const Vec3& origin() const { return origin_; }
  const Vec3& extents() const { return extents_; }
  const std::array<int, 3>& divisions() const { return div_; }
  Vec3 spacing() const { return h_; }
  double element_volume() const { return h_[0] * h_[1] * h_[2]; }
  double volume() const { return extents_[0] * extents_[1] * extents_[2]; }

  int node_count() const { return np_[0] * np_[1] * np_[2]; }
  int element_count() const { return div_[0] * div_[1] * div_[2]; }
  int edge_count() const { return edge_offset_[3]; }
  int edge_count(int axis) const { return edge_offset_[axis + 1] - edge_offset_[axis]; }

  // --- nodes ---
  int node_index(int i, int j, int k) const {
    return (k * np_[1] + j) * np_[0] + i;
  }
  std::array<int, 3> node_coords(int n) const {
    const int i = n % np_[0];
    const int r = n / np_[0];
    return {i, r % np_[1], r / np_[1]};
  }
  Vec3 node_position(int n) const {
    const auto c = node_coords(n);
    return origin_ + Vec3(c[0] * h_[0], c[1] * h_[1], c[2] * h_[2]);
  }
  bool node_on_boundary(int n) const {
    const auto c = node_coords(n);
    for (int a = 0; a < 3; ++a)
      if (c[a] == 0 || c[a] == div_[a]) return true;
    return false;
  }

  // --- edges ---
  /// Edge along `axis` starting at node lattice coords (i,j,k); the coordinate
  /// along `axis` indexes the element interval, the other two index node planes.
  int edge_index(int axis, int i, int j, int k) const {
    const auto& n = edge_dims_[axis];
    return edge_offset_[axis] + (k * n[1] + j) * n[0] + i;
  }
  int edge_axis(int e) const {
    return e < edge_offset_[1] ? 0 : (e < edge_offset_[2] ? 1 : 2);
  }
  std::array<int, 3> edge_coords(int e) const {
    const int axis = edge_axis(e);
    const auto& n = edge_dims_[axis];
    int r = e - edge_offset_[axis];
    const int i = r % n[0];
    r /= n[0];
    return {i, r % n[1], r / n[1]};
  }
  /// Endpoint node indices (tail, head); the edge points from tail to head.
  std::pair<int, int> edge_nodes(int e) const {
    const int axis = edge_axis(e);
    auto c = edge_coords(e);
    const int tail = node_index(c[0], c[1], c[2]);
    std::array<int, 3> head = c;
    head[axis] += 1;
    return {tail, node_index(head[0], head[1], head[2])};
  }
  Vec3 edge_midpoint(int e) const {
    const auto [a, b] = edge_nodes(e);
    return 0.5 * (node_position(a) + node_position(b));
  }
  bool edge_on_boundary(int e) const {
    const int axis = edge_axis(e);
    const auto c = edge_coords(e);
    for (int a = 0; a < 3; ++a) {
      if (a == axis) continue;
      if (c[a] == 0 || c[a] == div_[a]) return true;
    }
    return false;
  }

  // --- elements ---
  int element_index(int i, int j, int k) const {
    return (k * div_[1] + j) * div_[0] + i;
  }
  std::array<int, 3> element_coords(int el) const {
    const int i = el % div_[0];
    const int r = el / div_[0];
    return {i, r % div_[1], r / div_[1]};
  }
  Vec3 element_origin(int el) const {
    const auto c = element_coords(el);
    return origin_ + Vec3(c[0] * h_[0], c[1] * h_[1], c[2] * h_[2]);
  }
  Vec3 element_center(int el) const {
    return element_origin(el) + 0.5 * h_;
  }

  /// Corner nodes in local order l = lx + 2*ly + 4*lz.
  std::array<int, 8> element_nodes(int el) const {
    const auto c = element_coords(el);
    std::array<int, 8> out{};
    for (int l = 0; l < 8; ++l)
      out[l] = node_index(c[0] + (l & 1), c[1] + ((l >> 1) & 1), c[2] + ((l >> 2) & 1));
    return out;
  }

  /// The 12 edges of an element: 4 x-edges (at local (ly,lz) = 00,10,01,11),
  /// then 4 y-edges (lz,lx), then 4 z-edges (lx,ly).
  std::array<int, 12> element_edges(int el) const {
    const auto c = element_coords(el);
    std::array<int, 12> out{};
    int m = 0;
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        out[m++] = edge_index(0, c[0], c[1] + a, c[2] + b);
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        out[m++] = edge_index(1, c[0] + b, c[1], c[2] + a);
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        out[m++] = edge_index(2, c[0] + a, c[1] + b, c[2]);
    return out;
  }

  bool contains(const Vec3& p, double tol = 1e-12) const;

  /// Element containing p (upper faces resolve into the last element) plus
  /// local coordinates in [0,1]^3.  Throws OutOfDomainError outside the box.
  std::pair<int, Vec3> locate(const Vec3& p) const;

  bool operator==(const BoxMesh& o) const {
    return origin_ == o.origin_ && extents_ == o.extents_ && div_ == o.div_;
  }

private:
  Vec3 origin_ = Vec3::Zero();
  Vec3 extents_ = Vec3::Ones();
  std::array<int, 3> div_{1, 1, 1};
  Vec3 h_ = Vec3::Ones();
  std::array<int, 3> np_{2, 2, 2};
  std::array<std::array<int, 3>, 3> edge_dims_{};
  std::array<int, 4> edge_offset_{};
};

using MeshPtr = std::shared_ptr<const BoxMesh>;

} // namespace mshom
