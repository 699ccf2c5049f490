#pragma once

#include <array>

#include "mshom/types.hpp"

namespace mshom {

/// Trilinear (Q1) nodal basis on the reference element [0,1]^3.
/// Local node order l = lx + 2*ly + 4*lz matches BoxMesh::element_nodes.
struct Q1Basis {
  static std::array<double, 8> values(const Vec3& u) {
    const double px[2] = {1.0 - u[0], u[0]};
    const double py[2] = {1.0 - u[1], u[1]};
    const double pz[2] = {1.0 - u[2], u[2]};
    std::array<double, 8> N{};
    for (int l = 0; l < 8; ++l)
      N[l] = px[l & 1] * py[(l >> 1) & 1] * pz[(l >> 2) & 1];
    return N;
  }

  /// Physical gradients on an element with spacing h.
  static std::array<Vec3, 8> gradients(const Vec3& u, const Vec3& h) {
    const double p[3][2] = {{1.0 - u[0], u[0]}, {1.0 - u[1], u[1]}, {1.0 - u[2], u[2]}};
    const double d[2] = {-1.0, 1.0};
    std::array<Vec3, 8> g{};
    for (int l = 0; l < 8; ++l) {
      const int lx = l & 1, ly = (l >> 1) & 1, lz = (l >> 2) & 1;
      g[l][0] = d[lx] * p[1][ly] * p[2][lz] / h[0];
      g[l][1] = p[0][lx] * d[ly] * p[2][lz] / h[1];
      g[l][2] = p[0][lx] * p[1][ly] * d[lz] / h[2];
    }
    return g;
  }
};

/// Lowest-order edge (Nedelec) basis on a hexahedron with spacing h.
/// Local edge order matches BoxMesh::element_edges; the degree of freedom of
/// an edge is the line integral of the field along it (circulation), so each
/// basis function carries a 1/h factor along its own direction.
struct EdgeBasis {
  static std::array<Vec3, 12> values(const Vec3& u, const Vec3& h) {
    const double p[3][2] = {{1.0 - u[0], u[0]}, {1.0 - u[1], u[1]}, {1.0 - u[2], u[2]}};
    std::array<Vec3, 12> W{};
    int m = 0;
    // x-edges at (y-offset a, z-offset b)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        W[m++] = Vec3(p[1][a] * p[2][b] / h[0], 0.0, 0.0);
    // y-edges at (x-offset b, z-offset a), matching element_edges nesting
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        W[m++] = Vec3(0.0, p[0][b] * p[2][a] / h[1], 0.0);
    // z-edges at (x-offset a, y-offset b)
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        W[m++] = Vec3(0.0, 0.0, p[0][a] * p[1][b] / h[2]);
    return W;
  }

  static std::array<Vec3, 12> curls(const Vec3& u, const Vec3& h) {
    const double p[3][2] = {{1.0 - u[0], u[0]}, {1.0 - u[1], u[1]}, {1.0 - u[2], u[2]}};
    const double d[2] = {-1.0, 1.0};
    std::array<Vec3, 12> C{};
    int m = 0;
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        C[m++] = Vec3(0.0, p[1][a] * d[b] / (h[0] * h[2]), -d[a] * p[2][b] / (h[0] * h[1]));
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        C[m++] = Vec3(-p[0][b] * d[a] / (h[1] * h[2]), 0.0, d[b] * p[2][a] / (h[1] * h[0]));
    for (int b = 0; b < 2; ++b)
      for (int a = 0; a < 2; ++a)
        C[m++] = Vec3(p[0][a] * d[b] / (h[2] * h[1]), -d[a] * p[1][b] / (h[2] * h[0]), 0.0);
    return C;
  }
};

/// Tensor-product two-point Gauss rule on [0,1]^3: exact through cubic
/// polynomials per axis, which integrates every product of the bases above
/// exactly on elements with constant coefficients.
struct GaussQ2 {
  static constexpr int count = 8;
  static const std::array<Vec3, 8>& points() {
    static const std::array<Vec3, 8> pts = [] {
      const double a = 0.5 - 0.5 / std::sqrt(3.0);
      const double b = 0.5 + 0.5 / std::sqrt(3.0);
      const double q[2] = {a, b};
      std::array<Vec3, 8> out{};
      for (int l = 0; l < 8; ++l)
        out[l] = Vec3(q[l & 1], q[(l >> 1) & 1], q[(l >> 2) & 1]);
      return out;
    }();
    return pts;
  }
  /// Weight per point in local coordinates (multiply by element volume).
  static constexpr double weight = 1.0 / 8.0;
};

} // namespace mshom
