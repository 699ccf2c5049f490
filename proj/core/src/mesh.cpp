#include "mshom/mesh.hpp"

#include <cmath>

namespace mshom {

BoxMesh BoxMesh::create(const Vec3& origin, const Vec3& extents,
                        const std::array<int, 3>& divisions) {
  for (int a = 0; a < 3; ++a) {
    if (divisions[a] < 1)
      throw ConfigError("mesh.divisions",
                        "divisions must be >= 1 along every axis, got " +
                            std::to_string(divisions[a]));
    if (!(extents[a] > 0.0) || !std::isfinite(extents[a]))
      throw ConfigError("mesh.extents", "extents must be positive and finite");
    if (!std::isfinite(origin[a]))
      throw ConfigError("mesh.origin", "origin must be finite");
  }
  BoxMesh m;
  m.origin_ = origin;
  m.extents_ = extents;
  m.div_ = divisions;
  for (int a = 0; a < 3; ++a) {
    m.h_[a] = extents[a] / divisions[a];
    m.np_[a] = divisions[a] + 1;
  }
  // Edge family a runs div_[a] intervals along axis a and node planes across.
  m.edge_dims_[0] = {m.div_[0], m.np_[1], m.np_[2]};
  m.edge_dims_[1] = {m.np_[0], m.div_[1], m.np_[2]};
  m.edge_dims_[2] = {m.np_[0], m.np_[1], m.div_[2]};
  m.edge_offset_[0] = 0;
  for (int a = 0; a < 3; ++a)
    m.edge_offset_[a + 1] =
        m.edge_offset_[a] +
        m.edge_dims_[a][0] * m.edge_dims_[a][1] * m.edge_dims_[a][2];
  return m;
}

bool BoxMesh::contains(const Vec3& p, double tol) const {
  for (int a = 0; a < 3; ++a) {
    const double slack = tol * extents_[a];
    if (p[a] < origin_[a] - slack || p[a] > origin_[a] + extents_[a] + slack)
      return false;
  }
  return true;
}

std::pair<int, Vec3> BoxMesh::locate(const Vec3& p) const {
  if (!contains(p))
    throw OutOfDomainError("point (" + std::to_string(p[0]) + ", " +
                           std::to_string(p[1]) + ", " + std::to_string(p[2]) +
                           ") lies outside the mesh box");
  std::array<int, 3> c{};
  Vec3 local;
  for (int a = 0; a < 3; ++a) {
    const double s = (p[a] - origin_[a]) / h_[a];
    int i = static_cast<int>(std::floor(s));
    if (i < 0) i = 0;
    if (i > div_[a] - 1) i = div_[a] - 1;
    c[a] = i;
    double u = s - i;
    if (u < 0.0) u = 0.0;
    if (u > 1.0) u = 1.0;
    local[a] = u;
  }
  return {element_index(c[0], c[1], c[2]), local};
}

} // namespace mshom
