#include "mshom/media.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace mshom {

namespace {

void require_spd(const Mat3& m, const std::string& name) {
  if (!m.allFinite())
    throw ConfigError("medium." + name, "tensor has non-finite entries");
  if ((m - m.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + m.cwiseAbs().maxCoeff()))
    throw ConfigError("medium." + name, "tensor must be symmetric");
  Eigen::SelfAdjointEigenSolver<Mat3> es(m);
  if (es.eigenvalues().minCoeff() <= 0.0)
    throw ConfigError("medium." + name, "tensor must be positive definite");
}

bool is_diagonal(const Mat3& m) {
  const double scale = 1.0 + m.cwiseAbs().maxCoeff();
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j && std::abs(m(i, j)) > 1e-12 * scale) return false;
  return true;
}

} // namespace

void PeriodicMedium::validate() const {
  if (!(epsilon > 0.0 && epsilon < 1.0))
    throw ConfigError("medium.epsilon", "epsilon must lie in (0,1)");
  const double inv = 1.0 / epsilon;
  if (std::abs(inv - std::lround(inv)) > 1e-9)
    throw ConfigError("medium.epsilon",
                      "1/epsilon must be an integer so the domain is a union of whole cells");
  if (!(inclusion.side > 0.0 && inclusion.side < 1.0))
    throw ConfigError("medium.inclusion.side", "side must lie in (0,1)");
  if (inclusion.kind == Inclusion::Kind::Cube) {
    for (int a = 0; a < 3; ++a) {
      const double lo = inclusion.center[a] - 0.5 * inclusion.side;
      const double hi = inclusion.center[a] + 0.5 * inclusion.side;
      if (!(lo > 0.0 && hi < 1.0))
        throw ConfigError("medium.inclusion.center",
                          "inclusion cube must lie strictly inside the unit cell");
    }
  } else {
    if (inclusion.axis < 0 || inclusion.axis > 2)
      throw ConfigError("medium.inclusion.axis", "slab axis must be 0, 1, or 2");
    const int a = inclusion.axis;
    const double lo = inclusion.center[a] - 0.5 * inclusion.side;
    const double hi = inclusion.center[a] + 0.5 * inclusion.side;
    if (!(lo > 0.0 && hi < 1.0))
      throw ConfigError("medium.inclusion.center",
                        "slab must lie strictly inside the unit cell along its axis");
  }
  require_spd(a_in, "a_in");
  require_spd(a_out, "a_out");
  require_spd(eta_in, "eta_in");
  require_spd(eta_out, "eta_out");
  require_spd(mu_in, "mu_in");
  require_spd(mu_out, "mu_out");
  if (!std::isfinite(vc_in))
    throw ConfigError("medium.vc_in", "confinement potential must be finite");
  if (!std::isfinite(vc_out))
    throw ConfigError("medium.vc_out", "confinement potential must be finite");
  if (!(N >= 0.0) || !std::isfinite(N))
    throw ConfigError("medium.N", "electron count must be non-negative");
}

SymmetryReport validate_symmetry(const PeriodicMedium& medium) {
  SymmetryReport report;
  const struct {
    const char* name;
    const Mat3& m;
  } tensors[] = {
      {"a_in", medium.a_in},     {"a_out", medium.a_out},
      {"eta_in", medium.eta_in}, {"eta_out", medium.eta_out},
      {"mu_in", medium.mu_in},   {"mu_out", medium.mu_out},
  };
  for (const auto& t : tensors)
    if (!is_diagonal(t.m))
      report.violations.push_back(std::string("H1: ") + t.name +
                                  " has off-diagonal entries");
  const Vec3 c = medium.inclusion.center;
  if (medium.inclusion.kind == Inclusion::Kind::Cube) {
    for (int a = 0; a < 3; ++a)
      if (std::abs(c[a] - 0.5) > 1e-12)
        report.violations.push_back(
            "H2: inclusion center component " + std::to_string(a) + " is " +
            std::to_string(c[a]) + ", cell not mirror-symmetric");
  } else {
    const int a = medium.inclusion.axis;
    if (std::abs(c[a] - 0.5) > 1e-12)
      report.violations.push_back("H2: slab not centered along its axis");
  }
  report.certified = report.violations.empty();
  return report;
}

} // namespace mshom
