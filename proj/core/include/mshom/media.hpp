#pragma once

#include <atomic>
#include <string>
#include <vector>

#include "mshom/errors.hpp"
#include "mshom/types.hpp"

namespace mshom {

/// Periodic two-phase inclusion geometry on the unit cell Q = (0,1)^3.
/// `Cube` is an axis-aligned cube strictly inside Q; `Slab` is a layer
/// lo < xi_axis < hi spanning the two remaining axes (a laminate).
struct Inclusion {
  enum class Kind { Cube, Slab };
  Kind kind = Kind::Cube;
  Vec3 center = Vec3(0.5, 0.5, 0.5);
  double side = 0.5;
  int axis = 0; // slab only

  /// Strict interior test; points on faces count as outside (measure zero).
  bool contains(const Vec3& xi) const {
    if (kind == Kind::Cube) {
      for (int a = 0; a < 3; ++a)
        if (!(xi[a] > center[a] - 0.5 * side && xi[a] < center[a] + 0.5 * side))
          return false;
      return true;
    }
    return xi[axis] > center[axis] - 0.5 * side && xi[axis] < center[axis] + 0.5 * side;
  }

  double volume_fraction() const {
    return kind == Kind::Cube ? side * side * side : side;
  }
};

/// Rapidly oscillating periodic coefficients: each tensor takes one constant
/// value inside the inclusion and another outside, replicated with period
/// `epsilon` (the cell-size ratio; 1/epsilon must be an integer so the domain
/// is a union of whole cells).
struct PeriodicMedium {
  double epsilon = 0.125;
  Inclusion inclusion;
  Mat3 a_in = Mat3::Identity(), a_out = Mat3::Identity();
  Mat3 eta_in = Mat3::Identity(), eta_out = Mat3::Identity();
  Mat3 mu_in = Mat3::Identity(), mu_out = Mat3::Identity();
  double vc_in = 0.0, vc_out = 1.0;
  double N = 10.0; // electron count scaling the density rho = N |psi|^2

  enum class Coefficient { A, Eta, Mu };

  /// Throws ConfigError on invalid epsilon, non-SPD phases, or an inclusion
  /// that is not strictly inside the cell.
  void validate() const;

  /// Wraps a cell coordinate into [0,1).
  static Vec3 wrap(const Vec3& xi) {
    Vec3 w;
    for (int a = 0; a < 3; ++a) w[a] = xi[a] - std::floor(xi[a]);
    return w;
  }

  /// Tensor value at cell coordinate xi (wrapped modulo 1).
  Mat3 sample(Coefficient which, const Vec3& xi) const {
    const bool in = inclusion.contains(wrap(xi));
    switch (which) {
      case Coefficient::A: return in ? a_in : a_out;
      case Coefficient::Eta: return in ? eta_in : eta_out;
      default: return in ? mu_in : mu_out;
    }
  }

  double sample_vc(const Vec3& xi) const {
    return inclusion.contains(wrap(xi)) ? vc_in : vc_out;
  }

  /// Sampler of the oscillatory coefficient x -> C(x/epsilon).
  TensorSampler oscillatory(Coefficient which) const {
    return [this, which](const Vec3& x) { return sample(which, x / epsilon); };
  }
  ScalarSampler oscillatory_vc() const {
    return [this](const Vec3& x) { return sample_vc(x / epsilon); };
  }

  /// Exact volume-fraction average of the confinement potential over Q.
  double mean_vc() const {
    const double f = inclusion.volume_fraction();
    return f * vc_in + (1.0 - f) * vc_out;
  }

  int cells_per_axis() const { return static_cast<int>(std::lround(1.0 / epsilon)); }
};

/// Structural hypotheses the asymptotic expansion relies on: H1 = all six
/// phase tensors diagonal; H2 = inclusion centered so the cell is symmetric
/// about each middle plane.
struct SymmetryReport {
  bool certified = false;
  std::vector<std::string> violations;
};
SymmetryReport validate_symmetry(const PeriodicMedium& medium);

/// Time-dependent driving current with the polynomial-in-space,
/// raised-cosine-in-time profile
///   f(x, t) = amplitude * (1 - cos(pi t)) * (y^2+1, z^2+1, x^2+1),
/// and its time derivative F = df/dt, the load of the second-order field
/// equation.  Both vanish at t = 0, and div f = 0 for all t.
struct SourceSpec {
  double amplitude = 1000.0;

  Vec3 spatial(const Vec3& x) const {
    return Vec3(x[1] * x[1] + 1.0, x[2] * x[2] + 1.0, x[0] * x[0] + 1.0);
  }
  Vec3 eval_f(const Vec3& x, double t) const {
    return amplitude * (1.0 - std::cos(M_PI * t)) * spatial(x);
  }
  Vec3 eval_F(const Vec3& x, double t) const {
    return amplitude * M_PI * std::sin(M_PI * t) * spatial(x);
  }
};

/// Exchange-correlation potential: none, or the cube-root local model
/// V_xc(rho) = -(3 rho)^(1/3).  Negative densities (mixing undershoot) are
/// clamped to zero; the clamp count is kept as a diagnostic.
struct XcSpec {
  enum class Kind { None, CubeRoot };
  Kind kind = Kind::None;

  double eval(double rho) const {
    if (kind == Kind::None) return 0.0;
    if (rho < 0.0) {
      clamp_count.fetch_add(1, std::memory_order_relaxed);
      rho = 0.0;
    }
    return -std::cbrt(3.0 * rho);
  }
  long clamps() const { return clamp_count.load(std::memory_order_relaxed); }

  mutable std::atomic<long> clamp_count{0};

  XcSpec() = default;
  explicit XcSpec(Kind k) : kind(k) {}
  XcSpec(const XcSpec& o) : kind(o.kind), clamp_count(o.clamps()) {}
  XcSpec& operator=(const XcSpec& o) {
    kind = o.kind;
    clamp_count.store(o.clamps());
    return *this;
  }
};

} // namespace mshom
