#pragma once

#include <array>
#include <vector>

#include "mshom/reconstruction.hpp"
#include "mshom/reference.hpp"

namespace mshom {

/// Space-time norms over uniformly sampled trajectories: the spatial part is a
/// finite-element norm on the sample's own mesh, the time part a trapezoidal
/// quadrature of its square.  Scalar series take L2 or H1, edge series take
/// L2vec (componentwise L2) or Hcurl.
enum class SpaceTimeNorm { L2, H1, L2vec, Hcurl };

const char* to_string(SpaceTimeNorm n);

/// Identity-weighted spatial norm forms of one mesh, assembled on first use
/// and reused across a whole series.  Not thread-safe (lazily caches).
class SpatialNorms {
public:
  explicit SpatialNorms(MeshPtr mesh);

  const MeshPtr& mesh() const { return mesh_; }

  /// Nodal L2 or full H1 norm; throws Error for edge-only norms or a field
  /// living on a different mesh.
  double norm(const ScalarField& f, SpaceTimeNorm which) const;
  /// Edge L2vec or full H(curl) norm; throws Error for nodal-only norms.
  double norm(const EdgeField& f, SpaceTimeNorm which) const;
  /// Componentwise nodal L2 norm of a 3-vector field.
  double norm(const NodalVectorField& f) const;

private:
  const SpMat& mass_nodal() const;
  const SpMat& stiffness() const;
  const SpMat& mass_edge() const;
  const SpMat& curl_curl() const;

  MeshPtr mesh_;
  mutable SpMat M_, K_, Me_, Kc_;
  mutable bool have_M_ = false, have_K_ = false, have_Me_ = false, have_Kc_ = false;
};

/// Trapezoidal combination sqrt( sum_i w_i dt s_i^2 ) of per-step spatial
/// norms s_i at uniform spacing dt, with end weights 1/2.  A single sample
/// spans zero time and yields 0; an empty series or dt <= 0 throws Error.
double spacetime_combine(const std::vector<double>& spatial_norms, double dt);

double spacetime_norm(const std::vector<ScalarField>& series, SpaceTimeNorm which,
                      double dt);
double spacetime_norm(const std::vector<EdgeField>& series, SpaceTimeNorm which,
                      double dt);
/// Componentwise-L2 space-time norm of a nodal vector series.
double spacetime_norm(const std::vector<NodalVectorField>& series, double dt);

/// Relative space-time errors of the multiscale approximations against the
/// fine-mesh reference, per expansion order 0..2.  Density columns compare
/// N |psi|^2; the (L2)^3 electric-field column compares nodal vector samples
/// (the reference field passes through its nodal curl-free recovery), the
/// H(curl) column compares edge circulations (the reconstruction passes
/// through its edge interpolant).  Every entry is error / reference-norm.
struct ErrorTable {
  std::array<double, 3> rho_L2{};   ///< density, L2(0,T; L2)
  std::array<double, 3> rho_H1{};   ///< density, L2(0,T; H1)
  std::array<double, 3> E_L2{};     ///< electric field, L2(0,T; (L2)^3)
  std::array<double, 3> E_Hcurl{};  ///< electric field, L2(0,T; H(curl))

  double ref_rho_L2 = 0.0;   ///< reference-norm denominators, for reporting
  double ref_rho_H1 = 0.0;
  double ref_E_L2 = 0.0;
  double ref_E_Hcurl = 0.0;
};

/// Builds the table from reconstructions sampled on the reference mesh at
/// every `stride`-th reference state (stride must divide the step count).
/// reconstructions[k] is the order-k series, aligned with those samples.
/// Throws Error on mesh or length mismatches and when a reference norm
/// vanishes (the relative error would be undefined).
ErrorTable error_table(const ReferenceTrajectory& reference,
                       const std::array<std::vector<MultiscaleField>, 3>& reconstructions,
                       int stride = 1);

} // namespace mshom
