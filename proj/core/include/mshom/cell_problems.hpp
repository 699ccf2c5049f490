#pragma once

#include <array>
#include <string>

#include "mshom/assembly.hpp"
#include "mshom/media.hpp"
#include "mshom/solve.hpp"

namespace mshom {

/// Boundary treatment of the scalar corrector family on the unit cell:
/// periodic with zero mean, or zero Dirichlet trace.
enum class ThetaVariant { Periodic, Dirichlet };

const char* to_string(ThetaVariant v);

/// Verifies that every inclusion face coordinate lands on a grid plane of the
/// cell mesh, so each element sees exactly one phase and the quadrature never
/// straddles a discontinuity.  Throws MisalignmentError otherwise.
void require_aligned(const PeriodicMedium& medium, int divisions);

struct CellSolveOptions {
  int divisions = 16;
  double scalar_tol = 1e-10;   // CG tolerance for nodal solves
  double saddle_tol = 1e-9;    // MINRES tolerance for curl saddle systems
  /// Corrector family that feeds the effective entries used by the
  /// second-order scalar problems (and recorded as tensor provenance).
  ThetaVariant tensor_family = ThetaVariant::Periodic;
  /// Worker threads for the independent cell problems; 0 reads MSHOM_THREADS
  /// from the environment and falls back to the hardware count.
  int threads = 0;
};

struct CellDiagnostics {
  double max_abs_periodic_mean = 0.0;   // worst |mean| over the periodic family
  double max_divergence_rel = 0.0;      // worst |(Theta, grad q)| / (|Theta| |grad q|)
  double interior_family_gap_rel = 0.0; // dirichlet vs periodic theta on [1/4,3/4]^3
  long total_iterations = 0;
  bool used_direct_fallback = false;
};

/// Every corrector field on the unit cell.  Scalar first-order correctors are
/// kept in both boundary variants; second-order scalar and all curl correctors
/// carry zero boundary trace.  Indexing: coefficient c in {A, Eta, Mu} (curl
/// families only Eta, Mu), then direction k (or pair k,l) in 0..2.
struct CellFunctionSet {
  MeshPtr mesh;
  ThetaVariant tensor_family = ThetaVariant::Periodic;

  std::array<std::array<ScalarField, 3>, 3> theta1_periodic;
  std::array<std::array<ScalarField, 3>, 3> theta1_dirichlet;
  std::array<std::array<std::array<ScalarField, 3>, 3>, 3> theta2;

  std::array<std::array<EdgeField, 3>, 2> Theta1; // [0] = Eta, [1] = Mu
  std::array<std::array<EdgeField, 3>, 2> Theta2;
  std::array<std::array<ScalarField, 3>, 2> zeta2;

  CellDiagnostics diagnostics;

  const std::array<ScalarField, 3>& theta1(PeriodicMedium::Coefficient c,
                                           ThetaVariant v) const {
    const auto& fam = v == ThetaVariant::Periodic ? theta1_periodic : theta1_dirichlet;
    return fam[static_cast<int>(c)];
  }
  /// Index of a curl-family coefficient (Eta -> 0, Mu -> 1); A is invalid.
  static int curl_slot(PeriodicMedium::Coefficient c);
};

/// First-order scalar corrector: (c grad theta_k, grad v) = -(c e_k, grad v)
/// over the chosen test space; periodic solutions are shifted to zero mean.
ScalarField solve_scalar_first(const PeriodicMedium& medium,
                               PeriodicMedium::Coefficient which, int k,
                               ThetaVariant variant, int divisions,
                               double tol = 1e-10, SolveStats* stats = nullptr);

/// Second-order scalar corrector theta_{kl} (zero Dirichlet trace):
///   (c grad theta_kl, grad v)
///     = -(theta_l c e_k, grad v) + (c_{kj} d_j theta_l + c_{kl} - eff_kl, v).
ScalarField solve_scalar_second(const PeriodicMedium& medium,
                                PeriodicMedium::Coefficient which, int k, int l,
                                const ScalarField& theta_l, double eff_kl,
                                double tol = 1e-10, SolveStats* stats = nullptr);

/// First-order curl corrector: find tangential-zero Theta and a zero-trace
/// nodal multiplier with
///   (c^{-1} curl Theta, curl v) + (v, grad q) = -(c^{-1} e_p, curl v),
///   (Theta, grad w) = 0,
/// solved as one symmetric indefinite saddle system.
EdgeField solve_curl_first(const PeriodicMedium& medium,
                           PeriodicMedium::Coefficient which, int p,
                           int divisions, double tol = 1e-9,
                           SolveStats* stats = nullptr);

/// Auxiliary potential (zero Dirichlet trace): (grad zeta, grad w) = -(G, grad w)
/// with G = -c^{-1} curl Theta1 - c^{-1} e_p + inv_effective e_p.
ScalarField solve_zeta(const PeriodicMedium& medium,
                       PeriodicMedium::Coefficient which, int p,
                       const EdgeField& Theta1, const Mat3& inv_effective,
                       double tol = 1e-10, SolveStats* stats = nullptr);

/// Second-order curl corrector; same saddle structure as solve_curl_first with
/// load v -> -(c^{-1} Theta1, curl v) + (G + grad zeta2, v).
EdgeField solve_curl_second(const PeriodicMedium& medium,
                            PeriodicMedium::Coefficient which, int p,
                            const EdgeField& Theta1, const ScalarField& zeta2,
                            const Mat3& inv_effective, double tol = 1e-9,
                            SolveStats* stats = nullptr);

/// Solves every cell problem (both scalar variants, second order, curl
/// families, auxiliary potentials), verifies the structural invariants, and
/// returns the immutable set.  Independent problems run concurrently.
CellFunctionSet solve_all(const PeriodicMedium& medium,
                          const CellSolveOptions& options = {});

} // namespace mshom
