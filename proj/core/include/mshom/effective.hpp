#pragma once

#include <map>
#include <string>
#include <vector>

#include "mshom/cell_problems.hpp"

namespace mshom {

/// Homogenized coefficient tensors of a periodic medium, together with the
/// inverse-form tensors computed from the curl corrector family and the mean
/// confining potential.  All tensors are symmetrized; the raw asymmetry of
/// each quadrature output is kept for the certificate.
struct EffectiveTensors {
  Mat3 A_hat = Mat3::Identity();
  Mat3 eta_hat = Mat3::Identity();
  Mat3 mu_hat = Mat3::Identity();
  Mat3 inv_eta_hat = Mat3::Identity();
  Mat3 inv_mu_hat = Mat3::Identity();
  double mean_Vc = 0.0;
  ThetaVariant provenance = ThetaVariant::Periodic;
  int cell_divisions = 0;
  std::map<std::string, double> asymmetry;
};

/// Entrywise quadrature of int_Q c (e_j + grad theta_j) . e_i, the effective
/// tensor of the divergence-structure cell family (raw, not symmetrized).
Mat3 scalar_tensor_quadrature(const TensorSampler& coeff,
                              const std::array<ScalarField, 3>& theta);

/// Entrywise quadrature of int_Q c^{-1} (e_p + curl Theta_p) . e_i, the
/// inverse-form effective tensor of the curl family (raw, not symmetrized).
Mat3 inverse_tensor_quadrature(const TensorSampler& coeff_inv,
                               const std::array<EdgeField, 3>& Theta1);

/// Symmetrized effective tensor of coefficient `which`, using the first-order
/// corrector family of the set's configured provenance.
Mat3 homogenize_scalar(const PeriodicMedium& medium,
                       PeriodicMedium::Coefficient which,
                       const CellFunctionSet& cells);

/// Symmetrized inverse-form tensor of coefficient `which` (Eta or Mu only).
Mat3 homogenize_inverse(const PeriodicMedium& medium,
                        PeriodicMedium::Coefficient which,
                        const CellFunctionSet& cells);

/// Exact volume-fraction average of the confining potential.
double mean_potential(const PeriodicMedium& medium);

/// All effective quantities of a solved cell set.
EffectiveTensors compute_effective(const PeriodicMedium& medium,
                                   const CellFunctionSet& cells);

/// One verified property of an EffectiveTensors instance.
struct CertificateCheck {
  std::string property;
  bool pass = false;
  double measured = 0.0; // measured magnitude (deviation, eigenvalue, ...)
  double bound = 0.0;    // the threshold it was compared against
  std::string detail;
};

/// Structural certificate: symmetry of every tensor, positive definiteness,
/// and per-axis arithmetic/harmonic-mean eigenvalue brackets are hard checks;
/// the mutual consistency of the direct and inverse-form tensors is recorded
/// as a non-fatal diagnostic.
struct Certificate {
  bool certified = false; // all hard checks passed
  std::vector<CertificateCheck> checks;
  std::vector<CertificateCheck> diagnostics;
};

Certificate certify(const EffectiveTensors& tensors, const PeriodicMedium& medium);

} // namespace mshom
