#pragma once

#include <memory>
#include <optional>
#include <tuple>
#include <utility>
#include <vector>

#include "mshom/effective.hpp"
#include "mshom/media.hpp"

namespace mshom {

/// Time-stepping controls shared by the coarse (effective-coefficient) run and
/// the fine-mesh reference run.
struct SolverParams {
  int divisions = 8;        ///< mesh divisions per axis for the coarse run
  double dt = 0.0025;       ///< time step
  double T = 0.5;           ///< final time (rounded to a whole number of steps)
  double outer_tol = 1e-8;  ///< field-coupling loop: relative L2 change of the E iterate
  int outer_max = 25;       ///< field-coupling iteration cap per step
  double inner_tol = 1e-8;  ///< density loop: relative L2 change of the mixed density
  int inner_max = 50;       ///< density iteration cap per linear solve sweep
  double mixing_alpha = 0.3;///< linear density mixing weight, in (0, 1]

  /// Throws ConfigError naming the offending field.
  void validate() const;
  /// Number of time steps: T/dt rounded to the nearest integer, at least 1.
  int step_count() const;
};

/// One snapshot of the coupled fields at a time level.
struct HomogenizedState {
  ComplexField psi;     ///< wavefunction, zero boundary trace
  ScalarField rho;      ///< particle density N |psi|^2 at nodes
  EdgeField E;          ///< electric field, tangential-zero boundary
  EdgeField E_dot;      ///< time derivative of E
  NodalVectorField H;   ///< magnetic field, trapezoidal integral of H_dot from H(0)=0
  NodalVectorField H_dot; ///< -mu_inv * (nodal curl recovery of E)
  NodalVectorField Jq;  ///< quantum current density at nodes
  double t = 0.0;
};

/// Per-step iteration and conservation record.
struct StepDiagnostics {
  double t = 0.0;              ///< time level reached by this step
  int outer_iterations = 0;    ///< field-coupling sweeps used
  int inner_iterations = 0;    ///< density sweeps summed over the outer sweeps
  double outer_residual = 0.0; ///< final relative E change
  double inner_residual = 0.0; ///< final relative density change
  double psi_norm = 0.0;       ///< L2 norm of psi after the step
  double gauss_residual = 0.0; ///< weak charge-balance defect (logged, not enforced)
};

/// Uniform-step evolution of the coupled system.
struct HomogenizedTrajectory {
  MeshPtr mesh;
  double dt = 0.0;
  std::vector<HomogenizedState> states;     ///< step_count()+1 entries, t_n = n dt
  std::vector<StepDiagnostics> diagnostics; ///< one entry per step
};

/// Everything material-dependent in one bundle: the evolution code is written
/// once against samplers, so constant effective coefficients and rapidly
/// oscillating fine-scale coefficients run through identical arithmetic.
struct MaterialModel {
  MeshPtr mesh;
  TensorSampler A;      ///< kinetic coefficient (Schrodinger stiffness, current weight)
  ScalarSampler Vc;     ///< static confining potential
  TensorSampler eta;    ///< Maxwell mass weight
  TensorSampler mu_inv; ///< Maxwell curl-curl weight, also used for H recovery
  double N = 0.0;       ///< particle count scaling the density and current

  /// Constant-coefficient model from certified effective tensors.
  static MaterialModel homogenized(MeshPtr mesh, const PeriodicMedium& medium,
                                   const EffectiveTensors& tensors);
  /// Oscillatory model sampling the medium at x/epsilon.
  static MaterialModel oscillatory(MeshPtr mesh, const PeriodicMedium& medium);
};

/// Result of the ground-state eigensolve.
struct GroundState {
  double energy = 0.0;
  ComplexField psi;   ///< unit L2 norm; largest-magnitude dof real positive
  int iterations = 0;
};

/// Smallest eigenpair of (stiffness(kinetic) + mass(potential)) u = lambda mass u
/// on zero-trace nodal elements, by shifted inverse power iteration with shift
/// min(potential) - 1.  Deterministic start vector and phase fixing.
/// Throws IterationError if the relative eigenvalue change stays above `tol`
/// for `max_iterations` sweeps.
GroundState ground_state(const MeshPtr& mesh, const TensorSampler& kinetic,
                         const ScalarSampler& potential, double tol = 1e-10,
                         int max_iterations = 500);

/// Nodal projection of the current density -2 N Im(conj(psi) A grad(psi)):
/// evaluated at quadrature points from the elementwise gradient, then
/// lumped-mass averaged back to nodes.  The bilinear form is real by
/// construction; any imaginary residue above 1e-12 aborts.
NodalVectorField quantum_current(const ComplexField& psi, const TensorSampler& A,
                                 double N);

/// Density-loop outcome for one Schrodinger step.
struct InnerDiagnostics {
  int iterations = 0;
  double residual = 0.0;
};

/// Optional initial data overrides for run_coupled (fields must live on the
/// run mesh).  Anything left empty uses the defaults: psi from ground_state,
/// E and E_dot zero.
struct InitialConditions {
  std::optional<ComplexField> psi;
  std::optional<EdgeField> E;
  std::optional<EdgeField> E_dot;
};

/// Assembles the time-independent operators of one material model once and
/// exposes the two Crank-Nicolson half-solvers plus the conserved-quantity
/// probes built from the same matrices.
class CoupledStepper {
public:
  CoupledStepper(MaterialModel model, double dt);
  ~CoupledStepper();
  CoupledStepper(CoupledStepper&&) noexcept;
  CoupledStepper& operator=(CoupledStepper&&) noexcept;

  const MaterialModel& model() const;
  double dt() const;

  /// One Crank-Nicolson step of the Schrodinger field under the midpoint
  /// electric field: i M (psi' - psi)/dt = K(rho) (psi' + psi)/2 with
  /// K(rho) = stiffness(A) + mass(Vc + E_half(x).x + Vxc[rho]).  The density
  /// entering Vxc is iterated with linear mixing until its relative L2 change
  /// drops below inner_tol (a single pass when xc is none); the returned
  /// density is N|psi'|^2 of the accepted wavefunction, not the mixed iterate.
  /// Throws IterationError with the residual history if inner_max is exceeded.
  std::tuple<ComplexField, ScalarField, InnerDiagnostics>
  schrodinger_cn_step(const ComplexField& psi_n, const EdgeField& E_half,
                      const ScalarField& rho_guess, const XcSpec& xc,
                      double inner_tol, int inner_max, double mixing_alpha) const;

  /// One Crank-Nicolson step of the electric field in first-order form
  /// (E, V = dE/dt):
  ///   M_eta (V' - V) = dt [ -K_curl (E' + E)/2 + (R' + R)/2 ],
  ///   E' = E + dt (V' + V)/2,
  /// where R(t) = load(F(t)) - M (Jq_next - Jq_n)/dt with unit-weight pairing
  /// of the current derivative.  Reduced to a single symmetric
  /// positive-definite solve for E' (relative residual 1e-9).
  std::pair<EdgeField, EdgeField>
  maxwell_cn_step(const EdgeField& E_n, const EdgeField& E_dot_n,
                  const NodalVectorField& Jq_n, const NodalVectorField& Jq_next,
                  const SourceSpec& source, double t_n) const;

  /// L2 norm of a zero-trace nodal field (mass-matrix inner product).
  double psi_norm(const ComplexField& psi) const;
  /// Discrete field energy (V' M_eta V + E' K_curl E)/2 of the decoupled system.
  double maxwell_energy(const EdgeField& E, const EdgeField& E_dot) const;
  /// Relative weak defect of charge balance div(eta E) = rho over interior
  /// nodes; a diagnostic only, the curl-curl step does not enforce it.
  double gauss_residual(const EdgeField& E, const ScalarField& rho) const;
  /// -mu_inv(x) times the nodal curl recovery of E, the time derivative of H.
  NodalVectorField h_dot(const EdgeField& E) const;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Evolves one material model from t=0 to t=T: per step, a linear predictor
/// for E, then alternating Schrodinger and Maxwell half-solves until the new
/// electric field settles (relative L2 change <= outer_tol), then H by
/// trapezoidal integration of h_dot.  Deterministic: identical inputs give a
/// bit-identical trajectory.  Throws IterationError if a step exceeds
/// outer_max sweeps.
HomogenizedTrajectory run_coupled(const MaterialModel& model,
                                  const SolverParams& params,
                                  const XcSpec& xc = {},
                                  const SourceSpec& source = {},
                                  const InitialConditions& init = {});

/// Coarse-mesh run with constant effective coefficients on the unit cube with
/// params.divisions elements per axis.  Initial data: ground state of the
/// effective Hamiltonian, zero E and E_dot (unless overridden).
HomogenizedTrajectory run(const PeriodicMedium& medium,
                          const EffectiveTensors& tensors,
                          const SolverParams& params, const XcSpec& xc = {},
                          const SourceSpec& source = {},
                          const InitialConditions& init = {});

} // namespace mshom
