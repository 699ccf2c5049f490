#include "mshom/coupled.hpp"

#include <Eigen/SparseCholesky>

#include <algorithm>
#include <cmath>
#include <limits>

#include "mshom/assembly.hpp"
#include "mshom/solve.hpp"

namespace mshom {

namespace {

constexpr double kSchrodingerTol = 1e-13; // complex CN solve, relative residual
constexpr double kMaxwellTol = 1e-11;     // SPD edge solve, relative residual

Vec3 gauss_point(const BoxMesh& mesh, int el, const Vec3& u) {
  return mesh.element_origin(el) + u.cwiseProduct(mesh.spacing());
}

double weighted_norm(const SpMat& M, const VectorXd& v) {
  return std::sqrt(std::max(0.0, v.dot(M * v)));
}

} // namespace

// ---------------------------------------------------------------- parameters

void SolverParams::validate() const {
  if (divisions < 2)
    throw ConfigError("params.divisions", "needs at least 2 divisions per axis");
  if (!(dt > 0.0)) throw ConfigError("params.dt", "must be positive");
  if (!(T >= dt)) throw ConfigError("params.T", "must be at least one time step");
  if (!(outer_tol > 0.0)) throw ConfigError("params.outer_tol", "must be positive");
  if (!(inner_tol > 0.0)) throw ConfigError("params.inner_tol", "must be positive");
  if (outer_max < 1) throw ConfigError("params.outer_max", "must be at least 1");
  if (inner_max < 1) throw ConfigError("params.inner_max", "must be at least 1");
  if (!(mixing_alpha > 0.0 && mixing_alpha <= 1.0))
    throw ConfigError("params.mixing_alpha", "must lie in (0, 1]");
}

int SolverParams::step_count() const {
  return std::max(1, static_cast<int>(std::lround(T / dt)));
}

// ------------------------------------------------------------ material model

MaterialModel MaterialModel::homogenized(MeshPtr mesh, const PeriodicMedium& medium,
                                         const EffectiveTensors& tensors) {
  MaterialModel m;
  m.mesh = std::move(mesh);
  m.A = [T = tensors.A_hat](const Vec3&) { return T; };
  m.Vc = [v = tensors.mean_Vc](const Vec3&) { return v; };
  m.eta = [T = tensors.eta_hat](const Vec3&) { return T; };
  m.mu_inv = [T = Mat3(tensors.mu_hat.inverse())](const Vec3&) { return T; };
  m.N = medium.N;
  return m;
}

MaterialModel MaterialModel::oscillatory(MeshPtr mesh, const PeriodicMedium& medium) {
  MaterialModel m;
  m.mesh = std::move(mesh);
  m.A = medium.oscillatory(PeriodicMedium::Coefficient::A);
  m.Vc = medium.oscillatory_vc();
  m.eta = medium.oscillatory(PeriodicMedium::Coefficient::Eta);
  m.mu_inv = [mu = medium.oscillatory(PeriodicMedium::Coefficient::Mu)](const Vec3& x) {
    return Mat3(mu(x).inverse());
  };
  m.N = medium.N;
  return m;
}

// -------------------------------------------------------------- ground state

GroundState ground_state(const MeshPtr& mesh, const TensorSampler& kinetic,
                         const ScalarSampler& potential, double tol,
                         int max_iterations) {
  const DofMap nmap = nodal_dirichlet_zero(*mesh);
  if (nmap.n_free == 0) throw Error("ground state: mesh has no interior nodes");

  const SpMat H = reduce(
      assemble_stiffness_full(*mesh, kinetic, nullptr) +
          assemble_mass_nodal_full(*mesh, &potential),
      nmap);
  const SpMat M = reduce(assemble_mass_nodal_full(*mesh, nullptr), nmap);

  // Lower bound of the potential over nodes and element centers; the operator
  // shift min(V) - 1 keeps H - shift*M positive definite.
  double vmin = std::numeric_limits<double>::infinity();
  for (int n = 0; n < mesh->node_count(); ++n)
    vmin = std::min(vmin, potential(mesh->node_position(n)));
  for (int el = 0; el < mesh->element_count(); ++el)
    vmin = std::min(vmin, potential(mesh->element_center(el)));
  if (!std::isfinite(vmin)) throw Error("ground state: potential is unbounded below");
  const double shift = vmin - 1.0;

  Eigen::SimplicialLDLT<SpMat> ldlt;
  ldlt.compute(SpMat(H - shift * M));
  if (ldlt.info() != Eigen::Success)
    throw Error("ground state: factorization of the shifted operator failed");

  VectorXd v = VectorXd::Ones(nmap.n_free);
  v /= weighted_norm(M, v);
  double lambda = v.dot(H * v);
  std::vector<double> history{lambda};

  // The Rayleigh quotient settles quadratically but the vector only contracts
  // by the eigenvalue-gap ratio per sweep; keep sweeping until the vector
  // itself is stationary so returned modes behave as discrete eigenvectors to
  // near machine precision downstream.
  constexpr double vec_tol = 1e-12;
  int iterations = 0;
  bool converged = false;
  while (iterations < max_iterations) {
    ++iterations;
    VectorXd y = ldlt.solve(M * v);
    const double yn = weighted_norm(M, y);
    if (!(yn > 0.0) || !y.allFinite())
      throw Error("ground state: inverse iteration produced a degenerate vector");
    y /= yn;
    const double next = y.dot(H * y);
    const double change = std::abs(next - lambda) / std::max(std::abs(next), 1e-300);
    const double vec_change = weighted_norm(M, y - v);
    v = std::move(y);
    lambda = next;
    history.push_back(lambda);
    if (change <= tol && vec_change <= vec_tol) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw IterationError("ground state: eigenvalue iteration exceeded its cap",
                         std::move(history));

  VectorXd full = nmap.expand(v);
  int peak = 0;
  full.cwiseAbs().maxCoeff(&peak);
  if (full[peak] < 0.0) full = -full;

  GroundState out;
  out.energy = lambda;
  out.psi = ComplexField(mesh, full.cast<Complex>());
  out.iterations = iterations;
  return out;
}

// ----------------------------------------------------------- quantum current

NodalVectorField quantum_current(const ComplexField& psi, const TensorSampler& A,
                                 double N) {
  const BoxMesh& mesh = *psi.mesh;
  Eigen::Matrix<double, Eigen::Dynamic, 3> numer =
      Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(mesh.node_count(), 3);
  VectorXd lumped = VectorXd::Zero(mesh.node_count());

  const double wq = GaussQ2::weight * mesh.element_volume();
  const Vec3 h = mesh.spacing();
  for (int el = 0; el < mesh.element_count(); ++el) {
    const auto nodes = mesh.element_nodes(el);
    std::array<Complex, 8> loc{};
    for (int l = 0; l < 8; ++l) loc[l] = psi.values[nodes[l]];
    for (const Vec3& u : GaussQ2::points()) {
      const auto Nv = Q1Basis::values(u);
      const auto g = Q1Basis::gradients(u, h);
      Complex pq(0.0, 0.0);
      Eigen::Vector3cd grad = Eigen::Vector3cd::Zero();
      for (int l = 0; l < 8; ++l) {
        pq += Nv[l] * loc[l];
        grad += g[l] * loc[l];
      }
      const Mat3 Aq = A(gauss_point(mesh, el, u));
      const Vec3 fre = Aq * grad.real().eval();
      const Vec3 fim = Aq * grad.imag().eval();
      Vec3 cur = Vec3::Zero();
      for (int i = 0; i < 3; ++i) {
        // i [ conj(psi) (A grad psi) - psi conj(A grad psi) ]: real by
        // construction, the imaginary part of the product pair cancels exactly.
        const Complex flux(fre[i], fim[i]);
        const Complex bracket =
            Complex(0.0, 1.0) * (std::conj(pq) * flux - pq * std::conj(flux));
        if (std::abs(bracket.imag()) > 1e-12 * (1.0 + std::abs(bracket.real())))
          throw AssemblyError("quantum current: nonreal current bracket");
        cur[i] = N * bracket.real();
      }
      for (int l = 0; l < 8; ++l) {
        numer.row(nodes[l]) += wq * Nv[l] * cur.transpose();
        lumped[nodes[l]] += wq * Nv[l];
      }
    }
  }

  NodalVectorField out(psi.mesh);
  for (int n = 0; n < mesh.node_count(); ++n)
    out.values.row(n) = numer.row(n) / lumped[n];
  return out;
}

// -------------------------------------------------------------- step engine

struct CoupledStepper::Impl {
  MaterialModel model;
  double dt = 0.0;

  DofMap nmap;
  DofMap emap;
  SpMat M_full;      // unit nodal mass
  SpMat M;           // reduced unit nodal mass
  SpMatC Mc;         // complex copy of M
  SpMat K_fixed;     // reduced stiffness(A) + mass(Vc)
  SpMat Meta_full;   // eta-weighted edge mass
  SpMat Meta;        // reduced
  SpMat Medge_full;  // unit edge mass (current-derivative pairing)
  SpMat Kcurl;       // reduced curl-curl(mu_inv)
  SpMat S;           // Meta + (dt^2/4) Kcurl
  SpMat G;           // discrete gradient, edges x nodes
};

CoupledStepper::CoupledStepper(MaterialModel model, double dt)
    : impl_(std::make_unique<Impl>()) {
  if (!model.mesh) throw Error("coupled stepper: material model has no mesh");
  if (!(dt > 0.0)) throw ConfigError("params.dt", "must be positive");
  const BoxMesh& mesh = *model.mesh;
  Impl& s = *impl_;
  s.model = std::move(model);
  s.dt = dt;

  s.nmap = nodal_dirichlet_zero(mesh);
  s.emap = edge_tangential_zero(mesh);
  s.M_full = assemble_mass_nodal_full(mesh, nullptr);
  s.M = reduce(s.M_full, s.nmap);
  s.Mc = s.M.cast<Complex>();
  s.K_fixed = reduce(assemble_stiffness_full(mesh, s.model.A, &s.model.Vc), s.nmap);
  s.Meta_full = assemble_mass_edge_full(mesh, &s.model.eta);
  s.Meta = reduce(s.Meta_full, s.emap);
  s.Medge_full = assemble_mass_edge_full(mesh, nullptr);
  s.Kcurl = reduce(assemble_curl_curl_full(mesh, s.model.mu_inv), s.emap);
  s.S = s.Meta + (dt * dt / 4.0) * s.Kcurl;
  s.G = discrete_gradient(mesh);
}

CoupledStepper::~CoupledStepper() = default;
CoupledStepper::CoupledStepper(CoupledStepper&&) noexcept = default;
CoupledStepper& CoupledStepper::operator=(CoupledStepper&&) noexcept = default;

const MaterialModel& CoupledStepper::model() const { return impl_->model; }
double CoupledStepper::dt() const { return impl_->dt; }

std::tuple<ComplexField, ScalarField, InnerDiagnostics>
CoupledStepper::schrodinger_cn_step(const ComplexField& psi_n,
                                    const EdgeField& E_half,
                                    const ScalarField& rho_guess, const XcSpec& xc,
                                    double inner_tol, int inner_max,
                                    double mixing_alpha) const {
  const Impl& s = *impl_;
  const BoxMesh& mesh = *s.model.mesh;
  const Complex half_idt(0.0, s.dt / 2.0);
  const bool self_consistent = xc.kind != XcSpec::Kind::None;

  VectorXcd psi_free = s.nmap.restrict(psi_n.values);
  VectorXd rho_cur = rho_guess.values;

  ComplexField psi_out;
  ScalarField rho_out;
  InnerDiagnostics diag;
  std::vector<double> history;

  for (int pass = 1; pass <= inner_max; ++pass) {
    // Variable part of the potential: light coupling plus the density term.
    ScalarField rho_field(s.model.mesh, rho_cur);
    const ScalarSampler w = [&](const Vec3& x) {
      double v = E_half.evaluate(x).dot(x);
      if (self_consistent) v += xc.eval(rho_field.interpolate(x));
      return v;
    };
    const SpMat K = s.K_fixed + reduce(assemble_mass_nodal_full(mesh, &w), s.nmap);
    const SpMatC Kc = K.cast<Complex>();

    ComplexSparseSystem sys;
    sys.A = s.Mc + half_idt * Kc;
    sys.b = s.Mc * psi_free - half_idt * (Kc * psi_free);
    sys.map = s.nmap;
    const VectorXcd next = solve(sys, kSchrodingerTol, nullptr, &psi_free);

    VectorXcd full = s.nmap.expand(next);
    VectorXd rho_comp = s.model.N * full.cwiseAbs2().real();
    diag.iterations = pass;

    if (!self_consistent) {
      psi_out = ComplexField(s.model.mesh, std::move(full));
      rho_out = ScalarField(s.model.mesh, std::move(rho_comp));
      diag.residual = 0.0;
      return {std::move(psi_out), std::move(rho_out), diag};
    }

    const VectorXd mixed =
        (1.0 - mixing_alpha) * rho_cur + mixing_alpha * rho_comp;
    const VectorXd delta = mixed - rho_cur;
    const double rel = weighted_norm(s.M_full, delta) /
                       std::max(weighted_norm(s.M_full, mixed), 1e-300);
    history.push_back(rel);
    rho_cur = mixed;
    diag.residual = rel;

    if (rel <= inner_tol) {
      psi_out = ComplexField(s.model.mesh, std::move(full));
      rho_out = ScalarField(s.model.mesh, std::move(rho_comp));
      return {std::move(psi_out), std::move(rho_out), diag};
    }
  }
  throw IterationError("density self-consistency loop exceeded its iteration cap",
                       std::move(history));
}

std::pair<EdgeField, EdgeField>
CoupledStepper::maxwell_cn_step(const EdgeField& E_n, const EdgeField& E_dot_n,
                                const NodalVectorField& Jq_n,
                                const NodalVectorField& Jq_next,
                                const SourceSpec& source, double t_n) const {
  const Impl& s = *impl_;
  const BoxMesh& mesh = *s.model.mesh;
  const double dt = s.dt;

  const VectorXd E_free = s.emap.restrict(E_n.values);
  const VectorXd V_free = s.emap.restrict(E_dot_n.values);

  // Time-centered load: source forcing at both ends of the step, plus the
  // backward-difference current derivative paired with the unit edge mass.
  VectorXd load_full = VectorXd::Zero(mesh.edge_count());
  if (source.amplitude != 0.0) {
    const VectorSampler f0 = [&](const Vec3& x) { return source.eval_F(x, t_n); };
    const VectorSampler f1 = [&](const Vec3& x) { return source.eval_F(x, t_n + dt); };
    load_full = 0.5 * (assemble_edge_load_full(mesh, nullptr, &f0) +
                       assemble_edge_load_full(mesh, nullptr, &f1));
  }
  const VectorXd dJ =
      (interpolate_to_edges(Jq_next).values - interpolate_to_edges(Jq_n).values) / dt;
  const VectorXd R_free = s.emap.restrict(VectorXd(load_full - s.Medge_full * dJ));

  SparseSystem sys;
  sys.A = s.S;
  sys.b = s.Meta * E_free - (dt * dt / 4.0) * (s.Kcurl * E_free) +
          dt * (s.Meta * V_free) + (dt * dt / 2.0) * R_free;
  sys.map = s.emap;
  sys.kind = MatrixKind::SymmetricPositiveDefinite;
  const VectorXd E_next = solve(sys, kMaxwellTol);

  const VectorXd V_next = 2.0 / dt * (E_next - E_free) - V_free;
  return {EdgeField(s.model.mesh, s.emap.expand(E_next)),
          EdgeField(s.model.mesh, s.emap.expand(V_next))};
}

double CoupledStepper::psi_norm(const ComplexField& psi) const {
  const Impl& s = *impl_;
  const Complex q = psi.values.adjoint() * (s.M_full * psi.values);
  return std::sqrt(std::max(0.0, q.real()));
}

double CoupledStepper::maxwell_energy(const EdgeField& E,
                                      const EdgeField& E_dot) const {
  const Impl& s = *impl_;
  const VectorXd e = s.emap.restrict(E.values);
  const VectorXd v = s.emap.restrict(E_dot.values);
  return 0.5 * (v.dot(s.Meta * v) + e.dot(s.Kcurl * e));
}

double CoupledStepper::gauss_residual(const EdgeField& E,
                                      const ScalarField& rho) const {
  const Impl& s = *impl_;
  const VectorXd flux = s.nmap.restrict(VectorXd(s.G.transpose() * (s.Meta_full * E.values)));
  const VectorXd charge = s.nmap.restrict(VectorXd(s.M_full * rho.values));
  const double den = flux.norm() + charge.norm();
  const double r = (flux + charge).norm();
  return den > 0.0 ? r / den : r;
}

NodalVectorField CoupledStepper::h_dot(const EdgeField& E) const {
  const Impl& s = *impl_;
  NodalVectorField curl = recover_nodal_curl(E);
  NodalVectorField out(s.model.mesh);
  for (int n = 0; n < s.model.mesh->node_count(); ++n)
    out.values.row(n) =
        (-(s.model.mu_inv(s.model.mesh->node_position(n)) * curl.at(n))).transpose();
  return out;
}

// ----------------------------------------------------------------- evolution

HomogenizedTrajectory run_coupled(const MaterialModel& model,
                                  const SolverParams& params, const XcSpec& xc,
                                  const SourceSpec& source,
                                  const InitialConditions& init) {
  params.validate();
  if (!model.mesh) throw Error("coupled run: material model has no mesh");
  const MeshPtr mesh = model.mesh;
  const CoupledStepper step(model, params.dt);
  const int steps = params.step_count();

  auto check_nodal = [&](const ComplexField& f, const char* what) {
    if (!f.mesh || f.values.size() != mesh->node_count())
      throw Error(std::string("coupled run: initial ") + what +
                  " does not match the run mesh");
  };
  auto check_edge = [&](const EdgeField& f, const char* what) {
    if (!f.mesh || f.values.size() != mesh->edge_count())
      throw Error(std::string("coupled run: initial ") + what +
                  " does not match the run mesh");
  };

  HomogenizedState now;
  if (init.psi) {
    check_nodal(*init.psi, "wavefunction");
    now.psi = *init.psi;
  } else {
    now.psi = ground_state(mesh, model.A, model.Vc).psi;
  }
  if (init.E) {
    check_edge(*init.E, "electric field");
    now.E = *init.E;
  } else {
    now.E = EdgeField(mesh);
  }
  if (init.E_dot) {
    check_edge(*init.E_dot, "electric field derivative");
    now.E_dot = *init.E_dot;
  } else {
    now.E_dot = EdgeField(mesh);
  }
  now.rho = ScalarField(mesh, VectorXd(model.N * now.psi.values.cwiseAbs2().real()));
  now.Jq = quantum_current(now.psi, model.A, model.N);
  now.H = NodalVectorField(mesh);
  now.H_dot = step.h_dot(now.E);
  now.t = 0.0;

  HomogenizedTrajectory traj;
  traj.mesh = mesh;
  traj.dt = params.dt;
  traj.states.reserve(steps + 1);
  traj.diagnostics.reserve(steps);
  traj.states.push_back(std::move(now));

  for (int n = 0; n < steps; ++n) {
    const HomogenizedState& cur = traj.states.back();
    const double t_n = n * params.dt;

    const VectorXd& E_nv = cur.E.values;
    const VectorXd& E_prev =
        n > 0 ? traj.states[traj.states.size() - 2].E.values : E_nv;
    VectorXd predictor = 2.0 * E_nv - E_prev;

    ScalarField rho_guess = cur.rho;
    ComplexField psi_next;
    ScalarField rho_next;
    EdgeField E_next, V_next;
    NodalVectorField Jq_next;
    InnerDiagnostics inner_last;
    int inner_total = 0;
    double rel = std::numeric_limits<double>::infinity();
    int used = 0;
    std::vector<double> history;

    for (int k = 1; k <= params.outer_max; ++k) {
      const EdgeField E_half(mesh, VectorXd(0.5 * (E_nv + predictor)));
      std::tie(psi_next, rho_next, inner_last) = step.schrodinger_cn_step(
          cur.psi, E_half, rho_guess, xc, params.inner_tol, params.inner_max,
          params.mixing_alpha);
      Jq_next = quantum_current(psi_next, model.A, model.N);
      std::tie(E_next, V_next) =
          step.maxwell_cn_step(cur.E, cur.E_dot, cur.Jq, Jq_next, source, t_n);

      const VectorXd delta = E_next.values - predictor;
      rel = delta.norm() / std::max(E_next.values.norm(), 1e-300);
      history.push_back(rel);
      inner_total += inner_last.iterations;
      predictor = E_next.values;
      rho_guess = rho_next;
      used = k;
      if (rel <= params.outer_tol) break;
      if (k == params.outer_max)
        throw IterationError(
            "field coupling iteration exceeded its cap at step " +
                std::to_string(n + 1),
            std::move(history));
    }

    HomogenizedState nxt;
    nxt.psi = std::move(psi_next);
    nxt.rho = std::move(rho_next);
    nxt.E = std::move(E_next);
    nxt.E_dot = std::move(V_next);
    nxt.Jq = std::move(Jq_next);
    nxt.H_dot = step.h_dot(nxt.E);
    nxt.H = NodalVectorField(mesh);
    nxt.H.values = cur.H.values +
                   (params.dt / 2.0) * (cur.H_dot.values + nxt.H_dot.values);
    nxt.t = (n + 1) * params.dt;

    StepDiagnostics d;
    d.t = nxt.t;
    d.outer_iterations = used;
    d.inner_iterations = inner_total;
    d.outer_residual = rel;
    d.inner_residual = inner_last.residual;
    d.psi_norm = step.psi_norm(nxt.psi);
    d.gauss_residual = step.gauss_residual(nxt.E, nxt.rho);
    traj.diagnostics.push_back(d);
    traj.states.push_back(std::move(nxt));
  }
  return traj;
}

HomogenizedTrajectory run(const PeriodicMedium& medium,
                          const EffectiveTensors& tensors,
                          const SolverParams& params, const XcSpec& xc,
                          const SourceSpec& source, const InitialConditions& init) {
  params.validate();
  const MeshPtr mesh =
      std::make_shared<BoxMesh>(BoxMesh::unit_cell(params.divisions));
  return run_coupled(MaterialModel::homogenized(mesh, medium, tensors), params, xc,
                     source, init);
}

} // namespace mshom
