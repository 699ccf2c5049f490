#include "mshom/cell_problems.hpp"

#include "mshom/effective.hpp"
#include "mshom/fem_basis.hpp"

#include <atomic>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <random>
#include <thread>

namespace mshom {

namespace {

using Coefficient = PeriodicMedium::Coefficient;

Vec3 axis_vector(int k) {
  Vec3 e = Vec3::Zero();
  e[k] = 1.0;
  return e;
}

/// Division count of a cubic unit-cell mesh; rejects anything else.
int cell_divisions_of(const BoxMesh& mesh) {
  const auto d = mesh.divisions();
  if (d[0] != d[1] || d[0] != d[2] || mesh.origin() != Vec3::Zero() ||
      mesh.extents() != Vec3::Ones())
    throw Error("cell problems require a cubic mesh of the unit cell");
  return d[0];
}

void check_same_mesh(const MeshPtr& a, const MeshPtr& b, const char* what) {
  if (!a || !b || !(*a == *b))
    throw Error(std::string(what) + ": input field lives on a different mesh");
}

// --- scalar problems --------------------------------------------------------

ScalarField scalar_first_impl(const MeshPtr& mesh, const PeriodicMedium& medium,
                              Coefficient which, int k, ThetaVariant variant,
                              double tol, SolveStats* stats) {
  const TensorSampler coeff = [&medium, which](const Vec3& xi) {
    return medium.sample(which, xi);
  };
  const ScalarBoundary bc = variant == ThetaVariant::Periodic
                                ? ScalarBoundary::PeriodicPinned
                                : ScalarBoundary::DirichletZero;
  SparseSystem sys = assemble_scalar(mesh, coeff, nullptr, bc);
  const VectorSampler g = [&medium, which, k](const Vec3& xi) {
    return (-(medium.sample(which, xi) * axis_vector(k))).eval();
  };
  sys.b = sys.map.restrict(assemble_nodal_load_full(*mesh, &g, nullptr));
  VectorXd theta = sys.map.expand(solve(sys, tol, stats));
  if (variant == ThetaVariant::Periodic) {
    // shift to zero mean over the cell (|Q| = 1)
    const SpMat M = assemble_mass_nodal_full(*mesh);
    theta.array() -= VectorXd::Ones(theta.size()).dot(M * theta);
  }
  return ScalarField(mesh, std::move(theta));
}

ScalarField scalar_second_impl(const MeshPtr& mesh, const PeriodicMedium& medium,
                               Coefficient which, int k, int l,
                               const ScalarField& theta_l, double eff_kl,
                               double tol, SolveStats* stats) {
  const TensorSampler coeff = [&medium, which](const Vec3& xi) {
    return medium.sample(which, xi);
  };
  SparseSystem sys = assemble_scalar(mesh, coeff, nullptr, ScalarBoundary::DirichletZero);
  const VectorSampler g = [&medium, which, k, &theta_l](const Vec3& xi) {
    return (-theta_l.interpolate(xi) * (medium.sample(which, xi) * axis_vector(k)))
        .eval();
  };
  const ScalarSampler s = [&medium, which, k, l, eff_kl, &theta_l](const Vec3& xi) {
    const Mat3 c = medium.sample(which, xi);
    return c.row(k).dot(theta_l.gradient(xi)) + c(k, l) - eff_kl;
  };
  sys.b = sys.map.restrict(assemble_nodal_load_full(*mesh, &g, &s));
  return ScalarField(mesh, sys.map.expand(solve(sys, tol, stats)));
}

// --- curl saddle problems ----------------------------------------------------

/// Reduced blocks of the divergence-constrained curl-curl saddle system; the
/// multiplier block is rescaled so both blocks carry comparable magnitudes
/// (pure conditioning aid, the constraint itself is unchanged).
struct CurlSaddle {
  MeshPtr mesh;
  DofMap emap;
  SpMat K; // curl-curl on tangential-zero edges
  SpMat B; // scaled (edge mass x discrete gradient) against zero-trace nodes
};

CurlSaddle build_curl_saddle(const MeshPtr& mesh, const TensorSampler& coeff_inv) {
  CurlSaddle sdl;
  sdl.mesh = mesh;
  sdl.emap = edge_tangential_zero(*mesh);
  const DofMap nmap = nodal_dirichlet_zero(*mesh);
  sdl.K = reduce(assemble_curl_curl_full(*mesh, coeff_inv), sdl.emap);
  const SpMat B_full =
      (assemble_mass_edge_full(*mesh) * discrete_gradient(*mesh)).pruned();
  const SpMat Pe = prolongation(sdl.emap);
  const SpMat Pn = prolongation(nmap);
  SpMat B = (Pe.transpose() * B_full * Pn).pruned();
  double max_diag = 0.0, max_b = 0.0;
  for (int i = 0; i < sdl.K.rows(); ++i) max_diag = std::max(max_diag, sdl.K.coeff(i, i));
  for (int c = 0; c < B.outerSize(); ++c)
    for (SpMat::InnerIterator it(B, c); it; ++it) max_b = std::max(max_b, std::abs(it.value()));
  const double scale = max_b > 0.0 ? max_diag / max_b : 1.0;
  sdl.B = (scale * B).pruned();
  return sdl;
}

EdgeField solve_curl_saddle(const CurlSaddle& sdl, const VectorXd& load_full,
                            double tol, SolveStats* stats) {
  if (sdl.emap.n_free == 0)
    return EdgeField(sdl.mesh, VectorXd::Zero(sdl.mesh->edge_count()));
  const VectorXd f = sdl.emap.restrict(load_full);
  const SparseSystem sys = build_saddle(sdl.K, sdl.B, f);
  const VectorXd x = solve(sys, tol, stats);
  return EdgeField(sdl.mesh, sdl.emap.expand(VectorXd(x.head(sdl.K.rows()))));
}

EdgeField curl_first_impl(const MeshPtr& mesh, const PeriodicMedium& medium,
                          Coefficient which, int p, double tol, SolveStats* stats) {
  const TensorSampler cinv = [&medium, which](const Vec3& xi) {
    return medium.sample(which, xi).inverse().eval();
  };
  const CurlSaddle sdl = build_curl_saddle(mesh, cinv);
  const VectorSampler gc = [&medium, which, p](const Vec3& xi) {
    return (-(medium.sample(which, xi).inverse() * axis_vector(p))).eval();
  };
  return solve_curl_saddle(sdl, assemble_edge_load_full(*mesh, &gc, nullptr), tol,
                           stats);
}

/// The divergence-corrected field G = -c^{-1} curl Theta1 - c^{-1} e_p + inv_eff e_p.
VectorSampler correction_field(const PeriodicMedium& medium, Coefficient which,
                               int p, const EdgeField& Theta1,
                               const Mat3& inv_effective) {
  return [&medium, which, p, &Theta1, inv_effective](const Vec3& xi) {
    const Mat3 cinv = medium.sample(which, xi).inverse();
    return (-cinv * Theta1.curl(xi) - cinv * axis_vector(p) +
            inv_effective * axis_vector(p))
        .eval();
  };
}

ScalarField zeta_impl(const MeshPtr& mesh, const PeriodicMedium& medium,
                      Coefficient which, int p, const EdgeField& Theta1,
                      const Mat3& inv_effective, double tol, SolveStats* stats) {
  const TensorSampler one = [](const Vec3&) { return Mat3::Identity().eval(); };
  SparseSystem sys = assemble_scalar(mesh, one, nullptr, ScalarBoundary::DirichletZero);
  const VectorSampler gtilde = correction_field(medium, which, p, Theta1, inv_effective);
  const VectorSampler g = [&gtilde](const Vec3& xi) { return (-gtilde(xi)).eval(); };
  sys.b = sys.map.restrict(assemble_nodal_load_full(*mesh, &g, nullptr));
  return ScalarField(mesh, sys.map.expand(solve(sys, tol, stats)));
}

EdgeField curl_second_impl(const MeshPtr& mesh, const PeriodicMedium& medium,
                           Coefficient which, int p, const EdgeField& Theta1,
                           const ScalarField& zeta2, const Mat3& inv_effective,
                           double tol, SolveStats* stats) {
  const TensorSampler cinv = [&medium, which](const Vec3& xi) {
    return medium.sample(which, xi).inverse().eval();
  };
  const CurlSaddle sdl = build_curl_saddle(mesh, cinv);
  const VectorSampler gc = [&medium, which, &Theta1](const Vec3& xi) {
    return (-(medium.sample(which, xi).inverse() * Theta1.evaluate(xi))).eval();
  };
  const VectorSampler gtilde = correction_field(medium, which, p, Theta1, inv_effective);
  const VectorSampler gv = [&gtilde, &zeta2](const Vec3& xi) {
    return (gtilde(xi) + zeta2.gradient(xi)).eval();
  };
  return solve_curl_saddle(sdl, assemble_edge_load_full(*mesh, &gc, &gv), tol, stats);
}

// --- task runner -------------------------------------------------------------

struct Task {
  std::string label;
  std::function<void()> work;
};

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("MSHOM_THREADS")) {
    const int n = std::atoi(env);
    if (n > 0) return n;
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? static_cast<int>(hw) : 1;
}

/// Runs independent tasks on a small pool; if any fail, the failure of the
/// lowest-indexed task is reported (deterministic regardless of scheduling).
void run_tasks(std::vector<Task>& tasks, int threads) {
  const int n = static_cast<int>(tasks.size());
  const int workers = std::max(1, std::min(threads, n));
  std::atomic<int> next{0};
  std::mutex mu;
  int first_failed = -1;
  std::string first_message;

  auto body = [&] {
    for (;;) {
      const int i = next.fetch_add(1);
      if (i >= n) return;
      try {
        tasks[i].work();
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(mu);
        if (first_failed < 0 || i < first_failed) {
          first_failed = i;
          first_message = e.what();
        }
      }
    }
  };

  if (workers == 1) {
    body();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int w = 0; w < workers; ++w) pool.emplace_back(body);
    for (auto& t : pool) t.join();
  }
  if (first_failed >= 0)
    throw Error("cell problem " + tasks[first_failed].label +
                " failed: " + first_message);
}

const char* coeff_name(Coefficient c) {
  switch (c) {
    case Coefficient::A: return "a";
    case Coefficient::Eta: return "eta";
    default: return "mu";
  }
}

} // namespace

const char* to_string(ThetaVariant v) {
  return v == ThetaVariant::Periodic ? "periodic" : "dirichlet";
}

int CellFunctionSet::curl_slot(PeriodicMedium::Coefficient c) {
  if (c == Coefficient::Eta) return 0;
  if (c == Coefficient::Mu) return 1;
  throw Error("curl corrector families exist only for eta and mu");
}

void require_aligned(const PeriodicMedium& medium, int divisions) {
  if (divisions < 1)
    throw ConfigError("cell.divisions", "must be a positive integer");
  const auto check = [divisions](double coord, const char* what) {
    const double scaled = coord * divisions;
    if (std::abs(scaled - std::lround(scaled)) > 1e-9)
      throw MisalignmentError(
          std::string("inclusion face coordinate ") + std::to_string(coord) +
          " (" + what + ") is not a multiple of 1/" + std::to_string(divisions));
  };
  const Inclusion& inc = medium.inclusion;
  if (inc.kind == Inclusion::Kind::Cube) {
    for (int a = 0; a < 3; ++a) {
      check(inc.center[a] - 0.5 * inc.side, "cube low face");
      check(inc.center[a] + 0.5 * inc.side, "cube high face");
    }
  } else {
    check(inc.center[inc.axis] - 0.5 * inc.side, "slab low face");
    check(inc.center[inc.axis] + 0.5 * inc.side, "slab high face");
  }
}

ScalarField solve_scalar_first(const PeriodicMedium& medium, Coefficient which,
                               int k, ThetaVariant variant, int divisions,
                               double tol, SolveStats* stats) {
  require_aligned(medium, divisions);
  const auto mesh = std::make_shared<const BoxMesh>(BoxMesh::unit_cell(divisions));
  return scalar_first_impl(mesh, medium, which, k, variant, tol, stats);
}

ScalarField solve_scalar_second(const PeriodicMedium& medium, Coefficient which,
                                int k, int l, const ScalarField& theta_l,
                                double eff_kl, double tol, SolveStats* stats) {
  require_aligned(medium, cell_divisions_of(*theta_l.mesh));
  return scalar_second_impl(theta_l.mesh, medium, which, k, l, theta_l, eff_kl,
                            tol, stats);
}

EdgeField solve_curl_first(const PeriodicMedium& medium, Coefficient which, int p,
                           int divisions, double tol, SolveStats* stats) {
  require_aligned(medium, divisions);
  const auto mesh = std::make_shared<const BoxMesh>(BoxMesh::unit_cell(divisions));
  return curl_first_impl(mesh, medium, which, p, tol, stats);
}

ScalarField solve_zeta(const PeriodicMedium& medium, Coefficient which, int p,
                       const EdgeField& Theta1, const Mat3& inv_effective,
                       double tol, SolveStats* stats) {
  require_aligned(medium, cell_divisions_of(*Theta1.mesh));
  return zeta_impl(Theta1.mesh, medium, which, p, Theta1, inv_effective, tol, stats);
}

EdgeField solve_curl_second(const PeriodicMedium& medium, Coefficient which, int p,
                            const EdgeField& Theta1, const ScalarField& zeta2,
                            const Mat3& inv_effective, double tol,
                            SolveStats* stats) {
  check_same_mesh(Theta1.mesh, zeta2.mesh, "second-order curl corrector");
  require_aligned(medium, cell_divisions_of(*Theta1.mesh));
  return curl_second_impl(Theta1.mesh, medium, which, p, Theta1, zeta2,
                          inv_effective, tol, stats);
}

CellFunctionSet solve_all(const PeriodicMedium& medium,
                          const CellSolveOptions& options) {
  medium.validate();
  require_aligned(medium, options.divisions);
  const auto mesh = std::make_shared<const BoxMesh>(BoxMesh::unit_cell(options.divisions));
  const int threads = resolve_threads(options.threads);

  CellFunctionSet set;
  set.mesh = mesh;
  set.tensor_family = options.tensor_family;

  constexpr Coefficient kCoeffs[3] = {Coefficient::A, Coefficient::Eta,
                                      Coefficient::Mu};
  constexpr Coefficient kCurlCoeffs[2] = {Coefficient::Eta, Coefficient::Mu};

  std::mutex stats_mu;
  auto track = [&](const SolveStats& s) {
    std::lock_guard<std::mutex> lock(stats_mu);
    set.diagnostics.total_iterations += s.iterations;
    set.diagnostics.used_direct_fallback |= s.used_direct_fallback;
  };

  // Stage 1: every first-order problem is independent.
  {
    std::vector<Task> tasks;
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k)
        for (const ThetaVariant v : {ThetaVariant::Periodic, ThetaVariant::Dirichlet})
          tasks.push_back({std::string("theta1[") + coeff_name(kCoeffs[c]) + "][k=" +
                               std::to_string(k) + "][" + to_string(v) + "]",
                           [&, c, k, v] {
                             SolveStats s;
                             ScalarField f = scalar_first_impl(
                                 mesh, medium, kCoeffs[c], k, v, options.scalar_tol, &s);
                             (v == ThetaVariant::Periodic
                                  ? set.theta1_periodic
                                  : set.theta1_dirichlet)[c][k] = std::move(f);
                             track(s);
                           }});
    for (int c = 0; c < 2; ++c)
      for (int p = 0; p < 3; ++p)
        tasks.push_back({std::string("Theta1[") + coeff_name(kCurlCoeffs[c]) +
                             "][p=" + std::to_string(p) + "]",
                         [&, c, p] {
                           SolveStats s;
                           set.Theta1[c][p] = curl_first_impl(
                               mesh, medium, kCurlCoeffs[c], p, options.saddle_tol, &s);
                           track(s);
                         }});
    run_tasks(tasks, threads);
  }

  // Effective entries feeding the second-order problems.
  Mat3 eff[3];
  for (int c = 0; c < 3; ++c) {
    const TensorSampler coeff = [&medium, c, &kCoeffs](const Vec3& xi) {
      return medium.sample(kCoeffs[c], xi);
    };
    const Mat3 raw = scalar_tensor_quadrature(coeff, set.theta1(kCoeffs[c], options.tensor_family));
    eff[c] = 0.5 * (raw + raw.transpose());
  }
  Mat3 inv_eff[2];
  for (int c = 0; c < 2; ++c) {
    const TensorSampler coeff_inv = [&medium, c, &kCurlCoeffs](const Vec3& xi) {
      return medium.sample(kCurlCoeffs[c], xi).inverse().eval();
    };
    const Mat3 raw = inverse_tensor_quadrature(coeff_inv, set.Theta1[c]);
    inv_eff[c] = 0.5 * (raw + raw.transpose());
  }

  // Stage 2: second-order scalar problems and auxiliary potentials.
  {
    std::vector<Task> tasks;
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k)
        for (int l = 0; l < 3; ++l)
          tasks.push_back({std::string("theta2[") + coeff_name(kCoeffs[c]) + "][k=" +
                               std::to_string(k) + ",l=" + std::to_string(l) + "]",
                           [&, c, k, l] {
                             SolveStats s;
                             set.theta2[c][k][l] = scalar_second_impl(
                                 mesh, medium, kCoeffs[c], k, l,
                                 set.theta1_dirichlet[c][l], eff[c](k, l),
                                 options.scalar_tol, &s);
                             track(s);
                           }});
    for (int c = 0; c < 2; ++c)
      for (int p = 0; p < 3; ++p)
        tasks.push_back({std::string("zeta2[") + coeff_name(kCurlCoeffs[c]) +
                             "][p=" + std::to_string(p) + "]",
                         [&, c, p] {
                           SolveStats s;
                           set.zeta2[c][p] =
                               zeta_impl(mesh, medium, kCurlCoeffs[c], p,
                                         set.Theta1[c][p], inv_eff[c],
                                         options.scalar_tol, &s);
                           track(s);
                         }});
    run_tasks(tasks, threads);
  }

  // Stage 3: second-order curl problems.
  {
    std::vector<Task> tasks;
    for (int c = 0; c < 2; ++c)
      for (int p = 0; p < 3; ++p)
        tasks.push_back({std::string("Theta2[") + coeff_name(kCurlCoeffs[c]) +
                             "][p=" + std::to_string(p) + "]",
                         [&, c, p] {
                           SolveStats s;
                           set.Theta2[c][p] = curl_second_impl(
                               mesh, medium, kCurlCoeffs[c], p, set.Theta1[c][p],
                               set.zeta2[c][p], inv_eff[c], options.saddle_tol, &s);
                           track(s);
                         }});
    run_tasks(tasks, threads);
  }

  // --- structural invariants -------------------------------------------------

  const SpMat M_nodal = assemble_mass_nodal_full(*mesh);
  const VectorXd ones = VectorXd::Ones(mesh->node_count());
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) {
      const double mean = std::abs(ones.dot(M_nodal * set.theta1_periodic[c][k].values));
      set.diagnostics.max_abs_periodic_mean =
          std::max(set.diagnostics.max_abs_periodic_mean, mean);
    }
  if (set.diagnostics.max_abs_periodic_mean > 1e-10)
    throw Error("periodic corrector mean exceeds 1e-10 after centering");

  auto check_zero_trace = [&](const ScalarField& f, const char* label) {
    for (int n = 0; n < mesh->node_count(); ++n)
      if (mesh->node_on_boundary(n) && f.values[n] != 0.0)
        throw Error(std::string(label) + ": nonzero boundary value");
  };
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) {
      check_zero_trace(set.theta1_dirichlet[c][k], "theta1 dirichlet");
      for (int l = 0; l < 3; ++l) check_zero_trace(set.theta2[c][k][l], "theta2");
    }
  for (int c = 0; c < 2; ++c)
    for (int p = 0; p < 3; ++p) check_zero_trace(set.zeta2[c][p], "zeta2");

  // Divergence constraint of the curl correctors, probed with seeded random
  // zero-trace nodal functions.
  const SpMat M_edge = assemble_mass_edge_full(*mesh);
  const SpMat G = discrete_gradient(*mesh);
  std::mt19937 rng(123456);
  std::normal_distribution<double> gauss;
  std::vector<VectorXd> probes;
  for (int t = 0; t < 20; ++t) {
    VectorXd q(mesh->node_count());
    for (int n = 0; n < mesh->node_count(); ++n)
      q[n] = mesh->node_on_boundary(n) ? 0.0 : gauss(rng);
    probes.push_back(std::move(q));
  }
  auto check_divergence = [&](const EdgeField& Th, const char* label) {
    for (int e = 0; e < mesh->edge_count(); ++e)
      if (mesh->edge_on_boundary(e) && Th.values[e] != 0.0)
        throw Error(std::string(label) + ": nonzero tangential boundary dof");
    const double norm_th = std::sqrt(Th.values.dot(M_edge * Th.values));
    if (norm_th <= 1e-14) return; // identically zero corrector
    const VectorXd r = G.transpose() * (M_edge * Th.values);
    for (const VectorXd& q : probes) {
      const VectorXd gq = G * q;
      const double norm_gq = std::sqrt(gq.dot(M_edge * gq));
      const double rel = std::abs(q.dot(r)) / (norm_th * norm_gq);
      set.diagnostics.max_divergence_rel =
          std::max(set.diagnostics.max_divergence_rel, rel);
      if (rel > 1e-8)
        throw Error(std::string(label) +
                    ": divergence constraint violated (relative " +
                    std::to_string(rel) + ")");
    }
  };
  for (int c = 0; c < 2; ++c)
    for (int p = 0; p < 3; ++p) {
      check_divergence(set.Theta1[c][p], "Theta1");
      check_divergence(set.Theta2[c][p], "Theta2");
    }

  // Recorded diagnostic: family gap on the interior sub-cube [1/4, 3/4]^3.
  {
    double worst = 0.0;
    for (int c = 0; c < 3; ++c)
      for (int k = 0; k < 3; ++k) {
        double num = 0.0, den = 0.0;
        for (int n = 0; n < mesh->node_count(); ++n) {
          const Vec3 x = mesh->node_position(n);
          if ((x.array() < 0.25).any() || (x.array() > 0.75).any()) continue;
          const double dp = set.theta1_dirichlet[c][k].values[n];
          const double pp = set.theta1_periodic[c][k].values[n];
          num += (dp - pp) * (dp - pp);
          den += pp * pp;
        }
        if (den > 1e-20) worst = std::max(worst, std::sqrt(num / den));
      }
    set.diagnostics.interior_family_gap_rel = worst;
  }

  return set;
}

} // namespace mshom
