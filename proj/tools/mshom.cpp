// Command-line front end: runs the cell-problem, homogenization, coupled
// evolution, reference, reconstruction, and comparison stages against a JSON
// configuration, exchanging versioned artifacts through the --out directory
// (and an optional --cache directory for reusable cell snapshots).
//
// Exit codes: 0 success, 1 configuration/input error, 2 solver or
// certification failure, 3 internal error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include <CLI11.hpp>

#include "mshom/cell_problems.hpp"
#include "mshom/coupled.hpp"
#include "mshom/effective.hpp"
#include "mshom/io.hpp"
#include "mshom/metrics.hpp"
#include "mshom/reconstruction.hpp"
#include "mshom/reference.hpp"

namespace fs = std::filesystem;
using namespace mshom;

namespace {

struct Context {
  RunConfig config;
  fs::path out;
  fs::path cache; // empty when no --cache was given
  int order = 2;
  bool verbose = false;
  std::string stage = "startup";
  RunManifest manifest;

  std::optional<CellFunctionSet> cells;
  std::optional<EffectiveTensors> tensors;
  std::optional<HomogenizedTrajectory> trajectory;
  std::optional<ReferenceTrajectory> reference;
};

fs::path cells_path(const fs::path& dir, const std::string& hash) {
  return dir / ("cells-" + hash + ".snapshot");
}

void mirror_file(const fs::path& src, const fs::path& dst) {
  if (fs::exists(dst) && fs::equivalent(src, dst)) return;
  fs::copy_file(src, dst, fs::copy_options::overwrite_existing);
}

std::string fmt_seconds(double s) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", s);
  return buf;
}

template <typename F>
void timed_stage(Context& ctx, const std::string& name, F&& body) {
  ctx.stage = name;
  const auto t0 = std::chrono::steady_clock::now();
  body();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  ctx.manifest.timings_seconds[name] = s;
  std::cout << "[" << name << "] done in " << fmt_seconds(s) << " s\n";
}

/// Artifact-only cell lookup for the stages that must not recompute: the
/// cache directory wins, then the out directory.
const CellFunctionSet& ensure_cells_loaded(Context& ctx) {
  if (ctx.cells) return *ctx.cells;
  const std::string hash = medium_hash(ctx.config.medium, ctx.config.cell_divisions);
  for (const fs::path& dir : {ctx.cache, ctx.out}) {
    if (dir.empty()) continue;
    const fs::path file = cells_path(dir, hash);
    if (fs::exists(file)) {
      std::cout << "[" << ctx.stage << "] loading cell snapshot " << file.string() << "\n";
      ctx.cells = load_cells(file);
      return *ctx.cells;
    }
  }
  throw ConfigError(ctx.stage, "no cell snapshot for medium hash " + hash +
                                   " in --cache or --out; run `mshom cells` first");
}

const HomogenizedTrajectory& ensure_trajectory_loaded(Context& ctx) {
  if (ctx.trajectory) return *ctx.trajectory;
  const fs::path file = ctx.out / "trajectory.snapshot";
  if (!fs::exists(file))
    throw ConfigError(ctx.stage,
                      "trajectory.snapshot not found in --out; run `mshom run` first");
  std::cout << "[" << ctx.stage << "] loading " << file.string() << "\n";
  ctx.trajectory = load_trajectory(file);
  return *ctx.trajectory;
}

const ReferenceTrajectory& ensure_reference_loaded(Context& ctx) {
  if (ctx.reference) return *ctx.reference;
  const fs::path file = ctx.out / "reference.snapshot";
  if (!fs::exists(file))
    throw ConfigError(
        ctx.stage, "reference.snapshot not found in --out; run `mshom reference` first");
  std::cout << "[" << ctx.stage << "] loading " << file.string() << "\n";
  ctx.reference = load_reference(file);
  return *ctx.reference;
}

void stage_cells(Context& ctx) {
  const std::string hash = medium_hash(ctx.config.medium, ctx.config.cell_divisions);
  const fs::path out_file = cells_path(ctx.out, hash);

  if (!ctx.cache.empty() && fs::exists(cells_path(ctx.cache, hash))) {
    const fs::path hit = cells_path(ctx.cache, hash);
    std::cout << "[cells] cache hit, reusing " << hit.string() << "\n";
    ctx.cells = load_cells(hit);
    mirror_file(hit, out_file);
  } else if (fs::exists(out_file)) {
    std::cout << "[cells] reusing " << out_file.string() << "\n";
    ctx.cells = load_cells(out_file);
    if (!ctx.cache.empty()) mirror_file(out_file, cells_path(ctx.cache, hash));
  } else {
    require_aligned(ctx.config.medium, ctx.config.cell_divisions);
    CellSolveOptions options;
    options.divisions = ctx.config.cell_divisions;
    std::cout << "[cells] solving cell problems at " << options.divisions
              << " divisions per axis (medium hash " << hash << ")\n";
    ctx.cells = solve_all(ctx.config.medium, options);
    save_cells(*ctx.cells, out_file);
    if (!ctx.cache.empty()) save_cells(*ctx.cells, cells_path(ctx.cache, hash));
    std::cout << "[cells] wrote " << out_file.string() << "\n";
  }
  const auto& d = ctx.cells->diagnostics;
  std::cout << "[cells] linear iterations " << d.total_iterations
            << ", worst periodic mean " << d.max_abs_periodic_mean
            << ", worst divergence defect " << d.max_divergence_rel
            << (d.used_direct_fallback ? ", direct fallback used" : "") << "\n";
}

void stage_homogenize(Context& ctx) {
  const CellFunctionSet& cells = ensure_cells_loaded(ctx);
  ctx.tensors = compute_effective(ctx.config.medium, cells);
  const Certificate cert = certify(*ctx.tensors, ctx.config.medium);
  ctx.manifest.tensors = ctx.tensors;
  write_tensors(*ctx.tensors, ctx.out / "tensors.json");
  std::cout << "[homogenize] wrote " << (ctx.out / "tensors.json").string() << "\n";

  const auto print_diag = [](const char* name, const Mat3& m) {
    std::printf("[homogenize] %-12s diag(%.6g, %.6g, %.6g)\n", name, m(0, 0), m(1, 1),
                m(2, 2));
  };
  print_diag("A_hat", ctx.tensors->A_hat);
  print_diag("eta_hat", ctx.tensors->eta_hat);
  print_diag("mu_hat", ctx.tensors->mu_hat);
  std::printf("[homogenize] mean_Vc      %.6g\n", ctx.tensors->mean_Vc);

  if (ctx.verbose) {
    for (const auto& c : cert.checks)
      std::printf("[homogenize]   check %-40s %s (measured %.3e, bound %.3e)\n",
                  c.property.c_str(), c.pass ? "pass" : "FAIL", c.measured, c.bound);
    for (const auto& c : cert.diagnostics)
      std::printf("[homogenize]   diag  %-40s measured %.3e (%s)\n", c.property.c_str(),
                  c.measured, c.detail.c_str());
  }
  if (!cert.certified) {
    std::vector<double> measured;
    std::ostringstream what;
    what << "effective tensor certificate failed:";
    for (const auto& c : cert.checks)
      if (!c.pass) {
        what << " [" << c.property << " measured " << c.measured << " vs bound "
             << c.bound << "]";
        measured.push_back(c.measured);
      }
    throw IterationError(what.str(), measured);
  }
  std::cout << "[homogenize] certificate: all " << cert.checks.size()
            << " hard checks passed\n";
}

void print_step_table(const std::vector<StepDiagnostics>& steps, const char* tag) {
  std::printf("[%s]   %6s %6s %6s %12s %12s %14s\n", tag, "step", "outer", "inner",
              "outer_res", "inner_res", "psi_norm");
  for (std::size_t i = 0; i < steps.size(); ++i)
    std::printf("[%s]   %6zu %6d %6d %12.3e %12.3e %14.10f\n", tag, i + 1,
                steps[i].outer_iterations, steps[i].inner_iterations,
                steps[i].outer_residual, steps[i].inner_residual, steps[i].psi_norm);
}

void summarize_steps(const std::vector<StepDiagnostics>& steps, const char* tag,
                     bool verbose) {
  if (steps.empty()) return;
  int max_outer = 0, max_inner = 0;
  double drift = 0.0;
  const double n0 = steps.front().psi_norm;
  for (const auto& s : steps) {
    max_outer = std::max(max_outer, s.outer_iterations);
    max_inner = std::max(max_inner, s.inner_iterations);
    if (n0 > 0.0) drift = std::max(drift, std::abs(s.psi_norm - n0) / n0);
  }
  std::printf("[%s] %zu steps, max outer %d, max inner %d, psi-norm drift %.3e\n", tag,
              steps.size(), max_outer, max_inner, drift);
  if (verbose) print_step_table(steps, tag);
}

void stage_run(Context& ctx) {
  if (!ctx.tensors) {
    const fs::path file = ctx.out / "tensors.json";
    if (!fs::exists(file))
      throw ConfigError("run",
                        "tensors.json not found in --out; run `mshom homogenize` first");
    ctx.tensors = load_tensors(file);
  }
  const XcSpec xc(ctx.config.xc);
  SourceSpec source;
  source.amplitude = ctx.config.source_amplitude;
  std::cout << "[run] coarse mesh " << ctx.config.coarse_divisions << "^3, "
            << ctx.config.solver.step_count() << " steps of dt " << ctx.config.solver.dt
            << "\n";
  ctx.trajectory = run(ctx.config.medium, *ctx.tensors, ctx.config.solver, xc, source);
  save_trajectory(*ctx.trajectory, ctx.out / "trajectory.snapshot");
  ctx.manifest.coarse_steps = ctx.trajectory->diagnostics;
  summarize_steps(ctx.trajectory->diagnostics, "run", ctx.verbose);
  std::cout << "[run] wrote " << (ctx.out / "trajectory.snapshot").string() << "\n";
}

void stage_reference(Context& ctx) {
  const XcSpec xc(ctx.config.xc);
  SourceSpec source;
  source.amplitude = ctx.config.source_amplitude;
  const int fine = ctx.config.medium.cells_per_axis() * ctx.config.fine_divisions_per_cell;
  std::cout << "[reference] fine mesh " << fine << "^3 ("
            << ctx.config.fine_divisions_per_cell << " divisions per cell), "
            << ctx.config.solver.step_count() << " steps\n";
  ctx.reference = run_reference(ctx.config.medium, ctx.config.fine_divisions_per_cell,
                                ctx.config.solver, xc, source);
  save_reference(*ctx.reference, ctx.out / "reference.snapshot");
  ctx.manifest.reference_steps = ctx.reference->trajectory.diagnostics;
  summarize_steps(ctx.reference->trajectory.diagnostics, "reference", ctx.verbose);
  std::cout << "[reference] wrote " << (ctx.out / "reference.snapshot").string() << "\n";
}

void stage_reconstruct(Context& ctx) {
  const CellFunctionSet& cells = ensure_cells_loaded(ctx);
  const HomogenizedTrajectory& traj = ensure_trajectory_loaded(ctx);
  const int fine = ctx.config.medium.cells_per_axis() * ctx.config.fine_divisions_per_cell;
  const MeshPtr eval = std::make_shared<const BoxMesh>(BoxMesh::unit_cell(fine));
  const int last = static_cast<int>(traj.states.size()) - 1;
  std::cout << "[reconstruct] order " << ctx.order << " fields on a " << fine
            << "^3 mesh at t = " << traj.states.back().t << "\n";
  const MultiscaleField ms =
      reconstruct_state(traj, cells, ctx.config.medium, ctx.order, eval, last);

  CsvWriter csv(ctx.out / "reconstruction.csv");
  csv.add("psi", last, ms.t, ComplexField(eval, ms.psi));
  NodalVectorField E(eval), H(eval);
  E.values = ms.E;
  H.values = ms.H;
  csv.add("E", last, ms.t, E);
  csv.add("H", last, ms.t, H);
  csv.close();

  VtkScalar rho{"rho", ctx.config.medium.N * ms.psi.cwiseAbs2()};
  write_vtk(ctx.out / "reconstruction.vtk", *eval, {rho},
            {VtkVector{"E", ms.E}, VtkVector{"H", ms.H}},
            "order-" + std::to_string(ctx.order) + " multiscale reconstruction");
  std::cout << "[reconstruct] wrote " << (ctx.out / "reconstruction.csv").string()
            << " and " << (ctx.out / "reconstruction.vtk").string() << "\n";
}

void stage_compare(Context& ctx) {
  const CellFunctionSet& cells = ensure_cells_loaded(ctx);
  const HomogenizedTrajectory& traj = ensure_trajectory_loaded(ctx);
  const ReferenceTrajectory& ref = ensure_reference_loaded(ctx);

  const std::string want = medium_hash(ctx.config.medium, ctx.config.cell_divisions);
  if (medium_hash(ref.medium, ctx.config.cell_divisions) != want)
    throw ConfigError("compare",
                      "reference.snapshot was computed for a different medium");
  if (ref.trajectory.states.size() != traj.states.size())
    throw ConfigError("compare",
                      "coarse and reference trajectories disagree on the step count");

  const int stride = ctx.config.output_stride;
  const int n_samples = (static_cast<int>(traj.states.size()) - 1) / stride + 1;
  std::cout << "[compare] reconstructing orders 0..2 at " << n_samples
            << " samples on the reference mesh\n";
  std::array<std::vector<MultiscaleField>, 3> recon;
  for (int k = 0; k < 3; ++k) {
    recon[k].reserve(n_samples);
    for (int i = 0; i < n_samples; ++i) {
      recon[k].push_back(reconstruct_state(traj, cells, ctx.config.medium, k,
                                           ref.trajectory.mesh, i * stride));
      if (ctx.verbose)
        std::cout << "[compare]   order " << k << " sample " << i + 1 << "/" << n_samples
                  << " done\n";
    }
  }
  const ErrorTable table = error_table(ref, recon, stride);
  ctx.manifest.errors = table;

  const fs::path csv = ctx.out / "error_table.csv";
  std::ofstream out(csv, std::ios::binary);
  if (!out) throw Error("cannot open " + csv.string() + " for writing");
  out << error_table_to_csv(table);
  out.flush();
  if (!out) throw Error("write failure on " + csv.string());
  std::cout << "[compare] wrote " << csv.string() << "\n";
  std::cout << format_error_table(table);
}

int dispatch(const std::string& cmd, Context& ctx) {
  if (cmd == "cells") {
    timed_stage(ctx, "cells", [&] { stage_cells(ctx); });
  } else if (cmd == "homogenize") {
    timed_stage(ctx, "homogenize", [&] { stage_homogenize(ctx); });
  } else if (cmd == "run") {
    timed_stage(ctx, "run", [&] { stage_run(ctx); });
  } else if (cmd == "reference") {
    timed_stage(ctx, "reference", [&] { stage_reference(ctx); });
  } else if (cmd == "reconstruct") {
    timed_stage(ctx, "reconstruct", [&] { stage_reconstruct(ctx); });
  } else if (cmd == "compare") {
    timed_stage(ctx, "compare", [&] { stage_compare(ctx); });
  } else { // all
    timed_stage(ctx, "cells", [&] { stage_cells(ctx); });
    timed_stage(ctx, "homogenize", [&] { stage_homogenize(ctx); });
    timed_stage(ctx, "run", [&] { stage_run(ctx); });
    timed_stage(ctx, "reference", [&] { stage_reference(ctx); });
    timed_stage(ctx, "reconstruct", [&] { stage_reconstruct(ctx); });
    timed_stage(ctx, "compare", [&] { stage_compare(ctx); });
  }
  ctx.stage = "manifest";
  write_manifest(ctx.manifest, ctx.out / "manifest.json");
  std::cout << "[" << cmd << "] manifest written to "
            << (ctx.out / "manifest.json").string() << "\n";
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"homogenization and multiscale reconstruction toolkit for the "
               "coupled Maxwell-Schrodinger system"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", cache_dir;
  int order_flag = -1;
  bool verbose = false;

  const std::pair<const char*, const char*> subs[] = {
      {"cells", "solve the unit-cell corrector problems and snapshot them"},
      {"homogenize", "compute and certify effective tensors from a cell snapshot"},
      {"run", "evolve the coarse homogenized coupled system"},
      {"reference", "evolve the oscillatory fine-mesh reference system"},
      {"reconstruct", "evaluate the multiscale expansion from stored artifacts"},
      {"compare", "build the order-0/1/2 error table against the reference"},
      {"all", "run every stage in sequence"},
  };
  for (const auto& [name, desc] : subs) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "JSON run configuration file");
    sub->add_option("--out", out_dir, "artifact directory (default: current directory)");
    sub->add_option("--cache", cache_dir, "reusable cell-snapshot cache directory");
    sub->add_option("--order", order_flag, "expansion order override")
        ->check(CLI::Range(0, 2));
    sub->add_flag("--verbose", verbose, "print per-step and per-check detail");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
    return 1;
  }

  const std::string cmd = app.get_subcommands().front()->get_name();
  if (config_path.empty()) {
    std::cerr << "error: '" << cmd << "' requires --config\n\n" << app.help()
              << std::flush;
    return 1;
  }

  Context ctx;
  try {
    ctx.stage = "config";
    ctx.config = load_config(config_path);
    if (order_flag >= 0) ctx.config.order = order_flag;
    ctx.order = ctx.config.order;
    ctx.verbose = verbose;
    ctx.out = out_dir;
    fs::create_directories(ctx.out);
    if (!cache_dir.empty()) {
      ctx.cache = cache_dir;
      fs::create_directories(ctx.cache);
    }
    ctx.manifest.config = ctx.config;
    return dispatch(cmd, ctx);
  } catch (const ConfigError& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: configuration error: " << e.what()
              << "\n";
    return 1;
  } catch (const MisalignmentError& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: " << e.what() << "\n";
    return 1;
  } catch (const SnapshotError& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: " << e.what() << "\n";
    return 1;
  } catch (const SolverError& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: " << e.what() << "\n";
    return 2;
  } catch (const IterationError& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: " << e.what() << "\n";
    if (!e.history.empty()) {
      std::cerr << "  residual history (last entries):";
      const std::size_t first = e.history.size() > 6 ? e.history.size() - 6 : 0;
      for (std::size_t i = first; i < e.history.size(); ++i)
        std::cerr << ' ' << e.history[i];
      std::cerr << "\n";
    }
    return 2;
  } catch (const Error& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: internal error: " << e.what()
              << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "stage '" << ctx.stage << "' failed: internal error: " << e.what()
              << "\n";
    return 3;
  }
}
