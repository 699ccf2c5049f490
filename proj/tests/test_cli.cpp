// End-to-end tests of the mshom command-line tool: exit codes, artifact
// production, cache reuse, stage isolation, and the constant-medium accuracy
// contract.  The binary under test is located via MSHOM_CLI_PATH.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "mshom/io.hpp"

using namespace mshom;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() {
  static const fs::path root = [] {
    fs::path p = fs::temp_directory_path() / "mshom_cli_test";
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
  }();
  return root;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path p = scratch_root() / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& f) {
  std::ifstream in(f, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& f, const std::string& text) {
  std::ofstream out(f, std::ios::binary);
  out << text;
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

CliResult run_cli(const std::string& args, const fs::path& log_dir) {
  const fs::path out_log = log_dir / "stdout.log";
  const fs::path err_log = log_dir / "stderr.log";
  const std::string cmd = std::string(MSHOM_CLI_PATH) + " " + args + " > " +
                          out_log.string() + " 2> " + err_log.string();
  const int status = std::system(cmd.c_str());
  CliResult r;
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  r.exit_code = WEXITSTATUS(status);
  r.out = slurp(out_log);
  r.err = slurp(err_log);
  return r;
}

/// Constant-identity medium whose homogenized and oscillatory problems are the
/// same discrete system when the coarse mesh equals the fine mesh, so every
/// error-table entry must vanish to solver precision.
std::string constant_config(const std::string& extra_solver = "") {
  return R"({
  "case": "constant-identity",
  "medium": {
    "epsilon": 0.5,
    "inclusion": {"kind": "cube", "center": [0.5, 0.5, 0.5], "side": 0.5},
    "a": {"in": 1.0, "out": 1.0},
    "eta": {"in": 1.0, "out": 1.0},
    "mu": {"in": 1.0, "out": 1.0},
    "vc": {"in": 1.0, "out": 1.0},
    "N": 10
  },
  "cell_divisions": 4,
  "coarse_divisions": 8,
  "fine_divisions_per_cell": 4,
  "solver": {"dt": 0.005, "T": 0.02)" +
         extra_solver + R"(},
  "xc": "none",
  "source": {"amplitude": 1000.0},
  "output_stride": 1,
  "order": 2
})";
}

std::string cells_file_name(const fs::path& config_file) {
  const RunConfig c = load_config(config_file);
  return "cells-" + medium_hash(c.medium, c.cell_divisions) + ".snapshot";
}

} // namespace

TEST_CASE("cli: help and argument errors") {
  const fs::path dir = fresh_dir("args");

  CHECK(run_cli("--help", dir).exit_code == 0);
  CHECK(run_cli("cells --help", dir).exit_code == 0);

  // a subcommand is mandatory
  CHECK(run_cli("", dir).exit_code == 1);
  CHECK(run_cli("frobnicate", dir).exit_code == 1);

  // --config is mandatory for every subcommand; usage text must follow
  for (const char* sub : {"cells", "homogenize", "run", "reference",
                          "reconstruct", "compare", "all"}) {
    const CliResult r = run_cli(sub, dir);
    CHECK(r.exit_code == 1);
    CHECK(r.err.find("requires --config") != std::string::npos);
    CHECK(r.err.find("Usage:") != std::string::npos);
  }

  // out-of-range order is a parse error
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  CHECK(run_cli("reconstruct --config " + cfg.string() + " --order 3", dir).exit_code == 1);

  // missing config file
  const CliResult miss =
      run_cli("cells --config " + (dir / "nope.json").string(), dir);
  CHECK(miss.exit_code == 1);
  CHECK(miss.err.find("stage 'config'") != std::string::npos);
}

TEST_CASE("cli: config rejection names the offending key") {
  const fs::path dir = fresh_dir("badcfg");
  std::string cfg = constant_config();
  const auto pos = cfg.find("\"dt\"");
  REQUIRE(pos != std::string::npos);
  cfg.replace(pos, 4, "\"dtt\"");
  const fs::path file = dir / "bad.json";
  spit(file, cfg);

  const CliResult r = run_cli("all --config " + file.string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("solver.dtt") != std::string::npos);
  CHECK(r.err.find("unknown key") != std::string::npos);
}

TEST_CASE("cli: cells stage produces a snapshot and a manifest") {
  const fs::path dir = fresh_dir("cells");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  const fs::path out = dir / "artifacts";

  const CliResult r =
      run_cli("cells --config " + cfg.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 0);
  CHECK(fs::exists(out / cells_file_name(cfg)));
  CHECK(fs::exists(out / "manifest.json"));
  CHECK(r.out.find("[cells] done") != std::string::npos);

  // the snapshot must load back through the library
  const CellFunctionSet cells = load_cells(out / cells_file_name(cfg));
  CHECK(cells.mesh->divisions()[0] == 4);
}

TEST_CASE("cli: homogenize requires an existing cell snapshot") {
  const fs::path dir = fresh_dir("nocells");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  const fs::path out = dir / "artifacts";
  fs::create_directories(out);

  const CliResult r =
      run_cli("homogenize --config " + cfg.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("mshom cells") != std::string::npos);
}

TEST_CASE("cli: run requires tensors from a prior homogenize") {
  const fs::path dir = fresh_dir("notensors");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  const fs::path out = dir / "artifacts";
  fs::create_directories(out);

  const CliResult r =
      run_cli("run --config " + cfg.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("mshom homogenize") != std::string::npos);
}

TEST_CASE("cli: misaligned cell mesh fails as a configuration error") {
  const fs::path dir = fresh_dir("misaligned");
  std::string cfg = constant_config();
  const auto pos = cfg.find("\"cell_divisions\": 4");
  REQUIRE(pos != std::string::npos);
  cfg.replace(pos, 19, "\"cell_divisions\": 5");
  const fs::path file = dir / "c.json";
  spit(file, cfg);

  const CliResult r = run_cli(
      "cells --config " + file.string() + " --out " + (dir / "o").string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("stage 'cells'") != std::string::npos);
}

TEST_CASE("cli: solver nonconvergence exits with code 2 and residuals") {
  const fs::path dir = fresh_dir("nonconv");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config(", \"outer_tol\": 1e-30, \"outer_max\": 2"));
  const fs::path out = dir / "artifacts";

  // stage prerequisites first
  CHECK(run_cli("cells --config " + cfg.string() + " --out " + out.string(), dir)
            .exit_code == 0);
  CHECK(run_cli("homogenize --config " + cfg.string() + " --out " + out.string(), dir)
            .exit_code == 0);

  const CliResult r =
      run_cli("run --config " + cfg.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 2);
  CHECK(r.err.find("stage 'run'") != std::string::npos);
  CHECK(r.err.find("residual") != std::string::npos);
}

TEST_CASE("cli: full pipeline on a constant medium is exact and cacheable") {
  const fs::path dir = fresh_dir("pipeline");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  const fs::path out = dir / "artifacts";
  const fs::path cache = dir / "cache";

  const std::string base = " --config " + cfg.string() + " --out " + out.string() +
                           " --cache " + cache.string();
  const CliResult first = run_cli("all" + base, dir);
  CHECK(first.exit_code == 0);

  // every stage artifact exists
  const std::string cells_name = cells_file_name(cfg);
  for (const char* name : {"tensors.json", "trajectory.snapshot",
                           "reference.snapshot", "reconstruction.csv",
                           "reconstruction.vtk", "error_table.csv", "manifest.json"})
    CHECK(fs::exists(out / name));
  CHECK(fs::exists(out / cells_name));
  CHECK(fs::exists(cache / cells_name));

  // the homogenized and oscillatory systems coincide here, so every relative
  // error must be at solver precision
  const std::string table_text = slurp(out / "error_table.csv");
  std::istringstream lines(table_text);
  std::string line;
  std::getline(lines, line);
  CHECK(line == "column,order0,order1,order2");
  int rows = 0;
  while (std::getline(lines, line)) {
    std::istringstream cells_in(line);
    std::string cell;
    std::getline(cells_in, cell, ',');
    for (int k = 0; k < 3; ++k) {
      std::getline(cells_in, cell, ',');
      CHECK(std::stod(cell) <= 1e-8);
    }
    ++rows;
  }
  CHECK(rows == 4);

  // manifest carries the config echo, tensors, step diagnostics, and errors
  const std::string manifest = slurp(out / "manifest.json");
  CHECK(manifest.find("\"case\": \"constant-identity\"") != std::string::npos);
  CHECK(manifest.find("\"effective\"") != std::string::npos);
  CHECK(manifest.find("\"errors\"") != std::string::npos);

  // a rerun reuses the cached cells and reproduces the table byte for byte
  const std::string first_table = table_text;
  const CliResult second = run_cli("all" + base, dir);
  CHECK(second.exit_code == 0);
  CHECK(second.out.find("cache hit") != std::string::npos);
  CHECK(slurp(out / "error_table.csv") == first_table);
}

TEST_CASE("cli: reconstruct and compare run from serialized artifacts alone") {
  const fs::path dir = fresh_dir("isolation");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  const fs::path out = dir / "artifacts";

  CHECK(run_cli("all --config " + cfg.string() + " --out " + out.string(), dir)
            .exit_code == 0);
  const std::string cells_name = cells_file_name(cfg);

  // reconstruct: only the cell snapshot and the trajectory may be present
  const fs::path iso_r = fresh_dir("isolation_reconstruct");
  fs::copy_file(out / cells_name, iso_r / cells_name);
  fs::copy_file(out / "trajectory.snapshot", iso_r / "trajectory.snapshot");
  const CliResult rec = run_cli(
      "reconstruct --config " + cfg.string() + " --out " + iso_r.string() +
          " --order 1",
      dir);
  CHECK(rec.exit_code == 0);
  CHECK(fs::exists(iso_r / "reconstruction.csv"));
  CHECK(fs::exists(iso_r / "reconstruction.vtk"));

  // compare: cells, trajectory, and reference snapshots only
  const fs::path iso_c = fresh_dir("isolation_compare");
  fs::copy_file(out / cells_name, iso_c / cells_name);
  fs::copy_file(out / "trajectory.snapshot", iso_c / "trajectory.snapshot");
  fs::copy_file(out / "reference.snapshot", iso_c / "reference.snapshot");
  const CliResult cmp = run_cli(
      "compare --config " + cfg.string() + " --out " + iso_c.string(), dir);
  CHECK(cmp.exit_code == 0);
  CHECK(fs::exists(iso_c / "error_table.csv"));
  CHECK(slurp(iso_c / "error_table.csv") == slurp(out / "error_table.csv"));

  // missing trajectory artifact is reported as an input error
  const fs::path iso_m = fresh_dir("isolation_missing");
  fs::copy_file(out / cells_name, iso_m / cells_name);
  const CliResult missing = run_cli(
      "reconstruct --config " + cfg.string() + " --out " + iso_m.string(), dir);
  CHECK(missing.exit_code == 1);
  CHECK(missing.err.find("mshom run") != std::string::npos);
}

TEST_CASE("cli: compare rejects a reference computed for a different medium") {
  const fs::path dir = fresh_dir("mixed");
  const fs::path cfg = dir / "c.json";
  spit(cfg, constant_config());
  const fs::path out = dir / "artifacts";
  CHECK(run_cli("all --config " + cfg.string() + " --out " + out.string(), dir)
            .exit_code == 0);

  // second config: same shapes, different coefficient -> different hash
  std::string other = constant_config();
  const auto pos = other.find("\"vc\": {\"in\": 1.0");
  REQUIRE(pos != std::string::npos);
  other.replace(pos, 16, "\"vc\": {\"in\": 0.5");
  const fs::path cfg2 = dir / "c2.json";
  spit(cfg2, other);

  // provide cells for the second medium so the mismatch is caught at the
  // reference check rather than at cell lookup
  CHECK(run_cli("cells --config " + cfg2.string() + " --out " + out.string(), dir)
            .exit_code == 0);
  const CliResult r = run_cli(
      "compare --config " + cfg2.string() + " --out " + out.string(), dir);
  CHECK(r.exit_code == 1);
  CHECK(r.err.find("different medium") != std::string::npos);
}
