#pragma once

#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mshom/coupled.hpp"
#include "mshom/effective.hpp"
#include "mshom/media.hpp"
#include "mshom/metrics.hpp"
#include "mshom/reference.hpp"

namespace mshom {

/// Everything one pipeline invocation needs, loadable from a strict JSON file:
/// unknown keys are rejected with their dotted path, missing keys fall back to
/// these defaults.  Phase tensors are given per coefficient as {"in", "out"}
/// with a number (isotropic) or a 3-array (diagonal) per phase.
struct RunConfig {
  std::string case_id = "custom";
  PeriodicMedium medium;
  int cell_divisions = 16;        ///< unit-cell mesh divisions per axis
  int coarse_divisions = 8;       ///< coarse run mesh divisions per axis
  int fine_divisions_per_cell = 4;///< reference mesh divisions per cell
  SolverParams solver;            ///< divisions mirrors coarse_divisions
  XcSpec::Kind xc = XcSpec::Kind::None;
  double source_amplitude = 1000.0;
  int output_stride = 1;          ///< error table sampled every this many steps
  int order = 2;                  ///< expansion order for single-order stages

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Parses and validates a config from JSON text; `where` names the source in
/// error messages.  Unknown keys anywhere in the document raise ConfigError
/// with the dotted field path.
RunConfig parse_config(const std::string& json_text, const std::string& where = "config");
RunConfig load_config(const std::filesystem::path& file);

/// Canonical JSON serialization (sorted keys, diagonal tensors as 3-arrays);
/// parse_config(config_to_json(c)) reproduces c exactly.
std::string config_to_json(const RunConfig& config);
void write_config(const RunConfig& config, const std::filesystem::path& file);

/// Content hash (FNV-1a 64, 16 hex digits) of the canonicalized medium
/// together with the cell mesh resolution; the cache key for cell snapshots.
std::string medium_hash(const PeriodicMedium& medium, int cell_divisions);

/// Record of one pipeline run: the config echo plus whatever stages ran.
struct RunManifest {
  RunConfig config;
  std::optional<EffectiveTensors> tensors;
  std::vector<StepDiagnostics> coarse_steps;
  std::vector<StepDiagnostics> reference_steps;
  std::optional<ErrorTable> errors;
  std::map<std::string, double> timings_seconds;
};

std::string manifest_to_json(const RunManifest& manifest);
void write_manifest(const RunManifest& manifest, const std::filesystem::path& file);

// --- effective tensors as JSON ---

std::string tensors_to_json(const EffectiveTensors& tensors);
void write_tensors(const EffectiveTensors& tensors, const std::filesystem::path& file);
EffectiveTensors load_tensors(const std::filesystem::path& file);

// --- error table rendering ---

/// Machine-readable table: header `column,order0,order1,order2`, one row per
/// norm column, values printed with full double precision (deterministic
/// byte-for-byte for identical tables).
std::string error_table_to_csv(const ErrorTable& table);
/// Human-readable aligned table for terminal output.
std::string format_error_table(const ErrorTable& table);

// --- binary snapshots ---
//
// Versioned single-file artifacts ("MSHM" magic, format version, artifact
// kind, then the payload in the writing machine's native byte order).  Loads
// verify magic, version, kind, and every size prefix; a short read or a size
// that contradicts the stored mesh raises SnapshotError.

void save_cells(const CellFunctionSet& cells, const std::filesystem::path& file);
CellFunctionSet load_cells(const std::filesystem::path& file);

void save_trajectory(const HomogenizedTrajectory& trajectory,
                     const std::filesystem::path& file);
HomogenizedTrajectory load_trajectory(const std::filesystem::path& file);

void save_reference(const ReferenceTrajectory& reference,
                    const std::filesystem::path& file);
ReferenceTrajectory load_reference(const std::filesystem::path& file);

// --- CSV field export ---

/// Row-oriented dof dump with header `field,step,t,index,value`; each row
/// carries one value cell per component (1 scalar or edge circulation,
/// 2 complex re/im, 3 vector x/y/z).  Values print with full precision, so
/// a read-back reproduces every double exactly.
class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path& file);
  ~CsvWriter();
  CsvWriter(const CsvWriter&) = delete;
  CsvWriter& operator=(const CsvWriter&) = delete;

  void add(const std::string& field, int step, double t, const ScalarField& f);
  void add(const std::string& field, int step, double t, const ComplexField& f);
  void add(const std::string& field, int step, double t, const EdgeField& f);
  void add(const std::string& field, int step, double t, const NodalVectorField& f);

  /// Flushes and closes; throws Error on I/O failure.  The destructor closes
  /// silently if close() was not called.
  void close();

private:
  void row(const std::string& field, int step, double t, long index,
           const double* values, int count);
  std::filesystem::path path_;
  std::ofstream out_;
};

struct CsvTable {
  struct Row {
    std::string field;
    int step = 0;
    double t = 0.0;
    long index = 0;
    std::vector<double> values;
  };
  std::vector<Row> rows;
};

/// Reads a file written by CsvWriter; throws Error on malformed content.
CsvTable read_csv(const std::filesystem::path& file);

// --- VTK field export ---

struct VtkScalar {
  std::string name;
  VectorXd values; // one per node, mesh node order
};
struct VtkVector {
  std::string name;
  Eigen::Matrix<double, Eigen::Dynamic, 3> values; // row per node
};

/// Legacy ASCII structured-grid file (point data on the mesh nodes); values
/// print with full precision.  Throws Error on size mismatch or I/O failure.
void write_vtk(const std::filesystem::path& file, const BoxMesh& mesh,
               const std::vector<VtkScalar>& scalars,
               const std::vector<VtkVector>& vectors,
               const std::string& title = "mshom fields");

} // namespace mshom
