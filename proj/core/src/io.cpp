#include "mshom/io.hpp"

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <iomanip>
#include <initializer_list>
#include <sstream>

#include <json.hpp>

namespace mshom {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string join_path(const std::string& prefix, const std::string& key) {
  return prefix.empty() ? key : prefix + "." + key;
}

[[noreturn]] void bad(const std::string& path, const std::string& msg) {
  throw ConfigError(path, msg);
}

void check_keys(const json& obj, const std::string& prefix,
                std::initializer_list<const char*> allowed) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed)
      if (it.key() == a) {
        ok = true;
        break;
      }
    if (!ok) bad(join_path(prefix, it.key()), "unknown key");
  }
}

const json& require_object(const json& v, const std::string& path) {
  if (!v.is_object()) bad(path, "expected a JSON object");
  return v;
}

double get_num(const json& obj, const std::string& prefix, const char* key,
               double fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number()) bad(join_path(prefix, key), "expected a number");
  return v.get<double>();
}

int get_int(const json& obj, const std::string& prefix, const char* key,
            int fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_number_integer()) bad(join_path(prefix, key), "expected an integer");
  return v.get<int>();
}

std::string get_str(const json& obj, const std::string& prefix, const char* key,
                    const std::string& fallback) {
  if (!obj.contains(key)) return fallback;
  const json& v = obj.at(key);
  if (!v.is_string()) bad(join_path(prefix, key), "expected a string");
  return v.get<std::string>();
}

Mat3 parse_phase_tensor(const json& v, const std::string& path, const Mat3& fallback) {
  if (v.is_null()) return fallback;
  if (v.is_number()) return v.get<double>() * Mat3::Identity();
  if (v.is_array() && v.size() == 3) {
    Vec3 d;
    for (int i = 0; i < 3; ++i) {
      if (!v[i].is_number()) bad(path, "expected numbers in the 3-array");
      d[i] = v[i].get<double>();
    }
    return d.asDiagonal();
  }
  bad(path, "expected a number (isotropic) or an array of 3 numbers (diagonal)");
}

void parse_phase_pair(const json& medium_obj, const std::string& prefix,
                      const char* key, Mat3& in, Mat3& out) {
  if (!medium_obj.contains(key)) return;
  const std::string path = join_path(prefix, key);
  const json& pair = require_object(medium_obj.at(key), path);
  check_keys(pair, path, {"in", "out"});
  if (pair.contains("in")) in = parse_phase_tensor(pair.at("in"), path + ".in", in);
  if (pair.contains("out")) out = parse_phase_tensor(pair.at("out"), path + ".out", out);
}

json phase_tensor_json(const Mat3& m, const std::string& path) {
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j && m(i, j) != 0.0)
        bad(path, "only diagonal phase tensors serialize to config JSON");
  return json::array({m(0, 0), m(1, 1), m(2, 2)});
}

PeriodicMedium parse_medium(const json& obj, const std::string& prefix) {
  check_keys(obj, prefix, {"epsilon", "inclusion", "a", "eta", "mu", "vc", "N"});
  PeriodicMedium m;
  m.epsilon = get_num(obj, prefix, "epsilon", m.epsilon);
  if (obj.contains("inclusion")) {
    const std::string ipath = join_path(prefix, "inclusion");
    const json& inc = require_object(obj.at("inclusion"), ipath);
    check_keys(inc, ipath, {"kind", "center", "side", "axis"});
    const std::string kind = get_str(inc, ipath, "kind", "cube");
    if (kind == "cube")
      m.inclusion.kind = Inclusion::Kind::Cube;
    else if (kind == "slab")
      m.inclusion.kind = Inclusion::Kind::Slab;
    else
      bad(ipath + ".kind", "expected \"cube\" or \"slab\"");
    if (inc.contains("center")) {
      const json& c = inc.at("center");
      if (!c.is_array() || c.size() != 3) bad(ipath + ".center", "expected an array of 3 numbers");
      for (int i = 0; i < 3; ++i) {
        if (!c[i].is_number()) bad(ipath + ".center", "expected an array of 3 numbers");
        m.inclusion.center[i] = c[i].get<double>();
      }
    }
    m.inclusion.side = get_num(inc, ipath, "side", m.inclusion.side);
    m.inclusion.axis = get_int(inc, ipath, "axis", m.inclusion.axis);
  }
  parse_phase_pair(obj, prefix, "a", m.a_in, m.a_out);
  parse_phase_pair(obj, prefix, "eta", m.eta_in, m.eta_out);
  parse_phase_pair(obj, prefix, "mu", m.mu_in, m.mu_out);
  if (obj.contains("vc")) {
    const std::string vpath = join_path(prefix, "vc");
    const json& vc = require_object(obj.at("vc"), vpath);
    check_keys(vc, vpath, {"in", "out"});
    m.vc_in = get_num(vc, vpath, "in", m.vc_in);
    m.vc_out = get_num(vc, vpath, "out", m.vc_out);
  }
  m.N = get_num(obj, prefix, "N", m.N);
  return m;
}

json medium_json(const PeriodicMedium& m) {
  json inc;
  inc["kind"] = m.inclusion.kind == Inclusion::Kind::Cube ? "cube" : "slab";
  inc["center"] = json::array({m.inclusion.center[0], m.inclusion.center[1],
                               m.inclusion.center[2]});
  inc["side"] = m.inclusion.side;
  inc["axis"] = m.inclusion.axis;
  json j;
  j["epsilon"] = m.epsilon;
  j["inclusion"] = inc;
  j["a"] = {{"in", phase_tensor_json(m.a_in, "medium.a.in")},
            {"out", phase_tensor_json(m.a_out, "medium.a.out")}};
  j["eta"] = {{"in", phase_tensor_json(m.eta_in, "medium.eta.in")},
              {"out", phase_tensor_json(m.eta_out, "medium.eta.out")}};
  j["mu"] = {{"in", phase_tensor_json(m.mu_in, "medium.mu.in")},
             {"out", phase_tensor_json(m.mu_out, "medium.mu.out")}};
  j["vc"] = {{"in", m.vc_in}, {"out", m.vc_out}};
  j["N"] = m.N;
  return j;
}

const char* xc_name(XcSpec::Kind k) {
  return k == XcSpec::Kind::CubeRoot ? "cube-root" : "none";
}

json config_json(const RunConfig& c) {
  json j;
  j["case"] = c.case_id;
  j["medium"] = medium_json(c.medium);
  j["cell_divisions"] = c.cell_divisions;
  j["coarse_divisions"] = c.coarse_divisions;
  j["fine_divisions_per_cell"] = c.fine_divisions_per_cell;
  j["solver"] = {{"dt", c.solver.dt},
                 {"T", c.solver.T},
                 {"outer_tol", c.solver.outer_tol},
                 {"outer_max", c.solver.outer_max},
                 {"inner_tol", c.solver.inner_tol},
                 {"inner_max", c.solver.inner_max},
                 {"mixing_alpha", c.solver.mixing_alpha}};
  j["xc"] = xc_name(c.xc);
  j["source"] = {{"amplitude", c.source_amplitude}};
  j["output_stride"] = c.output_stride;
  j["order"] = c.order;
  return j;
}

json mat3_json(const Mat3& m) {
  json rows = json::array();
  for (int i = 0; i < 3; ++i)
    rows.push_back(json::array({m(i, 0), m(i, 1), m(i, 2)}));
  return rows;
}

Mat3 parse_mat3(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 3) bad(path, "expected a 3x3 array");
  Mat3 m;
  for (int i = 0; i < 3; ++i) {
    const json& row = v[i];
    if (!row.is_array() || row.size() != 3) bad(path, "expected a 3x3 array");
    for (int j = 0; j < 3; ++j) {
      if (!row[j].is_number()) bad(path, "expected a 3x3 array of numbers");
      m(i, j) = row[j].get<double>();
    }
  }
  return m;
}

json tensors_json(const EffectiveTensors& t) {
  json j;
  j["A_hat"] = mat3_json(t.A_hat);
  j["eta_hat"] = mat3_json(t.eta_hat);
  j["mu_hat"] = mat3_json(t.mu_hat);
  j["inv_eta_hat"] = mat3_json(t.inv_eta_hat);
  j["inv_mu_hat"] = mat3_json(t.inv_mu_hat);
  j["mean_Vc"] = t.mean_Vc;
  j["provenance"] = to_string(t.provenance);
  j["cell_divisions"] = t.cell_divisions;
  j["asymmetry"] = t.asymmetry;
  return j;
}

json diagnostics_json(const std::vector<StepDiagnostics>& steps) {
  json arr = json::array();
  for (const auto& d : steps) {
    json e;
    e["t"] = d.t;
    e["outer_iterations"] = d.outer_iterations;
    e["inner_iterations"] = d.inner_iterations;
    e["outer_residual"] = d.outer_residual;
    e["inner_residual"] = d.inner_residual;
    e["psi_norm"] = d.psi_norm;
    e["gauss_residual"] = d.gauss_residual;
    arr.push_back(std::move(e));
  }
  return arr;
}

json table_json(const ErrorTable& t) {
  json j;
  j["rho_L2"] = json::array({t.rho_L2[0], t.rho_L2[1], t.rho_L2[2]});
  j["rho_H1"] = json::array({t.rho_H1[0], t.rho_H1[1], t.rho_H1[2]});
  j["E_L2"] = json::array({t.E_L2[0], t.E_L2[1], t.E_L2[2]});
  j["E_Hcurl"] = json::array({t.E_Hcurl[0], t.E_Hcurl[1], t.E_Hcurl[2]});
  j["reference_norms"] = {{"rho_L2", t.ref_rho_L2},
                          {"rho_H1", t.ref_rho_H1},
                          {"E_L2", t.ref_E_L2},
                          {"E_Hcurl", t.ref_E_Hcurl}};
  return j;
}

void write_text(const std::string& text, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot open " + file.string() + " for writing");
  out << text;
  out.flush();
  if (!out) throw Error("write failure on " + file.string());
}

std::string read_text(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ------------------------------------------------------------ binary snapshots

constexpr char kMagic[4] = {'M', 'S', 'H', 'M'};
constexpr std::uint32_t kSnapshotVersion = 1;

enum class SnapshotKind : std::uint32_t { Cells = 1, Trajectory = 2, Reference = 3 };

const char* kind_name(std::uint32_t k) {
  switch (static_cast<SnapshotKind>(k)) {
    case SnapshotKind::Cells: return "cell functions";
    case SnapshotKind::Trajectory: return "trajectory";
    case SnapshotKind::Reference: return "reference trajectory";
    default: return "unknown";
  }
}

class BinWriter {
public:
  explicit BinWriter(const std::filesystem::path& p)
      : path_(p.string()), out_(p, std::ios::binary) {
    if (!out_) throw SnapshotError("cannot open " + path_ + " for writing");
  }
  void raw(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!out_) throw SnapshotError("write failure on " + path_);
  }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void i32(std::int32_t v) { raw(&v, sizeof v); }
  void i64(std::int64_t v) { raw(&v, sizeof v); }
  void f64(double v) { raw(&v, sizeof v); }
  void header(SnapshotKind kind) {
    raw(kMagic, 4);
    u32(kSnapshotVersion);
    u32(static_cast<std::uint32_t>(kind));
  }
  void mesh(const BoxMesh& m) {
    for (int a = 0; a < 3; ++a) f64(m.origin()[a]);
    for (int a = 0; a < 3; ++a) f64(m.extents()[a]);
    for (int a = 0; a < 3; ++a) i32(m.divisions()[a]);
  }
  void vec(const VectorXd& v) {
    i64(v.size());
    raw(v.data(), sizeof(double) * static_cast<std::size_t>(v.size()));
  }
  void cvec(const VectorXcd& v) {
    i64(v.size());
    raw(v.data(), sizeof(Complex) * static_cast<std::size_t>(v.size()));
  }
  void mat3n(const Eigen::Matrix<double, Eigen::Dynamic, 3>& m) {
    i64(m.rows());
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  void mat3(const Mat3& m) { raw(m.data(), 9 * sizeof(double)); }
  void close() {
    out_.flush();
    if (!out_) throw SnapshotError("write failure on " + path_);
    out_.close();
  }

private:
  std::string path_;
  std::ofstream out_;
};

class BinReader {
public:
  explicit BinReader(const std::filesystem::path& p)
      : path_(p.string()), in_(p, std::ios::binary) {
    if (!in_) throw SnapshotError("cannot open " + path_);
  }
  void raw(void* p, std::size_t n) {
    in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n)
      throw SnapshotError("truncated snapshot " + path_);
  }
  std::uint32_t u32() {
    std::uint32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::int32_t i32() {
    std::int32_t v;
    raw(&v, sizeof v);
    return v;
  }
  std::int64_t i64() {
    std::int64_t v;
    raw(&v, sizeof v);
    return v;
  }
  double f64() {
    double v;
    raw(&v, sizeof v);
    return v;
  }
  void header(SnapshotKind expected) {
    char m[4];
    raw(m, 4);
    if (std::memcmp(m, kMagic, 4) != 0)
      throw SnapshotError(path_ + " is not a snapshot file");
    const std::uint32_t v = u32();
    if (v != kSnapshotVersion)
      throw SnapshotError(path_ + ": unsupported snapshot version " + std::to_string(v));
    const std::uint32_t k = u32();
    if (k != static_cast<std::uint32_t>(expected))
      throw SnapshotError(path_ + ": snapshot holds " + kind_name(k) + ", expected " +
                          kind_name(static_cast<std::uint32_t>(expected)));
  }
  MeshPtr mesh() {
    Vec3 origin, extents;
    std::array<int, 3> div{};
    for (int a = 0; a < 3; ++a) origin[a] = f64();
    for (int a = 0; a < 3; ++a) extents[a] = f64();
    for (int a = 0; a < 3; ++a) div[a] = i32();
    try {
      return std::make_shared<const BoxMesh>(BoxMesh::create(origin, extents, div));
    } catch (const Error& e) {
      throw SnapshotError(path_ + ": corrupt mesh header (" + e.what() + ")");
    }
  }
  VectorXd vec(std::int64_t expected) {
    const std::int64_t n = i64();
    if (n != expected) size_mismatch(n, expected);
    VectorXd v(n);
    raw(v.data(), sizeof(double) * static_cast<std::size_t>(n));
    return v;
  }
  VectorXcd cvec(std::int64_t expected) {
    const std::int64_t n = i64();
    if (n != expected) size_mismatch(n, expected);
    VectorXcd v(n);
    raw(v.data(), sizeof(Complex) * static_cast<std::size_t>(n));
    return v;
  }
  Eigen::Matrix<double, Eigen::Dynamic, 3> mat3n(std::int64_t expected) {
    const std::int64_t n = i64();
    if (n != expected) size_mismatch(n, expected);
    Eigen::Matrix<double, Eigen::Dynamic, 3> m(n, 3);
    raw(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
    return m;
  }
  Mat3 mat3() {
    Mat3 m;
    raw(m.data(), 9 * sizeof(double));
    return m;
  }
  std::int64_t count(const char* what, std::int64_t max) {
    const std::int64_t n = i64();
    if (n < 0 || n > max)
      throw SnapshotError(path_ + ": implausible " + what + " count " + std::to_string(n));
    return n;
  }
  const std::string& path() const { return path_; }

private:
  [[noreturn]] void size_mismatch(std::int64_t got, std::int64_t expected) {
    throw SnapshotError(path_ + ": field has " + std::to_string(got) +
                        " entries, the mesh implies " + std::to_string(expected));
  }
  std::string path_;
  std::ifstream in_;
};

void write_trajectory_payload(BinWriter& w, const HomogenizedTrajectory& t) {
  if (!t.mesh) throw SnapshotError("trajectory snapshot: trajectory has no mesh");
  w.mesh(*t.mesh);
  w.f64(t.dt);
  w.i64(static_cast<std::int64_t>(t.states.size()));
  for (const auto& st : t.states) {
    w.cvec(st.psi.values);
    w.vec(st.rho.values);
    w.vec(st.E.values);
    w.vec(st.E_dot.values);
    w.mat3n(st.H.values);
    w.mat3n(st.H_dot.values);
    w.mat3n(st.Jq.values);
    w.f64(st.t);
  }
  w.i64(static_cast<std::int64_t>(t.diagnostics.size()));
  for (const auto& d : t.diagnostics) {
    w.f64(d.t);
    w.i32(d.outer_iterations);
    w.i32(d.inner_iterations);
    w.f64(d.outer_residual);
    w.f64(d.inner_residual);
    w.f64(d.psi_norm);
    w.f64(d.gauss_residual);
  }
}

HomogenizedTrajectory read_trajectory_payload(BinReader& r) {
  HomogenizedTrajectory t;
  t.mesh = r.mesh();
  t.dt = r.f64();
  const std::int64_t nn = t.mesh->node_count();
  const std::int64_t ne = t.mesh->edge_count();
  const std::int64_t n_states = r.count("state", 1 << 24);
  t.states.reserve(static_cast<std::size_t>(n_states));
  for (std::int64_t i = 0; i < n_states; ++i) {
    HomogenizedState st;
    st.psi = ComplexField(t.mesh, r.cvec(nn));
    st.rho = ScalarField(t.mesh, r.vec(nn));
    st.E = EdgeField(t.mesh, r.vec(ne));
    st.E_dot = EdgeField(t.mesh, r.vec(ne));
    st.H = NodalVectorField(t.mesh);
    st.H.values = r.mat3n(nn);
    st.H_dot = NodalVectorField(t.mesh);
    st.H_dot.values = r.mat3n(nn);
    st.Jq = NodalVectorField(t.mesh);
    st.Jq.values = r.mat3n(nn);
    st.t = r.f64();
    t.states.push_back(std::move(st));
  }
  const std::int64_t n_diag = r.count("diagnostic", 1 << 24);
  t.diagnostics.reserve(static_cast<std::size_t>(n_diag));
  for (std::int64_t i = 0; i < n_diag; ++i) {
    StepDiagnostics d;
    d.t = r.f64();
    d.outer_iterations = r.i32();
    d.inner_iterations = r.i32();
    d.outer_residual = r.f64();
    d.inner_residual = r.f64();
    d.psi_norm = r.f64();
    d.gauss_residual = r.f64();
    t.diagnostics.push_back(d);
  }
  return t;
}

void write_medium_payload(BinWriter& w, const PeriodicMedium& m) {
  w.f64(m.epsilon);
  w.u32(m.inclusion.kind == Inclusion::Kind::Cube ? 0 : 1);
  for (int a = 0; a < 3; ++a) w.f64(m.inclusion.center[a]);
  w.f64(m.inclusion.side);
  w.i32(m.inclusion.axis);
  w.mat3(m.a_in);
  w.mat3(m.a_out);
  w.mat3(m.eta_in);
  w.mat3(m.eta_out);
  w.mat3(m.mu_in);
  w.mat3(m.mu_out);
  w.f64(m.vc_in);
  w.f64(m.vc_out);
  w.f64(m.N);
}

PeriodicMedium read_medium_payload(BinReader& r) {
  PeriodicMedium m;
  m.epsilon = r.f64();
  const std::uint32_t kind = r.u32();
  if (kind > 1)
    throw SnapshotError(r.path() + ": unknown inclusion kind " + std::to_string(kind));
  m.inclusion.kind = kind == 0 ? Inclusion::Kind::Cube : Inclusion::Kind::Slab;
  for (int a = 0; a < 3; ++a) m.inclusion.center[a] = r.f64();
  m.inclusion.side = r.f64();
  m.inclusion.axis = r.i32();
  m.a_in = r.mat3();
  m.a_out = r.mat3();
  m.eta_in = r.mat3();
  m.eta_out = r.mat3();
  m.mu_in = r.mat3();
  m.mu_out = r.mat3();
  m.vc_in = r.f64();
  m.vc_out = r.f64();
  m.N = r.f64();
  return m;
}

std::string sanitize_name(const std::string& name, const char* what) {
  if (name.empty()) throw Error(std::string(what) + " name must not be empty");
  for (char c : name)
    if (c == ',' || c == '\n' || c == '\r' || c == ' ')
      throw Error(std::string(what) + " name '" + name +
                  "' must not contain spaces, commas, or newlines");
  return name;
}

} // namespace

// ------------------------------------------------------------ configuration

void RunConfig::validate() const {
  if (case_id.empty()) throw ConfigError("case", "must not be empty");
  medium.validate();
  if (cell_divisions < 1) throw ConfigError("cell_divisions", "must be at least 1");
  if (coarse_divisions < 2) throw ConfigError("coarse_divisions", "must be at least 2");
  if (fine_divisions_per_cell < 1)
    throw ConfigError("fine_divisions_per_cell", "must be at least 1");
  if (solver.divisions != coarse_divisions)
    throw ConfigError("coarse_divisions", "solver.divisions fell out of sync");
  solver.validate();
  if (!std::isfinite(source_amplitude))
    throw ConfigError("source.amplitude", "must be finite");
  if (output_stride < 1) throw ConfigError("output_stride", "must be at least 1");
  if (solver.step_count() % output_stride != 0)
    throw ConfigError("output_stride",
                      "must divide the number of time steps (" +
                          std::to_string(solver.step_count()) + ")");
  if (order < 0 || order > 2) throw ConfigError("order", "must be 0, 1, or 2");
}

RunConfig parse_config(const std::string& json_text, const std::string& where) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(where, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError(where, "top level must be a JSON object");
  check_keys(j, "", {"case", "medium", "cell_divisions", "coarse_divisions",
                     "fine_divisions_per_cell", "solver", "xc", "source",
                     "output_stride", "order"});
  RunConfig c;
  c.case_id = get_str(j, "", "case", c.case_id);
  if (j.contains("medium"))
    c.medium = parse_medium(require_object(j.at("medium"), "medium"), "medium");
  c.cell_divisions = get_int(j, "", "cell_divisions", c.cell_divisions);
  c.coarse_divisions = get_int(j, "", "coarse_divisions", c.coarse_divisions);
  c.fine_divisions_per_cell =
      get_int(j, "", "fine_divisions_per_cell", c.fine_divisions_per_cell);
  if (j.contains("solver")) {
    const json& s = require_object(j.at("solver"), "solver");
    check_keys(s, "solver", {"dt", "T", "outer_tol", "outer_max", "inner_tol",
                             "inner_max", "mixing_alpha"});
    c.solver.dt = get_num(s, "solver", "dt", c.solver.dt);
    c.solver.T = get_num(s, "solver", "T", c.solver.T);
    c.solver.outer_tol = get_num(s, "solver", "outer_tol", c.solver.outer_tol);
    c.solver.outer_max = get_int(s, "solver", "outer_max", c.solver.outer_max);
    c.solver.inner_tol = get_num(s, "solver", "inner_tol", c.solver.inner_tol);
    c.solver.inner_max = get_int(s, "solver", "inner_max", c.solver.inner_max);
    c.solver.mixing_alpha = get_num(s, "solver", "mixing_alpha", c.solver.mixing_alpha);
  }
  const std::string xc = get_str(j, "", "xc", xc_name(c.xc));
  if (xc == "none")
    c.xc = XcSpec::Kind::None;
  else if (xc == "cube-root")
    c.xc = XcSpec::Kind::CubeRoot;
  else
    bad("xc", "expected \"none\" or \"cube-root\"");
  if (j.contains("source")) {
    const json& s = require_object(j.at("source"), "source");
    check_keys(s, "source", {"amplitude"});
    c.source_amplitude = get_num(s, "source", "amplitude", c.source_amplitude);
  }
  c.output_stride = get_int(j, "", "output_stride", c.output_stride);
  c.order = get_int(j, "", "order", c.order);
  c.solver.divisions = c.coarse_divisions;
  c.validate();
  return c;
}

RunConfig load_config(const std::filesystem::path& file) {
  std::string text;
  try {
    text = read_text(file);
  } catch (const Error& e) {
    throw ConfigError(file.string(), e.what());
  }
  return parse_config(text, file.string());
}

std::string config_to_json(const RunConfig& config) {
  return config_json(config).dump(2) + "\n";
}

void write_config(const RunConfig& config, const std::filesystem::path& file) {
  write_text(config_to_json(config), file);
}

std::string medium_hash(const PeriodicMedium& medium, int cell_divisions) {
  const std::string canonical =
      medium_json(medium).dump() + "\n" + std::to_string(cell_divisions);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ------------------------------------------------------------ manifest

std::string manifest_to_json(const RunManifest& manifest) {
  json j;
  j["config"] = config_json(manifest.config);
  if (manifest.tensors) j["effective"] = tensors_json(*manifest.tensors);
  j["coarse_steps"] = diagnostics_json(manifest.coarse_steps);
  j["reference_steps"] = diagnostics_json(manifest.reference_steps);
  if (manifest.errors) j["errors"] = table_json(*manifest.errors);
  j["timings_seconds"] = manifest.timings_seconds;
  return j.dump(2) + "\n";
}

void write_manifest(const RunManifest& manifest, const std::filesystem::path& file) {
  write_text(manifest_to_json(manifest), file);
}

// ------------------------------------------------------------ tensors JSON

std::string tensors_to_json(const EffectiveTensors& tensors) {
  return tensors_json(tensors).dump(2) + "\n";
}

void write_tensors(const EffectiveTensors& tensors, const std::filesystem::path& file) {
  write_text(tensors_to_json(tensors), file);
}

EffectiveTensors load_tensors(const std::filesystem::path& file) {
  json j;
  try {
    j = json::parse(read_text(file));
  } catch (const json::parse_error& e) {
    throw ConfigError(file.string(), std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError(file.string(), "top level must be a JSON object");
  check_keys(j, "tensors", {"A_hat", "eta_hat", "mu_hat", "inv_eta_hat", "inv_mu_hat",
                            "mean_Vc", "provenance", "cell_divisions", "asymmetry"});
  EffectiveTensors t;
  if (j.contains("A_hat")) t.A_hat = parse_mat3(j.at("A_hat"), "tensors.A_hat");
  if (j.contains("eta_hat")) t.eta_hat = parse_mat3(j.at("eta_hat"), "tensors.eta_hat");
  if (j.contains("mu_hat")) t.mu_hat = parse_mat3(j.at("mu_hat"), "tensors.mu_hat");
  if (j.contains("inv_eta_hat"))
    t.inv_eta_hat = parse_mat3(j.at("inv_eta_hat"), "tensors.inv_eta_hat");
  if (j.contains("inv_mu_hat"))
    t.inv_mu_hat = parse_mat3(j.at("inv_mu_hat"), "tensors.inv_mu_hat");
  t.mean_Vc = get_num(j, "tensors", "mean_Vc", t.mean_Vc);
  const std::string prov = get_str(j, "tensors", "provenance", to_string(t.provenance));
  if (prov == "periodic")
    t.provenance = ThetaVariant::Periodic;
  else if (prov == "dirichlet")
    t.provenance = ThetaVariant::Dirichlet;
  else
    bad("tensors.provenance", "expected \"periodic\" or \"dirichlet\"");
  t.cell_divisions = get_int(j, "tensors", "cell_divisions", t.cell_divisions);
  if (j.contains("asymmetry")) {
    const json& a = require_object(j.at("asymmetry"), "tensors.asymmetry");
    for (auto it = a.begin(); it != a.end(); ++it) {
      if (!it.value().is_number()) bad("tensors.asymmetry", "expected numeric values");
      t.asymmetry[it.key()] = it.value().get<double>();
    }
  }
  return t;
}

// ------------------------------------------------------------ error table text

std::string error_table_to_csv(const ErrorTable& table) {
  std::ostringstream out;
  out << "column,order0,order1,order2\n";
  const auto row = [&](const char* name, const std::array<double, 3>& v) {
    out << name << ',' << fmt17(v[0]) << ',' << fmt17(v[1]) << ',' << fmt17(v[2])
        << '\n';
  };
  row("rho_L2", table.rho_L2);
  row("rho_H1", table.rho_H1);
  row("E_L2", table.E_L2);
  row("E_Hcurl", table.E_Hcurl);
  return out.str();
}

std::string format_error_table(const ErrorTable& table) {
  std::ostringstream out;
  out << std::left << std::setw(22) << "relative error"
      << std::right << std::setw(14) << "order 0" << std::setw(14) << "order 1"
      << std::setw(14) << "order 2" << '\n';
  const auto row = [&](const char* name, const std::array<double, 3>& v) {
    out << std::left << std::setw(22) << name << std::right;
    for (double x : v) {
      char buf[24];
      std::snprintf(buf, sizeof buf, "%.6e", x);
      out << std::setw(14) << buf;
    }
    out << '\n';
  };
  row("rho  L2(0,T;L2)", table.rho_L2);
  row("rho  L2(0,T;H1)", table.rho_H1);
  row("E    L2(0,T;(L2)^3)", table.E_L2);
  row("E    L2(0,T;Hcurl)", table.E_Hcurl);
  return out.str();
}

// ------------------------------------------------------------ snapshots

void save_cells(const CellFunctionSet& cells, const std::filesystem::path& file) {
  if (!cells.mesh) throw SnapshotError("cells snapshot: set has no mesh");
  BinWriter w(file);
  w.header(SnapshotKind::Cells);
  w.mesh(*cells.mesh);
  w.u32(cells.tensor_family == ThetaVariant::Dirichlet ? 1 : 0);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) w.vec(cells.theta1_periodic[c][k].values);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) w.vec(cells.theta1_dirichlet[c][k].values);
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) w.vec(cells.theta2[c][k][l].values);
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) w.vec(cells.Theta1[f][k].values);
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) w.vec(cells.Theta2[f][k].values);
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) w.vec(cells.zeta2[f][k].values);
  w.f64(cells.diagnostics.max_abs_periodic_mean);
  w.f64(cells.diagnostics.max_divergence_rel);
  w.f64(cells.diagnostics.interior_family_gap_rel);
  w.i64(cells.diagnostics.total_iterations);
  w.u32(cells.diagnostics.used_direct_fallback ? 1 : 0);
  w.close();
}

CellFunctionSet load_cells(const std::filesystem::path& file) {
  BinReader r(file);
  r.header(SnapshotKind::Cells);
  CellFunctionSet s;
  s.mesh = r.mesh();
  const std::int64_t nn = s.mesh->node_count();
  const std::int64_t ne = s.mesh->edge_count();
  const std::uint32_t fam = r.u32();
  if (fam > 1)
    throw SnapshotError(r.path() + ": unknown corrector family tag " +
                        std::to_string(fam));
  s.tensor_family = fam == 1 ? ThetaVariant::Dirichlet : ThetaVariant::Periodic;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k)
      s.theta1_periodic[c][k] = ScalarField(s.mesh, r.vec(nn));
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k)
      s.theta1_dirichlet[c][k] = ScalarField(s.mesh, r.vec(nn));
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k)
      for (int l = 0; l < 3; ++l) s.theta2[c][k][l] = ScalarField(s.mesh, r.vec(nn));
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) s.Theta1[f][k] = EdgeField(s.mesh, r.vec(ne));
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) s.Theta2[f][k] = EdgeField(s.mesh, r.vec(ne));
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) s.zeta2[f][k] = ScalarField(s.mesh, r.vec(nn));
  s.diagnostics.max_abs_periodic_mean = r.f64();
  s.diagnostics.max_divergence_rel = r.f64();
  s.diagnostics.interior_family_gap_rel = r.f64();
  s.diagnostics.total_iterations = r.i64();
  s.diagnostics.used_direct_fallback = r.u32() != 0;
  return s;
}

void save_trajectory(const HomogenizedTrajectory& trajectory,
                     const std::filesystem::path& file) {
  BinWriter w(file);
  w.header(SnapshotKind::Trajectory);
  write_trajectory_payload(w, trajectory);
  w.close();
}

HomogenizedTrajectory load_trajectory(const std::filesystem::path& file) {
  BinReader r(file);
  r.header(SnapshotKind::Trajectory);
  return read_trajectory_payload(r);
}

void save_reference(const ReferenceTrajectory& reference,
                    const std::filesystem::path& file) {
  BinWriter w(file);
  w.header(SnapshotKind::Reference);
  write_medium_payload(w, reference.medium);
  w.i32(reference.fine_divisions_per_cell);
  write_trajectory_payload(w, reference.trajectory);
  w.close();
}

ReferenceTrajectory load_reference(const std::filesystem::path& file) {
  BinReader r(file);
  r.header(SnapshotKind::Reference);
  ReferenceTrajectory ref;
  ref.medium = read_medium_payload(r);
  ref.fine_divisions_per_cell = r.i32();
  ref.trajectory = read_trajectory_payload(r);
  return ref;
}

// ------------------------------------------------------------ CSV

CsvWriter::CsvWriter(const std::filesystem::path& file)
    : path_(file), out_(file, std::ios::binary) {
  if (!out_) throw Error("cannot open " + path_.string() + " for writing");
  out_ << "field,step,t,index,value\n";
}

CsvWriter::~CsvWriter() {
  if (out_.is_open()) out_.close();
}

void CsvWriter::row(const std::string& field, int step, double t, long index,
                    const double* values, int count) {
  if (!out_.is_open()) throw Error("csv writer for " + path_.string() + " is closed");
  out_ << field << ',' << step << ',' << fmt17(t) << ',' << index;
  for (int i = 0; i < count; ++i) out_ << ',' << fmt17(values[i]);
  out_ << '\n';
  if (!out_) throw Error("write failure on " + path_.string());
}

void CsvWriter::add(const std::string& field, int step, double t,
                    const ScalarField& f) {
  sanitize_name(field, "csv field");
  for (Eigen::Index i = 0; i < f.values.size(); ++i)
    row(field, step, t, static_cast<long>(i), &f.values[i], 1);
}

void CsvWriter::add(const std::string& field, int step, double t,
                    const ComplexField& f) {
  sanitize_name(field, "csv field");
  for (Eigen::Index i = 0; i < f.values.size(); ++i) {
    const double v[2] = {f.values[i].real(), f.values[i].imag()};
    row(field, step, t, static_cast<long>(i), v, 2);
  }
}

void CsvWriter::add(const std::string& field, int step, double t,
                    const EdgeField& f) {
  sanitize_name(field, "csv field");
  for (Eigen::Index i = 0; i < f.values.size(); ++i)
    row(field, step, t, static_cast<long>(i), &f.values[i], 1);
}

void CsvWriter::add(const std::string& field, int step, double t,
                    const NodalVectorField& f) {
  sanitize_name(field, "csv field");
  for (Eigen::Index i = 0; i < f.values.rows(); ++i) {
    const double v[3] = {f.values(i, 0), f.values(i, 1), f.values(i, 2)};
    row(field, step, t, static_cast<long>(i), v, 3);
  }
}

void CsvWriter::close() {
  if (!out_.is_open()) return;
  out_.flush();
  if (!out_) throw Error("write failure on " + path_.string());
  out_.close();
}

CsvTable read_csv(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw Error("cannot open " + file.string());
  std::string line;
  const auto strip_cr = [](std::string& s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
  };
  if (!std::getline(in, line)) throw Error(file.string() + ": empty csv file");
  strip_cr(line);
  if (line != "field,step,t,index,value")
    throw Error(file.string() + ": unexpected csv header '" + line + "'");
  CsvTable table;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    strip_cr(line);
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t pos = line.find(',', start);
      cells.push_back(line.substr(start, pos == std::string::npos ? pos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
    if (cells.size() < 5)
      throw Error(file.string() + ": line " + std::to_string(lineno) +
                  " has fewer than 5 cells");
    CsvTable::Row row;
    row.field = cells[0];
    try {
      row.step = std::stoi(cells[1]);
      row.t = std::stod(cells[2]);
      row.index = std::stol(cells[3]);
      for (std::size_t i = 4; i < cells.size(); ++i)
        row.values.push_back(std::stod(cells[i]));
    } catch (const std::exception&) {
      throw Error(file.string() + ": line " + std::to_string(lineno) +
                  " has a malformed number");
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

// ------------------------------------------------------------ VTK

void write_vtk(const std::filesystem::path& file, const BoxMesh& mesh,
               const std::vector<VtkScalar>& scalars,
               const std::vector<VtkVector>& vectors, const std::string& title) {
  const Eigen::Index nn = mesh.node_count();
  for (const auto& s : scalars) {
    sanitize_name(s.name, "vtk array");
    if (s.values.size() != nn)
      throw Error("vtk array '" + s.name + "' has " + std::to_string(s.values.size()) +
                  " values, the mesh has " + std::to_string(nn) + " nodes");
  }
  for (const auto& v : vectors) {
    sanitize_name(v.name, "vtk array");
    if (v.values.rows() != nn)
      throw Error("vtk array '" + v.name + "' has " + std::to_string(v.values.rows()) +
                  " rows, the mesh has " + std::to_string(nn) + " nodes");
  }
  if (title.find('\n') != std::string::npos)
    throw Error("vtk title must be a single line");

  std::ofstream out(file, std::ios::binary);
  if (!out) throw Error("cannot open " + file.string() + " for writing");
  const auto& d = mesh.divisions();
  out << "# vtk DataFile Version 3.0\n" << title << "\nASCII\n";
  out << "DATASET STRUCTURED_GRID\n";
  out << "DIMENSIONS " << d[0] + 1 << ' ' << d[1] + 1 << ' ' << d[2] + 1 << '\n';
  out << "POINTS " << nn << " double\n";
  for (Eigen::Index n = 0; n < nn; ++n) {
    const Vec3 p = mesh.node_position(static_cast<int>(n));
    out << fmt17(p[0]) << ' ' << fmt17(p[1]) << ' ' << fmt17(p[2]) << '\n';
  }
  out << "POINT_DATA " << nn << '\n';
  for (const auto& s : scalars) {
    out << "SCALARS " << s.name << " double 1\nLOOKUP_TABLE default\n";
    for (Eigen::Index n = 0; n < nn; ++n) out << fmt17(s.values[n]) << '\n';
  }
  for (const auto& v : vectors) {
    out << "VECTORS " << v.name << " double\n";
    for (Eigen::Index n = 0; n < nn; ++n)
      out << fmt17(v.values(n, 0)) << ' ' << fmt17(v.values(n, 1)) << ' '
          << fmt17(v.values(n, 2)) << '\n';
  }
  out.flush();
  if (!out) throw Error("write failure on " + file.string());
}

} // namespace mshom
