#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "mshom/io.hpp"
#include "mshom/metrics.hpp"

using namespace mshom;
namespace fs = std::filesystem;

namespace {

MeshPtr unit_mesh(int n) {
  return std::make_shared<const BoxMesh>(BoxMesh::unit_cell(n));
}

fs::path temp_dir() {
  const fs::path dir = fs::temp_directory_path() / "mshom_io_test";
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const fs::path& p, const std::string& bytes) {
  std::ofstream out(p, std::ios::binary);
  REQUIRE(out.good());
  out << bytes;
}

bool bitwise_equal(const VectorXd& a, const VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool bitwise_equal(const VectorXcd& a, const VectorXcd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

bool bitwise_equal(const Eigen::Matrix<double, Eigen::Dynamic, 3>& a,
                   const Eigen::Matrix<double, Eigen::Dynamic, 3>& b) {
  return a.rows() == b.rows() && (a.array() == b.array()).all();
}

/// Reference trajectory with constant-in-space fields per step: rho is built
/// from a manufactured wavefunction vector with the same expression the error
/// table uses, E is the edge interpolant of a per-step constant vector.
struct Manufactured {
  ReferenceTrajectory ref;
  std::vector<VectorXcd> psi; // per state, node-sized
};

Manufactured make_reference(const MeshPtr& mesh, int n_states, double dt,
                            double N = 10.0) {
  Manufactured out;
  out.ref.medium.N = N;
  out.ref.fine_divisions_per_cell = 1;
  out.ref.trajectory.mesh = mesh;
  out.ref.trajectory.dt = dt;
  const int nn = mesh->node_count();
  for (int s = 0; s < n_states; ++s) {
    VectorXcd psi(nn);
    for (int n = 0; n < nn; ++n) {
      const Vec3 p = mesh->node_position(n);
      psi[n] = Complex(0.3 + p[0] + 0.2 * p[1] + 0.05 * s, 0.1 * p[2] - 0.02 * s);
    }
    HomogenizedState st;
    st.rho = ScalarField(mesh);
    st.rho.values = N * psi.cwiseAbs2();
    const Vec3 c(1.5 + 0.25 * s, -0.75, 0.5 + 0.125 * s);
    st.E = interpolate_to_edges(mesh, [c](const Vec3&) { return c; });
    st.t = s * dt;
    out.ref.trajectory.states.push_back(std::move(st));
    out.psi.push_back(std::move(psi));
  }
  return out;
}

std::array<std::vector<MultiscaleField>, 3>
identity_reconstructions(const Manufactured& m) {
  std::array<std::vector<MultiscaleField>, 3> recon;
  const auto& traj = m.ref.trajectory;
  for (int k = 0; k < 3; ++k) {
    for (std::size_t s = 0; s < traj.states.size(); ++s) {
      MultiscaleField f;
      f.mesh = traj.mesh;
      f.order = k;
      f.t = traj.states[s].t;
      f.psi = m.psi[s];
      f.E = recover_nodal(traj.states[s].E).values;
      f.E_edges = traj.states[s].E;
      f.H.resize(0, 3);
      recon[k].push_back(std::move(f));
    }
  }
  return recon;
}

const char* kMinimalConfig = R"({
  "case": "5.1.1",
  "medium": {
    "epsilon": 0.125,
    "inclusion": {"kind": "cube", "center": [0.5, 0.5, 0.5], "side": 0.5},
    "a": {"in": 0.1, "out": 1.0},
    "mu": {"in": 1.0, "out": 0.01},
    "vc": {"in": 0.0, "out": 1.0},
    "N": 10
  },
  "cell_divisions": 16,
  "coarse_divisions": 8,
  "fine_divisions_per_cell": 4,
  "solver": {"dt": 0.005, "T": 0.1},
  "xc": "none",
  "order": 2
})";

} // namespace

TEST_CASE("trapezoidal combination matches hand values") {
  const double dt = 0.25;
  // two samples (0, s): only the end weight of s contributes
  const double s = 3.5;
  CHECK(spacetime_combine({0.0, s}, dt) == doctest::Approx(std::sqrt(dt * s * s / 2.0)).epsilon(1e-15));
  // constant value over [0, T] integrates to s^2 T for any sample count
  const std::vector<double> flat(7, s);
  const double T = 6 * dt;
  CHECK(spacetime_combine(flat, dt) == doctest::Approx(s * std::sqrt(T)).epsilon(1e-15));
  // all-zero series
  CHECK(spacetime_combine({0.0, 0.0, 0.0}, dt) == 0.0);
  // a single sample spans zero time
  CHECK(spacetime_combine({s}, dt) == 0.0);
  CHECK_THROWS_AS(spacetime_combine({}, dt), Error);
  CHECK_THROWS_AS(spacetime_combine({s, s}, 0.0), Error);
  CHECK_THROWS_AS(spacetime_combine({s, s}, -1.0), Error);
}

TEST_CASE("spatial norms reproduce analytic values on the unit cube") {
  const auto mesh = unit_mesh(4);
  SpatialNorms norms(mesh);

  ScalarField c(mesh);
  c.values.setConstant(-2.5);
  CHECK(norms.norm(c, SpaceTimeNorm::L2) == doctest::Approx(2.5).epsilon(1e-13));
  // gradients of a constant vanish, so the H1 norm collapses to the L2 norm
  CHECK(norms.norm(c, SpaceTimeNorm::H1) == doctest::Approx(2.5).epsilon(1e-13));

  ScalarField lin(mesh);
  for (int n = 0; n < mesh->node_count(); ++n)
    lin.values[n] = mesh->node_position(n)[0];
  // int x^2 = 1/3 and int |grad x|^2 = 1; the quadrature is exact for both
  CHECK(norms.norm(lin, SpaceTimeNorm::L2) ==
        doctest::Approx(std::sqrt(1.0 / 3.0)).epsilon(1e-13));
  CHECK(norms.norm(lin, SpaceTimeNorm::H1) ==
        doctest::Approx(std::sqrt(1.0 / 3.0 + 1.0)).epsilon(1e-13));

  const EdgeField e = interpolate_to_edges(mesh, [](const Vec3&) {
    return Vec3(0.6, -0.8, 0.0);
  });
  // a constant field has unit (L2)^3 norm here and zero curl
  CHECK(norms.norm(e, SpaceTimeNorm::L2vec) == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(norms.norm(e, SpaceTimeNorm::Hcurl) == doctest::Approx(1.0).epsilon(1e-13));

  NodalVectorField v(mesh);
  v.values.col(0).setConstant(0.6);
  v.values.col(1).setConstant(-0.8);
  CHECK(norms.norm(v) == doctest::Approx(1.0).epsilon(1e-13));
}

TEST_CASE("norm kind and mesh mismatches are rejected") {
  const auto mesh = unit_mesh(3);
  SpatialNorms norms(mesh);
  ScalarField f(mesh);
  EdgeField e(mesh);
  CHECK_THROWS_AS(norms.norm(f, SpaceTimeNorm::L2vec), Error);
  CHECK_THROWS_AS(norms.norm(f, SpaceTimeNorm::Hcurl), Error);
  CHECK_THROWS_AS(norms.norm(e, SpaceTimeNorm::L2), Error);
  CHECK_THROWS_AS(norms.norm(e, SpaceTimeNorm::H1), Error);

  ScalarField other(unit_mesh(4));
  CHECK_THROWS_AS(norms.norm(other, SpaceTimeNorm::L2), Error);

  std::vector<ScalarField> series;
  series.emplace_back(mesh);
  series.emplace_back(unit_mesh(4));
  CHECK_THROWS_AS(spacetime_norm(series, SpaceTimeNorm::L2, 0.1), Error);
}

TEST_CASE("space-time norms: homogeneity and triangle inequality") {
  const auto mesh = unit_mesh(3);
  const double dt = 0.05;
  const double alpha = -3.75;

  std::vector<ScalarField> f, g, af, fg;
  std::vector<EdgeField> ef, eg, aef, efg;
  for (int s = 0; s < 4; ++s) {
    ScalarField a(mesh), b(mesh);
    for (int n = 0; n < mesh->node_count(); ++n) {
      a.values[n] = std::sin(0.7 * n + 0.3 * s);
      b.values[n] = std::cos(1.3 * n) - 0.2 * s;
    }
    ScalarField sa(mesh), sab(mesh);
    sa.values = alpha * a.values;
    sab.values = a.values + b.values;
    f.push_back(a);
    g.push_back(b);
    af.push_back(sa);
    fg.push_back(sab);

    EdgeField ea(mesh), eb(mesh);
    for (int m = 0; m < mesh->edge_count(); ++m) {
      ea.values[m] = std::sin(0.4 * m + s);
      eb.values[m] = 0.5 * std::cos(0.9 * m) + 0.1 * s;
    }
    EdgeField esa(mesh, alpha * ea.values), esab(mesh, ea.values + eb.values);
    ef.push_back(ea);
    eg.push_back(eb);
    aef.push_back(esa);
    efg.push_back(esab);
  }

  for (auto which : {SpaceTimeNorm::L2, SpaceTimeNorm::H1}) {
    const double nf = spacetime_norm(f, which, dt);
    const double ng = spacetime_norm(g, which, dt);
    CHECK(spacetime_norm(af, which, dt) ==
          doctest::Approx(std::abs(alpha) * nf).epsilon(1e-12));
    CHECK(spacetime_norm(fg, which, dt) <= nf + ng + 1e-12);
  }
  for (auto which : {SpaceTimeNorm::L2vec, SpaceTimeNorm::Hcurl}) {
    const double nf = spacetime_norm(ef, which, dt);
    const double ng = spacetime_norm(eg, which, dt);
    CHECK(spacetime_norm(aef, which, dt) ==
          doctest::Approx(std::abs(alpha) * nf).epsilon(1e-12));
    CHECK(spacetime_norm(efg, which, dt) <= nf + ng + 1e-12);
  }
}

TEST_CASE("error table: reconstruction identical to the reference gives zeros") {
  const auto mesh = unit_mesh(4);
  const auto m = make_reference(mesh, 3, 0.01);
  const auto recon = identity_reconstructions(m);
  const ErrorTable t = error_table(m.ref, recon);

  for (int k = 0; k < 3; ++k) {
    CHECK(t.rho_L2[k] == 0.0);
    CHECK(t.rho_H1[k] == 0.0);
    CHECK(t.E_L2[k] <= 1e-14);
    // the edge moments are compared dof-for-dof, so identity is exact
    CHECK(t.E_Hcurl[k] == 0.0);
  }
  CHECK(t.ref_rho_L2 > 0.0);
  CHECK(t.ref_rho_H1 > 0.0);
  CHECK(t.ref_E_L2 > 0.0);
  CHECK(t.ref_E_Hcurl > 0.0);
}

TEST_CASE("error table: zero reconstruction gives relative error one") {
  const auto mesh = unit_mesh(3);
  const auto m = make_reference(mesh, 3, 0.02);
  std::array<std::vector<MultiscaleField>, 3> recon;
  for (int k = 0; k < 3; ++k)
    for (std::size_t s = 0; s < m.ref.trajectory.states.size(); ++s) {
      MultiscaleField f;
      f.mesh = mesh;
      f.order = k;
      f.psi = VectorXcd::Zero(mesh->node_count());
      f.E = Eigen::Matrix<double, Eigen::Dynamic, 3>::Zero(mesh->node_count(), 3);
      f.E_edges = EdgeField(mesh, VectorXd::Zero(mesh->edge_count()));
      recon[k].push_back(std::move(f));
    }
  const ErrorTable t = error_table(m.ref, recon);
  for (int k = 0; k < 3; ++k) {
    CHECK(t.rho_L2[k] == 1.0);
    CHECK(t.rho_H1[k] == 1.0);
    CHECK(t.E_L2[k] == 1.0);
    CHECK(t.E_Hcurl[k] == 1.0);
  }
}

TEST_CASE("error table: stride subsamples the reference") {
  const auto mesh = unit_mesh(3);
  const auto five = make_reference(mesh, 5, 0.01);

  // the same physical samples as an explicit coarse-in-time trajectory
  Manufactured coarse;
  coarse.ref.medium.N = five.ref.medium.N;
  coarse.ref.fine_divisions_per_cell = 1;
  coarse.ref.trajectory.mesh = mesh;
  coarse.ref.trajectory.dt = 0.02;
  for (int s = 0; s < 5; s += 2) {
    coarse.ref.trajectory.states.push_back(five.ref.trajectory.states[s]);
    coarse.psi.push_back(five.psi[s]);
  }

  const auto recon = identity_reconstructions(coarse);
  const ErrorTable a = error_table(five.ref, recon, 2);
  const ErrorTable b = error_table(coarse.ref, recon, 1);
  CHECK(a.ref_rho_L2 == b.ref_rho_L2);
  CHECK(a.ref_rho_H1 == b.ref_rho_H1);
  CHECK(a.ref_E_L2 == b.ref_E_L2);
  CHECK(a.ref_E_Hcurl == b.ref_E_Hcurl);

  // stride must divide the step count
  CHECK_THROWS_AS(error_table(five.ref, recon, 3), Error);
}

TEST_CASE("error table input validation") {
  const auto mesh = unit_mesh(3);
  const auto m = make_reference(mesh, 3, 0.01);
  auto recon = identity_reconstructions(m);

  SUBCASE("series length mismatch") {
    recon[1].pop_back();
    CHECK_THROWS_AS(error_table(m.ref, recon), Error);
  }
  SUBCASE("off-mesh reconstruction") {
    recon[0][1].mesh = unit_mesh(4);
    CHECK_THROWS_AS(error_table(m.ref, recon), Error);
  }
  SUBCASE("missing field samples") {
    recon[2][0].E.resize(0, 3);
    CHECK_THROWS_AS(error_table(m.ref, recon), Error);
  }
  SUBCASE("missing edge moments") {
    recon[1][1].E_edges = EdgeField{};
    CHECK_THROWS_AS(error_table(m.ref, recon), Error);
  }
  SUBCASE("edge moments on the wrong mesh") {
    const auto other = unit_mesh(4);
    recon[1][1].E_edges = EdgeField(other, VectorXd::Zero(other->edge_count()));
    CHECK_THROWS_AS(error_table(m.ref, recon), Error);
  }
  SUBCASE("zero reference density norm") {
    auto broken = m;
    for (auto& st : broken.ref.trajectory.states) st.rho.values.setZero();
    CHECK_THROWS_AS(error_table(broken.ref, identity_reconstructions(broken)), Error);
  }
}

TEST_CASE("config: parse, defaults, and canonical round trip") {
  const RunConfig c = parse_config(kMinimalConfig);
  CHECK(c.case_id == "5.1.1");
  CHECK(c.medium.epsilon == 0.125);
  CHECK(c.medium.a_in(0, 0) == 0.1);
  CHECK(c.medium.a_in(1, 1) == 0.1);
  CHECK(c.medium.a_in(0, 1) == 0.0);
  CHECK(c.medium.mu_out(2, 2) == 0.01);
  CHECK(c.medium.eta_in == Mat3::Identity()); // omitted -> default
  CHECK(c.medium.N == 10.0);
  CHECK(c.cell_divisions == 16);
  CHECK(c.coarse_divisions == 8);
  CHECK(c.solver.divisions == 8);
  CHECK(c.solver.dt == 0.005);
  CHECK(c.solver.T == 0.1);
  CHECK(c.solver.outer_max == 25);    // default preserved
  CHECK(c.xc == XcSpec::Kind::None);
  CHECK(c.source_amplitude == 1000.0); // default
  CHECK(c.order == 2);

  const std::string s1 = config_to_json(c);
  const RunConfig c2 = parse_config(s1);
  CHECK(config_to_json(c2) == s1);

  // diagonal tensors survive the round trip
  const RunConfig diag = parse_config(R"({"medium": {"a": {"in": [0.1, 0.2, 0.3]}}})");
  CHECK(diag.medium.a_in(0, 0) == 0.1);
  CHECK(diag.medium.a_in(1, 1) == 0.2);
  CHECK(diag.medium.a_in(2, 2) == 0.3);
  const RunConfig diag2 = parse_config(config_to_json(diag));
  CHECK(config_to_json(diag2) == config_to_json(diag));
}

TEST_CASE("config: unknown keys are named with their dotted path") {
  try {
    parse_config(R"({"medium": {"epsilonn": 0.1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "medium.epsilonn");
    CHECK(std::string(e.what()).find("unknown key") != std::string::npos);
  }
  try {
    parse_config(R"({"epsilonn": 0.1})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "epsilonn");
  }
  try {
    parse_config(R"({"solver": {"dtt": 0.1}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "solver.dtt");
  }
  try {
    parse_config(R"({"medium": {"inclusion": {"kindd": "cube"}}})");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(e.field == "medium.inclusion.kindd");
  }
}

TEST_CASE("config: type and value errors carry the field path") {
  const auto field_of = [](const std::string& text) {
    try {
      parse_config(text);
    } catch (const ConfigError& e) {
      return e.field;
    }
    return std::string("NO ERROR");
  };
  CHECK(field_of(R"({"cell_divisions": "16"})") == "cell_divisions");
  CHECK(field_of(R"({"medium": {"epsilon": "x"}})") == "medium.epsilon");
  CHECK(field_of(R"({"medium": {"epsilon": 0.3}})") == "medium.epsilon"); // 1/eps not integral
  CHECK(field_of(R"({"medium": {"a": {"in": [1, 2]}}})") == "medium.a.in");
  CHECK(field_of(R"({"medium": {"inclusion": {"kind": "ball"}}})") ==
        "medium.inclusion.kind");
  CHECK(field_of(R"({"xc": "lda"})") == "xc");
  CHECK(field_of(R"({"order": 3})") == "order");
  CHECK(field_of(R"({"coarse_divisions": 1})") == "coarse_divisions");
  CHECK(field_of(R"({"output_stride": 7})") == "output_stride"); // 100 steps default
  CHECK(field_of(R"({"solver": {"mixing_alpha": 0.0}})") == "params.mixing_alpha");
  CHECK(field_of("not json at all") == "config");
  CHECK(field_of("[1,2,3]") == "config");
}

TEST_CASE("config file loading") {
  const fs::path dir = temp_dir();
  const fs::path file = dir / "case.json";
  spit(file, kMinimalConfig);
  const RunConfig c = load_config(file);
  CHECK(c.case_id == "5.1.1");

  CHECK_THROWS_AS(load_config(dir / "missing.json"), ConfigError);

  write_config(c, dir / "echo.json");
  const RunConfig c2 = load_config(dir / "echo.json");
  CHECK(config_to_json(c2) == config_to_json(c));
}

TEST_CASE("medium hash keys on content and cell resolution") {
  const RunConfig c = parse_config(kMinimalConfig);
  const std::string h = medium_hash(c.medium, 16);
  CHECK(h.size() == 16);
  CHECK(h.find_first_not_of("0123456789abcdef") == std::string::npos);
  CHECK(medium_hash(c.medium, 16) == h);          // deterministic
  CHECK(medium_hash(c.medium, 32) != h);          // resolution matters
  PeriodicMedium m2 = c.medium;
  m2.epsilon = 0.25;
  CHECK(medium_hash(m2, 16) != h);                // content matters
  PeriodicMedium m3 = c.medium;
  m3.vc_out = 2.0;
  CHECK(medium_hash(m3, 16) != h);
}

TEST_CASE("effective tensors JSON round trip") {
  EffectiveTensors t;
  t.A_hat << 0.55, 1e-12, 0, 1e-12, 0.55, 0, 0, 0, 0.1818181818181818;
  t.eta_hat = 0.7 * Mat3::Identity();
  t.mu_hat = 0.013 * Mat3::Identity();
  t.inv_eta_hat = t.eta_hat.inverse();
  t.inv_mu_hat = t.mu_hat.inverse();
  t.mean_Vc = 0.875;
  t.provenance = ThetaVariant::Dirichlet;
  t.cell_divisions = 32;
  t.asymmetry = {{"A", 3.2e-17}, {"eta", 0.0}, {"mu", 1.1e-16}};

  const fs::path file = temp_dir() / "tensors.json";
  write_tensors(t, file);
  const EffectiveTensors r = load_tensors(file);
  CHECK((r.A_hat.array() == t.A_hat.array()).all());
  CHECK((r.eta_hat.array() == t.eta_hat.array()).all());
  CHECK((r.mu_hat.array() == t.mu_hat.array()).all());
  CHECK((r.inv_eta_hat.array() == t.inv_eta_hat.array()).all());
  CHECK((r.inv_mu_hat.array() == t.inv_mu_hat.array()).all());
  CHECK(r.mean_Vc == t.mean_Vc);
  CHECK(r.provenance == ThetaVariant::Dirichlet);
  CHECK(r.cell_divisions == 32);
  CHECK(r.asymmetry == t.asymmetry);

  spit(temp_dir() / "bad_tensors.json", R"({"A_hatt": []})");
  CHECK_THROWS_AS(load_tensors(temp_dir() / "bad_tensors.json"), ConfigError);
}

TEST_CASE("manifest carries the config echo and the full error table") {
  RunManifest man;
  man.config = parse_config(kMinimalConfig);
  man.tensors = EffectiveTensors{};
  man.tensors->cell_divisions = 16;
  StepDiagnostics d;
  d.t = 0.005;
  d.outer_iterations = 3;
  d.inner_iterations = 7;
  d.psi_norm = 1.0;
  man.coarse_steps = {d, d};
  man.reference_steps = {d};
  ErrorTable t;
  for (int k = 0; k < 3; ++k) {
    t.rho_L2[k] = 0.1 / (k + 1);
    t.rho_H1[k] = 0.2 / (k + 1);
    t.E_L2[k] = 0.3 / (k + 1);
    t.E_Hcurl[k] = 0.4 / (k + 1);
  }
  t.ref_rho_L2 = t.ref_rho_H1 = t.ref_E_L2 = t.ref_E_Hcurl = 5.0;
  man.errors = t;
  man.timings_seconds = {{"cells", 12.5}, {"run", 3.25}};

  const std::string text = manifest_to_json(man);
  const auto j = nlohmann::json::parse(text);
  CHECK(j.at("config").at("case") == "5.1.1");
  CHECK(j.at("config").at("medium").at("epsilon") == 0.125);
  CHECK(j.at("effective").at("cell_divisions") == 16);
  CHECK(j.at("coarse_steps").size() == 2);
  CHECK(j.at("coarse_steps")[0].at("outer_iterations") == 3);
  CHECK(j.at("reference_steps").size() == 1);
  for (const char* key : {"rho_L2", "rho_H1", "E_L2", "E_Hcurl"}) {
    CHECK(j.at("errors").at(key).size() == 3);
    CHECK(j.at("errors").at("reference_norms").at(key) == 5.0);
  }
  CHECK(j.at("errors").at("rho_L2")[1] == 0.05);
  CHECK(j.at("timings_seconds").at("cells") == 12.5);

  // stage-less manifests omit the optional blocks
  RunManifest bare;
  bare.config = man.config;
  const auto jb = nlohmann::json::parse(manifest_to_json(bare));
  CHECK(!jb.contains("effective"));
  CHECK(!jb.contains("errors"));
}

TEST_CASE("error table text renderings") {
  ErrorTable t;
  for (int k = 0; k < 3; ++k) {
    t.rho_L2[k] = 0.021350 / (1 << k);
    t.rho_H1[k] = 0.1 / (1 << k);
    t.E_L2[k] = 0.2 / (1 << k);
    t.E_Hcurl[k] = 0.3 / (1 << k);
  }
  const std::string csv = error_table_to_csv(t);
  CHECK(csv.substr(0, 28) == "column,order0,order1,order2\n");
  CHECK(csv.find("rho_L2,") != std::string::npos);
  CHECK(csv.find("E_Hcurl,") != std::string::npos);
  // deterministic byte-for-byte rendering
  CHECK(error_table_to_csv(t) == csv);

  const std::string pretty = format_error_table(t);
  CHECK(pretty.find("order 0") != std::string::npos);
  CHECK(pretty.find("rho  L2(0,T;L2)") != std::string::npos);
  CHECK(pretty.find("2.135000e-02") != std::string::npos);
}

TEST_CASE("cell function snapshot round trip is bitwise") {
  const auto mesh = unit_mesh(3);
  CellFunctionSet s;
  s.mesh = mesh;
  s.tensor_family = ThetaVariant::Dirichlet;
  const int nn = mesh->node_count(), ne = mesh->edge_count();
  const auto fill_nodal = [&](ScalarField& f, int tag) {
    f = ScalarField(mesh);
    for (int i = 0; i < nn; ++i) f.values[i] = std::sin(0.1 * tag + 0.01 * i);
  };
  const auto fill_edge = [&](EdgeField& f, int tag) {
    f = EdgeField(mesh);
    for (int i = 0; i < ne; ++i) f.values[i] = std::cos(0.2 * tag + 0.03 * i);
  };
  int tag = 0;
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) {
      fill_nodal(s.theta1_periodic[c][k], ++tag);
      fill_nodal(s.theta1_dirichlet[c][k], ++tag);
      for (int l = 0; l < 3; ++l) fill_nodal(s.theta2[c][k][l], ++tag);
    }
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) {
      fill_edge(s.Theta1[f][k], ++tag);
      fill_edge(s.Theta2[f][k], ++tag);
      fill_nodal(s.zeta2[f][k], ++tag);
    }
  s.diagnostics.max_abs_periodic_mean = 1.25e-13;
  s.diagnostics.max_divergence_rel = 3e-10;
  s.diagnostics.interior_family_gap_rel = 0.02;
  s.diagnostics.total_iterations = 123456;
  s.diagnostics.used_direct_fallback = true;

  const fs::path file = temp_dir() / "cells.snapshot";
  save_cells(s, file);
  const CellFunctionSet r = load_cells(file);
  CHECK(*r.mesh == *mesh);
  CHECK(r.tensor_family == ThetaVariant::Dirichlet);
  // every field shares the one deserialized mesh
  CHECK(r.theta1_periodic[0][0].mesh.get() == r.mesh.get());
  CHECK(r.Theta2[1][2].mesh.get() == r.mesh.get());
  for (int c = 0; c < 3; ++c)
    for (int k = 0; k < 3; ++k) {
      CHECK(bitwise_equal(r.theta1_periodic[c][k].values, s.theta1_periodic[c][k].values));
      CHECK(bitwise_equal(r.theta1_dirichlet[c][k].values, s.theta1_dirichlet[c][k].values));
      for (int l = 0; l < 3; ++l)
        CHECK(bitwise_equal(r.theta2[c][k][l].values, s.theta2[c][k][l].values));
    }
  for (int f = 0; f < 2; ++f)
    for (int k = 0; k < 3; ++k) {
      CHECK(bitwise_equal(r.Theta1[f][k].values, s.Theta1[f][k].values));
      CHECK(bitwise_equal(r.Theta2[f][k].values, s.Theta2[f][k].values));
      CHECK(bitwise_equal(r.zeta2[f][k].values, s.zeta2[f][k].values));
    }
  CHECK(r.diagnostics.max_abs_periodic_mean == s.diagnostics.max_abs_periodic_mean);
  CHECK(r.diagnostics.total_iterations == 123456);
  CHECK(r.diagnostics.used_direct_fallback);
}

TEST_CASE("trajectory and reference snapshots round trip") {
  const auto mesh = unit_mesh(2);
  HomogenizedTrajectory t;
  t.mesh = mesh;
  t.dt = 0.0125;
  const int nn = mesh->node_count(), ne = mesh->edge_count();
  for (int s = 0; s < 2; ++s) {
    HomogenizedState st;
    st.psi = ComplexField(mesh);
    st.rho = ScalarField(mesh);
    st.E = EdgeField(mesh);
    st.E_dot = EdgeField(mesh);
    st.H = NodalVectorField(mesh);
    st.H_dot = NodalVectorField(mesh);
    st.Jq = NodalVectorField(mesh);
    for (int i = 0; i < nn; ++i) {
      st.psi.values[i] = Complex(0.1 * i + s, -0.05 * i);
      st.rho.values[i] = 0.3 * i + 0.7 * s;
      for (int c = 0; c < 3; ++c) {
        st.H.values(i, c) = i + 10 * c + 100 * s;
        st.H_dot.values(i, c) = -0.5 * i + c;
        st.Jq.values(i, c) = 0.25 * i * c + s;
      }
    }
    for (int i = 0; i < ne; ++i) {
      st.E.values[i] = std::sin(i + s);
      st.E_dot.values[i] = std::cos(2 * i - s);
    }
    st.t = s * t.dt;
    t.states.push_back(std::move(st));
  }
  StepDiagnostics d;
  d.t = t.dt;
  d.outer_iterations = 4;
  d.inner_iterations = 9;
  d.outer_residual = 3e-9;
  d.inner_residual = 8e-8;
  d.psi_norm = 1.0 - 1e-12;
  d.gauss_residual = 0.01;
  t.diagnostics = {d};

  const fs::path file = temp_dir() / "traj.snapshot";
  save_trajectory(t, file);
  const HomogenizedTrajectory r = load_trajectory(file);
  CHECK(*r.mesh == *mesh);
  CHECK(r.dt == t.dt);
  REQUIRE(r.states.size() == 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(bitwise_equal(r.states[s].psi.values, t.states[s].psi.values));
    CHECK(bitwise_equal(r.states[s].rho.values, t.states[s].rho.values));
    CHECK(bitwise_equal(r.states[s].E.values, t.states[s].E.values));
    CHECK(bitwise_equal(r.states[s].E_dot.values, t.states[s].E_dot.values));
    CHECK(bitwise_equal(r.states[s].H.values, t.states[s].H.values));
    CHECK(bitwise_equal(r.states[s].H_dot.values, t.states[s].H_dot.values));
    CHECK(bitwise_equal(r.states[s].Jq.values, t.states[s].Jq.values));
    CHECK(r.states[s].t == t.states[s].t);
  }
  REQUIRE(r.diagnostics.size() == 1);
  CHECK(r.diagnostics[0].outer_iterations == 4);
  CHECK(r.diagnostics[0].inner_iterations == 9);
  CHECK(r.diagnostics[0].psi_norm == d.psi_norm);

  ReferenceTrajectory ref;
  ref.trajectory = t;
  ref.medium.epsilon = 0.25;
  ref.medium.inclusion.kind = Inclusion::Kind::Slab;
  ref.medium.inclusion.axis = 2;
  ref.medium.inclusion.side = 0.5;
  ref.medium.a_in = 0.1 * Mat3::Identity();
  ref.medium.mu_out = 0.01 * Mat3::Identity();
  ref.medium.N = 7.5;
  ref.fine_divisions_per_cell = 4;
  const fs::path rfile = temp_dir() / "ref.snapshot";
  save_reference(ref, rfile);
  const ReferenceTrajectory rr = load_reference(rfile);
  CHECK(rr.medium.epsilon == 0.25);
  CHECK(rr.medium.inclusion.kind == Inclusion::Kind::Slab);
  CHECK(rr.medium.inclusion.axis == 2);
  CHECK((rr.medium.a_in.array() == ref.medium.a_in.array()).all());
  CHECK((rr.medium.mu_out.array() == ref.medium.mu_out.array()).all());
  CHECK(rr.medium.N == 7.5);
  CHECK(rr.fine_divisions_per_cell == 4);
  CHECK(rr.trajectory.states.size() == 2);
  CHECK(bitwise_equal(rr.trajectory.states[1].E.values, t.states[1].E.values));
}

TEST_CASE("snapshot integrity failures raise SnapshotError") {
  const auto mesh = unit_mesh(2);
  HomogenizedTrajectory t;
  t.mesh = mesh;
  t.dt = 0.5;
  t.states.emplace_back();
  auto& st = t.states.back();
  st.psi = ComplexField(mesh);
  st.rho = ScalarField(mesh);
  st.E = EdgeField(mesh);
  st.E_dot = EdgeField(mesh);
  st.H = NodalVectorField(mesh);
  st.H_dot = NodalVectorField(mesh);
  st.Jq = NodalVectorField(mesh);
  const fs::path dir = temp_dir();
  const fs::path good = dir / "good.snapshot";
  save_trajectory(t, good);
  const std::string bytes = slurp(good);

  SUBCASE("truncation") {
    spit(dir / "short.snapshot", bytes.substr(0, bytes.size() - 37));
    CHECK_THROWS_AS(load_trajectory(dir / "short.snapshot"), SnapshotError);
    spit(dir / "header_only.snapshot", bytes.substr(0, 6));
    CHECK_THROWS_AS(load_trajectory(dir / "header_only.snapshot"), SnapshotError);
  }
  SUBCASE("bad magic") {
    std::string b = bytes;
    b[0] = 'X';
    spit(dir / "magic.snapshot", b);
    CHECK_THROWS_AS(load_trajectory(dir / "magic.snapshot"), SnapshotError);
  }
  SUBCASE("unsupported version") {
    std::string b = bytes;
    b[4] = 99; // little-endian low byte of the version word
    spit(dir / "version.snapshot", b);
    try {
      load_trajectory(dir / "version.snapshot");
      FAIL("expected SnapshotError");
    } catch (const SnapshotError& e) {
      CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
  }
  SUBCASE("kind mismatch") {
    try {
      load_cells(good);
      FAIL("expected SnapshotError");
    } catch (const SnapshotError& e) {
      CHECK(std::string(e.what()).find("trajectory") != std::string::npos);
    }
  }
  SUBCASE("missing file") {
    CHECK_THROWS_AS(load_trajectory(dir / "nope.snapshot"), SnapshotError);
  }
}

TEST_CASE("csv export round trip is exact") {
  const auto mesh = unit_mesh(1); // 8 nodes, 12 edges
  ScalarField rho(mesh);
  ComplexField psi(mesh);
  NodalVectorField H(mesh);
  for (int i = 0; i < 8; ++i) {
    rho.values[i] = (i - 3) / 7.0;
    psi.values[i] = Complex(std::sin(i + 0.5), std::cos(i) / 3.0);
    for (int c = 0; c < 3; ++c) H.values(i, c) = 0.1 * i - c / 9.0;
  }
  EdgeField E(mesh);
  for (int i = 0; i < 12; ++i) E.values[i] = std::exp(-i) * (i % 2 ? 1 : -1);

  const fs::path file = temp_dir() / "fields.csv";
  {
    CsvWriter w(file);
    w.add("rho", 0, 0.0, rho);
    w.add("psi", 0, 0.0, psi);
    w.add("E", 2, 0.01, E);
    w.add("H", 2, 0.01, H);
    w.close();
  }

  const CsvTable table = read_csv(file);
  REQUIRE(table.rows.size() == 8 + 8 + 12 + 8);
  int n_rho = 0, n_psi = 0, n_E = 0, n_H = 0;
  for (const auto& r : table.rows) {
    if (r.field == "rho") {
      REQUIRE(r.values.size() == 1);
      CHECK(r.step == 0);
      CHECK(r.t == 0.0);
      CHECK(r.values[0] == rho.values[r.index]);
      ++n_rho;
    } else if (r.field == "psi") {
      REQUIRE(r.values.size() == 2);
      CHECK(r.values[0] == psi.values[r.index].real());
      CHECK(r.values[1] == psi.values[r.index].imag());
      ++n_psi;
    } else if (r.field == "E") {
      REQUIRE(r.values.size() == 1);
      CHECK(r.step == 2);
      CHECK(r.t == 0.01);
      CHECK(r.values[0] == E.values[r.index]);
      ++n_E;
    } else if (r.field == "H") {
      REQUIRE(r.values.size() == 3);
      for (int c = 0; c < 3; ++c) CHECK(r.values[c] == H.values(r.index, c));
      ++n_H;
    }
  }
  CHECK(n_rho == 8);
  CHECK(n_psi == 8);
  CHECK(n_E == 12);
  CHECK(n_H == 8);

  SUBCASE("field names with separators are rejected") {
    CsvWriter w(temp_dir() / "bad.csv");
    CHECK_THROWS_AS(w.add("a,b", 0, 0.0, rho), Error);
  }
  SUBCASE("malformed files are rejected") {
    spit(temp_dir() / "head.csv", "wrong,header\n");
    CHECK_THROWS_AS(read_csv(temp_dir() / "head.csv"), Error);
    spit(temp_dir() / "num.csv", "field,step,t,index,value\nrho,0,0,0,abc\n");
    CHECK_THROWS_AS(read_csv(temp_dir() / "num.csv"), Error);
    spit(temp_dir() / "cells.csv", "field,step,t,index,value\nrho,0,0\n");
    CHECK_THROWS_AS(read_csv(temp_dir() / "cells.csv"), Error);
    CHECK_THROWS_AS(read_csv(temp_dir() / "nothere.csv"), Error);
  }
}

TEST_CASE("vtk export writes a well-formed structured grid") {
  const BoxMesh mesh = BoxMesh::create(Vec3(0, 0, 0), Vec3(1, 1, 0.5), {2, 2, 1});
  const int nn = mesh.node_count(); // 3*3*2 = 18
  VtkScalar rho{"rho", VectorXd(nn)};
  VtkVector E{"E", Eigen::Matrix<double, Eigen::Dynamic, 3>(nn, 3)};
  for (int i = 0; i < nn; ++i) {
    rho.values[i] = std::sin(i * 0.37) / 3.0;
    for (int c = 0; c < 3; ++c) E.values(i, c) = 0.05 * i - 0.7 * c;
  }
  const fs::path file = temp_dir() / "fields.vtk";
  write_vtk(file, mesh, {rho}, {E}, "sample output");

  std::ifstream in(file);
  REQUIRE(in.good());
  std::string line;
  std::getline(in, line);
  CHECK(line == "# vtk DataFile Version 3.0");
  std::getline(in, line);
  CHECK(line == "sample output");
  std::getline(in, line);
  CHECK(line == "ASCII");
  std::getline(in, line);
  CHECK(line == "DATASET STRUCTURED_GRID");
  std::getline(in, line);
  CHECK(line == "DIMENSIONS 3 3 2");
  std::getline(in, line);
  CHECK(line == "POINTS 18 double");
  for (int i = 0; i < nn; ++i) {
    double x, y, z;
    in >> x >> y >> z;
    const Vec3 p = mesh.node_position(i);
    CHECK(x == p[0]);
    CHECK(y == p[1]);
    CHECK(z == p[2]);
  }
  std::getline(in, line); // consume the newline after the last point
  std::getline(in, line);
  CHECK(line == "POINT_DATA 18");
  std::getline(in, line);
  CHECK(line == "SCALARS rho double 1");
  std::getline(in, line);
  CHECK(line == "LOOKUP_TABLE default");
  for (int i = 0; i < nn; ++i) {
    double v;
    in >> v;
    CHECK(v == rho.values[i]);
  }
  std::getline(in, line);
  std::getline(in, line);
  CHECK(line == "VECTORS E double");
  for (int i = 0; i < nn; ++i) {
    double x, y, z;
    in >> x >> y >> z;
    CHECK(x == E.values(i, 0));
    CHECK(y == E.values(i, 1));
    CHECK(z == E.values(i, 2));
  }
  REQUIRE(in.good());

  SUBCASE("size mismatches are rejected") {
    VtkScalar bad{"rho", VectorXd(nn - 1)};
    CHECK_THROWS_AS(write_vtk(temp_dir() / "bad.vtk", mesh, {bad}, {}), Error);
    VtkScalar space{"bad name", VectorXd(nn)};
    CHECK_THROWS_AS(write_vtk(temp_dir() / "bad.vtk", mesh, {space}, {}), Error);
  }
}
