#include "mshom/metrics.hpp"

#include <cmath>
#include <string>

#include "mshom/assembly.hpp"

namespace mshom {

namespace {

Mat3 identity_tensor(const Vec3&) { return Mat3::Identity(); }

double quad_form(const SpMat& Q, const VectorXd& x) { return x.dot(Q * x); }

void require_norm_mesh(const MeshPtr& field_mesh, const MeshPtr& norm_mesh,
                       const char* what) {
  if (!field_mesh || !(*field_mesh == *norm_mesh))
    throw Error(std::string(what) + ": field lives on a different mesh than the norm");
}

} // namespace

const char* to_string(SpaceTimeNorm n) {
  switch (n) {
    case SpaceTimeNorm::L2: return "L2";
    case SpaceTimeNorm::H1: return "H1";
    case SpaceTimeNorm::L2vec: return "L2vec";
    default: return "Hcurl";
  }
}

SpatialNorms::SpatialNorms(MeshPtr mesh) : mesh_(std::move(mesh)) {
  if (!mesh_) throw Error("spatial norms: null mesh");
}

const SpMat& SpatialNorms::mass_nodal() const {
  if (!have_M_) {
    M_ = assemble_mass_nodal_full(*mesh_);
    have_M_ = true;
  }
  return M_;
}

const SpMat& SpatialNorms::stiffness() const {
  if (!have_K_) {
    K_ = assemble_stiffness_full(*mesh_, identity_tensor);
    have_K_ = true;
  }
  return K_;
}

const SpMat& SpatialNorms::mass_edge() const {
  if (!have_Me_) {
    Me_ = assemble_mass_edge_full(*mesh_);
    have_Me_ = true;
  }
  return Me_;
}

const SpMat& SpatialNorms::curl_curl() const {
  if (!have_Kc_) {
    Kc_ = assemble_curl_curl_full(*mesh_, identity_tensor);
    have_Kc_ = true;
  }
  return Kc_;
}

double SpatialNorms::norm(const ScalarField& f, SpaceTimeNorm which) const {
  require_norm_mesh(f.mesh, mesh_, "spatial norm");
  double q = 0.0;
  switch (which) {
    case SpaceTimeNorm::L2:
      q = quad_form(mass_nodal(), f.values);
      break;
    case SpaceTimeNorm::H1:
      q = quad_form(mass_nodal(), f.values) + quad_form(stiffness(), f.values);
      break;
    default:
      throw Error(std::string("spatial norm: ") + to_string(which) +
                  " applies to edge fields, got a scalar field");
  }
  return std::sqrt(std::max(0.0, q));
}

double SpatialNorms::norm(const EdgeField& f, SpaceTimeNorm which) const {
  require_norm_mesh(f.mesh, mesh_, "spatial norm");
  double q = 0.0;
  switch (which) {
    case SpaceTimeNorm::L2vec:
      q = quad_form(mass_edge(), f.values);
      break;
    case SpaceTimeNorm::Hcurl:
      q = quad_form(mass_edge(), f.values) + quad_form(curl_curl(), f.values);
      break;
    default:
      throw Error(std::string("spatial norm: ") + to_string(which) +
                  " applies to nodal fields, got an edge field");
  }
  return std::sqrt(std::max(0.0, q));
}

double SpatialNorms::norm(const NodalVectorField& f) const {
  require_norm_mesh(f.mesh, mesh_, "spatial norm");
  double q = 0.0;
  for (int c = 0; c < 3; ++c) {
    const VectorXd col = f.values.col(c);
    q += quad_form(mass_nodal(), col);
  }
  return std::sqrt(std::max(0.0, q));
}

double spacetime_combine(const std::vector<double>& spatial_norms, double dt) {
  if (spatial_norms.empty()) throw Error("spacetime norm: empty series");
  if (!(dt > 0.0)) throw Error("spacetime norm: dt must be positive");
  if (spatial_norms.size() == 1) return 0.0;
  double acc = 0.0;
  for (std::size_t i = 0; i < spatial_norms.size(); ++i) {
    const double w = (i == 0 || i + 1 == spatial_norms.size()) ? 0.5 : 1.0;
    acc += w * spatial_norms[i] * spatial_norms[i];
  }
  return std::sqrt(dt * acc);
}

double spacetime_norm(const std::vector<ScalarField>& series, SpaceTimeNorm which,
                      double dt) {
  if (series.empty()) throw Error("spacetime norm: empty series");
  SpatialNorms norms(series.front().mesh);
  std::vector<double> s;
  s.reserve(series.size());
  for (const auto& f : series) s.push_back(norms.norm(f, which));
  return spacetime_combine(s, dt);
}

double spacetime_norm(const std::vector<EdgeField>& series, SpaceTimeNorm which,
                      double dt) {
  if (series.empty()) throw Error("spacetime norm: empty series");
  SpatialNorms norms(series.front().mesh);
  std::vector<double> s;
  s.reserve(series.size());
  for (const auto& f : series) s.push_back(norms.norm(f, which));
  return spacetime_combine(s, dt);
}

double spacetime_norm(const std::vector<NodalVectorField>& series, double dt) {
  if (series.empty()) throw Error("spacetime norm: empty series");
  SpatialNorms norms(series.front().mesh);
  std::vector<double> s;
  s.reserve(series.size());
  for (const auto& f : series) s.push_back(norms.norm(f));
  return spacetime_combine(s, dt);
}

ErrorTable error_table(const ReferenceTrajectory& reference,
                       const std::array<std::vector<MultiscaleField>, 3>& reconstructions,
                       int stride) {
  const auto& traj = reference.trajectory;
  if (!traj.mesh || traj.states.empty())
    throw Error("error table: empty reference trajectory");
  if (stride < 1) throw Error("error table: stride must be at least 1");
  const int n_steps = static_cast<int>(traj.states.size()) - 1;
  if (n_steps % stride != 0)
    throw Error("error table: stride does not divide the reference step count");
  const int n_samples = n_steps / stride + 1;
  if (n_samples < 2)
    throw Error("error table: need at least two time samples");
  const int n_nodes = traj.mesh->node_count();
  const int n_edges = traj.mesh->edge_count();
  for (int k = 0; k < 3; ++k) {
    if (static_cast<int>(reconstructions[k].size()) != n_samples)
      throw Error("error table: order-" + std::to_string(k) + " series has " +
                  std::to_string(reconstructions[k].size()) + " samples, expected " +
                  std::to_string(n_samples));
    for (const auto& m : reconstructions[k]) {
      if (!m.mesh || !(*m.mesh == *traj.mesh))
        throw Error("error table: reconstruction sampled off the reference mesh");
      if (m.psi.size() != n_nodes || m.E.rows() != n_nodes)
        throw Error("error table: reconstruction sample is missing psi or E values");
      if (!m.E_edges.mesh || !(*m.E_edges.mesh == *traj.mesh) ||
          m.E_edges.values.size() != n_edges)
        throw Error("error table: reconstruction sample is missing edge moments "
                    "of the electric field");
    }
  }

  const double dt_eff = traj.dt * stride;
  SpatialNorms norms(traj.mesh);

  std::vector<double> ref_rho_L2(n_samples), ref_rho_H1(n_samples);
  std::vector<double> ref_E_L2(n_samples), ref_E_Hc(n_samples);
  std::array<std::vector<double>, 3> e_rho_L2, e_rho_H1, e_E_L2, e_E_Hc;
  for (int k = 0; k < 3; ++k) {
    e_rho_L2[k].resize(n_samples);
    e_rho_H1[k].resize(n_samples);
    e_E_L2[k].resize(n_samples);
    e_E_Hc[k].resize(n_samples);
  }

  for (int i = 0; i < n_samples; ++i) {
    const auto& st = traj.states[static_cast<std::size_t>(i) * stride];
    ref_rho_L2[i] = norms.norm(st.rho, SpaceTimeNorm::L2);
    ref_rho_H1[i] = norms.norm(st.rho, SpaceTimeNorm::H1);
    const NodalVectorField E_nodal = recover_nodal(st.E);
    ref_E_L2[i] = norms.norm(E_nodal);
    ref_E_Hc[i] = norms.norm(st.E, SpaceTimeNorm::Hcurl);

    for (int k = 0; k < 3; ++k) {
      const auto& m = reconstructions[k][i];
      const VectorXd rho_ms = reference.medium.N * m.psi.cwiseAbs2();
      const ScalarField d_rho(traj.mesh, st.rho.values - rho_ms);
      e_rho_L2[k][i] = norms.norm(d_rho, SpaceTimeNorm::L2);
      e_rho_H1[k][i] = norms.norm(d_rho, SpaceTimeNorm::H1);

      NodalVectorField dE(traj.mesh);
      dE.values = E_nodal.values - m.E;
      e_E_L2[k][i] = norms.norm(dE);

      const EdgeField d_edge(traj.mesh, st.E.values - m.E_edges.values);
      e_E_Hc[k][i] = norms.norm(d_edge, SpaceTimeNorm::Hcurl);
    }
  }

  ErrorTable table;
  table.ref_rho_L2 = spacetime_combine(ref_rho_L2, dt_eff);
  table.ref_rho_H1 = spacetime_combine(ref_rho_H1, dt_eff);
  table.ref_E_L2 = spacetime_combine(ref_E_L2, dt_eff);
  table.ref_E_Hcurl = spacetime_combine(ref_E_Hc, dt_eff);
  const auto check_denominator = [](double v, const char* what) {
    if (!(v > 0.0))
      throw Error(std::string("error table: reference ") + what +
                  " norm is zero, relative errors are undefined");
  };
  check_denominator(table.ref_rho_L2, "density L2");
  check_denominator(table.ref_rho_H1, "density H1");
  check_denominator(table.ref_E_L2, "field (L2)^3");
  check_denominator(table.ref_E_Hcurl, "field H(curl)");

  for (int k = 0; k < 3; ++k) {
    table.rho_L2[k] = spacetime_combine(e_rho_L2[k], dt_eff) / table.ref_rho_L2;
    table.rho_H1[k] = spacetime_combine(e_rho_H1[k], dt_eff) / table.ref_rho_H1;
    table.E_L2[k] = spacetime_combine(e_E_L2[k], dt_eff) / table.ref_E_L2;
    table.E_Hcurl[k] = spacetime_combine(e_E_Hc[k], dt_eff) / table.ref_E_Hcurl;
  }
  return table;
}

} // namespace mshom
