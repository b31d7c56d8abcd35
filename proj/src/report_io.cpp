#include "cqdyn/report_io.hpp"

#include "cqdyn/errors.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>

namespace cqdyn {

using nlohmann::json;

std::string version() { return CQDYN_VERSION; }

std::string format_number(double x) {
  if (x == 0.0) return "0";  // folds -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string csv_field(std::string_view s) {
  if (s.find_first_of(",\"\r\n") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  out += '"';
  return out;
}

void write_trajectory_csv(std::ostream& out, const Trajectory& traj, const json& config) {
  out << "# cqdyn " << version() << " config=" << config.dump() << "\r\n";
  if (traj.size() == 0) return;
  const auto n = traj.z.front().size();
  const auto d = traj.density(0).rows();
  out << "t";
  for (Eigen::Index i = 0; i < n; ++i) out << ",z_" << (i + 1);
  if (d == 2) out << ",bloch_x,bloch_y,bloch_z";
  out << ",purity\r\n";
  for (std::size_t k = 0; k < traj.size(); ++k) {
    const DensityMatrix rho = traj.density(k);
    out << format_number(traj.t[k]);
    for (Eigen::Index i = 0; i < n; ++i) out << ',' << format_number(traj.z[k](i));
    if (d == 2) {
      out << ',' << format_number(2.0 * rho(0, 1).real()) << ',' << format_number(-2.0 * rho(0, 1).imag()) << ','
          << format_number((rho(0, 0) - rho(1, 1)).real());
    }
    out << ',' << format_number(purity(rho)) << "\r\n";
  }
  if (traj.terminated) out << "# terminated: " << traj.termination << "\r\n";
}

json with_provenance(const json& body, const json& config) {
  json j;
  j["version"] = version();
  j["config"] = config;
  for (const auto& [k, v] : body.items()) j[k] = v;
  return j;
}

json to_json(const ValidationReport& r) {
  json points = json::array();
  for (const auto& p : r.points) {
    points.push_back({{"z", std::vector<double>(p.z.data(), p.z.data() + p.z.size())},
                      {"tradeoff_min_eigenvalue", p.tradeoff_min_eigenvalue},
                      {"range_residual", p.range_residual},
                      {"hamiltonian_hermiticity", p.hamiltonian_hermiticity},
                      {"d0_hermiticity", p.d0_hermiticity},
                      {"saturation_residual", p.saturation_residual},
                      {"valid", p.valid},
                      {"saturated", p.saturated}});
  }
  return {{"model", r.model},
          {"tol", r.tol},
          {"valid", r.valid},
          {"saturated", r.saturated},
          {"worst_tradeoff_eigenvalue", r.worst_tradeoff_eigenvalue()},
          {"worst_range_residual", r.worst_range_residual()},
          {"worst_saturation_residual", r.worst_saturation_residual()},
          {"points", points}};
}

json to_json(const ComparisonReport& r) {
  return {{"marginal_l1", r.marginal_l1},
          {"marginal_error", r.marginal_error},
          {"component_l1", r.component_l1},
          {"component_error", r.component_error},
          {"resamples", r.resamples},
          {"passes", r.passes()}};
}

json to_json(const MasterEquationStats& s) {
  return {{"dt", s.dt},
          {"steps", s.steps},
          {"max_stable_dt", s.max_stable_dt},
          {"trace_drift", s.trace_drift},
          {"boundary_mass", s.boundary_mass},
          {"min_cell_eigenvalue", s.min_cell_eigenvalue}};
}

json to_json(const PhaseGrid& g) {
  return {{"axes", g.axes}, {"lo", g.lo}, {"hi", g.hi}, {"cells", g.cells}};
}

json to_json(const LinearityReport& r) {
  return {{"comparison", to_json(r.comparison)},
          {"max_sigma", r.max_sigma},
          {"rejected", r.rejected},
          {"mean_mixture", r.mean_mixture},
          {"mean_mixture_se", r.mean_mixture_se},
          {"mean_components", r.mean_components},
          {"mean_components_se", r.mean_components_se},
          {"grid", to_json(r.grid)}};
}

namespace {

json deviation(const ObservableDeviation& d) {
  return {{"name", d.name}, {"max_sigma", d.max_sigma}, {"at_time", d.at_time}};
}

json moment(const MomentCheck& c) {
  return {{"name", c.name},
          {"measured", c.measured},
          {"expected", c.expected},
          {"stderr", c.stderr_},
          {"tolerance", c.tolerance},
          {"sigma", c.sigma}};
}

}  // namespace

json to_json(const EquivalenceReport& r) {
  json obs = json::array();
  for (const auto& o : r.observables) obs.push_back(deviation(o));
  return {{"extra_dims", r.extra_dims},
          {"observables", obs},
          {"mean_state_purity", deviation(r.mean_state_purity)},
          {"enlarged_min_purity", r.enlarged_min_purity},
          {"base_mean_purity_initial", r.base_mean_purity_initial},
          {"base_mean_purity_final", r.base_mean_purity_final},
          {"passes", r.passes()}};
}

json to_json(const MeasureCheckReport& r) {
  json outcome = json::array();
  for (const auto& c : r.outcome) outcome.push_back(moment(c));
  json one_step = json::array();
  for (const auto& c : r.one_step) one_step.push_back(moment(c));
  return {{"model", r.model},
          {"dt", r.dt},
          {"N", r.N},
          {"saturated", r.saturated},
          {"kraus_residual", r.kraus_residual},
          {"kraus_residual_bound", r.kraus_residual_bound},
          {"one_step_tolerance", r.one_step_tolerance},
          {"threshold", r.threshold},
          {"max_sigma", r.max_sigma()},
          {"passes", r.passes()},
          {"outcome", outcome},
          {"one_step", one_step}};
}

json to_json(const Series& s) {
  return {{"t", s.t}, {"mean", s.mean}, {"stderr", s.stderr_}, {"count", s.count}};
}

void write_file(const std::string& path, const std::string& content) {
  const std::filesystem::path p(path);
  std::error_code ec;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path(), ec);
  std::ofstream out(p, std::ios::binary);
  if (!out) throw UsageError("cannot write '" + path + "'");
  out << content;
  if (!out) throw UsageError("write to '" + path + "' failed");
}

}  // namespace cqdyn
