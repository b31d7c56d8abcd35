// Command-line front end. Every subcommand resolves a Config (JSON file plus
// flag overrides), runs one library workflow and prints a JSON report on
// stdout. Exit codes: 0 ok, 1 usage, 2 validation failure, 3 numerical
// failure.

#include "cqdyn/config.hpp"
#include "cqdyn/diagnostics.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/measurement.hpp"
#include "cqdyn/purify.hpp"
#include "cqdyn/report_io.hpp"

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>

using namespace cqdyn;
using nlohmann::json;

namespace {

constexpr int kOk = 0;
constexpr int kUsage = 1;
constexpr int kValidation = 2;
constexpr int kNumerical = 3;

struct Flags {
  std::string config;
  std::string model;
  std::vector<std::string> params;
  std::string mode;
  std::optional<double> T, dt, t, p;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> N;
  std::optional<int> every, resamples, cells;
  std::optional<unsigned> workers;
  std::string out_dir;
  std::string dynamics = "healed";
};

void add_common(CLI::App* sub, Flags& f) {
  sub->add_option("-c,--config", f.config, "JSON config file");
  sub->add_option("-m,--model", f.model, "builtin model name");
  sub->add_option("--param", f.params, "model parameter override name=value (repeatable)");
  sub->add_option("--mode", f.mode, "density|pure|standard|joint");
  sub->add_option("--T", f.T, "final time");
  sub->add_option("--dt", f.dt, "time step");
  sub->add_option("--seed", f.seed, "random seed");
  sub->add_option("--N", f.N, "ensemble size");
  sub->add_option("--every", f.every, "keep every k-th sample");
  sub->add_option("--workers", f.workers, "worker threads (0 = all cores)");
  sub->add_option("--out-dir", f.out_dir, "output directory (default $CQDYN_OUTPUT_DIR or .)");
}

Config resolve(const Flags& f) {
  Config c = f.config.empty() ? Config{} : load_config(f.config);
  if (!f.model.empty()) c.model = f.model;
  for (const auto& kv : f.params) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--param expects name=value, got '" + kv + "'");
    try {
      c.params[kv.substr(0, eq)] = std::stod(kv.substr(eq + 1));
    } catch (const std::exception&) {
      throw UsageError("--param value is not a number: '" + kv + "'");
    }
  }
  if (!f.mode.empty()) c.mode = parse_mode(f.mode);
  if (f.T) c.T = *f.T;
  if (f.dt) c.dt = *f.dt;
  if (f.t) c.t = *f.t;
  if (f.p) c.p = *f.p;
  if (f.seed) c.seed = *f.seed;
  if (f.N) c.N = *f.N;
  if (f.every) c.every = *f.every;
  if (f.resamples) c.resamples = *f.resamples;
  if (f.workers) c.workers = *f.workers;
  // Re-run the config checks on the merged result.
  (void)config_from_json(to_json(c));
  return c;
}

std::string out_dir(const Flags& f) {
  if (!f.out_dir.empty()) return f.out_dir;
  if (const char* env = std::getenv("CQDYN_OUTPUT_DIR"); env && *env) return env;
  return ".";
}

bool explicit_out_dir(const Flags& f) {
  const char* env = std::getenv("CQDYN_OUTPUT_DIR");
  return !f.out_dir.empty() || (env && *env);
}

// Output path with the given extension: first matching entry of
// cfg.outputs, otherwise <dir>/<fallback>.
std::optional<std::string> output_path(const Flags& f, const Config& cfg, const std::string& ext,
                                       const std::string& fallback, bool always) {
  for (const auto& o : cfg.outputs) {
    if (std::filesystem::path(o).extension() == ext) {
      const std::filesystem::path p(o);
      return p.is_absolute() ? o : (std::filesystem::path(out_dir(f)) / p).string();
    }
  }
  if (!always && !explicit_out_dir(f) && cfg.outputs.empty()) return std::nullopt;
  return (std::filesystem::path(out_dir(f)) / (fallback + ext)).string();
}

void emit_json(const Flags& f, const Config& cfg, const std::string& name, const json& body) {
  const std::string text = with_provenance(body, to_json(cfg)).dump(2) + "\n";
  std::cout << text;
  if (auto path = output_path(f, cfg, ".json", name, false)) write_file(*path, text);
}

SimulationOptions sim_options(const Config& cfg, Mode mode) {
  SimulationOptions o;
  o.T = cfg.T;
  o.dt = cfg.dt;
  o.seed = cfg.seed;
  o.mode = mode;
  o.every = cfg.every;
  return o;
}

int cmd_validate(const Flags& f) {
  const Config cfg = resolve(f);
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  const ValidationReport r = validate(b.model, probe_points(b.model, init.z));
  emit_json(f, cfg, "validate", to_json(r));
  return r.valid ? kOk : kValidation;
}

int cmd_run(const Flags& f) {
  Config cfg = resolve(f);
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  const Mode mode = resolve_mode(cfg, b);
  cfg.mode = mode;
  Trajectory traj;
  if (mode == Mode::standard) {
    if (!b.spec) throw UsageError("model '" + b.name + "' has no Hamiltonian form; standard mode unavailable");
    traj = simulate(build_standard_semiclassical(*b.spec), init, sim_options(cfg, mode));
  } else {
    traj = simulate(b.model, init, sim_options(cfg, mode));
  }
  const json config = to_json(cfg);
  std::ostringstream csv;
  write_trajectory_csv(csv, traj, config);
  const std::string path = *output_path(f, cfg, ".csv", "run", true);
  write_file(path, csv.str());
  const DensityMatrix last = traj.density(traj.size() - 1);
  json body = {{"csv", path},
               {"samples", traj.size()},
               {"steps", traj.steps},
               {"terminated", traj.terminated},
               {"termination", traj.termination},
               {"final_purity", purity(last)}};
  emit_json(f, cfg, "run", body);
  return kOk;
}

int cmd_ensemble(const Flags& f) {
  Config cfg = resolve(f);
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  const Mode mode = resolve_mode(cfg, b);
  cfg.mode = mode;
  EnsembleOptions eo;
  eo.N = cfg.N;
  eo.workers = cfg.workers;
  eo.sim = sim_options(cfg, mode);
  std::vector<Trajectory> runs;
  if (mode == Mode::standard) {
    if (!b.spec) throw UsageError("model '" + b.name + "' has no Hamiltonian form; standard mode unavailable");
    runs = run_ensemble(build_standard_semiclassical(*b.spec), InitialDistribution::point(init), eo);
  } else {
    runs = run_ensemble(b.model, InitialDistribution::point(init), eo);
  }
  const int n = b.model.n;
  const int d = b.model.d;
  std::vector<std::string> names;
  std::vector<Series> cols;
  for (int i = 0; i < n; ++i) {
    names.push_back("z_" + std::to_string(i + 1));
    cols.push_back(expectation_series(runs, [i](const PhaseVector& z, const DensityMatrix&) { return z(i); }));
  }
  if (d == 2) {
    names.insert(names.end(), {"bloch_x", "bloch_y", "bloch_z"});
    cols.push_back(expectation_series(runs, [](const PhaseVector&, const DensityMatrix& r) { return 2.0 * r(0, 1).real(); }));
    cols.push_back(expectation_series(runs, [](const PhaseVector&, const DensityMatrix& r) { return -2.0 * r(0, 1).imag(); }));
    cols.push_back(expectation_series(runs, [](const PhaseVector&, const DensityMatrix& r) { return (r(0, 0) - r(1, 1)).real(); }));
  }
  names.push_back("purity");
  cols.push_back(expectation_series(runs, [](const PhaseVector&, const DensityMatrix& r) { return purity(r); }));

  const json config = to_json(cfg);
  std::ostringstream csv;
  csv << "# cqdyn " << version() << " config=" << config.dump() << "\r\n";
  csv << "t";
  for (const auto& nm : names) csv << ",mean_" << csv_field(nm) << ",se_" << csv_field(nm);
  csv << "\r\n";
  for (std::size_t k = 0; k < cols.front().t.size(); ++k) {
    csv << format_number(cols.front().t[k]);
    for (const auto& s : cols) csv << ',' << format_number(s.mean[k]) << ',' << format_number(s.stderr_[k]);
    csv << "\r\n";
  }
  const std::string path = *output_path(f, cfg, ".csv", "ensemble", true);
  write_file(path, csv.str());
  std::size_t terminated = 0;
  for (const auto& r : runs) terminated += r.terminated ? 1 : 0;
  json final_means = json::object();
  for (std::size_t c = 0; c < cols.size(); ++c) {
    final_means[names[c]] = {{"mean", cols[c].mean.back()}, {"stderr", cols[c].stderr_.back()}};
  }
  emit_json(f, cfg, "ensemble", {{"csv", path}, {"N", runs.size()}, {"terminated", terminated}, {"final", final_means}});
  return kOk;
}

// Fixed grid for the Diosi comparison; other low-dimensional models fit a
// grid to a pilot ensemble.
PhaseGrid default_compare_grid(const Config& cfg, const BuiltinModel& b, const InitialState& init, int cells) {
  if (cfg.grid) return *cfg.grid;
  if (b.model.n > 2) throw UsageError("compare: the grid solver handles at most two classical coordinates");
  if (b.name == "diosi") return PhaseGrid::make({-0.32, -2.56}, {0.32, 2.56}, {cells, cells});
  EnsembleOptions eo;
  eo.N = 2000;
  eo.workers = cfg.workers;
  eo.sim = sim_options(cfg, Mode::density);
  eo.sim.T = cfg.t;
  eo.sim.seed = cfg.seed ^ 0x9107ull;
  const auto pilot = run_ensemble(b.model, InitialDistribution::point(init), eo);
  std::vector<double> lo, hi;
  std::vector<int> cs;
  for (int i = 0; i < b.model.n; ++i) {
    double a = init.z(i), c = init.z(i);
    for (const auto& r : pilot) {
      for (const auto& z : r.z) {
        a = std::min(a, z(i));
        c = std::max(c, z(i));
      }
    }
    const double pad = 0.5 * std::max(c - a, 1e-3);
    lo.push_back(a - pad);
    hi.push_back(c + pad);
    cs.push_back(cells);
  }
  return PhaseGrid::make(lo, hi, cs);
}

int cmd_compare(const Flags& f) {
  const Config cfg = resolve(f);
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  const PhaseGrid grid = default_compare_grid(cfg, b, init, f.cells.value_or(128));
  MasterEquationCheckOptions o;
  o.t = cfg.t;
  o.N = cfg.N;
  o.dt = cfg.dt;
  o.seed = cfg.seed;
  o.workers = cfg.workers;
  o.resamples = cfg.resamples;
  const MasterEquationCheck r = check_against_master_equation(b.model, cell_box(grid, init), grid, o);
  emit_json(f, cfg, "compare",
            {{"comparison", to_json(r.comparison)},
             {"solver", to_json(r.solver)},
             {"mc_leakage", r.mc_leakage},
             {"grid", to_json(r.grid)},
             {"passes", r.comparison.passes()}});
  return r.comparison.passes() ? kOk : kValidation;
}

json matrix_json(const ComplexMatrix& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back({m(i, j).real(), m(i, j).imag()});
    rows.push_back(row);
  }
  return rows;
}

int cmd_purify(const Flags& f) {
  Flags g = f;
  if (g.model.empty() && g.config.empty()) {
    g.model = "dephasing_qubit";
    if (g.params.empty()) g.params.push_back("epsilon=0.25");
  }
  const Config cfg = resolve(g);
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  const auto probes = probe_points(b.model, init.z, 8);
  const PurifiedModel pm = purify_classical(b.model, init.z, probes);
  EquivalenceOptions eo;
  eo.T = cfg.T;
  eo.dt = cfg.dt;
  eo.N = cfg.N;
  eo.seed = cfg.seed;
  eo.workers = cfg.workers;
  const EquivalenceReport r = marginal_equivalence(pm, init, eo);
  const ValidationReport v = validate(pm.enlarged, [&] {
    PhaseVector z = PhaseVector::Zero(b.model.n + pm.extra_dims);
    z.head(b.model.n) = init.z;
    return z;
  }());
  emit_json(g, cfg, "purify",
            {{"extra_dims", pm.extra_dims},
             {"excess_d0", matrix_json(pm.excess_d0)},
             {"extra_d1", matrix_json(pm.extra_d1)},
             {"enlarged_saturated", v.saturated},
             {"enlarged_valid", v.valid},
             {"equivalence", to_json(r)}});
  return r.passes() && v.saturated ? kOk : kValidation;
}

int cmd_measure_check(const Flags& f) {
  Config cfg = resolve(f);
  if (!f.N && cfg.N == Config{}.N) cfg.N = 100000;
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  MeasureCheckOptions o;
  o.dt = cfg.dt;
  o.N = cfg.N;
  o.seed = cfg.seed;
  const MeasureCheckReport r = measure_check(b.model, init.z, init.rho, o);
  emit_json(f, cfg, "measure_check", to_json(r));
  return r.passes() ? kOk : kValidation;
}

int cmd_linearity(const Flags& f) {
  const Config cfg = resolve(f);
  const BuiltinModel b = resolve_model(cfg);
  const InitialState init = resolve_initial(cfg, b);
  const int d = b.model.d;
  StateVector e0 = StateVector::Zero(d);
  StateVector e1 = StateVector::Zero(d);
  e0(0) = 1.0;
  e1(d - 1) = 1.0;
  const auto a = InitialDistribution::point(InitialState::pure(init.z, e0));
  const auto c = InitialDistribution::point(InitialState::pure(init.z, e1));
  LinearityOptions lo;
  lo.p = cfg.p;
  lo.T = cfg.T;
  lo.dt = cfg.dt;
  lo.N = cfg.N;
  lo.seed = cfg.seed;
  lo.workers = cfg.workers;
  lo.resamples = cfg.resamples;
  lo.grid = cfg.grid;
  if (f.cells) lo.cells = *f.cells;
  LinearityReport r;
  if (f.dynamics == "standard") {
    if (!b.spec) throw UsageError("model '" + b.name + "' has no Hamiltonian form; standard dynamics unavailable");
    r = linearity_test(build_standard_semiclassical(*b.spec), a, c, lo);
  } else if (f.dynamics == "healed") {
    r = linearity_test(b.model, a, c, lo);
  } else {
    throw UsageError("--dynamics must be healed or standard");
  }
  json body = to_json(r);
  body["dynamics"] = f.dynamics;
  emit_json(f, cfg, "linearity", body);
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cqdyn: classical-quantum hybrid dynamics"};
  app.require_subcommand(1);
  Flags f;
  auto* validate_cmd = app.add_subcommand("validate", "complete-positivity check at the initial point and nearby probes");
  auto* run_cmd = app.add_subcommand("run", "one trajectory, written as CSV");
  auto* ensemble_cmd = app.add_subcommand("ensemble", "ensemble means and standard errors over time, written as CSV");
  auto* compare_cmd = app.add_subcommand("compare", "trajectory ensemble against the grid master-equation solver");
  auto* purify_cmd = app.add_subcommand("purify", "enlarge a non-saturated model and test marginal equivalence");
  auto* measure_cmd = app.add_subcommand("measure-check", "Kraus measurement step against the SDE step");
  auto* linearity_cmd = app.add_subcommand("linearity", "mixture linearity test (healed or standard dynamics)");
  for (auto* s : {validate_cmd, run_cmd, ensemble_cmd, compare_cmd, purify_cmd, measure_cmd, linearity_cmd}) {
    add_common(s, f);
  }
  compare_cmd->add_option("--t", f.t, "comparison time");
  compare_cmd->add_option("--cells", f.cells, "grid cells per axis when no grid is configured");
  compare_cmd->add_option("--resamples", f.resamples, "bootstrap resamples");
  linearity_cmd->add_option("--p", f.p, "mixture weight");
  linearity_cmd->add_option("--cells", f.cells, "histogram cells per axis");
  linearity_cmd->add_option("--resamples", f.resamples, "bootstrap resamples");
  linearity_cmd->add_option("--dynamics", f.dynamics, "healed|standard");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*validate_cmd) return cmd_validate(f);
    if (*run_cmd) return cmd_run(f);
    if (*ensemble_cmd) return cmd_ensemble(f);
    if (*compare_cmd) return cmd_compare(f);
    if (*purify_cmd) return cmd_purify(f);
    if (*measure_cmd) return cmd_measure_check(f);
    if (*linearity_cmd) return cmd_linearity(f);
  } catch (const StepSizeError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const DomainExitError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const PositivityError& e) {
    std::cerr << "validation failure: " << e.what() << "\n";
    return kValidation;
  } catch (const ContractError& e) {
    std::cerr << "validation failure: " << e.what() << "\n";
    return kValidation;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
