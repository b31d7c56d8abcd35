// End-to-end acceptance run: one PASS/FAIL line per criterion.

#include "cqdyn/diagnostics.hpp"
#include "cqdyn/ensemble.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/measurement.hpp"
#include "cqdyn/purify.hpp"
#include "cqdyn/report_io.hpp"
#include "cqdyn/zoo.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace cqdyn;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += what + (ok ? "" : " [fail]");
  }
};

std::string fmt(const char* f, double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, x);
  return buf;
}

std::string num(double x) { return fmt("%.4g", x); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

MeanSe mean_se(const std::vector<double>& x) {
  MeanSe r;
  if (x.empty()) return r;
  for (double v : x) r.mean += v;
  r.mean /= static_cast<double>(x.size());
  double ss = 0.0;
  for (double v : x) ss += (v - r.mean) * (v - r.mean);
  if (x.size() > 1) r.se = std::sqrt(ss / static_cast<double>(x.size() - 1) / static_cast<double>(x.size()));
  return r;
}

// Fraction estimate with binomial standard error.
MeanSe fraction(std::size_t hits, std::size_t total) {
  const double f = static_cast<double>(hits) / static_cast<double>(total);
  return {f, std::sqrt(f * (1.0 - f) / static_cast<double>(total))};
}

double sigma_z(const DensityMatrix& rho) { return (rho(0, 0) - rho(rho.rows() - 1, rho.rows() - 1)).real(); }

// ---------------------------------------------------------------------------

Outcome positivity_gate() {
  Outcome o;
  for (const auto& name : builtin_names()) {
    const BuiltinModel b = make_builtin(name);
    const ValidationReport v = validate(b.model, b.initial.z);
    const bool ok = v.valid && v.worst_tradeoff_eigenvalue() >= -1e-10 && v.worst_range_residual() <= 1e-10;
    o.require(ok, name + " eig " + num(v.worst_tradeoff_eigenvalue()) + " range " + num(v.worst_range_residual()));
  }
  const BuiltinModel broken = make_builtin("broken_qubit");
  o.require(!validate(broken.model, broken.initial.z).valid, "broken_qubit rejected");
  return o;
}

// Density-matrix trajectories from the default pure state. The coarse run
// sees the sum of consecutive fine increments, so both step sizes follow the
// same Brownian path.
struct PurityRun {
  double worst_coarse = 1.0;  // min purity
  double worst_fine = 1.0;
  int failures = 0;  // step-size errors in either run
};

PurityRun purity_deficits(const BuiltinModel& b, std::size_t N, double T, double dt, std::uint64_t seed) {
  PurityRun r;
  const double fine = 0.5 * dt;
  const auto steps = static_cast<std::uint64_t>(std::llround(T / dt));
  const int n = b.model.n;
  for (std::size_t i = 0; i < N; ++i) {
    CQStateDensity coarse{0.0, b.initial.z, b.initial.rho};
    CQStateDensity refined = coarse;
    bool coarse_alive = true, fine_alive = true;
    try {
      for (std::uint64_t k = 0; k < steps && (coarse_alive || fine_alive); ++k) {
        const RealVector a = wiener_increment(seed, i, 2 * k, n, fine);
        const RealVector c = wiener_increment(seed, i, 2 * k + 1, n, fine);
        if (fine_alive) {
          refined = step_density(b.model, refined, fine, a);
          fine_alive = !b.model.domain_violation(refined.z);
          if (fine_alive) refined = step_density(b.model, refined, fine, c);
          fine_alive = fine_alive && !b.model.domain_violation(refined.z);
          r.worst_fine = std::min(r.worst_fine, purity(refined.rho));
        }
        if (coarse_alive) {
          coarse = step_density(b.model, coarse, dt, a + c);
          coarse_alive = !b.model.domain_violation(coarse.z);
          r.worst_coarse = std::min(r.worst_coarse, purity(coarse.rho));
        }
      }
    } catch (const StepSizeError&) {
      ++r.failures;
    }
  }
  return r;
}

Outcome purity_theorem() {
  Outcome o;
  const double dt = 1e-4;
  for (const auto& name : builtin_names()) {
    const BuiltinModel b = make_builtin(name);
    const PurityRun r = purity_deficits(b, 100, 1.0, dt, 101);
    const double deficit = 1.0 - r.worst_coarse;
    const double deficit_fine = 1.0 - r.worst_fine;
    // Below rounding level there is nothing left to improve.
    const bool improves = deficit <= 1e-12 || deficit >= 1.5 * deficit_fine;
    o.require(r.failures == 0 && r.worst_coarse >= 1.0 - 100.0 * dt && improves,
              name + " deficit " + num(deficit) + " -> " + num(deficit_fine) +
                  (r.failures ? " step-size errors " + std::to_string(r.failures) : ""));
  }
  const BuiltinModel lossy = make_builtin("dephasing_qubit", {{"epsilon", 0.1}});
  EnsembleOptions eo;
  eo.N = 1000;
  eo.sim.T = 1.0;
  eo.sim.dt = dt;
  eo.sim.seed = 102;
  eo.sim.every = 10000;
  const auto ens = run_ensemble(lossy.model, InitialDistribution::point(lossy.initial), eo);
  const Series s = expectation_series(ens, [](const PhaseVector&, const DensityMatrix& rho) { return purity(rho); });
  o.require(s.mean.back() < 0.95, "eps=0.1 mean purity " + num(s.mean.back()));
  const double rate = purity_rate(lossy.model, zoo::plus_state(), lossy.initial.z);
  o.require(std::abs(rate + 0.2) <= 1e-10, "purity_rate at |+> " + fmt("%.12g", rate));
  return o;
}

Outcome master_equation_agreement() {
  Outcome o;
  const BuiltinModel b = make_builtin("diosi");
  const PhaseGrid g = PhaseGrid::make({-0.32, -2.56}, {0.32, 2.56}, {128, 128});
  MasterEquationCheckOptions opts;
  opts.t = 0.2;
  opts.N = 100000;
  opts.dt = 1e-3;
  opts.seed = 3;
  const MasterEquationCheck r = check_against_master_equation(b.model, cell_box(g, b.initial), g, opts);
  const ComparisonReport& c = r.comparison;
  o.require(c.marginal_l1 <= std::max(0.02, 3.0 * c.marginal_error),
            "marginal L1 " + num(c.marginal_l1) + " (err " + num(c.marginal_error) + ")");
  for (std::size_t a = 0; a < c.component_l1.size(); ++a) {
    o.require(c.component_l1[a] <= std::max(0.02, 3.0 * c.component_error[a]),
              "component " + std::to_string(a) + " " + num(c.component_l1[a]) + " (err " + num(c.component_error[a]) +
                  ")");
  }
  return o;
}

Outcome born_rule() {
  Outcome o;
  const BuiltinModel b = make_builtin("diosi");
  const double lambda = b.params.at("lambda");
  EnsembleOptions eo;
  eo.N = 10000;
  eo.sim.T = 3.0;
  eo.sim.dt = 1e-3;
  eo.sim.seed = 4;
  eo.sim.mode = Mode::pure;
  eo.sim.every = 100;
  const auto ens = run_ensemble(b.model, InitialDistribution::point(b.initial), eo);

  std::size_t up = 0;
  for (const auto& tr : ens) up += sigma_z(tr.density(tr.size() - 1)) > 0.9;
  const MeanSe f = fraction(up, ens.size());
  o.require(std::abs(f.mean - 0.5) <= 3.0 * f.se, "P(<sz> > 0.9) " + num(f.mean) + " +- " + num(f.se));

  const auto worst = [](const Series& s) {
    double w = 0.0;
    for (std::size_t k = 1; k < s.t.size(); ++k) w = std::max(w, std::abs(s.mean[k]) / s.stderr_[k]);
    return w;
  };
  const Series p = expectation_series(ens, [](const PhaseVector& z, const DensityMatrix&) { return z(1); });
  const Series sz = expectation_series(ens, [](const PhaseVector&, const DensityMatrix& rho) { return sigma_z(rho); });
  o.require(worst(p) <= 3.0, "max |E[P_t]|/SE " + num(worst(p)));
  o.require(worst(sz) <= 3.0, "max |E[<sz>_t]|/SE " + num(worst(sz)));

  // Late-time momentum drift, split by the terminal collapse sign.
  const double t0 = 1.5;
  std::vector<double> drift_up, drift_down;
  for (const auto& tr : ens) {
    const std::size_t k0 = tr.index_at(t0);
    const std::size_t k1 = tr.size() - 1;
    const double v = (tr.z[k1](1) - tr.z[k0](1)) / (tr.t[k1] - tr.t[k0]);
    (sigma_z(tr.density(k1)) > 0.0 ? drift_up : drift_down).push_back(v);
  }
  const MeanSe du = mean_se(drift_up), dd = mean_se(drift_down);
  o.require(std::abs(du.mean + 2.0 * lambda) <= 3.0 * du.se, "drift | up " + num(du.mean) + " +- " + num(du.se));
  o.require(std::abs(dd.mean - 2.0 * lambda) <= 3.0 * dd.se, "drift | down " + num(dd.mean) + " +- " + num(dd.se));
  return o;
}

Outcome reconstruction() {
  Outcome o;
  for (const auto& name : builtin_names()) {
    const BuiltinModel b = make_builtin(name);
    const Coefficients c = b.model.at(b.initial.z);
    const bool full_rank = c.sigma.fullPivLu().rank() == b.model.n;
    SimulationOptions so;
    so.T = 1.0;
    so.dt = 1e-3;
    so.seed = 5;
    so.mode = Mode::pure;
    const Trajectory t = simulate(b.model, b.initial, so);
    const Trajectory r = reconstruct_conditioned(b.model, t.t, t.z, b.initial);
    double worst = r.size() == t.size() ? 1.0 : 0.0;
    for (std::size_t k = 0; k < std::min(t.size(), r.size()); ++k) {
      worst = std::min(worst, std::norm(t.psi[k].dot(r.psi[k])));
    }
    o.require(worst >= 1.0 - 1e-6, name + (full_rank ? " (full-rank sigma)" : " (rank-deficient sigma)") +
                                       " fidelity " + fmt("%.10f", worst));
  }
  return o;
}

Outcome standard_pathology() {
  Outcome o;
  const BuiltinModel diosi = make_builtin("diosi");
  const StandardSCModel standard = build_standard_semiclassical(*diosi.spec);
  SimulationOptions so;
  so.T = 1.0;
  so.dt = 1e-3;
  so.mode = Mode::standard;
  const Trajectory t = simulate(standard, diosi.initial, so);
  double p_max = 0.0;
  for (const auto& z : t.z) p_max = std::max(p_max, std::abs(z(1)));
  o.require(p_max == 0.0, "standard |P_t| max " + num(p_max));

  // Horizons and steps per model: sqrt_well and mass_superposition stop
  // before trajectories reach the stiff regions near q = 0 and near the
  // sources, the 32-level lattice uses a coarser step to bound the cost.
  struct Setting {
    const char* name;
    double T;
    double dt;
  };
  const Setting settings[] = {{"diosi", 1.0, 1e-3},
                              {"sqrt_well", 0.5, 1e-3},
                              {"mass_superposition", 0.2, 5e-4},
                              {"ghz_lattice", 0.5, 5e-3},
                              {"dephasing_qubit", 1.0, 2e-3}};
  for (const auto& st : settings) {
    const BuiltinModel b = make_builtin(st.name);
    const int d = b.model.d;
    StateVector e0 = StateVector::Zero(d), e1 = StateVector::Zero(d);
    e0(0) = 1.0;
    e1(d - 1) = 1.0;
    const auto a = InitialDistribution::point(InitialState::pure(b.initial.z, e0));
    const auto c = InitialDistribution::point(InitialState::pure(b.initial.z, e1));
    LinearityOptions lo;
    lo.N = 10000;
    lo.T = st.T;
    lo.dt = st.dt;
    lo.seed = 6;
    try {
      if (b.name == "diosi") {
        const LinearityReport r = linearity_test(standard, a, c, lo);
        o.require(r.rejected, "standard rejected at " + num(r.max_sigma) + " sigma");
      }
      const LinearityReport r = linearity_test(b.model, a, c, lo);
      o.require(!r.rejected, b.name + " healed " + num(r.max_sigma) + " sigma");
    } catch (const Error& e) {
      o.require(false, b.name + " error: " + e.what());
    }
  }
  return o;
}

Outcome purification() {
  Outcome o;
  const CQModel m = zoo::dephasing_qubit(0.25);
  const PurifiedModel pm = purify_classical(m, PhaseVector::Zero(1));
  o.require(pm.extra_dims == 1 && pm.extra_d1.rows() == 1 && pm.extra_d1(0, 0) == Complex(0.5, 0.0),
            "r " + std::to_string(pm.extra_dims) + ", extra D1 " + fmt("%.17g", pm.extra_d1(0, 0).real()));
  EquivalenceOptions eo;
  eo.N = 10000;
  eo.T = 1.0;
  eo.dt = 1e-3;
  eo.seed = 7;
  const EquivalenceReport r = marginal_equivalence(pm, InitialState::pure(PhaseVector::Zero(1), zoo::plus_state()), eo);
  double worst = r.mean_state_purity.max_sigma;
  for (const auto& d : r.observables) worst = std::max(worst, d.max_sigma);
  o.require(r.passes(3.0), "max deviation " + num(worst) + " SE");
  o.require(r.enlarged_min_purity >= 1.0 - 100.0 * eo.dt, "enlarged min purity " + fmt("%.10f", r.enlarged_min_purity));
  o.require(r.base_mean_purity_final < r.base_mean_purity_initial - 0.05,
            "base purity " + num(r.base_mean_purity_initial) + " -> " + num(r.base_mean_purity_final));
  return o;
}

Outcome measurement() {
  Outcome o;
  const BuiltinModel b = make_builtin("diosi");
  MeasureCheckOptions mo;
  mo.N = 100000;
  mo.dt = 1e-3;
  mo.seed = 8;
  mo.threshold = 4.0;
  const MeasureCheckReport r = measure_check(b.model, b.initial.z, b.initial.rho, mo);
  double outcome_sigma = 0.0, step_sigma = 0.0;
  for (const auto& c : r.outcome) outcome_sigma = std::max(outcome_sigma, c.sigma);
  for (const auto& c : r.one_step) step_sigma = std::max(step_sigma, c.sigma);
  o.require(outcome_sigma <= 4.0, "outcome moments " + num(outcome_sigma) + " SE");
  o.require(step_sigma <= 4.0, "one-step moments " + num(step_sigma) + " SE");
  o.require(r.kraus_residual <= 10.0 * mo.dt * mo.dt, "Kraus residual " + num(r.kraus_residual));
  return o;
}

Outcome toy_models() {
  Outcome o;
  {
    const BuiltinModel b = make_builtin("ghz_lattice");
    const int sites = static_cast<int>(b.params.at("n_sites"));
    EnsembleOptions eo;
    eo.N = 100;
    eo.sim.T = 5.0;
    eo.sim.dt = 1e-3;
    eo.sim.seed = 9;
    eo.sim.mode = Mode::pure;
    eo.sim.every = 5000;
    const auto ens = run_ensemble(b.model, InitialDistribution::point(b.initial), eo);
    std::size_t product = 0;
    for (const auto& tr : ens) {
      const StateVector& psi = tr.psi.back();
      int positive = 0, negative = 0;
      for (int s = 0; s < sites; ++s) {
        const double m = psi.dot(zoo::site_pauli_z(sites, s) * psi).real();
        positive += m > 0.99;
        negative += m < -0.99;
      }
      product += positive == sites || negative == sites;
    }
    o.require(product >= 95, "ghz product states " + std::to_string(product) + "/100");
  }
  {
    const BuiltinModel b = make_builtin("mass_superposition");
    EnsembleOptions eo;
    eo.N = 1000;
    eo.sim.T = 1.0;
    eo.sim.dt = 1e-4;
    eo.sim.seed = 9;
    eo.sim.mode = Mode::pure;
    eo.sim.every = 10000;
    const auto ens = run_ensemble(b.model, InitialDistribution::point(b.initial), eo);
    std::size_t right = 0;
    for (const auto& tr : ens) right += tr.z.back()(0) > 0.0;
    const MeanSe f = fraction(right, ens.size());
    o.require(std::abs(f.mean - 0.5) <= 3.0 * f.se, "mass right fraction " + num(f.mean) + " +- " + num(f.se));
  }
  {
    // sigma_z = +1 feels +lambda sqrt(q) and is pulled through q = 0 (capture);
    // sigma_z = -1 is repelled and turns back (rebound).
    const BuiltinModel b = make_builtin("sqrt_well");
    EnsembleOptions eo;
    eo.N = 1000;
    eo.sim.T = 5.0;
    eo.sim.dt = 1e-3;
    eo.sim.seed = 9;
    eo.sim.mode = Mode::pure;
    eo.sim.every = 5000;
    const auto ens = run_ensemble(b.model, InitialDistribution::point(b.initial), eo);
    const double born_capture = std::norm(b.initial.psi->coeff(0));
    std::size_t captured = 0, undecided = 0;
    for (const auto& tr : ens) {
      if (!tr.terminated) continue;
      ++captured;
      undecided += std::abs(sigma_z(tr.density(tr.size() - 1))) < 0.9;
    }
    const MeanSe f = fraction(captured, ens.size());
    o.require(std::abs(f.mean - born_capture) <= 3.0 * f.se,
              "sqrt_well capture fraction " + num(f.mean) + " +- " + num(f.se) + " vs Born " + num(born_capture) +
                  " (" + std::to_string(undecided) + " captured with |<sz>| < 0.9)");
  }
  return o;
}

std::string csv_of(const Trajectory& t) {
  std::ostringstream out;
  write_trajectory_csv(out, t, nlohmann::json::object());
  return out.str();
}

Outcome determinism() {
  Outcome o;
  const BuiltinModel b = make_builtin("diosi");
  SimulationOptions so;
  so.T = 1.0;
  so.dt = 1e-4;
  so.seed = 7;
  so.mode = Mode::pure;
  so.every = 10;
  o.require(csv_of(simulate(b.model, b.initial, so)) == csv_of(simulate(b.model, b.initial, so)),
            "pure replay byte-identical");
  so.mode = Mode::density;
  o.require(csv_of(simulate(b.model, b.initial, so)) == csv_of(simulate(b.model, b.initial, so)),
            "density replay byte-identical");
  EnsembleOptions eo;
  eo.sim.T = 1.0;
  eo.sim.mode = Mode::density;
  eo.N = 2000;
  eo.sim.seed = 10;
  eo.sim.every = 1000;
  eo.workers = 1;
  const auto serial = run_ensemble(b.model, InitialDistribution::point(b.initial), eo);
  eo.workers = 3;
  const auto pooled = run_ensemble(b.model, InitialDistribution::point(b.initial), eo);
  bool same = serial.size() == pooled.size();
  for (std::size_t i = 0; same && i < serial.size(); ++i) same = csv_of(serial[i]) == csv_of(pooled[i]);
  o.require(same, "ensemble independent of worker count");

  // Terminal mean and variance of Z under dt and dt/2, independent seeds.
  eo.N = 10000;
  eo.workers = 0;
  eo.sim.mode = Mode::pure;
  const auto terminal = [&](double dt, std::uint64_t seed) {
    eo.sim.dt = dt;
    eo.sim.seed = seed;
    eo.sim.every = static_cast<int>(std::llround(eo.sim.T / dt));
    return run_ensemble(b.model, InitialDistribution::point(b.initial), eo);
  };
  const auto coarse = terminal(2e-3, 11);
  const auto fine = terminal(1e-3, 12);
  for (int i = 0; i < b.model.n; ++i) {
    std::vector<double> xc, xf, vc, vf;
    for (const auto& tr : coarse) xc.push_back(tr.z.back()(i));
    for (const auto& tr : fine) xf.push_back(tr.z.back()(i));
    const MeanSe mc = mean_se(xc), mf = mean_se(xf);
    for (double x : xc) vc.push_back((x - mc.mean) * (x - mc.mean));
    for (double x : xf) vf.push_back((x - mf.mean) * (x - mf.mean));
    const MeanSe sc = mean_se(vc), sf = mean_se(vf);
    const double mean_dev = std::abs(mc.mean - mf.mean) / std::hypot(mc.se, mf.se);
    const double var_dev = std::abs(sc.mean - sf.mean) / std::hypot(sc.se, sf.se);
    o.require(mean_dev <= 3.0 && var_dev <= 3.0,
              "z_" + std::to_string(i + 1) + " mean " + num(mean_dev) + " SE, variance " + num(var_dev) + " SE");
  }
  return o;
}

struct Criterion {
  int index;
  const char* name;
  double budget_seconds;  // infinity when no runtime bound applies
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::set<int> only;
  std::set<int> known;
  app.add_option("--only", only, "run only these criteria");
  app.add_option("--known-failure", known, "criteria documented as failing; they do not set the exit status");
  CLI11_PARSE(app, argc, argv);

  constexpr double kNoBudget = std::numeric_limits<double>::infinity();
  const std::vector<Criterion> criteria = {
      {1, "complete-positivity gate", 1.0, positivity_gate},
      {2, "conditioned purity", 60.0, purity_theorem},
      {3, "ensemble vs master equation", 600.0, master_equation_agreement},
      {4, "Born-rule limit", kNoBudget, born_rule},
      {5, "conditioned-state reconstruction", 10.0, reconstruction},
      {6, "mean-field pathology and linearity", kNoBudget, standard_pathology},
      {7, "classical purification", kNoBudget, purification},
      {8, "measurement equivalence", kNoBudget, measurement},
      {9, "toy-model outcomes", kNoBudget, toy_models},
      {10, "determinism and weak convergence", kNoBudget, determinism},
  };
  int run = 0, failed = 0, unexpected = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.contains(c.index)) continue;
    ++run;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.require(false, std::string("error: ") + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (std::isfinite(c.budget_seconds)) {
      o.require(secs < c.budget_seconds, "runtime " + fmt("%.1f", secs) + " s");
    } else {
      o.detail += "; runtime " + fmt("%.1f", secs) + " s";
    }
    failed += !o.pass;
    unexpected += !o.pass && !known.contains(c.index);
    const char* note = !known.contains(c.index) ? "" : o.pass ? " (listed as known failure, now passing)" : " (known failure)";
    std::printf("%s [%d] %s: %s%s\n", o.pass ? "PASS" : "FAIL", c.index, c.name, o.detail.c_str(), note);
    std::fflush(stdout);
  }
  std::printf("%d/%d criteria passed\n", run - failed, run);
  return unexpected == 0 ? 0 : 1;
}
