#include "cqdyn/diagnostics.hpp"

#include "cqdyn/errors.hpp"
#include "cqdyn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace cqdyn {

double purity(const DensityMatrix& rho) { return rho.cwiseAbs2().sum(); }

namespace {

RealMatrix metric_of(const Coefficients& c) {
  if (c.noise_metric.size() > 0) return c.noise_metric;
  return numlin::pinv(RealMatrix(c.sigma * c.sigma.transpose()));
}

// D0 - D1^dag pinv(sigma sigma^T) D1
ComplexMatrix excess_decoherence(const Coefficients& c) {
  return c.d0 - c.d1.adjoint() * metric_of(c).cast<Complex>() * c.d1;
}

}  // namespace

double purity_rate(const CQModel& model, const StateVector& psi, const PhaseVector& z) {
  if (psi.size() != model.d) throw DimensionError("purity_rate: state dimension does not match the model");
  const StateVector v = psi.normalized();
  const Coefficients c = model.at(z);
  if (model.p == 0) return 0.0;
  const ComplexMatrix b = numlin::principal_sqrt(numlin::hermitize(excess_decoherence(c)));
  double rate = 0.0;
  for (int a = 0; a < model.p; ++a) {
    ComplexMatrix lbar = ComplexMatrix::Zero(model.d, model.d);
    for (int k = 0; k < model.p; ++k) {
      if (b(a, k) != Complex(0.0, 0.0)) lbar += b(a, k) * c.lindblad[k];
    }
    const StateVector lv = lbar * v;
    const Complex mean = v.dot(lv);
    rate += 2.0 * (std::norm(mean) - lv.squaredNorm());
  }
  return rate;
}

double purity_rate(const CQModel& model, const DensityMatrix& rho, const PhaseVector& z) {
  if (rho.rows() != model.d || rho.cols() != model.d) {
    throw DimensionError("purity_rate: density matrix dimension does not match the model");
  }
  const double tr = rho.trace().real();
  if (std::abs(purity(rho) / (tr * tr) - 1.0) > 1e-8) {
    throw ContractError("purity_rate: the rate formula assumes a pure state (Tr rho^2 = " +
                        std::to_string(purity(rho)) + ")");
  }
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(numlin::hermitize(rho));
  return purity_rate(model, StateVector(es.eigenvectors().col(model.d - 1)), z);
}

double reduced_purity(const StateVector& psi, int n_sites, const std::vector<int>& keep) {
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  if (psi.size() != dim) throw DimensionError("reduced_purity: state is not an n_sites-qubit vector");
  std::vector<bool> kept(static_cast<std::size_t>(n_sites), false);
  for (int s : keep) {
    if (s < 0 || s >= n_sites) throw UsageError("reduced_purity: site index out of range");
    kept[s] = true;
  }
  const int nk = static_cast<int>(std::count(kept.begin(), kept.end(), true));
  const Eigen::Index dk = Eigen::Index{1} << nk;
  const Eigen::Index de = dim / dk;
  // psi as a dk x de matrix M; the reduced state is M M^dag.
  ComplexMatrix m = ComplexMatrix::Zero(dk, de);
  for (Eigen::Index idx = 0; idx < dim; ++idx) {
    Eigen::Index row = 0;
    Eigen::Index col = 0;
    for (int s = 0; s < n_sites; ++s) {
      const Eigen::Index bit = (idx >> (n_sites - 1 - s)) & 1;
      if (kept[s]) {
        row = (row << 1) | bit;
      } else {
        col = (col << 1) | bit;
      }
    }
    m(row, col) = psi(idx);
  }
  const ComplexMatrix rho = m * m.adjoint() / psi.squaredNorm();
  return purity(rho);
}

Trajectory reconstruct_conditioned(const CQModel& model, const std::vector<double>& times,
                                   const std::vector<PhaseVector>& record, const InitialState& init,
                                   double trace_floor) {
  if (times.size() != record.size() || times.empty()) {
    throw UsageError("reconstruct_conditioned: times and record must be non-empty and of equal length");
  }
  const bool pure = init.psi.has_value();
  Trajectory tr;
  tr.mode = pure ? Mode::pure : Mode::density;
  tr.t.push_back(times.front());
  tr.z.push_back(record.front());
  if (times.size() > 1) tr.dt = times[1] - times[0];
  if (times.size() > 1 && !(tr.dt > 0.0)) throw UsageError("reconstruct_conditioned: record times must increase");
  for (std::size_t k = 1; k < times.size(); ++k) {
    const double step = times[k] - times[k - 1];
    if (std::abs(step - tr.dt) > 1e-9 * std::max(1.0, std::abs(times[k]))) {
      throw UsageError("reconstruct_conditioned: record is not uniformly spaced at step " + std::to_string(k));
    }
  }
  StateVector psi;
  DensityMatrix rho;
  if (pure) {
    psi = init.psi->normalized();
    tr.psi.push_back(psi);
  } else {
    rho = init.rho;
    tr.rho.push_back(rho);
  }
  for (std::size_t k = 1; k < times.size(); ++k) {
    const PhaseVector& z = record[k - 1];
    const Coefficients c = model.at(z);
    const RealVector drift = pure ? classical_drift(c, psi) : classical_drift(c, rho);
    const RealVector u = metric_of(c) * (record[k] - z - tr.dt * drift);
    if (pure) {
      if (k == 1) {
        const ComplexMatrix ex = excess_decoherence(c);
        if (ex.size() > 0 && ex.cwiseAbs().maxCoeff() > 1e-8 * std::max(1.0, c.d0.cwiseAbs().maxCoeff())) {
          throw ContractError("reconstruct_conditioned: pure-state reconstruction needs a saturated model");
        }
      }
      StateVector next = quantum_step_pure(c, psi, tr.dt, u);
      const double n2 = next.squaredNorm();
      if (!(n2 >= trace_floor)) throw StepSizeError("reconstruct_conditioned: norm collapse at step " + std::to_string(k));
      psi = next / std::sqrt(n2);
      tr.psi.push_back(psi);
    } else {
      DensityMatrix next = numlin::hermitize(quantum_step_density(c, rho, tr.dt, u));
      const double t = next.trace().real();
      if (!(t >= trace_floor)) throw StepSizeError("reconstruct_conditioned: trace collapse at step " + std::to_string(k));
      rho = next / t;
      tr.rho.push_back(rho);
    }
    tr.t.push_back(times[k]);
    tr.z.push_back(record[k]);
    tr.steps = k;
  }
  return tr;
}

double standard_sc_residual(const CQModel& model, const StateVector& psi, const PhaseVector& z) {
  if (psi.size() != model.d) throw DimensionError("standard_sc_residual: state dimension does not match the model");
  const StateVector v = psi.normalized();
  const Coefficients c = model.at(z);
  const double h = (c.hamiltonian * v).norm();
  // Deterministic part of the pure unravelling without the Hamiltonian: the
  // integrator's quantum step with u = 0, dt = 1, minus psi and -iH psi.
  const StateVector step = quantum_step_pure(c, v, 1.0, RealVector::Zero(model.n));
  const StateVector correction = step - v + Complex(0.0, 1.0) * (c.hamiltonian * v);
  const double num = correction.norm();
  if (h == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
  return num / h;
}

// ---------------------------------------------------------------------------
// Linearity

namespace {

PhaseGrid fit_grid(const std::vector<const std::vector<Trajectory>*>& sets, double t, const std::vector<int>& axes,
                   int cells) {
  std::vector<double> lo(axes.size(), std::numeric_limits<double>::infinity());
  std::vector<double> hi(axes.size(), -std::numeric_limits<double>::infinity());
  for (const auto* set : sets) {
    for (const auto& tr : *set) {
      const std::size_t k = tr.index_at(t);
      for (std::size_t a = 0; a < axes.size(); ++a) {
        lo[a] = std::min(lo[a], tr.z[k](axes[a]));
        hi[a] = std::max(hi[a], tr.z[k](axes[a]));
      }
    }
  }
  for (std::size_t a = 0; a < axes.size(); ++a) {
    double span = hi[a] - lo[a];
    if (!(span > 1e-9)) span = std::max(1.0, std::abs(lo[a])) * 1e-3;
    lo[a] -= 0.05 * span;
    hi[a] += 0.05 * span;
  }
  return PhaseGrid::make(lo, hi, std::vector<int>(axes.size(), cells), axes);
}

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments terminal_mean(const std::vector<Trajectory>& trajs, double t, int axis) {
  double s = 0.0;
  double s2 = 0.0;
  for (const auto& tr : trajs) {
    const double x = tr.z[tr.index_at(t)](axis);
    s += x;
    s2 += x * x;
  }
  const double n = static_cast<double>(trajs.size());
  Moments m;
  m.mean = s / n;
  m.se = n > 1 ? std::sqrt(std::max(0.0, (s2 - n * m.mean * m.mean) / (n - 1.0)) / n) : 0.0;
  return m;
}

template <class Model>
LinearityReport linearity_any(const Model& model, int n, const InitialDistribution& a, const InitialDistribution& b,
                              const LinearityOptions& opts, Mode mode) {
  if (!(opts.p > 0.0 && opts.p < 1.0)) throw UsageError("linearity_test: p must lie in (0, 1)");
  if (opts.N < 2) throw UsageError("linearity_test: N must be at least 2");
  EnsembleOptions eo;
  eo.sim.T = opts.T;
  eo.sim.dt = opts.dt;
  eo.sim.mode = mode;
  eo.sim.every = std::max(1, static_cast<int>(std::ceil(opts.T / opts.dt - 1e-9)));
  eo.workers = opts.workers;
  eo.N = opts.N;
  // Independent seeds for the three ensembles.
  eo.sim.seed = opts.seed;
  const auto mixed = run_ensemble(model, InitialDistribution::mixture(opts.p, a, b), eo);
  eo.sim.seed = mix64(opts.seed + 1);
  const auto only_a = run_ensemble(model, a, eo);
  eo.sim.seed = mix64(opts.seed + 2);
  const auto only_b = run_ensemble(model, b, eo);

  std::vector<int> axes = opts.axes;
  if (axes.empty()) axes = n >= 2 ? std::vector<int>{0, n / 2} : std::vector<int>{0};
  LinearityReport report;
  report.grid = opts.grid ? *opts.grid : fit_grid({&mixed, &only_a, &only_b}, opts.T, axes, opts.cells);
  report.comparison = compare({&mixed}, {1.0}, {&only_a, &only_b}, {opts.p, 1.0 - opts.p}, opts.T, report.grid,
                              opts.resamples, opts.seed);
  auto sigma_of = [](double dist, double err) {
    if (dist <= 1e-12) return 0.0;
    return err > 0.0 ? dist / err : std::numeric_limits<double>::infinity();
  };
  report.max_sigma = sigma_of(report.comparison.marginal_l1, report.comparison.marginal_error);
  for (std::size_t k = 0; k < report.comparison.component_l1.size(); ++k) {
    report.max_sigma =
        std::max(report.max_sigma, sigma_of(report.comparison.component_l1[k], report.comparison.component_error[k]));
  }
  report.rejected = report.max_sigma > 3.0;
  const int axis = opts.observable_axis >= 0 ? opts.observable_axis : (n >= 2 ? n / 2 : 0);
  const Moments mm = terminal_mean(mixed, opts.T, axis);
  const Moments ma = terminal_mean(only_a, opts.T, axis);
  const Moments mb = terminal_mean(only_b, opts.T, axis);
  report.mean_mixture = mm.mean;
  report.mean_mixture_se = mm.se;
  report.mean_components = opts.p * ma.mean + (1.0 - opts.p) * mb.mean;
  report.mean_components_se = std::hypot(opts.p * ma.se, (1.0 - opts.p) * mb.se);
  return report;
}

}  // namespace

LinearityReport linearity_test(const CQModel& model, const InitialDistribution& a, const InitialDistribution& b,
                               const LinearityOptions& opts) {
  return linearity_any(model, model.n, a, b, opts, Mode::density);
}

LinearityReport linearity_test(const StandardSCModel& model, const InitialDistribution& a,
                               const InitialDistribution& b, const LinearityOptions& opts) {
  return linearity_any(model, model.spec.n, a, b, opts, Mode::standard);
}

MasterEquationCheck check_against_master_equation(const CQModel& model, const InitialDistribution& init,
                                                  const PhaseGrid& grid, const MasterEquationCheckOptions& opts) {
  if (!(opts.t > 0.0)) throw UsageError("check_against_master_equation: t must be positive");
  MasterEquationCheck out;
  out.grid = grid;
  MasterEquationOptions solver = opts.solver;
  solver.T = opts.t;
  const CQGridState reference = solve_master_equation(model, init.to_grid(grid), solver, &out.solver);

  EnsembleOptions eo;
  eo.N = opts.N;
  eo.workers = opts.workers;
  eo.sim.T = opts.t;
  eo.sim.dt = opts.dt;
  eo.sim.seed = opts.seed;
  eo.sim.mode = Mode::density;
  // Only the final sample is needed.
  eo.sim.every = static_cast<int>(std::min<double>(std::ceil(opts.t / opts.dt), 1e9));
  const auto runs = run_ensemble(model, init, eo);
  out.mc_leakage = estimate_cq_state(runs, opts.t, grid).leakage;
  out.comparison = compare(runs, opts.t, reference, opts.resamples, mix64(opts.seed ^ 0xC0FFEEull));
  return out;
}

InitialDistribution cell_box(const PhaseGrid& grid, const InitialState& s) {
  InitialDistribution dist = InitialDistribution::point(s);
  auto& atom = dist.atoms.front();
  atom.half_width = PhaseVector::Zero(s.z.size());
  for (int k = 0; k < grid.dims(); ++k) atom.half_width(grid.axes[k]) = 0.5 * grid.width(k);
  return dist;
}

}  // namespace cqdyn
