#include "cqdyn/purify.hpp"

#include "cqdyn/diagnostics.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace cqdyn {

ComplexMatrix excess_decoherence(const CQModel& model, const PhaseVector& z) {
  const Coefficients c = model.at(z);
  const RealMatrix metric =
      c.noise_metric.size() > 0 ? c.noise_metric : numlin::pinv(RealMatrix(c.sigma * c.sigma.transpose()));
  return numlin::hermitize(c.d0 - c.d1.adjoint() * metric.cast<Complex>() * c.d1);
}

namespace {

// Eigenpairs of the excess above the rank cutoff, largest first.
struct ExcessFactor {
  int rank = 0;
  ComplexMatrix block;  // rank x p
};

ExcessFactor factor_excess(const ComplexMatrix& excess, double tol) {
  ExcessFactor f;
  if (excess.size() == 0) return f;
  Eigen::SelfAdjointEigenSolver<ComplexMatrix> es(excess);
  const RealVector ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.minCoeff() < -tol * scale) {
    throw ContractError("purify: model violates the decoherence-diffusion trade-off (excess eigenvalue " +
                        std::to_string(ev.minCoeff()) + ")");
  }
  const double cutoff = std::max(tol * scale, numlin::kPinvRtol * ev.cwiseAbs().maxCoeff());
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = ev.size() - 1; i >= 0; --i) {
    if (ev(i) > cutoff) keep.push_back(i);
  }
  f.rank = static_cast<int>(keep.size());
  f.block = ComplexMatrix::Zero(f.rank, excess.cols());
  for (int r = 0; r < f.rank; ++r) {
    const Eigen::Index i = keep[r];
    ComplexVector v = es.eigenvectors().col(i);
    // Fix the eigenvector phase so the block varies smoothly with z: make the
    // largest entry real and positive.
    Eigen::Index arg = 0;
    v.cwiseAbs().maxCoeff(&arg);
    v *= std::conj(v(arg)) / std::abs(v(arg));
    f.block.row(r) = std::sqrt(ev(i)) * v.adjoint();
  }
  return f;
}

}  // namespace

PurifiedModel purify_classical(const CQModel& model, const PhaseVector& z_probe, std::span<const PhaseVector> probes,
                               double tol) {
  const ValidationReport v = validate(model, z_probe, 1e-8);
  if (!v.valid) throw ContractError("purify: model '" + model.name + "' fails validation at the probe point");
  PurifiedModel out;
  out.base = model;
  out.excess_d0 = excess_decoherence(model, z_probe);
  const ExcessFactor f0 = factor_excess(out.excess_d0, tol);
  out.extra_dims = f0.rank;
  out.extra_d1 = f0.block;
  for (const auto& z : probes) {
    const int r = factor_excess(excess_decoherence(model, z), tol).rank;
    if (r != f0.rank) {
      throw ContractError("purify: rank of the excess decoherence changes across probe points (" +
                          std::to_string(f0.rank) + " vs " + std::to_string(r) + "); unsupported model");
    }
  }
  if (f0.rank == 0) {
    out.enlarged = model;
    return out;
  }
  const int n = model.n;
  const int r = f0.rank;
  CQModel big;
  big.name = model.name + "+purified";
  big.n = n + r;
  big.d = model.d;
  big.p = model.p;
  const CQModel base = model;
  big.coefficients = [base, n, r, tol](const PhaseVector& z) {
    const PhaseVector zb = z.head(n);
    Coefficients c = base.at(zb);
    const ExcessFactor f = factor_excess(excess_decoherence(base, zb), tol);
    if (f.rank != r) throw ContractError("purify: excess decoherence changed rank along the trajectory");
    Coefficients e;
    e.lindblad = std::move(c.lindblad);
    e.d0 = c.d0;
    e.d1 = ComplexMatrix::Zero(n + r, base.p);
    e.d1.topRows(n) = c.d1;
    e.d1.bottomRows(r) = f.block;
    e.d1c = RealVector::Zero(n + r);
    e.d1c.head(n) = c.d1c;
    e.sigma = RealMatrix::Zero(n + r, n + r);
    e.sigma.topLeftCorner(n, n) = c.sigma;
    e.sigma.bottomRightCorner(r, r) = RealMatrix::Identity(r, r);
    if (c.sigma_pinv.size() > 0) {
      e.sigma_pinv = RealMatrix::Zero(n + r, n + r);
      e.sigma_pinv.topLeftCorner(n, n) = c.sigma_pinv;
      e.sigma_pinv.bottomRightCorner(r, r) = RealMatrix::Identity(r, r);
    }
    if (c.noise_metric.size() > 0) {
      e.noise_metric = RealMatrix::Zero(n + r, n + r);
      e.noise_metric.topLeftCorner(n, n) = c.noise_metric;
      e.noise_metric.bottomRightCorner(r, r) = RealMatrix::Identity(r, r);
    }
    e.hamiltonian = std::move(c.hamiltonian);
    return e;
  };
  if (model.domain) {
    big.domain = [base, n](const PhaseVector& z) { return base.domain_violation(z.head(n)); };
  }
  out.enlarged = std::move(big);
  return out;
}

std::vector<Observable> default_observables(const CQModel& model) {
  std::vector<Observable> obs;
  if (model.d == 2) {
    obs.push_back({"mean <sigma_z>", [](const PhaseVector&, const DensityMatrix& rho) {
                     return (rho(0, 0) - rho(1, 1)).real();
                   }});
  }
  const int last = model.n - 1;
  obs.push_back({"mean z[" + std::to_string(last) + "]",
                 [last](const PhaseVector& z, const DensityMatrix&) { return z(last); }});
  obs.push_back({"variance z[" + std::to_string(last) + "]",
                 [last](const PhaseVector& z, const DensityMatrix&) { return z(last); }, true});
  return obs;
}

bool EquivalenceReport::passes(double k) const {
  for (const auto& o : observables) {
    if (!(o.max_sigma <= k)) return false;
  }
  return mean_state_purity.max_sigma <= k;
}

namespace {

struct Stat {
  double value = 0.0;
  double se = 0.0;
};

// Sample mean or variance of f at sample index k, with its standard error.
Stat statistic(const std::vector<Trajectory>& trajs, std::size_t k, const Observable& o, int n_base) {
  const double N = static_cast<double>(trajs.size());
  double s1 = 0.0;
  std::vector<double> xs;
  xs.reserve(trajs.size());
  for (const auto& tr : trajs) {
    const std::size_t j = std::min(k, tr.size() - 1);
    const double x = o.f(tr.z[j].head(n_base), tr.density(j));
    xs.push_back(x);
    s1 += x;
  }
  const double mean = s1 / N;
  double m2 = 0.0;
  double m4 = 0.0;
  for (double x : xs) {
    const double dx = x - mean;
    m2 += dx * dx;
    m4 += dx * dx * dx * dx;
  }
  m2 /= N;
  m4 /= N;
  Stat s;
  if (o.variance) {
    s.value = m2 * N / std::max(1.0, N - 1.0);
    s.se = std::sqrt(std::max(0.0, m4 - m2 * m2) / N);
  } else {
    s.value = mean;
    s.se = std::sqrt(m2 / std::max(1.0, N - 1.0));
  }
  return s;
}

// Tr(E[rho]^2) with a delta-method standard error from the per-trajectory
// Hermitian components.
Stat mean_state_purity(const std::vector<Trajectory>& trajs, std::size_t k, int d) {
  const auto basis = hermitian_basis(d);
  const auto D = static_cast<Eigen::Index>(basis.size());
  const double N = static_cast<double>(trajs.size());
  RealMatrix x(D, static_cast<Eigen::Index>(trajs.size()));
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    const std::size_t j = std::min(k, trajs[i].size() - 1);
    x.col(static_cast<Eigen::Index>(i)) = hermitian_components(basis, trajs[i].density(j));
  }
  const RealVector mean = x.rowwise().mean();
  const RealMatrix centred = x.colwise() - mean;
  const RealMatrix cov = centred * centred.transpose() / std::max(1.0, N - 1.0);
  const RealVector grad = 2.0 * mean;
  Stat s;
  s.value = mean.squaredNorm();
  s.se = std::sqrt(std::max(0.0, grad.dot(cov * grad)) / N);
  return s;
}

double sigma_distance(const Stat& a, const Stat& b) {
  const double diff = std::abs(a.value - b.value);
  const double se = std::hypot(a.se, b.se);
  if (diff <= 1e-13 * std::max(1.0, std::abs(a.value))) return 0.0;
  return se > 0.0 ? diff / se : std::numeric_limits<double>::infinity();
}

}  // namespace

EquivalenceReport marginal_equivalence(const PurifiedModel& purified, const InitialState& init,
                                       const EquivalenceOptions& opts) {
  const int n = purified.base.n;
  const int r = purified.extra_dims;
  if (init.z.size() != n) throw DimensionError("marginal_equivalence: initial point must live in the base space");
  if (opts.checkpoints < 1) throw UsageError("marginal_equivalence: need at least one checkpoint");
  const auto steps = static_cast<std::uint64_t>(std::ceil(opts.T / opts.dt - 1e-9));
  const int every = std::max<int>(1, static_cast<int>(steps / static_cast<std::uint64_t>(opts.checkpoints)));

  EnsembleOptions base_opts;
  base_opts.N = opts.N;
  base_opts.workers = opts.workers;
  base_opts.sim.T = opts.T;
  base_opts.sim.dt = opts.dt;
  base_opts.sim.every = every;
  base_opts.sim.mode = Mode::density;
  base_opts.sim.seed = opts.seed;

  InitialState big_init = init;
  big_init.z = PhaseVector::Zero(n + r);
  big_init.z.head(n) = init.z;
  EnsembleOptions big_opts = base_opts;
  big_opts.sim.mode = init.psi ? Mode::pure : Mode::density;
  big_opts.sim.seed = mix64(opts.seed ^ 0xB16B00B5ull);

  const auto base_runs = run_ensemble(purified.base, InitialDistribution::point(init), base_opts);
  const auto big_runs = run_ensemble(purified.enlarged, InitialDistribution::point(big_init), big_opts);

  EquivalenceReport rep;
  rep.extra_dims = r;
  const std::vector<Observable> obs =
      opts.observables.empty() ? default_observables(purified.base) : opts.observables;
  const std::size_t K = base_runs.front().size();
  for (const auto& o : obs) {
    ObservableDeviation dev;
    dev.name = o.name;
    for (std::size_t k = 1; k < K; ++k) {
      const double s = sigma_distance(statistic(base_runs, k, o, n), statistic(big_runs, k, o, n));
      if (s > dev.max_sigma || k == 1) {
        dev.max_sigma = std::max(dev.max_sigma, s);
        if (s >= dev.max_sigma) dev.at_time = base_runs.front().t[k];
      }
    }
    rep.observables.push_back(dev);
  }
  rep.mean_state_purity.name = "purity of the mean state";
  for (std::size_t k = 1; k < K; ++k) {
    const double s = sigma_distance(mean_state_purity(base_runs, k, purified.base.d),
                                    mean_state_purity(big_runs, k, purified.base.d));
    if (s >= rep.mean_state_purity.max_sigma) {
      rep.mean_state_purity.max_sigma = s;
      rep.mean_state_purity.at_time = base_runs.front().t[k];
    }
  }
  for (const auto& tr : big_runs) {
    for (std::size_t k = 0; k < tr.size(); ++k) rep.enlarged_min_purity = std::min(rep.enlarged_min_purity, purity(tr.density(k)));
  }
  double p0 = 0.0;
  double p1 = 0.0;
  for (const auto& tr : base_runs) {
    p0 += purity(tr.density(0));
    p1 += purity(tr.density(tr.size() - 1));
  }
  rep.base_mean_purity_initial = p0 / static_cast<double>(base_runs.size());
  rep.base_mean_purity_final = p1 / static_cast<double>(base_runs.size());
  return rep;
}

}  // namespace cqdyn
