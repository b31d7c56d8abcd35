#include "cqdyn/measurement.hpp"

#include "cqdyn/ensemble.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/integrator.hpp"
#include "cqdyn/rng.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <limits>

namespace cqdyn {

namespace {

RealMatrix metric(const Coefficients& c) {
  if (c.noise_metric.size() > 0) return c.noise_metric;
  return numlin::pinv(RealMatrix(c.sigma * c.sigma.transpose()));
}

ComplexMatrix saturating_d0(const Coefficients& c, const RealMatrix& m) {
  return numlin::hermitize(c.d1.adjoint() * m.cast<Complex>() * c.d1);
}

bool is_saturated(const Coefficients& c, const ComplexMatrix& d0_sat) {
  if (c.d0.size() == 0) return true;
  return (c.d0 - d0_sat).cwiseAbs().maxCoeff() <= 1e-8 * std::max(1.0, c.d0.cwiseAbs().maxCoeff());
}

// I - iH dt - 1/2 d0_ab L_b^dag L_a dt + sum_a w_a L_a dt with w = D1^dag M J,
// M = pinv(sigma sigma^T) = pinv(D2) / 2.
ComplexMatrix kraus(const Coefficients& c, const ComplexMatrix& d0, const RealMatrix& m, const RealVector& J,
                    double dt) {
  const auto d = c.hamiltonian.rows();
  ComplexMatrix omega = ComplexMatrix::Identity(d, d) - Complex(0.0, dt) * c.hamiltonian;
  const ComplexVector w = c.d1.adjoint() * (m * J).cast<Complex>();
  const auto p = static_cast<Eigen::Index>(c.lindblad.size());
  for (Eigen::Index a = 0; a < p; ++a) {
    const ComplexMatrix& la = c.lindblad[a];
    if (w(a) != Complex(0.0, 0.0)) omega += (w(a) * dt) * la;
    for (Eigen::Index b = 0; b < p; ++b) {
      if (d0(a, b) == Complex(0.0, 0.0)) continue;
      omega -= (0.5 * dt * d0(a, b)) * (c.lindblad[b].adjoint() * la);
    }
  }
  return omega;
}

RealVector quantum_mean(const Coefficients& c, const DensityMatrix& rho) {
  RealVector mean = RealVector::Zero(c.d1.rows());
  for (std::size_t a = 0; a < c.lindblad.size(); ++a) {
    const Complex ell = (c.lindblad[a] * rho).trace();
    const auto col = c.d1.col(static_cast<Eigen::Index>(a));
    for (Eigen::Index i = 0; i < mean.size(); ++i) mean(i) += 2.0 * (std::conj(col(i)) * ell).real();
  }
  return mean;
}

// Deviation in standard errors after allowing an absolute tolerance `tol`
// for known systematic differences; 0 when both sides agree to rounding.
double sigma_of(double measured, double expected, double se, double tol) {
  const double diff = std::abs(measured - expected);
  if (diff == 0.0 || diff <= 1e-9 * std::max(std::abs(measured), std::abs(expected))) return 0.0;
  const double excess = diff - tol;
  if (excess <= 0.0) return 0.0;
  if (!(se > 0.0)) return std::numeric_limits<double>::infinity();
  return excess / se;
}

MomentCheck check(std::string name, double measured, double expected, double se, double tol = 0.0) {
  return {std::move(name), measured, expected, se, tol, sigma_of(measured, expected, se, tol)};
}

// Mean and covariance of the columns of x with standard errors.
struct Moments {
  RealVector mean, mean_se;
  RealMatrix cov, cov_se;
};

Moments moments(const RealMatrix& x) {
  const double N = static_cast<double>(x.cols());
  Moments m;
  m.mean = x.rowwise().mean();
  const RealMatrix c = x.colwise() - m.mean;
  m.cov = c * c.transpose() / (N - 1.0);
  m.mean_se = (m.cov.diagonal() / N).cwiseSqrt();
  const auto k = x.rows();
  m.cov_se.resize(k, k);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = i; j < k; ++j) {
      const RealVector prod = c.row(i).cwiseProduct(c.row(j)).transpose();
      const double mu = prod.mean();
      const double var = (prod.array() - mu).square().sum() / (N - 1.0);
      m.cov_se(i, j) = m.cov_se(j, i) = std::sqrt(var / N);
    }
  }
  return m;
}

}  // namespace

ComplexMatrix kraus_operator(const KrausStepSpec& spec, const PhaseVector& z) {
  const Coefficients c = spec.model.at(z);
  if (spec.J.size() != spec.model.n) throw DimensionError("kraus_operator: J must have n components");
  const RealMatrix m = metric(c);
  if (!is_saturated(c, saturating_d0(c, m))) {
    throw ContractError("kraus_operator: model '" + spec.model.name + "' does not saturate the trade-off at z");
  }
  return kraus(c, c.d0, m, spec.J, spec.dt);
}

double kraus_normalization_residual(const KrausStepSpec& spec, const PhaseVector& z) {
  const Coefficients c = spec.model.at(z);
  const RealMatrix m = metric(c);
  if (!is_saturated(c, saturating_d0(c, m))) {
    throw ContractError("kraus_normalization_residual: model '" + spec.model.name + "' is not saturated");
  }
  const double dt = spec.dt;
  // J = U_r S_r eta / sqrt(dt), eta standard normal in the rank of sigma.
  Eigen::JacobiSVD<RealMatrix> svd(c.sigma, Eigen::ComputeFullU);
  const RealVector s = svd.singularValues();
  const double smax = s.size() > 0 ? s.maxCoeff() : 0.0;
  std::vector<RealVector> dirs;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) > numlin::kPinvRtol * smax) dirs.push_back(svd.matrixU().col(k) * s(k) / std::sqrt(dt));
  }
  const RealVector zero = RealVector::Zero(spec.model.n);
  const double nodes[3] = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
  const double weights[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  const auto d = c.hamiltonian.rows();
  ComplexMatrix acc = ComplexMatrix::Zero(d, d);
  const auto r = dirs.size();
  if (r <= 6) {
    // Full tensor-product rule.
    std::size_t total = 1;
    for (std::size_t k = 0; k < r; ++k) total *= 3;
    for (std::size_t idx = 0; idx < total; ++idx) {
      RealVector J = zero;
      double w = 1.0;
      std::size_t rest = idx;
      for (std::size_t k = 0; k < r; ++k) {
        const std::size_t q = rest % 3;
        rest /= 3;
        J += nodes[q] * dirs[k];
        w *= weights[q];
      }
      const ComplexMatrix om = kraus(c, c.d0, m, J, dt);
      acc += w * (om.adjoint() * om);
    }
  } else {
    // Omega is affine in eta, so cross terms integrate to zero and a sum of
    // one-dimensional rules is exact.
    const ComplexMatrix om0 = kraus(c, c.d0, m, zero, dt);
    const ComplexMatrix base = om0.adjoint() * om0;
    acc = base;
    for (const auto& dir : dirs) {
      for (int q = 0; q < 3; ++q) {
        const ComplexMatrix om = kraus(c, c.d0, m, RealVector(nodes[q] * dir), dt);
        acc += weights[q] * (om.adjoint() * om - base);
      }
    }
  }
  const ComplexMatrix dev = acc - ComplexMatrix::Identity(d, d);
  return Eigen::JacobiSVD<ComplexMatrix>(dev).singularValues()(0);
}

MeasurementOutcome measure_and_update(const KrausStepSpec& spec, const PhaseVector& z, const DensityMatrix& rho,
                                      const RealVector& xi, double trace_floor) {
  const CQModel& model = spec.model;
  if (z.size() != model.n || xi.size() != model.n) throw DimensionError("measure_and_update: expected n components");
  if (rho.rows() != model.d) throw DimensionError("measure_and_update: density matrix dimension mismatch");
  if (!(spec.dt > 0.0)) throw UsageError("measure_and_update: dt must be positive");
  const double dt = spec.dt;
  const Coefficients c = model.at(z);
  const RealMatrix m = metric(c);
  const ComplexMatrix d0_sat = saturating_d0(c, m);

  MeasurementOutcome out;
  out.J = quantum_mean(c, rho) + c.sigma * xi / std::sqrt(dt);
  out.dZ = dt * (c.d1c + out.J);
  const ComplexMatrix omega = kraus(c, d0_sat, m, out.J, dt);
  ComplexMatrix next = numlin::hermitize(omega * rho * omega.adjoint());

  if (!is_saturated(c, d0_sat)) {
    Coefficients extra;
    extra.lindblad = c.lindblad;
    extra.d0 = numlin::hermitize(c.d0 - d0_sat);
    extra.d1 = ComplexMatrix::Zero(model.n, model.p);
    extra.d1c = RealVector::Zero(model.n);
    extra.sigma = RealMatrix::Zero(model.n, model.n);
    extra.hamiltonian = ComplexMatrix::Zero(model.d, model.d);
    const double tr = next.trace().real();
    if (!(tr >= trace_floor)) throw StepSizeError("measure_and_update: Kraus trace underflow; reduce dt");
    next = quantum_step_density(extra, next / tr, dt, RealVector::Zero(model.n));
    next = numlin::hermitize(next);
  }
  const double tr = next.trace().real();
  if (!(tr >= trace_floor)) {
    throw StepSizeError("measure_and_update: trace of the updated state fell to " + std::to_string(tr) +
                        "; reduce dt");
  }
  out.rho = next / tr;
  return out;
}

double MeasureCheckReport::max_sigma() const {
  double s = 0.0;
  for (const auto& c : outcome) s = std::max(s, c.sigma);
  for (const auto& c : one_step) s = std::max(s, c.sigma);
  return s;
}

bool MeasureCheckReport::passes() const {
  if (saturated && !(kraus_residual <= kraus_residual_bound)) return false;
  return max_sigma() <= threshold;
}

MeasureCheckReport measure_check(const CQModel& model, const PhaseVector& z, const DensityMatrix& rho,
                                 const MeasureCheckOptions& opts) {
  if (opts.N < 2) throw UsageError("measure_check: need at least two samples");
  const int n = model.n;
  const double dt = opts.dt;
  const Coefficients c = model.at(z);
  const RealMatrix m = metric(c);

  MeasureCheckReport rep;
  rep.model = model.name;
  rep.dt = dt;
  rep.N = opts.N;
  rep.threshold = opts.threshold;
  rep.saturated = is_saturated(c, saturating_d0(c, m));
  rep.kraus_residual_bound = 10.0 * dt * dt;
  KrausStepSpec spec{model, dt, RealVector::Zero(n)};
  rep.kraus_residual =
      rep.saturated ? kraus_normalization_residual(spec, z) : std::numeric_limits<double>::quiet_NaN();

  const auto basis = hermitian_basis(model.d);
  const auto D = static_cast<Eigen::Index>(basis.size());
  const auto N = static_cast<Eigen::Index>(opts.N);
  RealMatrix jdt(n, N);
  RealMatrix kraus_step(n + D, N);
  RealMatrix sde_step(n + D, N);
  const NoiseStream kraus_noise(mix64(opts.seed), 0);
  const NoiseStream sde_noise(mix64(opts.seed + 1), 0);
  const CQStateDensity s0{0.0, z, rho};
  RealVector xi(n);
  for (Eigen::Index k = 0; k < N; ++k) {
    const auto step = static_cast<std::uint64_t>(k);
    for (int i = 0; i < n; ++i) xi(i) = kraus_noise.normal(step, static_cast<std::uint32_t>(i));
    const MeasurementOutcome o = measure_and_update(spec, z, rho, xi);
    jdt.col(k) = o.J * dt;
    kraus_step.col(k).head(n) = o.dZ;
    kraus_step.col(k).tail(D) = hermitian_components(basis, o.rho - rho);

    RealVector dW(n);
    for (int i = 0; i < n; ++i) dW(i) = std::sqrt(dt) * sde_noise.normal(step, static_cast<std::uint32_t>(i));
    const CQStateDensity s1 = step_density(model, s0, dt, dW);
    sde_step.col(k).head(n) = s1.z - z;
    sde_step.col(k).tail(D) = hermitian_components(basis, s1.rho - rho);
  }

  const RealVector expected_mean = quantum_mean(c, rho) * dt;
  const RealMatrix expected_cov = c.sigma * c.sigma.transpose() * dt;  // 2 D2 dt
  const Moments mj = moments(jdt);
  for (int i = 0; i < n; ++i) {
    rep.outcome.push_back(check("E[J_" + std::to_string(i) + " dt]", mj.mean(i), expected_mean(i), mj.mean_se(i)));
  }
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      rep.outcome.push_back(check("Cov[J_" + std::to_string(i) + " dt, J_" + std::to_string(j) + " dt]",
                                  mj.cov(i, j), expected_cov(i, j), mj.cov_se(i, j)));
    }
  }

  const Moments mk = moments(kraus_step);
  const Moments ms = moments(sde_step);
  auto label = [n](Eigen::Index i) {
    return i < n ? "dZ_" + std::to_string(i) : "drho_" + std::to_string(i - n);
  };
  // The two steps agree to first order in dt. Their second-order difference
  // (the Kraus step keeps the fluctuation of the squared increment that the
  // Ito step replaces by its mean) is a bias of order (rate * dt)^2, with
  // rate = |H| + |D0| max_a |L_a|^2; it is allowed for before counting
  // standard errors. A genuine mismatch shows up at order rate * dt.
  double max_l = 0.0;
  for (const auto& l : c.lindblad) max_l = std::max(max_l, l.size() > 0 ? l.operatorNorm() : 0.0);
  const double rate = c.hamiltonian.operatorNorm() + (c.d0.size() > 0 ? c.d0.operatorNorm() : 0.0) * max_l * max_l;
  const double tol = (rate * dt) * (rate * dt);
  rep.one_step_tolerance = tol;
  for (Eigen::Index i = 0; i < n + D; ++i) {
    rep.one_step.push_back(
        check("mean " + label(i), mk.mean(i), ms.mean(i), std::hypot(mk.mean_se(i), ms.mean_se(i)), tol));
  }
  for (Eigen::Index i = 0; i < n + D; ++i) {
    for (Eigen::Index j = i; j < n + D; ++j) {
      rep.one_step.push_back(check("cov " + label(i) + "," + label(j), mk.cov(i, j), ms.cov(i, j),
                                   std::hypot(mk.cov_se(i, j), ms.cov_se(i, j)), tol));
    }
  }
  return rep;
}

}  // namespace cqdyn
