#include "cqdyn/model.hpp"

#include "cqdyn/errors.hpp"
#include "cqdyn/rng.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <string>

namespace cqdyn {

OperatorList::OperatorList(std::vector<ComplexMatrix> ops) {
  static std::atomic<std::uint64_t> next_id{1};
  auto data = std::make_shared<Data>();
  data->id = next_id.fetch_add(1, std::memory_order_relaxed);
  const auto p = ops.size();
  data->zero.resize(p);
  data->diagonal.resize(p);
  Eigen::Index d = 0;
  for (std::size_t a = 0; a < p; ++a) {
    const ComplexMatrix& m = ops[a];
    d = std::max(d, m.rows());
    data->zero[a] = m.size() == 0 || (m.array() == Complex(0.0, 0.0)).all();
    data->diagonal[a] = !data->zero[a] && m.rows() == m.cols() && numlin::is_diagonal(m);
    if (!data->zero[a]) data->active.push_back(static_cast<Eigen::Index>(a));
    if (!data->zero[a] && !data->diagonal[a]) data->all_diagonal = false;
  }
  if (data->all_diagonal) {
    data->diagonals.resize(static_cast<Eigen::Index>(data->active.size()), d);
    for (std::size_t k = 0; k < data->active.size(); ++k) {
      data->diagonals.row(static_cast<Eigen::Index>(k)) = ops[static_cast<std::size_t>(data->active[k])].diagonal().transpose();
    }
  }
  data->ops = std::move(ops);
  data_ = std::move(data);
}

const std::vector<ComplexMatrix>& OperatorList::operators() const {
  static const std::vector<ComplexMatrix> none;
  return data_ ? data_->ops : none;
}

const std::vector<Eigen::Index>& OperatorList::active() const {
  static const std::vector<Eigen::Index> none;
  return data_ ? data_->active : none;
}

const ComplexMatrix& OperatorList::diagonals() const {
  static const ComplexMatrix none;
  return data_ ? data_->diagonals : none;
}

namespace {

void check_shapes(const CQModel& model, const Coefficients& c) {
  auto fail = [&](const std::string& what) {
    throw DimensionError("model '" + model.name + "': " + what);
  };
  const auto n = model.n;
  const auto d = model.d;
  const auto p = model.p;
  if (static_cast<int>(c.lindblad.size()) != p) fail("expected " + std::to_string(p) + " Lindblad operators");
  for (const auto& l : c.lindblad) {
    if (l.rows() != d || l.cols() != d) fail("Lindblad operator is not d x d");
  }
  if (c.d0.rows() != p || c.d0.cols() != p) fail("D0 is not p x p");
  if (c.d1.rows() != n || c.d1.cols() != p) fail("D1 is not n x p");
  if (c.d1c.size() != n) fail("D1C is not length n");
  if (c.sigma.rows() != n || c.sigma.cols() != n) fail("sigma is not n x n");
  if (c.hamiltonian.rows() != d || c.hamiltonian.cols() != d) fail("H is not d x d");
}

RealMatrix noise_metric_of(const Coefficients& c) {
  if (c.noise_metric.size() > 0) return c.noise_metric;
  return numlin::pinv(RealMatrix(c.sigma * c.sigma.transpose()));
}

}  // namespace

Coefficients CQModel::at(const PhaseVector& z) const {
  if (!coefficients) throw UsageError("model '" + name + "' has no coefficient map");
  if (z.size() != n) {
    throw DimensionError("model '" + name + "': phase point has " + std::to_string(z.size()) +
                         " components, expected " + std::to_string(n));
  }
  Coefficients c = coefficients(z);
  check_shapes(*this, c);
  return c;
}

double ValidationReport::worst_tradeoff_eigenvalue() const {
  double worst = 0.0;
  bool first = true;
  for (const auto& p : points) {
    if (first || p.tradeoff_min_eigenvalue < worst) worst = p.tradeoff_min_eigenvalue;
    first = false;
  }
  return worst;
}

double ValidationReport::worst_range_residual() const {
  double worst = 0.0;
  for (const auto& p : points) worst = std::max(worst, p.range_residual);
  return worst;
}

double ValidationReport::worst_saturation_residual() const {
  double worst = 0.0;
  for (const auto& p : points) worst = std::max(worst, p.saturation_residual);
  return worst;
}

ValidationReport validate(const CQModel& model, const PhaseVector& z, double tol) {
  return validate(model, std::span<const PhaseVector>(&z, 1), tol);
}

ValidationReport validate(const CQModel& model, std::span<const PhaseVector> points, double tol) {
  ValidationReport report;
  report.model = model.name;
  report.tol = tol;
  report.valid = true;
  report.saturated = true;
  for (const auto& z : points) {
    const Coefficients c = model.at(z);
    PointValidation pv;
    pv.z = z;
    const RealMatrix metric = noise_metric_of(c);  // pinv(sigma sigma^T) = pinv(D2) / 2
    const ComplexMatrix cmetric = metric.cast<Complex>();
    const ComplexMatrix back = c.d1.adjoint() * cmetric * c.d1;
    // 2 D0 - D1^dag pinv(D2) D1 = 2 (D0 - D1^dag pinv(sigma sigma^T) D1)
    const ComplexMatrix tradeoff = 2.0 * (c.d0 - back);
    pv.tradeoff_min_eigenvalue = model.p > 0 ? numlin::min_eigenvalue(tradeoff) : 0.0;
    const RealMatrix projector = c.sigma * (c.sigma_pinv.size() > 0 ? c.sigma_pinv : numlin::pinv(c.sigma));
    const ComplexMatrix range =
        (RealMatrix::Identity(model.n, model.n) - projector).cast<Complex>() * c.d1;
    pv.range_residual = range.size() > 0 ? range.norm() : 0.0;
    pv.hamiltonian_hermiticity = numlin::hermiticity_residual(c.hamiltonian);
    pv.d0_hermiticity = model.p > 0 ? numlin::hermiticity_residual(c.d0) : 0.0;
    pv.saturation_residual = model.p > 0 ? (c.d0 - back).cwiseAbs().maxCoeff() : 0.0;

    const double scale = std::max(1.0, tradeoff.size() > 0 ? tradeoff.cwiseAbs().maxCoeff() : 0.0);
    pv.valid = pv.tradeoff_min_eigenvalue >= -tol * scale && pv.range_residual <= tol * std::max(1.0, c.d1.norm()) &&
               pv.hamiltonian_hermiticity <= tol * std::max(1.0, c.hamiltonian.cwiseAbs().maxCoeff()) &&
               pv.d0_hermiticity <= tol * scale;
    pv.saturated = pv.saturation_residual <= tol * scale;
    report.valid = report.valid && pv.valid;
    report.saturated = report.saturated && pv.saturated;
    report.points.push_back(std::move(pv));
  }
  if (points.empty()) {
    report.valid = false;
    report.saturated = false;
  }
  return report;
}

std::vector<PhaseVector> probe_points(const CQModel& model, const PhaseVector& z0, int count, double scale,
                                      std::uint64_t seed) {
  std::vector<PhaseVector> out{z0};
  const NoiseStream noise(seed, 0xC0FFEE);
  const double width = scale * std::max(1.0, z0.norm());
  for (int k = 0; k < count; ++k) {
    PhaseVector z = z0;
    for (Eigen::Index i = 0; i < z.size(); ++i) {
      z(i) += width * noise.normal(static_cast<std::uint64_t>(k), static_cast<std::uint32_t>(i));
    }
    if (!model.domain_violation(z)) out.push_back(std::move(z));
  }
  return out;
}

PoissonBrackets poisson_bracket(const HamiltonianSpec& spec, const PhaseVector& z) {
  if (spec.n % 2 != 0) throw DimensionError("poisson_bracket: phase space dimension must be even");
  if (z.size() != spec.n) throw DimensionError("poisson_bracket: phase point has wrong dimension");
  HamiltonianGradient g = spec.gradient(z);
  if (g.classical.size() != spec.n || static_cast<int>(g.interaction.size()) != spec.n) {
    throw DimensionError("poisson_bracket: gradient has wrong dimension");
  }
  const int k = spec.n / 2;
  PoissonBrackets out;
  out.classical.resize(spec.n);
  out.interaction.resize(spec.n);
  for (int i = 0; i < k; ++i) {
    // {q_i, H} = dH/dp_i, {p_i, H} = -dH/dq_i
    out.classical(i) = g.classical(k + i);
    out.classical(k + i) = -g.classical(i);
    out.interaction[i] = std::move(g.interaction[k + i]);
    g.interaction[i] *= -1.0;
    out.interaction[k + i] = std::move(g.interaction[i]);
  }
  return out;
}

HamiltonianSpec with_finite_difference_gradient(HamiltonianSpec spec) {
  auto hc = spec.classical_hamiltonian;
  auto hi = spec.interaction_hamiltonian;
  const int n = spec.n;
  spec.gradient = [hc, hi, n](const PhaseVector& z) {
    HamiltonianGradient g;
    g.classical.resize(n);
    g.interaction.resize(n);
    const double h = 1e-5 * std::max(1.0, z.norm());
    for (int i = 0; i < n; ++i) {
      PhaseVector zp = z;
      PhaseVector zm = z;
      zp(i) += h;
      zm(i) -= h;
      g.classical(i) = (hc(zp) - hc(zm)) / (2.0 * h);
      g.interaction[i] = (hi(zp) - hi(zm)) / (2.0 * h);
    }
    return g;
  };
  return spec;
}

double gradient_consistency(const HamiltonianSpec& spec, const PhaseVector& z, double h) {
  HamiltonianGradient g = spec.gradient(z);
  double worst = 0.0;
  for (int i = 0; i < spec.n; ++i) {
    PhaseVector zp = z;
    PhaseVector zm = z;
    zp(i) += h;
    zm(i) -= h;
    const double fd = (spec.classical_hamiltonian(zp) - spec.classical_hamiltonian(zm)) / (2.0 * h);
    worst = std::max(worst, std::abs(fd - g.classical(i)));
    const ComplexMatrix fdi =
        (spec.interaction_hamiltonian(zp) - spec.interaction_hamiltonian(zm)) / (2.0 * h);
    worst = std::max(worst, (fdi - g.interaction[i]).cwiseAbs().maxCoeff());
  }
  return worst;
}

namespace {

struct NoiseFactors {
  RealMatrix sigma;
  RealMatrix sigma_pinv;
  RealMatrix projector;  // sigma pinv(sigma)
  RealMatrix metric;     // pinv(sigma sigma^T)
};

NoiseFactors noise_factors(const RealMatrix& sigma) {
  NoiseFactors f;
  f.sigma = sigma;
  f.sigma_pinv = numlin::pinv(sigma);
  f.projector = sigma * f.sigma_pinv;
  f.metric = numlin::pinv(RealMatrix(sigma * sigma.transpose()));
  return f;
}

void check_range_condition(const HamiltonianSpec& spec, const NoiseFactors& f, const PoissonBrackets& pb,
                           const PhaseVector& /*z*/) {
  const RealMatrix complement = RealMatrix::Identity(spec.n, spec.n) - f.projector;
  for (int i = 0; i < spec.n; ++i) {
    ComplexMatrix acc = ComplexMatrix::Zero(spec.d, spec.d);
    for (int j = 0; j < spec.n; ++j) acc += complement(i, j) * pb.interaction[j];
    const double residual = acc.cwiseAbs().maxCoeff();
    const double scale = 1e-10 * std::max(1.0, pb.interaction[i].cwiseAbs().maxCoeff());
    if (residual > scale) {
      throw PositivityError("model '" + spec.name + "': range condition violated along phase-space direction " +
                            std::to_string(i) + " (back-reaction without matching noise, residual " +
                            std::to_string(residual) + ")");
    }
  }
}

}  // namespace

CQModel build_hamiltonian_model(const HamiltonianSpec& spec, std::span<const PhaseVector> probes) {
  if (spec.n % 2 != 0 || spec.n <= 0) throw DimensionError("build_hamiltonian_model: n must be even and positive");
  if (!spec.gradient || !spec.sigma || !spec.interaction_hamiltonian) {
    throw UsageError("build_hamiltonian_model: incomplete spec '" + spec.name + "'");
  }
  std::optional<NoiseFactors> fixed;
  if (spec.constant_sigma) {
    fixed = noise_factors(spec.sigma(PhaseVector::Zero(spec.n)));
  }
  for (const auto& z : probes) {
    const NoiseFactors f = fixed ? *fixed : noise_factors(spec.sigma(z));
    check_range_condition(spec, f, poisson_bracket(spec, z), z);
  }

  CQModel model;
  model.name = spec.name;
  model.n = spec.n;
  model.d = spec.d;
  model.p = spec.n;
  model.domain = spec.domain;
  if (spec.constant_coupling && fixed) {
    const PhaseVector origin = PhaseVector::Zero(spec.n);
    Coefficients base;
    base.lindblad = poisson_bracket(spec, origin).interaction;
    base.d1 = (0.5 * fixed->projector).cast<Complex>();
    base.d0 = (0.25 * fixed->metric).cast<Complex>();
    base.sigma = fixed->sigma;
    base.sigma_pinv = fixed->sigma_pinv;
    base.noise_metric = fixed->metric;
    const auto hi = spec.interaction_hamiltonian;
    const int k = spec.n / 2;
    std::function<RealVector(const PhaseVector&)> grad = spec.classical_gradient;
    if (!grad) grad = [g = spec.gradient](const PhaseVector& z) { return g(z).classical; };
    model.coefficients = [base, hi, grad, k](const PhaseVector& z) {
      Coefficients c = base;
      const RealVector g = grad(z);
      c.d1c.resize(2 * k);
      c.d1c.head(k) = g.tail(k);
      c.d1c.tail(k) = -g.head(k);
      c.hamiltonian = hi(z);
      return c;
    };
    return model;
  }
  model.coefficients = [spec, fixed](const PhaseVector& z) {
    const NoiseFactors f = fixed ? *fixed : noise_factors(spec.sigma(z));
    PoissonBrackets pb = poisson_bracket(spec, z);
    Coefficients c;
    c.lindblad = std::move(pb.interaction);
    c.d1c = std::move(pb.classical);
    c.d1 = (0.5 * f.projector).cast<Complex>();
    c.d0 = (0.25 * f.metric).cast<Complex>();
    c.sigma = f.sigma;
    c.sigma_pinv = f.sigma_pinv;
    c.noise_metric = f.metric;
    c.hamiltonian = spec.interaction_hamiltonian(z);
    return c;
  };
  return model;
}

StandardSCModel build_standard_semiclassical(const HamiltonianSpec& spec) {
  if (!spec.gradient || !spec.interaction_hamiltonian) {
    throw UsageError("build_standard_semiclassical: incomplete spec '" + spec.name + "'");
  }
  return StandardSCModel{spec};
}

RealVector standard_drift(const StandardSCModel& model, const PhaseVector& z, const DensityMatrix& rho) {
  const PoissonBrackets pb = poisson_bracket(model.spec, z);
  RealVector drift = pb.classical;
  for (int i = 0; i < model.spec.n; ++i) {
    drift(i) += (pb.interaction[i] * rho).trace().real();
  }
  return drift;
}

}  // namespace cqdyn
