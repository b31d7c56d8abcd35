#include "cqdyn/integrator.hpp"

#include "cqdyn/errors.hpp"
#include "cqdyn/rng.hpp"

#include <cmath>
#include <string>

#if defined(__SSE2__)
#include <xmmintrin.h>
#endif

namespace cqdyn {

namespace {

// Collapsed states drive coherences towards zero geometrically; once they are
// subnormal every multiply takes a slow path. Flush them to zero for the
// duration of one trajectory and restore the caller's mode afterwards.
class FlushSubnormals {
 public:
#if defined(__SSE2__)
  FlushSubnormals() : saved_(_mm_getcsr()) { _mm_setcsr(saved_ | 0x8040u); }  // FTZ | DAZ
  ~FlushSubnormals() { _mm_setcsr(saved_); }

 private:
  unsigned saved_;
#endif
};

// Lindblad operators with cheap structural flags. Diagonal operators are
// common (sigma_z couplings) and turn O(d^3) products into O(d^2).
struct Op {
  const ComplexMatrix* m = nullptr;
  bool zero = false;
  bool diagonal = false;
};

std::vector<Op> classify(const OperatorList& ops) {
  std::vector<Op> out(ops.size());
  for (std::size_t a = 0; a < ops.size(); ++a) out[a] = Op{&ops[a], ops.is_zero(a), ops.is_diagonal(a)};
  return out;
}

// op * x
ComplexMatrix left(const Op& op, const ComplexMatrix& x) {
  if (op.diagonal) return op.m->diagonal().asDiagonal() * x;
  return (*op.m) * x;
}

// x * op^dagger
ComplexMatrix right_adjoint(const ComplexMatrix& x, const Op& op) {
  if (op.diagonal) return x * op.m->diagonal().conjugate().asDiagonal();
  return x * op.m->adjoint();
}

StateVector apply(const Op& op, const StateVector& v) {
  if (op.diagonal) return op.m->diagonal().cwiseProduct(v);
  return (*op.m) * v;
}

StateVector apply_adjoint(const Op& op, const StateVector& v) {
  if (op.diagonal) return op.m->diagonal().conjugate().cwiseProduct(v);
  return op.m->adjoint() * v;
}

const RealMatrix& sigma_pinv_of(const Coefficients& c, RealMatrix& storage) {
  if (c.sigma_pinv.size() > 0) return c.sigma_pinv;
  storage = numlin::pinv(c.sigma);
  return storage;
}

const RealMatrix& metric_of(const Coefficients& c, RealMatrix& storage) {
  if (c.noise_metric.size() > 0) return c.noise_metric;
  storage = numlin::pinv(RealMatrix(c.sigma * c.sigma.transpose()));
  return storage;
}

// kappa_a = sum_j u_j conj(D1_{j a}): the complex weight of (L_a - <L_a>) in
// the stochastic increment.
ComplexVector innovation_weights(const Coefficients& c, const RealVector& u) {
  return c.d1.adjoint() * u.cast<Complex>();
}

// Tr(A B) in O(d^2).
Complex trace_product(const ComplexMatrix& a, const ComplexMatrix& b) {
  return a.transpose().cwiseProduct(b).sum();
}

bool all_zero(const ComplexVector& v) {
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    if (v(i) != Complex(0.0, 0.0)) return false;
  }
  return true;
}

// -i[H, rho] + sum_ab D0_ab (L_a rho L_b^dag - 1/2 {L_b^dag L_a, rho}).
ComplexMatrix density_generator(const Coefficients& c, const std::vector<Op>& ops, const DensityMatrix& rho) {
  const Eigen::Index d = rho.rows();
  ComplexMatrix out;
  if (numlin::is_diagonal(c.hamiltonian)) {
    const ComplexVector h = c.hamiltonian.diagonal();
    out.resize(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index i = 0; i < d; ++i) out(i, j) = Complex(0.0, -1.0) * (h(i) - h(j)) * rho(i, j);
    }
  } else {
    out = Complex(0.0, -1.0) * (c.hamiltonian * rho - rho * c.hamiltonian);
  }
  const auto p = static_cast<Eigen::Index>(ops.size());
  // K = sum_b L_b^dag M_b with M_b = sum_a D0_ab L_a
  ComplexMatrix k = ComplexMatrix::Zero(d, d);
  bool k_diag = true;
  bool k_any = false;
  for (Eigen::Index b = 0; b < p; ++b) {
    if (ops[b].zero) continue;
    ComplexMatrix mb;
    bool any = false;
    bool diag = true;
    for (Eigen::Index a = 0; a < p; ++a) {
      if (ops[a].zero || c.d0(a, b) == Complex(0.0, 0.0)) continue;
      if (!any) {
        mb = c.d0(a, b) * (*ops[a].m);
        any = true;
      } else {
        mb += c.d0(a, b) * (*ops[a].m);
      }
      diag = diag && ops[a].diagonal;
    }
    if (!any) continue;
    const Op mop{&mb, false, diag};
    out += right_adjoint(left(mop, rho), ops[b]);
    k_any = true;
    if (diag && ops[b].diagonal) {
      k.diagonal() += ops[b].m->diagonal().conjugate().cwiseProduct(mb.diagonal());
    } else {
      k += ops[b].m->adjoint() * mb;
      k_diag = false;
    }
  }
  if (k_any) {
    const Op kop{&k, false, k_diag};
    const ComplexMatrix krho = left(kop, rho);
    // rho K = (K^dag rho^dag)^dag and K is Hermitian because D0 is.
    out -= 0.5 * (krho + left(kop, rho.adjoint()).adjoint());
  }
  return out;
}

// When H and every L_a are diagonal the whole quantum update acts entrywise:
// rho_ij -> rho_ij (1 + dt G_ij + c_i + conj(c_j)), with
//   G_ij = S_ij - (S_ii + S_jj)/2 - i (h_i - h_j),  S = Lam^T D0 conj(Lam),
//   c_i  = sum_a kappa_a (l_ai - <L_a>)  (without the mean when !centred),
// where Lam(a, i) is the i-th diagonal entry of L_a. Zero operators are
// dropped, so Lam, D0 and kappa below only carry the active ones.
struct DiagonalForm {
  const ComplexMatrix* lam = nullptr;
  ComplexMatrix d0;
  ComplexVector h;
};

bool diagonal_form(const Coefficients& c, DiagonalForm& f) {
  if (!c.lindblad.all_diagonal() || !numlin::is_diagonal(c.hamiltonian)) return false;
  const auto& act = c.lindblad.active();
  const auto pa = static_cast<Eigen::Index>(act.size());
  f.lam = &c.lindblad.diagonals();
  f.d0.resize(pa, pa);
  for (Eigen::Index b = 0; b < pa; ++b) {
    for (Eigen::Index a = 0; a < pa; ++a) f.d0(a, b) = c.d0(act[a], act[b]);
  }
  f.h = c.hamiltonian.diagonal();
  return true;
}

ComplexVector active_weights(const Coefficients& c, const ComplexVector& kappa) {
  const auto& act = c.lindblad.active();
  ComplexVector out(static_cast<Eigen::Index>(act.size()));
  for (std::size_t k = 0; k < act.size(); ++k) out(static_cast<Eigen::Index>(k)) = kappa(act[k]);
  return out;
}

// G_ij = S_ij - (S_ii + S_jj)/2 depends only on the active operators and D0,
// which stay fixed along a trajectory for many models; keep the last one.
const ComplexMatrix& dephasing_matrix(const Coefficients& c, const DiagonalForm& f) {
  struct Cache {
    std::uint64_t id = 0;
    ComplexMatrix d0;
    ComplexMatrix g;
  };
  thread_local Cache cache;
  const std::uint64_t id = c.lindblad.id();
  if (id != 0 && cache.id == id && cache.d0.rows() == f.d0.rows() && cache.d0 == f.d0) return cache.g;
  const ComplexMatrix& lam = *f.lam;
  const auto d = lam.cols();
  ComplexMatrix s = ComplexMatrix::Zero(d, d);
  if (lam.rows() > 0) s.noalias() = lam.transpose() * (f.d0 * lam.conjugate());
  const ComplexVector half = 0.5 * s.diagonal();
  s.colwise() -= half;
  s.rowwise() -= half.transpose();
  cache.id = id;
  cache.d0 = f.d0;
  cache.g = std::move(s);
  return cache.g;
}

ComplexMatrix diagonal_density_update(const Coefficients& c, const DiagonalForm& f, const DensityMatrix& rho,
                                      double dt, const ComplexVector& kappa_all, bool centred) {
  const auto d = rho.rows();
  const ComplexMatrix& lam = *f.lam;
  const ComplexMatrix& g = dephasing_matrix(c, f);
  ComplexVector ci = ComplexVector::Zero(d);
  if (lam.rows() > 0) {
    const ComplexVector kappa = active_weights(c, kappa_all);
    ci = lam.transpose() * kappa;
    if (centred) {
      const ComplexVector ell = lam * rho.diagonal();
      ci.array() -= kappa.cwiseProduct(ell).sum();  // sum_a kappa_a <L_a>
    }
  }
  // 1 + dt (G_ij - i h_i + i h_j) + c_i + conj(c_j)
  const ComplexVector row = ci - Complex(0.0, dt) * f.h;
  const ComplexVector col = (ci.conjugate() + Complex(0.0, dt) * f.h).array() + 1.0;
  // The factor is Hermitian in (i, j), so a Hermitian rho maps to a Hermitian
  // result: fill the lower triangle and mirror it.
  ComplexMatrix out(d, d);
  for (Eigen::Index j = 0; j < d; ++j) {
    const Complex cj = col(j);
    const Complex* gj = g.col(j).data();
    const Complex* rj = rho.col(j).data();
    Complex* oj = out.col(j).data();
    for (Eigen::Index i = j; i < d; ++i) oj[i] = rj[i] * (cj + row(i) + dt * gj[i]);
  }
  for (Eigen::Index j = 1; j < d; ++j) {
    for (Eigen::Index i = 0; i < j; ++i) out(i, j) = std::conj(out(j, i));
  }
  return out;
}

StateVector diagonal_pure_update(const Coefficients& c, const DiagonalForm& f, const StateVector& psi, double dt,
                                 const ComplexVector& kappa_all) {
  const ComplexMatrix& lam = *f.lam;
  if (lam.rows() == 0) return psi.array() * (1.0 - Complex(0.0, dt) * f.h.array());
  const ComplexVector kappa = active_weights(c, kappa_all);
  const ComplexVector ell = lam.lazyProduct(psi.cwiseAbs2().cast<Complex>());
  const ComplexMatrix delta = lam.colwise() - ell;
  // sum_ab D0_ab conj(delta_bi) delta_ai
  const ComplexMatrix weighted = f.d0.transpose().lazyProduct(delta);
  const ComplexVector comp = delta.conjugate().cwiseProduct(weighted).colwise().sum().transpose();
  // sum_ab D0_ab (conj(<L_b>) l_ai - <L_a> conj(l_bi))
  const ComplexVector anti = lam.transpose().lazyProduct(f.d0.lazyProduct(ell.conjugate())) -
                             lam.conjugate().transpose().lazyProduct(f.d0.transpose().lazyProduct(ell));
  const ComplexVector ci = delta.transpose().lazyProduct(kappa);
  return psi.array() * (1.0 + dt * (Complex(0.0, -1.0) * f.h.array() - 0.5 * comp.array() + 0.5 * anti.array()) +
                        ci.array());
}

DensityMatrix normalise_density(ComplexMatrix rho, double trace_floor) {
  // In-place (rho + rho^dag) / 2.
  const auto d = rho.rows();
  for (Eigen::Index j = 0; j < d; ++j) {
    rho(j, j) = rho(j, j).real();
    for (Eigen::Index i = j + 1; i < d; ++i) {
      const Complex m = 0.5 * (rho(i, j) + std::conj(rho(j, i)));
      rho(i, j) = m;
      rho(j, i) = std::conj(m);
    }
  }
  const double tr = rho.trace().real();
  if (!(tr >= trace_floor)) {
    throw StepSizeError("trace of the updated density matrix fell to " + std::to_string(tr) +
                        "; reduce the step size dt");
  }
  return rho / tr;
}

StateVector normalise_state(StateVector psi, double trace_floor) {
  const double n2 = psi.squaredNorm();
  if (!(n2 >= trace_floor)) {
    throw StepSizeError("norm of the updated state vector fell to " + std::to_string(n2) +
                        "; reduce the step size dt");
  }
  return psi / std::sqrt(n2);
}

void require_dims(const CQModel& model, const PhaseVector& z, Eigen::Index quantum_dim, const RealVector* dW) {
  if (z.size() != model.n) throw DimensionError("phase point dimension does not match model '" + model.name + "'");
  if (quantum_dim != model.d) throw DimensionError("quantum state dimension does not match model '" + model.name + "'");
  if (dW && dW->size() != model.n) throw DimensionError("noise increment must have n components");
}

bool saturated_at(const Coefficients& c, double tol) {
  if (c.d0.size() == 0) return true;
  RealMatrix storage;
  const RealMatrix& metric = metric_of(c, storage);
  const ComplexMatrix back = c.d1.adjoint() * metric.cast<Complex>() * c.d1;
  return (c.d0 - back).cwiseAbs().maxCoeff() <= tol * std::max(1.0, c.d0.cwiseAbs().maxCoeff());
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::density: return "density";
    case Mode::pure: return "pure";
    case Mode::standard: return "standard";
    case Mode::joint: return "joint";
  }
  return "density";
}

Mode parse_mode(std::string_view name) {
  if (name == "density") return Mode::density;
  if (name == "pure") return Mode::pure;
  if (name == "standard") return Mode::standard;
  if (name == "joint") return Mode::joint;
  throw UsageError("unknown mode '" + std::string(name) + "' (expected density|pure|standard|joint)");
}

RealVector classical_drift(const Coefficients& c, const DensityMatrix& rho) {
  RealVector drift = c.d1c;
  for (std::size_t a = 0; a < c.lindblad.size(); ++a) {
    const auto col = c.d1.col(static_cast<Eigen::Index>(a));
    if ((col.array() == Complex(0.0, 0.0)).all() || c.lindblad.is_zero(a)) continue;
    const Complex ell = c.lindblad.is_diagonal(a) ? c.lindblad[a].diagonal().cwiseProduct(rho.diagonal()).sum()
                                                  : trace_product(c.lindblad[a], rho);
    // D1^{a0} <L_a> + D1^{0a} <L_a^dag> = 2 Re(conj(D1_ia) <L_a>)
    for (Eigen::Index i = 0; i < drift.size(); ++i) drift(i) += 2.0 * (std::conj(col(i)) * ell).real();
  }
  return drift;
}

RealVector classical_drift(const Coefficients& c, const StateVector& psi) {
  RealVector drift = c.d1c;
  for (std::size_t a = 0; a < c.lindblad.size(); ++a) {
    const auto col = c.d1.col(static_cast<Eigen::Index>(a));
    if ((col.array() == Complex(0.0, 0.0)).all() || c.lindblad.is_zero(a)) continue;
    const Complex ell = c.lindblad.is_diagonal(a) ? c.lindblad[a].diagonal().cwiseProduct(psi.cwiseAbs2().cast<Complex>()).sum()
                                                  : psi.dot(c.lindblad[a] * psi);
    for (Eigen::Index i = 0; i < drift.size(); ++i) drift(i) += 2.0 * (std::conj(col(i)) * ell).real();
  }
  return drift;
}

DensityMatrix quantum_step_density(const Coefficients& c, const DensityMatrix& rho, double dt, const RealVector& u) {
  DiagonalForm lam;
  if (diagonal_form(c, lam)) return diagonal_density_update(c, lam, rho, dt, innovation_weights(c, u), true);
  const auto ops = classify(c.lindblad);
  ComplexMatrix next = rho + dt * density_generator(c, ops, rho);
  const ComplexVector kappa = innovation_weights(c, u);
  if (!all_zero(kappa)) {
    for (std::size_t a = 0; a < ops.size(); ++a) {
      const Complex k = kappa(static_cast<Eigen::Index>(a));
      if (ops[a].zero || k == Complex(0.0, 0.0)) continue;
      const Complex ell = trace_product(c.lindblad[a], rho);
      // kappa (L - <L>) rho + conj(kappa) rho (L^dag - <L^dag>)
      const ComplexMatrix lrho = left(ops[a], rho) - ell * rho;
      next += k * lrho + std::conj(k) * lrho.adjoint();
    }
  }
  return next;
}

StateVector quantum_step_pure(const Coefficients& c, const StateVector& psi, double dt, const RealVector& u) {
  DiagonalForm lam;
  if (diagonal_form(c, lam)) return diagonal_pure_update(c, lam, psi, dt, innovation_weights(c, u));
  const auto ops = classify(c.lindblad);
  const auto p = static_cast<Eigen::Index>(ops.size());
  std::vector<StateVector> centred(ops.size());
  std::vector<Complex> ell(ops.size(), Complex(0.0, 0.0));
  for (Eigen::Index a = 0; a < p; ++a) {
    if (ops[a].zero) continue;
    const StateVector lpsi = apply(ops[a], psi);
    ell[a] = psi.dot(lpsi);
    centred[a] = lpsi - ell[a] * psi;
  }
  StateVector drift = Complex(0.0, -1.0) * (c.hamiltonian * psi);
  for (Eigen::Index b = 0; b < p; ++b) {
    if (ops[b].zero) continue;
    // sum_a D0_ab (L_a - <L_a>) psi, then apply (L_b^dag - <L_b^dag>)
    StateVector acc = StateVector::Zero(psi.size());
    // sum_a D0_ab (<L_b^dag> L_a - <L_a> L_b^dag) psi
    StateVector anti = StateVector::Zero(psi.size());
    bool any = false;
    for (Eigen::Index a = 0; a < p; ++a) {
      const Complex w = c.d0(a, b);
      if (ops[a].zero || w == Complex(0.0, 0.0)) continue;
      any = true;
      acc += w * centred[a];
      anti += w * (std::conj(ell[b]) * (centred[a] + ell[a] * psi) - ell[a] * apply_adjoint(ops[b], psi));
    }
    if (!any) continue;
    drift -= 0.5 * (apply_adjoint(ops[b], acc) - std::conj(ell[b]) * acc);
    drift += 0.5 * anti;
  }
  StateVector next = psi + dt * drift;
  const ComplexVector kappa = innovation_weights(c, u);
  for (Eigen::Index a = 0; a < p; ++a) {
    if (ops[a].zero || kappa(a) == Complex(0.0, 0.0)) continue;
    next += kappa(a) * centred[a];
  }
  return next;
}

CQStateDensity step_density(const CQModel& model, const CQStateDensity& s, double dt, const RealVector& dW,
                            double trace_floor) {
  if (!(dt > 0.0)) throw UsageError("step_density: dt must be positive");
  require_dims(model, s.z, s.rho.rows(), &dW);
  const Coefficients c = model.at(s.z);
  RealMatrix storage;
  const RealVector u = sigma_pinv_of(c, storage).transpose() * dW;
  CQStateDensity out;
  out.t = s.t + dt;
  out.z = s.z + dt * classical_drift(c, s.rho) + c.sigma * dW;
  out.rho = normalise_density(quantum_step_density(c, s.rho, dt, u), trace_floor);
  return out;
}

namespace {

CQStatePure step_pure_unchecked(const Coefficients& c, const CQStatePure& s, double dt, const RealVector& dW,
                                double trace_floor) {
  RealMatrix storage;
  const RealVector u = sigma_pinv_of(c, storage).transpose() * dW;
  CQStatePure out;
  out.t = s.t + dt;
  out.z = s.z + dt * classical_drift(c, s.psi) + c.sigma * dW;
  out.psi = normalise_state(quantum_step_pure(c, s.psi, dt, u), trace_floor);
  return out;
}

}  // namespace

CQStatePure step_pure(const CQModel& model, const CQStatePure& s, double dt, const RealVector& dW,
                      double trace_floor) {
  if (!(dt > 0.0)) throw UsageError("step_pure: dt must be positive");
  require_dims(model, s.z, s.psi.size(), &dW);
  const Coefficients c = model.at(s.z);
  if (!saturated_at(c, 1e-8)) {
    throw ContractError("step_pure: model '" + model.name +
                        "' does not saturate the decoherence-diffusion trade-off; use density mode");
  }
  return step_pure_unchecked(c, s, dt, dW, trace_floor);
}

CQStatePure step_standard(const StandardSCModel& model, const CQStatePure& s, double dt) {
  if (!(dt > 0.0)) throw UsageError("step_standard: dt must be positive");
  const PoissonBrackets pb = poisson_bracket(model.spec, s.z);
  CQStatePure out;
  out.t = s.t + dt;
  RealVector drift = pb.classical;
  for (int i = 0; i < model.spec.n; ++i) drift(i) += s.psi.dot(pb.interaction[i] * s.psi).real();
  out.z = s.z + dt * drift;
  const ComplexMatrix h = model.spec.interaction_hamiltonian(s.z);
  out.psi = normalise_state(s.psi + Complex(0.0, -dt) * (h * s.psi), 0.0);
  return out;
}

CQStateDensity step_standard(const StandardSCModel& model, const CQStateDensity& s, double dt) {
  if (!(dt > 0.0)) throw UsageError("step_standard: dt must be positive");
  CQStateDensity out;
  out.t = s.t + dt;
  out.z = s.z + dt * standard_drift(model, s.z, s.rho);
  const ComplexMatrix h = model.spec.interaction_hamiltonian(s.z);
  out.rho = normalise_density(s.rho + Complex(0.0, -dt) * (h * s.rho - s.rho * h), 0.0);
  return out;
}

JointStep step_joint(const CQModel& model, double weight, const CQStateDensity& s, double dt, const RealVector& dW,
                     double weight_floor) {
  if (!(dt > 0.0)) throw UsageError("step_joint: dt must be positive");
  require_dims(model, s.z, s.rho.rows(), &dW);
  const Coefficients c = model.at(s.z);
  const RealVector dz = dt * classical_drift(c, s.rho) + c.sigma * dW;
  RealMatrix storage;
  // Linear driving by the observed record: u = pinv(sigma sigma^T)(dZ - D1C dt).
  const RealVector u = metric_of(c, storage) * (dz - dt * c.d1c);
  const auto ops = classify(c.lindblad);
  const ComplexVector kappa = innovation_weights(c, u);
  DiagonalForm lam;
  ComplexMatrix next;
  if (diagonal_form(c, lam)) {
    next = diagonal_density_update(c, lam, s.rho, dt, kappa, false);
  } else {
    next = s.rho + dt * density_generator(c, ops, s.rho);
    for (std::size_t a = 0; a < ops.size(); ++a) {
      const Complex k = kappa(static_cast<Eigen::Index>(a));
      if (ops[a].zero || k == Complex(0.0, 0.0)) continue;
      const ComplexMatrix lrho = left(ops[a], s.rho);
      next += k * lrho + std::conj(k) * lrho.adjoint();
    }
  }
  next = numlin::hermitize(next);
  const double factor = next.trace().real();
  const double w = weight * factor;
  if (!(factor > 0.0) || !(w > weight_floor)) {
    throw StepSizeError("joint-state weight underflow (trace factor " + std::to_string(factor) +
                        "); reduce the step size dt");
  }
  JointStep out;
  out.weight = w;
  out.state.t = s.t + dt;
  out.state.z = s.z + dz;
  out.state.rho = next / factor;
  return out;
}

InitialState InitialState::pure(PhaseVector z, StateVector psi) {
  InitialState s;
  s.z = std::move(z);
  psi.normalize();
  s.rho = psi * psi.adjoint();
  s.psi = std::move(psi);
  return s;
}

InitialState InitialState::mixed(PhaseVector z, DensityMatrix rho) {
  InitialState s;
  s.z = std::move(z);
  s.rho = std::move(rho);
  return s;
}

DensityMatrix Trajectory::density(std::size_t k) const {
  if (!psi.empty()) return psi.at(k) * psi.at(k).adjoint();
  return rho.at(k);
}

std::size_t Trajectory::index_at(double time) const {
  if (t.empty()) throw UsageError("empty trajectory");
  std::size_t lo = 0;
  for (std::size_t k = 0; k < t.size(); ++k) {
    if (t[k] <= time + 0.5 * dt) lo = k;
  }
  return lo;
}

RealVector wiener_increment(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, int n, double dt) {
  const NoiseStream noise(seed, stream);
  RealVector dw(n);
  const double scale = std::sqrt(dt);
  for (int i = 0; i < n; ++i) dw(i) = scale * noise.normal(step, static_cast<std::uint32_t>(i));
  return dw;
}

namespace {

std::uint64_t step_count(const SimulationOptions& opts) {
  if (!(opts.dt > 0.0)) throw UsageError("simulate: dt must be positive");
  if (!(opts.T >= 0.0)) throw UsageError("simulate: T must be non-negative");
  if (opts.every < 1) throw UsageError("simulate: sample stride must be >= 1");
  const double ratio = opts.T / opts.dt;
  const auto steps = static_cast<std::uint64_t>(std::ceil(ratio - 1e-9));
  if (steps > opts.max_steps) {
    throw UsageError("simulate: T/dt = " + std::to_string(steps) + " exceeds the configured maximum of " +
                     std::to_string(opts.max_steps) + " steps");
  }
  return steps;
}

Trajectory start_trajectory(const SimulationOptions& opts) {
  Trajectory tr;
  tr.mode = opts.mode;
  tr.dt = opts.dt;
  tr.seed = opts.seed;
  tr.stream = opts.stream;
  tr.every = opts.every;
  return tr;
}

[[noreturn]] void rethrow_at(std::uint64_t k, const Error& e) {
  const std::string msg = "step " + std::to_string(k) + ": " + e.what();
  if (dynamic_cast<const StepSizeError*>(&e)) throw StepSizeError(msg);
  if (dynamic_cast<const ContractError*>(&e)) throw ContractError(msg);
  if (dynamic_cast<const PositivityError*>(&e)) throw PositivityError(msg);
  if (dynamic_cast<const DimensionError*>(&e)) throw DimensionError(msg);
  throw Error(msg);
}

}  // namespace

Trajectory simulate(const CQModel& model, const InitialState& init, const SimulationOptions& opts) {
  const FlushSubnormals flush;
  const std::uint64_t steps = step_count(opts);
  Trajectory tr = start_trajectory(opts);
  if (opts.mode == Mode::standard) {
    throw ContractError("simulate: standard mode needs a StandardSCModel");
  }
  if (init.z.size() != model.n || init.rho.rows() != model.d) {
    throw DimensionError("simulate: initial state does not match model '" + model.name + "'");
  }
  if (auto why = model.domain_violation(init.z)) throw DomainExitError("initial state outside domain: " + *why);
  const NoiseStream noise(opts.seed, opts.stream);
  const double sq = std::sqrt(opts.dt);
  RealVector dW(model.n);

  auto fill_noise = [&](std::uint64_t k) {
    for (int i = 0; i < model.n; ++i) dW(i) = sq * noise.normal(k, static_cast<std::uint32_t>(i));
    if (opts.record_noise) tr.noise.push_back(dW);
  };
  auto keep = [&](std::uint64_t k) { return k % static_cast<std::uint64_t>(opts.every) == 0 || k == steps; };

  if (opts.mode == Mode::pure) {
    if (!init.psi) throw ContractError("simulate: pure mode requires an initial state vector");
    if (init.psi->size() != model.d) throw DimensionError("simulate: initial state vector has wrong dimension");
    CQStatePure s{0.0, init.z, init.psi->normalized()};
    {
      const Coefficients c0 = model.at(s.z);
      if (!saturated_at(c0, 1e-8)) {
        throw ContractError("simulate: model '" + model.name +
                            "' does not saturate the trade-off; the pure-state unravelling is undefined");
      }
    }
    tr.t.push_back(0.0);
    tr.z.push_back(s.z);
    tr.psi.push_back(s.psi);
    for (std::uint64_t k = 0; k < steps; ++k) {
      fill_noise(k);
      try {
        const Coefficients c = model.at(s.z);
        s = step_pure_unchecked(c, s, opts.dt, dW, opts.trace_floor);
      } catch (const Error& e) {
        rethrow_at(k, e);
      }
      s.t = static_cast<double>(k + 1) * opts.dt;
      tr.steps = k + 1;
      const auto why = model.domain_violation(s.z);
      if (keep(k + 1) || why) {
        tr.t.push_back(s.t);
        tr.z.push_back(s.z);
        tr.psi.push_back(s.psi);
      }
      if (why) {
        tr.terminated = true;
        tr.termination = *why;
        break;
      }
    }
    return tr;
  }

  CQStateDensity s{0.0, init.z, init.rho};
  double log_weight = 0.0;
  tr.t.push_back(0.0);
  tr.z.push_back(s.z);
  tr.rho.push_back(s.rho);
  if (opts.mode == Mode::joint) tr.log_weight.push_back(0.0);
  for (std::uint64_t k = 0; k < steps; ++k) {
    fill_noise(k);
    try {
      if (opts.mode == Mode::joint) {
        const JointStep js = step_joint(model, 1.0, s, opts.dt, dW);
        log_weight += std::log(js.weight);
        s = js.state;
      } else {
        s = step_density(model, s, opts.dt, dW, opts.trace_floor);
      }
    } catch (const Error& e) {
      rethrow_at(k, e);
    }
    s.t = static_cast<double>(k + 1) * opts.dt;
    tr.steps = k + 1;
    const auto why = model.domain_violation(s.z);
    if (keep(k + 1) || why) {
      tr.t.push_back(s.t);
      tr.z.push_back(s.z);
      tr.rho.push_back(s.rho);
      if (opts.mode == Mode::joint) tr.log_weight.push_back(log_weight);
    }
    if (why) {
      tr.terminated = true;
      tr.termination = *why;
      break;
    }
  }
  return tr;
}

Trajectory simulate(const StandardSCModel& model, const InitialState& init, const SimulationOptions& opts) {
  const FlushSubnormals flush;
  const std::uint64_t steps = step_count(opts);
  Trajectory tr = start_trajectory(opts);
  tr.mode = Mode::standard;
  const auto& spec = model.spec;
  if (init.z.size() != spec.n || init.rho.rows() != spec.d) {
    throw DimensionError("simulate: initial state does not match model '" + spec.name + "'");
  }
  auto violation = [&](const PhaseVector& z) -> std::optional<std::string> {
    return spec.domain ? spec.domain(z) : std::nullopt;
  };
  if (auto why = violation(init.z)) throw DomainExitError("initial state outside domain: " + *why);
  auto keep = [&](std::uint64_t k) { return k % static_cast<std::uint64_t>(opts.every) == 0 || k == steps; };

  if (init.psi) {
    CQStatePure s{0.0, init.z, init.psi->normalized()};
    tr.t.push_back(0.0);
    tr.z.push_back(s.z);
    tr.psi.push_back(s.psi);
    for (std::uint64_t k = 0; k < steps; ++k) {
      s = step_standard(model, s, opts.dt);
      s.t = static_cast<double>(k + 1) * opts.dt;
      tr.steps = k + 1;
      const auto why = violation(s.z);
      if (keep(k + 1) || why) {
        tr.t.push_back(s.t);
        tr.z.push_back(s.z);
        tr.psi.push_back(s.psi);
      }
      if (why) {
        tr.terminated = true;
        tr.termination = *why;
        break;
      }
    }
    return tr;
  }
  CQStateDensity s{0.0, init.z, init.rho};
  tr.t.push_back(0.0);
  tr.z.push_back(s.z);
  tr.rho.push_back(s.rho);
  for (std::uint64_t k = 0; k < steps; ++k) {
    s = step_standard(model, s, opts.dt);
    s.t = static_cast<double>(k + 1) * opts.dt;
    tr.steps = k + 1;
    const auto why = violation(s.z);
    if (keep(k + 1) || why) {
      tr.t.push_back(s.t);
      tr.z.push_back(s.z);
      tr.rho.push_back(s.rho);
    }
    if (why) {
      tr.terminated = true;
      tr.termination = *why;
      break;
    }
  }
  return tr;
}

}  // namespace cqdyn
