#include "cqdyn/diagnostics.hpp"
#include "cqdyn/ensemble.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/integrator.hpp"
#include "cqdyn/zoo.hpp"

#include <doctest.h>

#include <limits>

using namespace cqdyn;

namespace {

DensityMatrix projector(const StateVector& psi) { return psi * psi.adjoint(); }

}  // namespace

TEST_CASE("density step keeps a Hermitian unit-trace state, positive to O(dt)") {
  const BuiltinModel b = make_builtin("diosi");
  CQStateDensity s{0.0, b.initial.z, b.initial.rho};
  for (int k = 0; k < 1000; ++k) {
    s = step_density(b.model, s, 1e-3, wiener_increment(5, 0, static_cast<std::uint64_t>(k), 2, 1e-3));
  }
  CHECK(s.rho.trace().real() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(numlin::hermiticity_residual(s.rho) < 1e-14);
  // Euler-Maruyama does not preserve positivity exactly; the excursion is O(dt).
  CHECK(numlin::min_eigenvalue(s.rho) > -1e-3);
  CHECK(s.t == doctest::Approx(1.0));
}

TEST_CASE("pure and density steps agree at O(dt) for one step") {
  const BuiltinModel b = make_builtin("diosi");
  const double dt = 1e-6;
  const RealVector dW = wiener_increment(3, 0, 0, 2, dt);
  const CQStatePure sp = step_pure(b.model, {0.0, b.initial.z, *b.initial.psi}, dt, dW);
  const CQStateDensity sd = step_density(b.model, {0.0, b.initial.z, b.initial.rho}, dt, dW);
  CHECK((sp.z - sd.z).norm() < 1e-14);
  CHECK(numlin::trace_distance(projector(sp.psi), sd.rho) < 50.0 * dt);
}

TEST_CASE("pure step on a non-saturated model is a contract error") {
  const CQModel m = zoo::dephasing_qubit(0.1);
  CQStatePure s{0.0, PhaseVector::Zero(1), zoo::plus_state()};
  CHECK_THROWS_AS(step_pure(m, s, 1e-3, RealVector::Zero(1)), ContractError);
  SimulationOptions o;
  o.mode = Mode::pure;
  CHECK_THROWS_AS(simulate(m, InitialState::pure(s.z, s.psi), o), ContractError);
}

TEST_CASE("a collapsed norm raises StepSizeError") {
  // D0 = 1, so one step of dt = 2 with no noise maps psi to (1 - D0 dt / 2) psi = 0.
  const CQModel m = zoo::dephasing_qubit(0.0, 0.0, 0.5);
  const CQStatePure s{0.0, PhaseVector::Zero(1), zoo::plus_state()};
  CHECK_THROWS_AS(step_pure(m, s, 2.0, RealVector::Zero(1)), StepSizeError);
  // The density update preserves the trace algebraically, so only a
  // non-finite update trips the floor there.
  const CQStateDensity sd{0.0, PhaseVector::Zero(1), projector(zoo::plus_state())};
  RealVector dW(1);
  dW << std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(step_density(m, sd, 1e-3, dW), StepSizeError);
}

TEST_CASE("mean-field step leaves the Diosi momentum at zero for |+>") {
  const StandardSCModel s = build_standard_semiclassical(zoo::diosi_linear());
  CQStatePure st{0.0, PhaseVector::Zero(2), zoo::plus_state()};
  for (int k = 0; k < 1000; ++k) st = step_standard(s, st, 1e-3);
  CHECK(st.z(1) == 0.0);
  CHECK(st.z(0) == 0.0);
}

TEST_CASE("simulate is deterministic and thins samples") {
  const BuiltinModel b = make_builtin("diosi");
  SimulationOptions o;
  o.T = 0.5;
  o.dt = 1e-3;
  o.seed = 17;
  o.mode = Mode::pure;
  o.every = 7;
  const Trajectory a = simulate(b.model, b.initial, o);
  const Trajectory c = simulate(b.model, b.initial, o);
  REQUIRE(a.size() == c.size());
  CHECK(a.t.back() == doctest::Approx(0.5));
  CHECK(a.size() == 500 / 7 + 2);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a.z[k] == c.z[k]);
    CHECK(a.psi[k] == c.psi[k]);
  }
}

TEST_CASE("domain exit terminates the trajectory") {
  const BuiltinModel b = make_builtin("sqrt_well");
  SimulationOptions o;
  o.T = 20.0;
  o.dt = 1e-3;
  o.mode = Mode::pure;
  bool any = false;
  for (std::uint64_t seed = 0; seed < 20 && !any; ++seed) {
    o.seed = seed;
    const Trajectory t = simulate(b.model, b.initial, o);
    if (t.terminated) {
      any = true;
      CHECK(t.z.back()(0) <= 0.0);
      CHECK_FALSE(t.termination.empty());
    }
  }
  CHECK(any);
}

TEST_CASE("joint stepper matches the density step in mean") {
  // Three-point Gauss-Hermite average over the noise of the weighted joint
  // update against the plain density update. They differ at O(dt^2).
  const CQModel m = zoo::dephasing_qubit(0.0, 1.0, 1.0);
  const double dt = 1e-3;
  const CQStateDensity s{0.0, PhaseVector::Zero(1), projector(zoo::plus_state())};
  const double nodes[3] = {-std::sqrt(3.0), 0.0, std::sqrt(3.0)};
  const double w[3] = {1.0 / 6.0, 2.0 / 3.0, 1.0 / 6.0};
  ComplexMatrix joint = ComplexMatrix::Zero(2, 2);
  ComplexMatrix plain = ComplexMatrix::Zero(2, 2);
  for (int q = 0; q < 3; ++q) {
    RealVector dW(1);
    dW << nodes[q] * std::sqrt(dt);
    const JointStep j = step_joint(m, 1.0, s, dt, dW);
    joint += w[q] * j.weight * j.state.rho;
    plain += w[q] * step_density(m, s, dt, dW).rho;
  }
  CHECK((joint - plain).norm() < 10.0 * dt * dt);
  CHECK((joint - s.rho).norm() > 10.0 * dt * dt);
}

TEST_CASE("Born statistics from the density unravelling of the dephasing qubit") {
  const CQModel m = zoo::dephasing_qubit(0.0, 0.0, 1.0);
  EnsembleOptions eo;
  eo.N = 2000;
  eo.sim.T = 4.0;
  eo.sim.dt = 2e-3;
  eo.sim.every = 2000;
  eo.sim.seed = 3;
  eo.sim.mode = Mode::pure;
  const auto runs = run_ensemble(m, InitialDistribution::point(InitialState::pure(PhaseVector::Zero(1), zoo::plus_state())), eo);
  int up = 0;
  for (const auto& r : runs) {
    const auto& psi = r.psi.back();
    up += std::norm(psi(0)) > 0.5 ? 1 : 0;
  }
  const double frac = static_cast<double>(up) / 2000.0;
  CHECK(std::abs(frac - 0.5) < 3.0 * std::sqrt(0.25 / 2000.0));
}

TEST_CASE("diagonal fast path agrees with the general update in a rotated basis") {
  // Random diagonal L's and H, rotated by a fixed unitary so the general
  // matrix path is taken; the results must be unitarily equivalent.
  std::srand(7);
  const int d = 3, p = 2, n = 2;
  Coefficients diag;
  diag.lindblad = {ComplexMatrix(ComplexVector::Random(d).asDiagonal()), ComplexMatrix(ComplexVector::Random(d).asDiagonal())};
  const ComplexMatrix b = ComplexMatrix::Random(p, p);
  diag.d0 = b * b.adjoint();
  diag.d1 = ComplexMatrix::Random(n, p);
  diag.d1c = RealVector::Zero(n);
  diag.sigma = RealMatrix::Identity(n, n);
  diag.hamiltonian = ComplexMatrix(RealVector::Random(d).cast<Complex>().asDiagonal());
  const Eigen::HouseholderQR<ComplexMatrix> qr(ComplexMatrix::Random(d, d));
  const ComplexMatrix U = qr.householderQ();
  Coefficients rot = diag;
  std::vector<ComplexMatrix> rotated;
  for (const auto& l : diag.lindblad) rotated.push_back(U * l * U.adjoint());
  rot.lindblad = rotated;
  rot.hamiltonian = U * diag.hamiltonian * U.adjoint();
  const ComplexMatrix a = ComplexMatrix::Random(d, d);
  DensityMatrix rho = a * a.adjoint();
  rho /= rho.trace();
  StateVector psi = StateVector::Random(d).normalized();
  RealVector u(n);
  u << 0.3, -0.2;
  const double dt = 0.01;
  const DensityMatrix fast = quantum_step_density(diag, rho, dt, u);
  const DensityMatrix slow = quantum_step_density(rot, U * rho * U.adjoint(), dt, u);
  CHECK((U * fast * U.adjoint() - slow).norm() < 1e-13);
  const StateVector fp = quantum_step_pure(diag, psi, dt, u);
  const StateVector sp = quantum_step_pure(rot, U * psi, dt, u);
  CHECK((U * fp - sp).norm() < 1e-13);
  CHECK(classical_drift(diag, rho).isApprox(classical_drift(rot, DensityMatrix(U * rho * U.adjoint())), 1e-12));
}

TEST_CASE("pure trajectory tracks the density trajectory driven by the same noise") {
  const BuiltinModel b = make_builtin("diosi");
  const double dt = 1e-5;
  CQStatePure sp{0.0, b.initial.z, *b.initial.psi};
  CQStateDensity sd{0.0, b.initial.z, b.initial.rho};
  double worst = 0.0;
  for (std::uint64_t k = 0; k < 100000; ++k) {
    const RealVector dW = wiener_increment(21, 0, k, 2, dt);
    sp = step_pure(b.model, sp, dt, dW);
    sd = step_density(b.model, sd, dt, dW);
    if (k % 100 == 99) worst = std::max(worst, numlin::trace_distance(projector(sp.psi), sd.rho));
  }
  CAPTURE(worst);
  CHECK(worst <= 5e-3);
}
