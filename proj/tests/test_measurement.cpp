#include "cqdyn/errors.hpp"
#include "cqdyn/measurement.hpp"
#include "cqdyn/zoo.hpp"

#include <doctest.h>

using namespace cqdyn;

namespace {

CQModel inert() {
  CQModel m;
  m.name = "inert";
  m.n = 1;
  m.d = 2;
  m.p = 1;
  m.coefficients = [](const PhaseVector&) {
    Coefficients c;
    c.lindblad = {ComplexMatrix::Zero(2, 2)};
    c.d0 = ComplexMatrix::Zero(1, 1);
    c.d1 = ComplexMatrix::Zero(1, 1);
    c.d1c = RealVector::Zero(1);
    c.sigma = RealMatrix::Identity(1, 1);
    c.hamiltonian = ComplexMatrix::Zero(2, 2);
    return c;
  };
  return m;
}

}  // namespace

TEST_CASE("Kraus operator is the identity without dynamics") {
  KrausStepSpec s{inert(), 1e-2, RealVector::Zero(1)};
  CHECK(kraus_operator(s, PhaseVector::Zero(1)) == ComplexMatrix::Identity(2, 2));
}

TEST_CASE("Kraus operator for the Diosi model matches the hand expansion") {
  // L_p = -2 lambda sigma_z, D0 = 1/(4 sigma^2), D1 = 1/2, pinv(D2) = 2/sigma^2:
  // Omega = (1 - lambda^2 dt / (2 sigma^2)) I - i (2 lambda q + phi) dt sigma_z
  //         - lambda J_p dt sigma_z / sigma^2.
  const double lambda = 0.8, phi = 1.5, sigma = 1.2, dt = 1e-2, q = 0.3, Jp = 2.5;
  const CQModel m = build_hamiltonian_model(zoo::diosi_linear(1.0, lambda, phi, sigma));
  RealVector J(2);
  J << 7.0, Jp;  // the q component has no quantum coupling
  PhaseVector z(2);
  z << q, -1.0;
  const ComplexMatrix omega = kraus_operator({m, dt, J}, z);
  const ComplexMatrix sz = zoo::pauli_z();
  const ComplexMatrix expected = (1.0 - lambda * lambda * dt / (2.0 * sigma * sigma)) * ComplexMatrix::Identity(2, 2) -
                                 Complex(0.0, (2.0 * lambda * q + phi) * dt) * sz -
                                 (lambda * Jp * dt / (sigma * sigma)) * sz;
  CHECK((omega - expected).norm() < 1e-15);
}

TEST_CASE("Kraus operators are normalised to O(dt^2)") {
  for (const char* name : {"diosi", "dephasing_qubit", "ghz_lattice", "mass_superposition"}) {
    CAPTURE(name);
    const BuiltinModel b = make_builtin(name, std::string(name) == "ghz_lattice" ? ModelParams{{"n_sites", 3.0}} : ModelParams{});
    // The leading residual term is (H dt)^2, so the absolute bound scales
    // with |H|^2; the ratio across dt checks the dt^2 order itself.
    const double h = b.model.at(b.initial.z).hamiltonian.operatorNorm();
    double prev = 0.0;
    for (double dt : {1e-2, 1e-3}) {
      const double res = kraus_normalization_residual({b.model, dt, RealVector::Zero(b.model.n)}, b.initial.z);
      CHECK(res <= 10.0 * dt * dt * std::max(1.0, h * h));
      if (prev > 0.0) CHECK(res / prev == doctest::Approx(0.01).epsilon(0.2));
      prev = res;
    }
  }
}

TEST_CASE("non-saturated models have no Kraus operator") {
  const CQModel m = zoo::dephasing_qubit(0.1);
  CHECK_THROWS_AS(kraus_operator({m, 1e-3, RealVector::Zero(1)}, PhaseVector::Zero(1)), ContractError);
}

TEST_CASE("measurement update returns a unit-trace PSD state") {
  const BuiltinModel b = make_builtin("diosi");
  RealVector xi(2);
  xi << 0.3, -1.7;
  const MeasurementOutcome o = measure_and_update({b.model, 1e-3, {}}, b.initial.z, b.initial.rho, xi);
  CHECK(o.rho.trace().real() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(numlin::min_eigenvalue(o.rho) > -1e-14);
  CHECK(o.dZ(0) == doctest::Approx(0.0));  // p = 0 at the initial point
  CHECK(o.J(1) == doctest::Approx(-1.7 / std::sqrt(1e-3)));  // <sigma_z> = 0 at |+>
}

TEST_CASE("moment check passes for saturated and non-saturated models") {
  MeasureCheckOptions o;
  o.N = 20000;
  o.dt = 1e-3;
  const BuiltinModel d = make_builtin("diosi");
  const MeasureCheckReport r = measure_check(d.model, d.initial.z, d.initial.rho, o);
  CAPTURE(r.max_sigma());
  CHECK(r.passes());
  const CQModel m = zoo::dephasing_qubit(0.1);
  const StateVector p = zoo::plus_state();
  const MeasureCheckReport u = measure_check(m, PhaseVector::Zero(1), p * p.adjoint(), o);
  CAPTURE(u.max_sigma());
  CHECK_FALSE(u.saturated);
  CHECK(u.passes());
}
