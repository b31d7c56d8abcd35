#include "cqdyn/errors.hpp"
#include "cqdyn/model.hpp"
#include "cqdyn/zoo.hpp"

#include <doctest.h>

using namespace cqdyn;

TEST_CASE("Diosi coefficients follow from the Hamiltonian") {
  const double lambda = 0.7, sigma = 1.3;
  const CQModel m = build_hamiltonian_model(zoo::diosi_linear(1.0, lambda, 2.0, sigma));
  PhaseVector z(2);
  z << 0.1, -0.4;
  const Coefficients c = m.at(z);
  REQUIRE(c.lindblad.size() == 2);
  CHECK(c.lindblad[0].norm() == 0.0);
  CHECK((c.lindblad[1] + 2.0 * lambda * zoo::pauli_z()).norm() < 1e-14);
  CHECK(c.d1(1, 1) == Complex(0.5, 0.0));
  CHECK(std::abs(c.d1(0, 0)) == 0.0);
  CHECK(c.d0(1, 1).real() == doctest::Approx(0.25 / (sigma * sigma)));
  CHECK(c.d1c(0) == doctest::Approx(-0.4));  // dq/dt = p/m
  CHECK(c.d1c(1) == doctest::Approx(0.0));
  CHECK(c.d2()(1, 1) == doctest::Approx(0.5 * sigma * sigma));
}

TEST_CASE("validate accepts saturated Hamiltonian models") {
  const CQModel m = build_hamiltonian_model(zoo::diosi_linear());
  const ValidationReport r = validate(m, PhaseVector::Zero(2));
  CHECK(r.valid);
  CHECK(r.saturated);
  CHECK(r.worst_tradeoff_eigenvalue() >= -1e-10);
  CHECK(r.worst_range_residual() <= 1e-10);
}

TEST_CASE("validate rejects D0 = 0 with back-reaction") {
  const BuiltinModel b = make_builtin("broken_qubit");
  const ValidationReport r = validate(b.model, b.initial.z);
  CHECK_FALSE(r.valid);
  CHECK(r.worst_tradeoff_eigenvalue() < -1e-3);
}

TEST_CASE("validate flags D1 outside the range of sigma") {
  CQModel m = zoo::dephasing_qubit(0.0);
  auto inner = m.coefficients;
  m.coefficients = [inner](const PhaseVector& z) {
    Coefficients c = inner(z);
    c.sigma.setZero();
    c.sigma_pinv.resize(0, 0);
    c.noise_metric.resize(0, 0);
    return c;
  };
  const ValidationReport r = validate(m, PhaseVector::Zero(1));
  CHECK_FALSE(r.valid);
  CHECK(r.worst_range_residual() > 0.1);
}

TEST_CASE("unsaturated dephasing is valid but not saturated") {
  const CQModel m = zoo::dephasing_qubit(0.1);
  const ValidationReport r = validate(m, PhaseVector::Zero(1));
  CHECK(r.valid);
  CHECK_FALSE(r.saturated);
  CHECK(r.worst_saturation_residual() == doctest::Approx(0.1));
}

TEST_CASE("coefficient shape mismatches raise DimensionError") {
  CQModel m = zoo::dephasing_qubit(0.0);
  m.p = 2;
  CHECK_THROWS_AS(m.at(PhaseVector::Zero(1)), DimensionError);
}

TEST_CASE("analytic gradients agree with finite differences") {
  PhaseVector z(2);
  z << 0.8, 0.3;
  CHECK(gradient_consistency(zoo::sqrt_well(), z, 1e-5) < 1e-7);
  CHECK(gradient_consistency(zoo::diosi_linear(), z, 1e-5) < 1e-7);
  PhaseVector zm = PhaseVector::Zero(6);
  zm(1) = 0.3;
  CHECK(gradient_consistency(zoo::mass_superposition(), zm, 1e-6) < 1e-6);
}

TEST_CASE("poisson bracket of the Diosi Hamiltonian") {
  PhaseVector z(2);
  z << 0.5, 2.0;
  const PoissonBrackets pb = poisson_bracket(zoo::diosi_linear(2.0, 1.0, 0.0, 1.0), z);
  CHECK(pb.classical(0) == doctest::Approx(1.0));  // {q, p^2/2m} = p/m
  CHECK(pb.classical(1) == doctest::Approx(0.0));
  CHECK((pb.interaction[1] + 2.0 * zoo::pauli_z()).norm() < 1e-14);
}

TEST_CASE("standard drift uses the expectation value of the force") {
  const StandardSCModel s = build_standard_semiclassical(zoo::diosi_linear());
  DensityMatrix rho = DensityMatrix::Zero(2, 2);
  rho(0, 0) = 1.0;
  const RealVector f = standard_drift(s, PhaseVector::Zero(2), rho);
  CHECK(f(1) == doctest::Approx(-2.0));
}

TEST_CASE("probe points stay inside the domain") {
  const BuiltinModel b = make_builtin("sqrt_well");
  for (const auto& z : probe_points(b.model, b.initial.z, 16, 0.5)) CHECK(z(0) > 0.0);
}
