#include "cqdyn/diagnostics.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/zoo.hpp"

#include <doctest.h>

using namespace cqdyn;

TEST_CASE("purity of pure and mixed qubits") {
  const StateVector p = zoo::plus_state();
  CHECK(purity(p * p.adjoint()) == doctest::Approx(1.0));
  CHECK(purity(0.5 * DensityMatrix::Identity(2, 2)) == doctest::Approx(0.5));
  StateVector y(2);
  y << 1.0, Complex(0.0, 1.0);
  y /= std::sqrt(2.0);
  CHECK(purity(y * y.adjoint()) == doctest::Approx(1.0));
}

TEST_CASE("purity rate vanishes for saturated models and is -2 eps <sigma_z-centred> otherwise") {
  const StateVector p = zoo::plus_state();
  CHECK(purity_rate(zoo::dephasing_qubit(0.0), p, PhaseVector::Zero(1)) == doctest::Approx(0.0));
  CHECK(std::abs(purity_rate(zoo::dephasing_qubit(0.1), p, PhaseVector::Zero(1)) + 0.2) < 1e-10);
  StateVector e0 = StateVector::Zero(2);
  e0(0) = 1.0;
  CHECK(std::abs(purity_rate(zoo::dephasing_qubit(0.1), e0, PhaseVector::Zero(1))) < 1e-12);
  CHECK_THROWS_AS(purity_rate(zoo::dephasing_qubit(0.1), DensityMatrix(0.5 * DensityMatrix::Identity(2, 2)),
                              PhaseVector::Zero(1)),
                  ContractError);
}

TEST_CASE("reduced purity of product and GHZ states") {
  StateVector prod = StateVector::Zero(4);
  prod(0) = 1.0;
  CHECK(reduced_purity(prod, 2, {0}) == doctest::Approx(1.0));
  CHECK(reduced_purity(zoo::ghz_state(2), 2, {1}) == doctest::Approx(0.5));
  CHECK(reduced_purity(zoo::ghz_state(4), 4, {0, 1, 2, 3}) == doctest::Approx(1.0));
}

TEST_CASE("standard semi-classics residual for Diosi at |+>") {
  const BuiltinModel b = make_builtin("diosi");
  // Conditioning terms have norm 1/2 at |+>; |H psi| = |phi| = 2.
  CHECK(standard_sc_residual(b.model, zoo::plus_state(), PhaseVector::Zero(2)) == doctest::Approx(0.25));
  const CQModel quiet = zoo::dephasing_qubit(0.0, 0.0);
  CHECK(std::isinf(standard_sc_residual(quiet, zoo::plus_state(), PhaseVector::Zero(1))));
}

TEST_CASE("conditioned state is recovered from the classical record") {
  for (const char* name : {"diosi", "dephasing_qubit"}) {
    CAPTURE(name);
    const BuiltinModel b = make_builtin(name);
    SimulationOptions o;
    o.T = 0.5;
    o.dt = 1e-3;
    o.seed = 21;
    o.mode = Mode::pure;
    const Trajectory t = simulate(b.model, b.initial, o);
    const Trajectory r = reconstruct_conditioned(b.model, t.t, t.z, b.initial);
    REQUIRE(r.size() == t.size());
    double worst = 1.0;
    for (std::size_t k = 0; k < t.size(); ++k) worst = std::min(worst, std::norm(t.psi[k].dot(r.psi[k])));
    CHECK(worst >= 1.0 - 1e-6);
  }
}

TEST_CASE("reconstruction requires a uniform record") {
  const BuiltinModel b = make_builtin("dephasing_qubit");
  std::vector<double> t = {0.0, 0.1, 0.3};
  std::vector<PhaseVector> z(3, PhaseVector::Zero(1));
  CHECK_THROWS_AS(reconstruct_conditioned(b.model, t, z, b.initial), UsageError);
}

TEST_CASE("linearity test separates mean-field from healed dynamics") {
  const BuiltinModel b = make_builtin("diosi");
  StateVector e0 = StateVector::Zero(2), e1 = StateVector::Zero(2);
  e0(0) = 1.0;
  e1(1) = 1.0;
  const auto a = InitialDistribution::point(InitialState::pure(b.initial.z, e0));
  const auto c = InitialDistribution::point(InitialState::pure(b.initial.z, e1));
  LinearityOptions o;
  o.N = 2000;
  o.T = 0.5;
  o.dt = 2e-3;
  o.resamples = 50;
  o.cells = 16;
  const LinearityReport healed = linearity_test(b.model, a, c, o);
  CHECK_FALSE(healed.rejected);
  const LinearityReport standard = linearity_test(build_standard_semiclassical(*b.spec), a, c, o);
  CHECK(standard.rejected);
}
