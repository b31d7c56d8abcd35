#include "cqdyn/errors.hpp"
#include "cqdyn/purify.hpp"
#include "cqdyn/zoo.hpp"

#include <doctest.h>

using namespace cqdyn;

TEST_CASE("the 1/2, 1/4 example needs one extra coordinate with D1 = 1/2") {
  // D0 = 1/2, D1 = 1/2, sigma = 1: excess decoherence 1/4.
  const CQModel m = zoo::dephasing_qubit(0.25);
  const PurifiedModel pm = purify_classical(m, PhaseVector::Zero(1));
  CHECK(pm.extra_dims == 1);
  REQUIRE(pm.extra_d1.rows() == 1);
  CHECK(pm.extra_d1(0, 0) == Complex(0.5, 0.0));
  CHECK(pm.excess_d0(0, 0).real() == doctest::Approx(0.25));
  CHECK(pm.enlarged.n == 2);
  const ValidationReport v = validate(pm.enlarged, PhaseVector::Zero(2));
  CHECK(v.valid);
  CHECK(v.saturated);
  const Coefficients c = pm.enlarged.at(PhaseVector::Zero(2));
  CHECK(c.sigma(1, 1) == 1.0);
  CHECK(c.d1c(1) == 0.0);
}

TEST_CASE("saturated models need no extra coordinates") {
  const BuiltinModel b = make_builtin("diosi");
  const PurifiedModel pm = purify_classical(b.model, b.initial.z);
  CHECK(pm.extra_dims == 0);
  CHECK(pm.enlarged.n == 2);
}

TEST_CASE("invalid models cannot be purified") {
  const BuiltinModel b = make_builtin("broken_qubit");
  CHECK_THROWS_AS(purify_classical(b.model, b.initial.z), ContractError);
}

TEST_CASE("a rank change across probes is reported") {
  CQModel m = zoo::dephasing_qubit(0.25);
  auto inner = m.coefficients;
  m.coefficients = [inner](const PhaseVector& z) {
    Coefficients c = inner(z);
    if (z(0) > 0.5) c.d0(0, 0) = 0.25;  // saturated there
    return c;
  };
  std::vector<PhaseVector> probes = {PhaseVector::Constant(1, 1.0)};
  CHECK_THROWS_AS(purify_classical(m, PhaseVector::Zero(1), probes), ContractError);
}

TEST_CASE("enlarged trajectories stay pure while base purity decays") {
  const CQModel m = zoo::dephasing_qubit(0.25);
  const PurifiedModel pm = purify_classical(m, PhaseVector::Zero(1));
  EquivalenceOptions o;
  o.N = 2000;
  o.T = 1.0;
  o.dt = 1e-3;
  o.checkpoints = 5;
  const EquivalenceReport r = marginal_equivalence(pm, InitialState::pure(PhaseVector::Zero(1), zoo::plus_state()), o);
  CHECK(r.extra_dims == 1);
  // 6 observables at 5 checkpoints: a 4 SE family-wise bound keeps the false
  // alarm rate near 0.2%, where 3 SE per comparison would fire about 8% of runs.
  CHECK(r.passes(4.0));
  CHECK(r.enlarged_min_purity >= 1.0 - 100.0 * o.dt);
  CHECK(r.base_mean_purity_final < 0.9);
}
