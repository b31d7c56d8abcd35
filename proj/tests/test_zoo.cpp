#include "cqdyn/diagnostics.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/zoo.hpp"

#include <doctest.h>

using namespace cqdyn;

TEST_CASE("every builtin validates and saturates at its initial point") {
  for (const auto& name : builtin_names()) {
    CAPTURE(name);
    const BuiltinModel b = make_builtin(name);
    const ValidationReport r = validate(b.model, probe_points(b.model, b.initial.z, 8));
    CHECK(r.valid);
    CHECK(r.saturated);
    CHECK(b.initial.rho.trace().real() == doctest::Approx(1.0));
  }
}

TEST_CASE("registry rejects unknown names and parameters") {
  CHECK_THROWS_AS(make_builtin("nope"), UsageError);
  CHECK_THROWS_AS(make_builtin("diosi", {{"lamda", 1.0}}), UsageError);
  CHECK_NOTHROW(make_builtin("diosi", {{"lambda", 0.5}}));
}

TEST_CASE("ghz lattice size is bounded") {
  CHECK_THROWS_AS(zoo::ghz_lattice(6), ResourceError);
  const BuiltinModel b = make_builtin("ghz_lattice", {{"n_sites", 3.0}});
  CHECK(b.model.n == 6);
  CHECK(b.model.d == 8);
}

TEST_CASE("GHZ state and site operators") {
  const StateVector g = zoo::ghz_state(3);
  CHECK(g.norm() == doctest::Approx(1.0));
  CHECK(std::abs(g(0)) == doctest::Approx(std::sqrt(0.5)));
  CHECK(std::abs(g(7)) == doctest::Approx(std::sqrt(0.5)));
  // Qubit 0 is the most significant factor: basis index 4 = |100>.
  const ComplexMatrix z0 = zoo::site_pauli_z(3, 0);
  CHECK(z0(4, 4).real() == -1.0);
  CHECK(z0(3, 3).real() == 1.0);
  CHECK(reduced_purity(g, 3, {0, 1}) == doctest::Approx(0.5));
}

TEST_CASE("sqrt well exits its domain at q <= 0") {
  const BuiltinModel b = make_builtin("sqrt_well");
  PhaseVector z(2);
  z << -0.1, 0.0;
  CHECK(b.model.domain_violation(z).has_value());
  z(0) = 0.5;
  CHECK_FALSE(b.model.domain_violation(z).has_value());
}

TEST_CASE("mass superposition excludes a ball around each source") {
  const BuiltinModel b = make_builtin("mass_superposition");
  PhaseVector z = PhaseVector::Zero(6);
  z(0) = 1.0 + 0.01;
  CHECK(b.model.domain_violation(z).has_value());
  z(0) = 0.0;
  CHECK_FALSE(b.model.domain_violation(z).has_value());
}
