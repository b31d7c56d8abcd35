#pragma once

#include "cqdyn/integrator.hpp"
#include "cqdyn/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cqdyn {

/// Named real parameters, e.g. {"m", 1.0}. Unknown names are rejected by the
/// registry so config typos do not pass silently.
using ModelParams = std::map<std::string, double>;

namespace zoo {

/// Stern-Gerlach style coupling on (q, p) with a qubit: H_C = p^2/2m,
/// H_I = (2 lambda q + phi) sigma_z, noise sigma on p only.
HamiltonianSpec diosi_linear(double m = 1.0, double lambda = 1.0, double phi = 2.0, double sigma = 1.0);

/// H_C = p^2/2m, H_I = lambda sqrt(q) sigma_z, sigma(q) = gamma / sqrt(q) on p.
/// Domain q > 0.
HamiltonianSpec sqrt_well(double m = 1.0, double lambda = 1.0, double gamma = 0.5);

/// Test mass m in the field of a mass M held in a superposition of +d and -d
/// along x. Basis state 0 (sigma_z = +1) puts the source at +d. Six classical
/// dimensions (x, y, z, px, py, pz), isotropic momentum noise sigma.
HamiltonianSpec mass_superposition(double G = 1.0, double M = 10.0, double m = 0.01, double sigma = 0.02,
                                   double phi = 5.0, double d = 1.0);

/// Lattice of classical fields (phi_i, pi_i) each coupled to one qubit:
/// H_C = sum pi_i^2/2m, H_I = lambda sum phi_i sigma_z^i. Qubit 0 is the most
/// significant tensor factor.
HamiltonianSpec ghz_lattice(int n_sites = 5, double m = 1.0, double lambda = 1.0, double sigma = 1.0);

/// Continuously monitored qubit: one classical record coordinate, L = sigma_z,
/// H = phi sigma_z, D1 = 1/2, sigma = 1 and D0 = 1/4 + epsilon. epsilon = 0
/// saturates the trade-off, epsilon > 0 adds pure dephasing, epsilon < 0
/// violates complete positivity.
CQModel dephasing_qubit(double epsilon = 0.0, double phi = 1.0, double sigma = 1.0);

/// Single-qubit operators and the GHZ / plus states.
ComplexMatrix pauli_x();
ComplexMatrix pauli_y();
ComplexMatrix pauli_z();
/// sigma_z acting on `site` of an n_sites register.
ComplexMatrix site_pauli_z(int n_sites, int site);
StateVector plus_state();
StateVector ghz_state(int n_sites);

}  // namespace zoo

/// A registry entry: model, its Hamiltonian spec (when it has one), default
/// initial condition and the resolved parameters.
struct BuiltinModel {
  std::string name;
  ModelParams params;
  std::optional<HamiltonianSpec> spec;
  CQModel model;
  InitialState initial;
};

/// Names of the models that must pass validation. The deliberately broken
/// `broken_qubit` is constructible by name but not listed.
std::vector<std::string> builtin_names();

/// Default parameter set for a registry name.
ModelParams builtin_defaults(const std::string& name);

/// Builds a registry model. Parameters missing from `params` take defaults;
/// unknown parameter names or model names raise UsageError.
BuiltinModel make_builtin(const std::string& name, const ModelParams& params = {});

}  // namespace cqdyn
