#include "cqdyn/zoo.hpp"

#include "cqdyn/errors.hpp"

#include <cmath>
#include <string>

namespace cqdyn::zoo {

ComplexMatrix pauli_x() {
  ComplexMatrix m(2, 2);
  m << 0.0, 1.0, 1.0, 0.0;
  return m;
}

ComplexMatrix pauli_y() {
  ComplexMatrix m(2, 2);
  m << Complex(0.0, 0.0), Complex(0.0, -1.0), Complex(0.0, 1.0), Complex(0.0, 0.0);
  return m;
}

ComplexMatrix pauli_z() {
  ComplexMatrix m = ComplexMatrix::Zero(2, 2);
  m(0, 0) = 1.0;
  m(1, 1) = -1.0;
  return m;
}

ComplexMatrix site_pauli_z(int n_sites, int site) {
  if (site < 0 || site >= n_sites) throw UsageError("site_pauli_z: site index out of range");
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  ComplexMatrix m = ComplexMatrix::Zero(dim, dim);
  const int shift = n_sites - 1 - site;
  for (Eigen::Index k = 0; k < dim; ++k) m(k, k) = ((k >> shift) & 1) ? -1.0 : 1.0;
  return m;
}

StateVector plus_state() {
  StateVector v(2);
  v << 1.0, 1.0;
  return v / std::sqrt(2.0);
}

StateVector ghz_state(int n_sites) {
  const Eigen::Index dim = Eigen::Index{1} << n_sites;
  StateVector v = StateVector::Zero(dim);
  v(0) = 1.0 / std::sqrt(2.0);
  v(dim - 1) = 1.0 / std::sqrt(2.0);
  return v;
}

namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw UsageError(what);
}

}  // namespace

HamiltonianSpec diosi_linear(double m, double lambda, double phi, double sigma) {
  require(m > 0.0, "diosi_linear: m must be positive");
  require(sigma >= 0.0, "diosi_linear: sigma must be non-negative");
  HamiltonianSpec s;
  s.name = "diosi";
  s.n = 2;
  s.d = 2;
  const ComplexMatrix sz = pauli_z();
  s.classical_hamiltonian = [m](const PhaseVector& z) { return z(1) * z(1) / (2.0 * m); };
  s.interaction_hamiltonian = [=](const PhaseVector& z) -> ComplexMatrix { return (2.0 * lambda * z(0) + phi) * sz; };
  s.gradient = [=](const PhaseVector& z) {
    HamiltonianGradient g;
    g.classical = RealVector::Zero(2);
    g.classical(1) = z(1) / m;
    g.interaction = {2.0 * lambda * sz, ComplexMatrix::Zero(2, 2)};
    return g;
  };
  s.sigma = [sigma](const PhaseVector&) {
    RealMatrix out = RealMatrix::Zero(2, 2);
    out(1, 1) = sigma;
    return out;
  };
  s.constant_sigma = true;
  s.constant_coupling = true;
  s.classical_gradient = [m](const PhaseVector& z) { return RealVector{{0.0, z(1) / m}}; };
  return s;
}

HamiltonianSpec sqrt_well(double m, double lambda, double gamma) {
  require(m > 0.0, "sqrt_well: m must be positive");
  require(gamma > 0.0, "sqrt_well: gamma must be positive");
  HamiltonianSpec s;
  s.name = "sqrt_well";
  s.n = 2;
  s.d = 2;
  const ComplexMatrix sz = pauli_z();
  s.classical_hamiltonian = [m](const PhaseVector& z) { return z(1) * z(1) / (2.0 * m); };
  s.interaction_hamiltonian = [=](const PhaseVector& z) -> ComplexMatrix {
    return lambda * std::sqrt(std::max(z(0), 0.0)) * sz;
  };
  s.gradient = [=](const PhaseVector& z) {
    HamiltonianGradient g;
    g.classical = RealVector::Zero(2);
    g.classical(1) = z(1) / m;
    g.interaction = {lambda / (2.0 * std::sqrt(z(0))) * sz, ComplexMatrix::Zero(2, 2)};
    return g;
  };
  s.sigma = [gamma](const PhaseVector& z) {
    RealMatrix out = RealMatrix::Zero(2, 2);
    out(1, 1) = gamma / std::sqrt(z(0));
    return out;
  };
  s.domain = [](const PhaseVector& z) -> std::optional<std::string> {
    if (z(0) > 0.0) return std::nullopt;
    return "left the half-line q > 0";
  };
  return s;
}

HamiltonianSpec mass_superposition(double G, double M, double m, double sigma, double phi, double d) {
  require(G > 0.0 && M > 0.0 && m > 0.0 && sigma > 0.0 && d > 0.0,
          "mass_superposition: G, M, m, sigma and d must be positive");
  HamiltonianSpec s;
  s.name = "mass_superposition";
  s.n = 6;
  s.d = 2;
  const double gmm = G * M * m;
  const double r_min = 0.05 * d;
  // Source position for basis state k: +d for k = 0, -d for k = 1.
  auto offset = [d](const PhaseVector& z, int k) {
    Eigen::Vector3d r = z.head<3>();
    r(0) -= (k == 0 ? d : -d);
    return r;
  };
  s.classical_hamiltonian = [m](const PhaseVector& z) { return z.tail<3>().squaredNorm() / (2.0 * m); };
  s.interaction_hamiltonian = [=](const PhaseVector& z) -> ComplexMatrix {
    ComplexMatrix h = ComplexMatrix::Zero(2, 2);
    h(0, 0) = -gmm / offset(z, 0).norm() + phi;
    h(1, 1) = -gmm / offset(z, 1).norm() - phi;
    return h;
  };
  s.gradient = [=](const PhaseVector& z) {
    HamiltonianGradient g;
    g.classical = RealVector::Zero(6);
    g.classical.tail<3>() = z.tail<3>() / m;
    g.interaction.assign(6, ComplexMatrix::Zero(2, 2));
    for (int k = 0; k < 2; ++k) {
      const Eigen::Vector3d r = offset(z, k);
      const double inv3 = 1.0 / std::pow(r.norm(), 3);
      for (int i = 0; i < 3; ++i) g.interaction[i](k, k) = gmm * r(i) * inv3;
    }
    return g;
  };
  s.sigma = [sigma](const PhaseVector&) {
    RealMatrix out = RealMatrix::Zero(6, 6);
    out.bottomRightCorner<3, 3>() = sigma * Eigen::Matrix3d::Identity();
    return out;
  };
  s.constant_sigma = true;
  s.domain = [=](const PhaseVector& z) -> std::optional<std::string> {
    for (int k = 0; k < 2; ++k) {
      if (offset(z, k).norm() < r_min) {
        return std::string("entered the exclusion ball around the source at ") + (k == 0 ? "+d" : "-d");
      }
    }
    return std::nullopt;
  };
  return s;
}

HamiltonianSpec ghz_lattice(int n_sites, double m, double lambda, double sigma) {
  if (n_sites < 1) throw UsageError("ghz_lattice: n_sites must be at least 1");
  if (n_sites > 5) {
    throw ResourceError("ghz_lattice: n_sites = " + std::to_string(n_sites) +
                        " needs a 2^n dimensional Hilbert space; at most 5 sites are supported");
  }
  require(m > 0.0, "ghz_lattice: m must be positive");
  require(sigma > 0.0 || lambda == 0.0, "ghz_lattice: sigma must be positive when lambda != 0");
  HamiltonianSpec s;
  s.name = "ghz_lattice";
  s.n = 2 * n_sites;
  s.d = 1 << n_sites;
  std::vector<ComplexMatrix> sz;
  for (int i = 0; i < n_sites; ++i) sz.push_back(site_pauli_z(n_sites, i));
  const int k = n_sites;
  s.classical_hamiltonian = [=](const PhaseVector& z) { return z.tail(k).squaredNorm() / (2.0 * m); };
  s.interaction_hamiltonian = [=](const PhaseVector& z) -> ComplexMatrix {
    ComplexVector diag = ComplexVector::Zero(s.d);
    for (int i = 0; i < k; ++i) diag += lambda * z(i) * sz[i].diagonal();
    return ComplexMatrix(diag.asDiagonal());
  };
  const int dim = s.d;
  s.gradient = [=](const PhaseVector& z) {
    HamiltonianGradient g;
    g.classical = RealVector::Zero(2 * k);
    g.classical.tail(k) = z.tail(k) / m;
    g.interaction.assign(2 * k, ComplexMatrix::Zero(dim, dim));
    for (int i = 0; i < k; ++i) g.interaction[i] = lambda * sz[i];
    return g;
  };
  s.sigma = [=](const PhaseVector&) {
    RealMatrix out = RealMatrix::Zero(2 * k, 2 * k);
    out.bottomRightCorner(k, k) = sigma * RealMatrix::Identity(k, k);
    return out;
  };
  s.constant_sigma = true;
  s.constant_coupling = true;
  s.classical_gradient = [=](const PhaseVector& z) {
    RealVector g = RealVector::Zero(2 * k);
    g.tail(k) = z.tail(k) / m;
    return g;
  };
  return s;
}

CQModel dephasing_qubit(double epsilon, double phi, double sigma) {
  require(sigma > 0.0, "dephasing_qubit: sigma must be positive");
  CQModel model;
  model.name = "dephasing_qubit";
  model.n = 1;
  model.d = 2;
  model.p = 1;
  Coefficients c;
  c.lindblad = {pauli_z()};
  c.d1 = ComplexMatrix::Constant(1, 1, 0.5);
  c.sigma = RealMatrix::Constant(1, 1, sigma);
  c.sigma_pinv = RealMatrix::Constant(1, 1, 1.0 / sigma);
  c.noise_metric = RealMatrix::Constant(1, 1, 1.0 / (sigma * sigma));
  // Saturation value D1^dag pinv(sigma sigma^T) D1 plus the excess.
  c.d0 = ComplexMatrix::Constant(1, 1, 0.25 / (sigma * sigma) + epsilon);
  c.d1c = RealVector::Zero(1);
  c.hamiltonian = phi * pauli_z();
  model.coefficients = [c](const PhaseVector&) { return c; };
  return model;
}

}  // namespace cqdyn::zoo

namespace cqdyn {

namespace {

double param(const ModelParams& p, const std::string& key) { return p.at(key); }

int integer_param(const ModelParams& p, const std::string& key) {
  const double v = p.at(key);
  if (v != std::floor(v)) throw UsageError("parameter '" + key + "' must be an integer");
  return static_cast<int>(v);
}

ModelParams resolve(const std::string& name, const ModelParams& overrides) {
  ModelParams out = builtin_defaults(name);
  for (const auto& [key, value] : overrides) {
    if (!out.contains(key)) throw UsageError("model '" + name + "' has no parameter '" + key + "'");
    if (!std::isfinite(value)) throw UsageError("parameter '" + key + "' must be finite");
    out[key] = value;
  }
  return out;
}

BuiltinModel from_spec(const std::string& name, ModelParams params, HamiltonianSpec spec, InitialState init) {
  BuiltinModel b;
  b.name = name;
  b.params = std::move(params);
  b.model = build_hamiltonian_model(spec, std::span<const PhaseVector>(&init.z, 1));
  b.model.name = name;
  b.spec = std::move(spec);
  b.initial = std::move(init);
  return b;
}

}  // namespace

std::vector<std::string> builtin_names() {
  return {"diosi", "sqrt_well", "mass_superposition", "ghz_lattice", "dephasing_qubit"};
}

ModelParams builtin_defaults(const std::string& name) {
  if (name == "diosi") return {{"m", 1.0}, {"lambda", 1.0}, {"phi", 2.0}, {"sigma", 1.0}};
  if (name == "sqrt_well") return {{"m", 1.0}, {"lambda", 1.0}, {"gamma", 0.5}};
  if (name == "mass_superposition") {
    return {{"G", 1.0}, {"M", 10.0}, {"m", 0.01}, {"sigma", 0.02}, {"phi", 5.0}, {"d", 1.0}};
  }
  if (name == "ghz_lattice") return {{"n_sites", 5.0}, {"m", 1.0}, {"lambda", 1.0}, {"sigma", 1.0}};
  if (name == "dephasing_qubit") return {{"epsilon", 0.0}, {"phi", 1.0}, {"sigma", 1.0}};
  if (name == "broken_qubit") return {{"phi", 1.0}, {"sigma", 1.0}};
  throw UsageError("unknown model '" + name + "'");
}

BuiltinModel make_builtin(const std::string& name, const ModelParams& overrides) {
  ModelParams p = resolve(name, overrides);
  if (name == "diosi") {
    auto spec = zoo::diosi_linear(param(p, "m"), param(p, "lambda"), param(p, "phi"), param(p, "sigma"));
    return from_spec(name, p, std::move(spec), InitialState::pure(PhaseVector::Zero(2), zoo::plus_state()));
  }
  if (name == "sqrt_well") {
    auto spec = zoo::sqrt_well(param(p, "m"), param(p, "lambda"), param(p, "gamma"));
    PhaseVector z0(2);
    z0 << 1.0, -1.0;
    return from_spec(name, p, std::move(spec), InitialState::pure(z0, zoo::plus_state()));
  }
  if (name == "mass_superposition") {
    auto spec = zoo::mass_superposition(param(p, "G"), param(p, "M"), param(p, "m"), param(p, "sigma"),
                                        param(p, "phi"), param(p, "d"));
    PhaseVector z0 = PhaseVector::Zero(6);
    z0(1) = -0.5;
    return from_spec(name, p, std::move(spec), InitialState::pure(z0, zoo::plus_state()));
  }
  if (name == "ghz_lattice") {
    const int sites = integer_param(p, "n_sites");
    auto spec = zoo::ghz_lattice(sites, param(p, "m"), param(p, "lambda"), param(p, "sigma"));
    return from_spec(name, p, std::move(spec),
                     InitialState::pure(PhaseVector::Zero(2 * sites), zoo::ghz_state(sites)));
  }
  if (name == "dephasing_qubit" || name == "broken_qubit") {
    // The broken variant drops D0 to zero while keeping the back-reaction.
    const double sigma = param(p, "sigma");
    const double eps = name == "broken_qubit" ? -0.25 / (sigma * sigma) : param(p, "epsilon");
    BuiltinModel b;
    b.name = name;
    b.params = p;
    b.model = zoo::dephasing_qubit(eps, param(p, "phi"), sigma);
    b.model.name = name;
    b.initial = InitialState::pure(PhaseVector::Zero(1), zoo::plus_state());
    return b;
  }
  throw UsageError("unknown model '" + name + "'");
}

}  // namespace cqdyn
