#pragma once

#include "cqdyn/numlin.hpp"

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cqdyn {

/// Immutable list of Lindblad operators with shared storage, so coefficient
/// maps can hand out z-independent operators without copying them. Structural
/// flags are computed once on construction.
class OperatorList {
 public:
  OperatorList() = default;
  OperatorList(std::vector<ComplexMatrix> ops);
  OperatorList(std::initializer_list<ComplexMatrix> ops) : OperatorList(std::vector<ComplexMatrix>(ops)) {}

  std::size_t size() const { return data_ ? data_->ops.size() : 0; }
  bool empty() const { return size() == 0; }
  const ComplexMatrix& operator[](std::size_t a) const { return data_->ops[a]; }
  const std::vector<ComplexMatrix>& operators() const;
  auto begin() const { return operators().begin(); }
  auto end() const { return operators().end(); }

  bool is_zero(std::size_t a) const { return data_->zero[a]; }
  bool is_diagonal(std::size_t a) const { return data_->diagonal[a]; }
  /// Every nonzero operator is diagonal.
  bool all_diagonal() const { return data_ ? data_->all_diagonal : true; }
  /// Indices of the nonzero operators.
  const std::vector<Eigen::Index>& active() const;
  /// Row k holds the diagonal of operator active()[k]; only meaningful when
  /// all_diagonal().
  const ComplexMatrix& diagonals() const;
  /// Distinct for every constructed list (copies share it); 0 when empty.
  std::uint64_t id() const { return data_ ? data_->id : 0; }

 private:
  struct Data {
    std::uint64_t id = 0;
    std::vector<ComplexMatrix> ops;
    std::vector<bool> zero;
    std::vector<bool> diagonal;
    bool all_diagonal = true;
    std::vector<Eigen::Index> active;
    ComplexMatrix diagonals;
  };
  std::shared_ptr<const Data> data_;
};

/// All coefficient fields of a CQ master equation evaluated at one phase-space
/// point. Index conventions: d1(i, a) is D1_i^{0a}; the conjugate D1_i^{a0} is
/// implied. Units are 1/time for d0 and hamiltonian (hbar = 1).
struct Coefficients {
  OperatorList lindblad;                // p operators, each d x d
  ComplexMatrix d0;                     // p x p, Hermitian PSD
  ComplexMatrix d1;                     // n x p
  RealVector d1c;                       // n, pure classical drift
  RealMatrix sigma;                     // n x n, D2 = sigma sigma^T / 2
  ComplexMatrix hamiltonian;            // d x d, Hermitian

  /// Optional cached pinv(sigma) and pinv(sigma sigma^T); empty means "compute
  /// on demand". Builders fill these when sigma does not depend on z.
  RealMatrix sigma_pinv;
  RealMatrix noise_metric;

  RealMatrix d2() const { return 0.5 * sigma * sigma.transpose(); }
};

/// Returns an explanation when z is outside the model's domain (e.g. the
/// square-root well for q <= 0), std::nullopt otherwise.
using DomainCheck = std::function<std::optional<std::string>(const PhaseVector&)>;

/// A classical-quantum dynamics: n classical coordinates, a d-level quantum
/// system and p Lindblad operators. The coefficient map must be pure so one
/// model value can be shared by concurrent trajectory workers.
struct CQModel {
  std::string name;
  int n = 0;
  int d = 0;
  int p = 0;
  std::function<Coefficients(const PhaseVector&)> coefficients;
  DomainCheck domain;

  Coefficients at(const PhaseVector& z) const;
  std::optional<std::string> domain_violation(const PhaseVector& z) const {
    return domain ? domain(z) : std::nullopt;
  }
};

/// Per-point results of the complete-positivity check.
struct PointValidation {
  PhaseVector z;
  double tradeoff_min_eigenvalue = 0.0;  // min eig of 2 D0 - D1^dag pinv(D2) D1
  double range_residual = 0.0;           // ||(I - sigma pinv(sigma)) D1||_F
  double hamiltonian_hermiticity = 0.0;
  double d0_hermiticity = 0.0;
  double saturation_residual = 0.0;      // max |D0 - D1^dag pinv(sigma sigma^T) D1|
  bool valid = false;
  bool saturated = false;
};

struct ValidationReport {
  std::string model;
  double tol = 0.0;
  std::vector<PointValidation> points;
  bool valid = false;      // every probed point valid
  bool saturated = false;  // every probed point saturated

  double worst_tradeoff_eigenvalue() const;
  double worst_range_residual() const;
  double worst_saturation_residual() const;
};

/// Checks the decoherence-diffusion trade-off and the range condition.
/// Throws DimensionError when the coefficient shapes disagree with (n, d, p).
ValidationReport validate(const CQModel& model, const PhaseVector& z, double tol = 1e-10);
ValidationReport validate(const CQModel& model, std::span<const PhaseVector> points, double tol = 1e-10);

/// z0 plus `count` deterministic Gaussian perturbations of relative size
/// `scale`, skipping points outside the model domain.
std::vector<PhaseVector> probe_points(const CQModel& model, const PhaseVector& z0, int count = 32,
                                      double scale = 0.1, std::uint64_t seed = 0x5eedULL);

// -------------------------------------------------------------------------
// Hamiltonian ("healed semi-classical") models

/// Partial derivatives of H_C (real) and H_I (matrix) along each coordinate.
struct HamiltonianGradient {
  RealVector classical;
  std::vector<ComplexMatrix> interaction;
};

struct HamiltonianSpec {
  std::string name;
  int n = 0;  // even; block layout (q_1..q_k, p_1..p_k)
  int d = 0;
  std::function<double(const PhaseVector&)> classical_hamiltonian;
  std::function<ComplexMatrix(const PhaseVector&)> interaction_hamiltonian;
  std::function<HamiltonianGradient(const PhaseVector&)> gradient;
  std::function<RealMatrix(const PhaseVector&)> sigma;
  bool constant_sigma = false;  // lets builders precompute pseudoinverses
  /// The gradient of H_I does not depend on z, so the Lindblad operators are
  /// evaluated once. classical_gradient (dH_C/dz) then spares the per-step
  /// matrix part of `gradient`.
  bool constant_coupling = false;
  std::function<RealVector(const PhaseVector&)> classical_gradient;
  DomainCheck domain;
};

/// {Z_i, H} for the scalar and matrix parts separately.
struct PoissonBrackets {
  RealVector classical;
  std::vector<ComplexMatrix> interaction;
};

PoissonBrackets poisson_bracket(const HamiltonianSpec& spec, const PhaseVector& z);

/// Replaces spec.gradient with central differences, h = 1e-5 * max(1, |z|).
HamiltonianSpec with_finite_difference_gradient(HamiltonianSpec spec);

/// Largest deviation between spec.gradient and central finite differences
/// with step h at z.
double gradient_consistency(const HamiltonianSpec& spec, const PhaseVector& z, double h);

/// L_a = {Z_a, H_I}, D1 = sigma pinv(sigma) / 2 (equal to I/2 when sigma is
/// full rank), D0 = pinv(sigma sigma^T) / 4, D1C = {Z, H_C}, H = H_I.
/// Throws PositivityError if (I - sigma pinv(sigma)) {Z, H_I} != 0 at any of
/// `probes`.
CQModel build_hamiltonian_model(const HamiltonianSpec& spec, std::span<const PhaseVector> probes = {});

/// Mean-field dynamics: dZ = {Z, H_C} dt + <{Z, H_I}> dt, d psi = -i H_I psi dt.
struct StandardSCModel {
  HamiltonianSpec spec;
};

StandardSCModel build_standard_semiclassical(const HamiltonianSpec& spec);

/// Classical drift of the standard semi-classical equations for a given
/// quantum state (density matrix form).
RealVector standard_drift(const StandardSCModel& model, const PhaseVector& z, const DensityMatrix& rho);

}  // namespace cqdyn
