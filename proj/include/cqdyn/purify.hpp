#pragma once

#include "cqdyn/ensemble.hpp"
#include "cqdyn/model.hpp"

#include <functional>
#include <span>
#include <string>
#include <vector>

namespace cqdyn {

/// A non-saturated model embedded in a larger phase space where it saturates
/// the trade-off. The first n coordinates of `enlarged` are the base
/// coordinates; the r auxiliary ones carry unit noise and no drift.
struct PurifiedModel {
  CQModel base;
  int extra_dims = 0;
  CQModel enlarged;
  ComplexMatrix excess_d0;  // D0 - D1^dag pinv(sigma sigma^T) D1 at the probe point
  ComplexMatrix extra_d1;   // r x p block appended to D1, at the probe point
};

/// Excess decoherence D0 - D1^dag pinv(sigma sigma^T) D1 at z.
ComplexMatrix excess_decoherence(const CQModel& model, const PhaseVector& z);

/// Builds the enlarged model. The extra D1 block is the principal square root
/// of the excess decoherence restricted to its row space,
/// diag(sqrt(eig)) V^dag over the r non-zero eigenpairs, so that its Gram
/// matrix reproduces the excess exactly. Coefficients depend on the base
/// coordinates only. Throws ContractError if the model is invalid at z_probe
/// or if the rank differs at any of `probes`.
PurifiedModel purify_classical(const CQModel& model, const PhaseVector& z_probe,
                               std::span<const PhaseVector> probes = {}, double tol = 1e-10);

struct Observable {
  std::string name;
  std::function<double(const PhaseVector&, const DensityMatrix&)> f;
  bool variance = false;  // compare Var[f] instead of E[f]
};

struct ObservableDeviation {
  std::string name;
  double max_sigma = 0.0;  // largest |difference| / combined standard error
  double at_time = 0.0;
};

struct EquivalenceOptions {
  double T = 1.0;
  double dt = 1e-3;
  std::size_t N = 10000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  int checkpoints = 10;  // evenly spaced comparison times in (0, T]
  std::vector<Observable> observables;  // evaluated on base coordinates
};

struct EquivalenceReport {
  int extra_dims = 0;
  std::vector<ObservableDeviation> observables;
  /// Tr(E[rho]^2) of the unconditioned quantum state, delta-method errors.
  ObservableDeviation mean_state_purity;
  /// Smallest conditioned purity seen along enlarged-model trajectories and
  /// ensemble-mean conditioned purity of the base model at T.
  double enlarged_min_purity = 1.0;
  double base_mean_purity_final = 1.0;
  double base_mean_purity_initial = 1.0;
  bool passes(double k = 3.0) const;
};

/// Runs N trajectories of the enlarged model (pure mode when the initial state
/// is pure, density mode otherwise), drops the auxiliary coordinates, and
/// compares observable time series against N density-mode trajectories of the
/// base model.
EquivalenceReport marginal_equivalence(const PurifiedModel& purified, const InitialState& init,
                                       const EquivalenceOptions& opts);

/// Default observable list for a qubit model: mean <sigma_z>, mean and variance
/// of the last classical coordinate.
std::vector<Observable> default_observables(const CQModel& model);

}  // namespace cqdyn
