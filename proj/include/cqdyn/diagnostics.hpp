#pragma once

#include "cqdyn/ensemble.hpp"
#include "cqdyn/integrator.hpp"
#include "cqdyn/model.hpp"

#include <optional>
#include <vector>

namespace cqdyn {

/// Tr rho^2.
double purity(const DensityMatrix& rho);

/// d Tr(rho^2)/dt for a pure conditioned state:
///   2 sum_a (|<Lbar_a>|^2 - <Lbar_a^dag Lbar_a>),  Lbar = B L,
/// with B^dag B = D0 - D1^dag pinv(sigma sigma^T) D1. Never positive for a
/// valid model; zero for every state iff the model saturates the trade-off.
/// Throws ContractError when rho is not pure.
double purity_rate(const CQModel& model, const DensityMatrix& rho, const PhaseVector& z);
double purity_rate(const CQModel& model, const StateVector& psi, const PhaseVector& z);

/// Purity of the reduced state on `keep` (qubit indices, qubit 0 most
/// significant) of an n_sites-qubit pure state.
double reduced_purity(const StateVector& psi, int n_sites, const std::vector<int>& keep);

/// Rebuilds the conditioned quantum state from a classical record alone. The
/// record must be uniformly spaced in time (consecutive steps). The whitened
/// innovation is recovered as u = pinv(sigma sigma^T) (dZ - drift dt), with
/// the drift evaluated in the reconstructed state, and fed to the same
/// quantum update the integrator uses. With a state vector in `init` the
/// pure-state equation is used (model must saturate), otherwise the density
/// matrix one.
Trajectory reconstruct_conditioned(const CQModel& model, const std::vector<double>& times,
                                   const std::vector<PhaseVector>& record, const InitialState& init,
                                   double trace_floor = kDefaultTraceFloor);

/// Ratio of the norm of the deterministic conditioning terms of the pure
/// unravelling (decoherence compensation plus the <L^dag> L - <L> L^dag part,
/// per unit time) to |H psi|. Small values mean mean-field dynamics is a good
/// local approximation. +infinity when H psi = 0.
double standard_sc_residual(const CQModel& model, const StateVector& psi, const PhaseVector& z);

struct LinearityOptions {
  double p = 0.5;
  double T = 1.0;
  double dt = 1e-3;
  std::size_t N = 10000;
  std::uint64_t seed = 1;
  unsigned workers = 0;
  int resamples = 200;
  /// Histogram grid; when empty a grid over `axes` is fitted to the samples.
  std::optional<PhaseGrid> grid;
  std::vector<int> axes;  // default {0, n/2} (first position, first momentum)
  int cells = 32;
  /// Coordinate whose terminal mean is reported (default: first momentum).
  int observable_axis = -1;
};

struct LinearityReport {
  ComparisonReport comparison;  // mixture-evolved vs evolved-then-mixed
  double max_sigma = 0.0;       // largest distance / error over all entries
  bool rejected = false;        // max_sigma > 3
  double mean_mixture = 0.0;    // terminal mean of the observable coordinate
  double mean_mixture_se = 0.0;
  double mean_components = 0.0;
  double mean_components_se = 0.0;
  PhaseGrid grid;
};

/// Evolves p a + (1 - p) b as one ensemble and a, b separately, then compares
/// the terminal CQ-state histograms. Linear (healed) dynamics must not be
/// distinguishable; mean-field dynamics is, because it is not linear in the
/// CQ state.
LinearityReport linearity_test(const CQModel& model, const InitialDistribution& a, const InitialDistribution& b,
                               const LinearityOptions& opts);
LinearityReport linearity_test(const StandardSCModel& model, const InitialDistribution& a,
                               const InitialDistribution& b, const LinearityOptions& opts);

struct MasterEquationCheckOptions {
  double t = 0.2;
  std::size_t N = 100000;
  double dt = 1e-3;  // trajectory step
  std::uint64_t seed = 1;
  unsigned workers = 0;
  int resamples = 200;
  MasterEquationOptions solver;  // solver.T is replaced by t
};

struct MasterEquationCheck {
  ComparisonReport comparison;
  MasterEquationStats solver;
  double mc_leakage = 0.0;  // ensemble mass outside the grid at t
  PhaseGrid grid;
};

/// Density-mode ensemble from `init` against the grid solver started from
/// init.to_grid(grid), both at time t.
MasterEquationCheck check_against_master_equation(const CQModel& model, const InitialDistribution& init,
                                                  const PhaseGrid& grid, const MasterEquationCheckOptions& opts);

/// Uniform box of one grid cell centred on s.z (resolved axes only).
InitialDistribution cell_box(const PhaseGrid& grid, const InitialState& s);

}  // namespace cqdyn
