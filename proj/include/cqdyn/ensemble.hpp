#pragma once

#include "cqdyn/integrator.hpp"
#include "cqdyn/model.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace cqdyn {

/// Rectangular grid over selected phase-space coordinates. `axes[k]` is the
/// component of z resolved by grid dimension k; coordinates that are not
/// resolved are integrated out (marginalised) by the histogram estimator.
struct PhaseGrid {
  std::vector<int> axes;
  std::vector<double> lo;
  std::vector<double> hi;
  std::vector<int> cells;

  static PhaseGrid make(std::vector<double> lo, std::vector<double> hi, std::vector<int> cells,
                        std::vector<int> axes = {});

  int dims() const { return static_cast<int>(cells.size()); }
  std::size_t size() const;
  double width(int k) const { return (hi[k] - lo[k]) / cells[k]; }
  double cell_volume() const;
  /// Flat index; grid dimension 0 varies fastest.
  std::size_t flat(const std::vector<int>& idx) const;
  std::vector<int> unflat(std::size_t flat) const;
  /// Cell containing the resolved components of z, if inside the grid.
  std::optional<std::size_t> locate(const PhaseVector& z) const;
  /// Cell center (resolved coordinates only).
  RealVector center(std::size_t flat) const;

  bool operator==(const PhaseGrid& o) const = default;
};

/// Orthonormal Hermitian basis {B_a} of d x d matrices, Tr(B_a B_b) = delta_ab.
/// B_0 = I/sqrt(d); for d = 2 the rest are the Pauli matrices over sqrt(2).
std::vector<ComplexMatrix> hermitian_basis(int d);

/// Real coordinates Tr(B_a X) of a Hermitian matrix.
RealVector hermitian_components(const std::vector<ComplexMatrix>& basis, const ComplexMatrix& x);

/// Discretised CQ state: one Hermitian d x d density (per unit phase-space
/// volume) per cell.
struct CQGridState {
  PhaseGrid grid;
  int d = 0;
  std::vector<ComplexMatrix> values;
  /// Probability mass that fell outside the grid (histogram estimates only).
  double leakage = 0.0;

  static CQGridState zeros(const PhaseGrid& grid, int d);
  /// Sum over cells of Tr(value) * cell volume.
  double total_trace() const;
  /// Sum over cells of value * cell volume.
  ComplexMatrix integrated() const;
  /// Tr(value) per cell.
  RealVector marginal() const;
  /// Component a of every cell in the Hermitian basis.
  RealVector component(int a) const;
  /// Mean of a function of the resolved coordinates against Tr(value).
  double moment(const std::function<double(const RealVector&)>& f) const;
  /// Probability mass in cells that touch the grid boundary.
  double boundary_mass() const;
};

/// A weighted mixture of point or box-uniform classical distributions, each
/// carrying a quantum state. Sampling picks an atom by weight, then draws z
/// uniformly inside its box.
struct InitialDistribution {
  struct Atom {
    double weight = 1.0;
    PhaseVector z;           // box center (full phase-space vector)
    PhaseVector half_width;  // zero for point atoms
    DensityMatrix rho;
    std::optional<StateVector> psi;
  };
  std::vector<Atom> atoms;

  static InitialDistribution point(const InitialState& s);
  /// One atom per occupied cell; `anchor` fills the coordinates the grid does
  /// not resolve (defaults to zero).
  static InitialDistribution from_grid(const CQGridState& g, int n, const PhaseVector& anchor = {});
  /// p a + (1 - p) b.
  static InitialDistribution mixture(double p, const InitialDistribution& a, const InitialDistribution& b);

  /// Deterministic draw for trajectory `index` under `seed`.
  InitialState sample(std::uint64_t seed, std::uint64_t index) const;
  /// Exact discretisation onto a grid (box atoms spread by overlap volume).
  CQGridState to_grid(const PhaseGrid& grid) const;
};

struct EnsembleOptions {
  SimulationOptions sim;  // sim.stream is ignored; trajectory i uses stream i
  std::size_t N = 1000;
  unsigned workers = 0;   // 0 = hardware concurrency
};

/// Runs N independent trajectories, trajectory i using noise stream i and
/// the i-th initial draw, so the result does not depend on the worker count.
std::vector<Trajectory> run_ensemble(const CQModel& model, const InitialDistribution& init,
                                     const EnsembleOptions& opts);
std::vector<Trajectory> run_ensemble(const StandardSCModel& model, const InitialDistribution& init,
                                     const EnsembleOptions& opts);

/// Generic parallel-for over [0, count) used by the ensemble drivers.
void parallel_for(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& body);

/// Histogram estimate of the CQ state at time t. Trajectories that ended
/// before t (domain exit) count as leakage.
CQGridState estimate_cq_state(const std::vector<Trajectory>& trajectories, double t, const PhaseGrid& grid);

struct ComparisonReport {
  double marginal_l1 = 0.0;
  double marginal_error = 0.0;               // bootstrap noise-floor estimate
  std::vector<double> component_l1;          // per Hermitian-basis component
  std::vector<double> component_error;
  int resamples = 0;

  /// distance <= max(floor, factor * error) for every entry.
  bool passes(double floor = 0.02, double factor = 3.0) const;
};

/// Two grid states, no error estimate.
ComparisonReport compare(const CQGridState& a, const CQGridState& b);

/// Monte Carlo histogram at time t against a reference grid state. The error
/// is the RMS L1 distance between bootstrap-resampled histograms and the
/// full-sample histogram, i.e. the sampling noise floor of the distance.
ComparisonReport compare(const std::vector<Trajectory>& mc, double t, const CQGridState& reference,
                         int resamples = 200, std::uint64_t seed = 1);

/// Two Monte Carlo ensembles with optional mixture weights; errors add in
/// quadrature. `mc_a` may be a union of sub-ensembles with weights w_a.
ComparisonReport compare(const std::vector<const std::vector<Trajectory>*>& a, const std::vector<double>& wa,
                         const std::vector<const std::vector<Trajectory>*>& b, const std::vector<double>& wb,
                         double t, const PhaseGrid& grid, int resamples = 200, std::uint64_t seed = 1);

struct Series {
  std::vector<double> t;
  std::vector<double> mean;
  std::vector<double> stderr_;
  std::vector<std::size_t> count;
};

/// Mean and standard error of f(z_t, rho_t) at each sample time. A
/// trajectory that stopped early contributes its final state to later times
/// (the stopped process), so martingale statements remain exact.
Series expectation_series(const std::vector<Trajectory>& trajectories,
                          const std::function<double(const PhaseVector&, const DensityMatrix&)>& f);
/// Tr{A(z) rho} form.
Series expectation_series(const std::vector<Trajectory>& trajectories,
                          const std::function<ComplexMatrix(const PhaseVector&)>& observable);

// -------------------------------------------------------------------------
// Grid master-equation solver

struct MasterEquationOptions {
  double T = 0.2;
  double dt = 0.0;      // 0 = largest stable step
  double safety = 0.4;  // CFL factor
};

struct MasterEquationStats {
  double dt = 0.0;
  std::uint64_t steps = 0;
  double max_stable_dt = 0.0;
  double trace_drift = 0.0;       // |total trace(T) - total trace(0)|
  double boundary_mass = 0.0;     // at T
  double min_cell_eigenvalue = 0.0;
};

/// Explicit finite-volume solver of the CQ master equation on a grid with
/// all n coordinates resolved (n <= 2). Drift terms use characteristic-wise
/// upwinding with a minmod-limited linear reconstruction, diffusion uses
/// central differences in flux form, the Lindblad and Hamiltonian parts act
/// per cell, and time stepping is SSP-RK3. Boundaries are no-flux.
/// Throws StepSizeError when dt exceeds the stability bound.
CQGridState solve_master_equation(const CQModel& model, const CQGridState& initial, const MasterEquationOptions& opts,
                                  MasterEquationStats* stats = nullptr);

}  // namespace cqdyn
