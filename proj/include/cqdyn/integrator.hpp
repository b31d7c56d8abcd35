#pragma once

#include "cqdyn/model.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cqdyn {

struct CQStateDensity {
  double t = 0.0;
  PhaseVector z;
  DensityMatrix rho;
};

struct CQStatePure {
  double t = 0.0;
  PhaseVector z;
  StateVector psi;
};

enum class Mode { density, pure, standard, joint };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);

inline constexpr double kDefaultTraceFloor = 1e-6;

/// One Euler-Maruyama step of the coupled classical / density-matrix
/// unravelling. dW holds the Wiener increments (variance dt each).
CQStateDensity step_density(const CQModel& model, const CQStateDensity& s, double dt, const RealVector& dW,
                            double trace_floor = kDefaultTraceFloor);

/// Pure-state unravelling; the model must saturate the trade-off at s.z.
CQStatePure step_pure(const CQModel& model, const CQStatePure& s, double dt, const RealVector& dW,
                      double trace_floor = kDefaultTraceFloor);

/// Deterministic mean-field step (pure state or density matrix).
CQStatePure step_standard(const StandardSCModel& model, const CQStatePure& s, double dt);
CQStateDensity step_standard(const StandardSCModel& model, const CQStateDensity& s, double dt);

struct JointStep {
  double weight = 1.0;
  CQStateDensity state;  // rho normalised; the dropped trace is in weight
};

/// Unnormalised joint-state step: rho is driven linearly by the classical
/// increment dZ (no <L> subtraction) and the trace it picks up is moved into
/// the scalar weight.
JointStep step_joint(const CQModel& model, double weight, const CQStateDensity& s, double dt, const RealVector& dW,
                     double weight_floor = 1e-300);

/// Quantum part of the density-matrix step for a given classical record
/// increment: u = pinv(sigma sigma^T) (dZ - drift dt) is the whitened
/// innovation. Shared by step_density and record-driven reconstruction so
/// both follow the same arithmetic.
DensityMatrix quantum_step_density(const Coefficients& c, const DensityMatrix& rho, double dt, const RealVector& u);
StateVector quantum_step_pure(const Coefficients& c, const StateVector& psi, double dt, const RealVector& u);

/// D1C + <D1* L + D1 L^dag> evaluated in rho (or psi).
RealVector classical_drift(const Coefficients& c, const DensityMatrix& rho);
RealVector classical_drift(const Coefficients& c, const StateVector& psi);

struct InitialState {
  PhaseVector z;
  DensityMatrix rho;               // always set
  std::optional<StateVector> psi;  // required for pure mode
  static InitialState pure(PhaseVector z, StateVector psi);
  static InitialState mixed(PhaseVector z, DensityMatrix rho);
};

struct SimulationOptions {
  double T = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;  // trajectory index inside an ensemble
  Mode mode = Mode::density;
  int every = 1;             // keep every k-th sample (the last one is always kept)
  bool record_noise = false;
  std::uint64_t max_steps = 200'000'000;
  double trace_floor = kDefaultTraceFloor;
};

/// Sampled trajectory. Exactly one of rho / psi is populated, depending on the
/// mode (standard mode uses psi when the initial state had one).
struct Trajectory {
  Mode mode = Mode::density;
  double dt = 0.0;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  int every = 1;
  std::vector<double> t;
  std::vector<PhaseVector> z;
  std::vector<DensityMatrix> rho;
  std::vector<StateVector> psi;
  std::vector<double> log_weight;  // joint mode only
  std::vector<RealVector> noise;   // per step, when requested
  std::uint64_t steps = 0;
  bool terminated = false;
  std::string termination;

  std::size_t size() const { return t.size(); }
  bool is_pure() const { return !psi.empty(); }
  DensityMatrix density(std::size_t k) const;
  /// Index of the last sample with t <= time (+ dt/2).
  std::size_t index_at(double time) const;
};

/// Runs one trajectory. Step-size failures are rethrown with the step index;
/// leaving the model domain ends the trajectory with terminated = true.
Trajectory simulate(const CQModel& model, const InitialState& init, const SimulationOptions& opts);
Trajectory simulate(const StandardSCModel& model, const InitialState& init, const SimulationOptions& opts);

/// Wiener increments for (seed, stream, step): n independent N(0, dt).
RealVector wiener_increment(std::uint64_t seed, std::uint64_t stream, std::uint64_t step, int n, double dt);

}  // namespace cqdyn
