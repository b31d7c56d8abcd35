#pragma once

#include "cqdyn/model.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cqdyn {

/// One continuous-measurement step of length dt with outcome J (units of
/// dZ/dt, classical drift D1C excluded).
struct KrausStepSpec {
  CQModel model;
  double dt = 1e-3;
  RealVector J;
};

/// Omega_J = I - iH dt - 1/2 D0_ab L_b^dag L_a dt + 1/2 L_a conj(D1_ia) pinv(D2)_ij J_j dt
/// at z. Throws ContractError if the model does not saturate the trade-off
/// at z.
ComplexMatrix kraus_operator(const KrausStepSpec& spec, const PhaseVector& z);

/// Spectral norm of (integral of Omega_J^dag Omega_J over the outcome measure)
/// - I. The measure is Gaussian with covariance 2 D2 / dt; Omega_J is affine
/// in J so a 3-point Gauss-Hermite rule per noise direction is exact.
double kraus_normalization_residual(const KrausStepSpec& spec, const PhaseVector& z);

struct MeasurementOutcome {
  RealVector J;
  RealVector dZ;  // D1C dt + J dt
  DensityMatrix rho;
};

/// Samples J = <D1^* L + D1 L^dag> + sigma xi / sqrt(dt) from standard normals
/// xi (n components) and applies the Kraus update. For a model above the
/// trade-off boundary the Kraus step uses the saturating part of D0 and is
/// followed by an Euler Lindblad substep with the excess. spec.J is ignored.
MeasurementOutcome measure_and_update(const KrausStepSpec& spec, const PhaseVector& z, const DensityMatrix& rho,
                                      const RealVector& xi, double trace_floor = 1e-6);

struct MomentCheck {
  std::string name;
  double measured = 0.0;
  double expected = 0.0;
  double stderr_ = 0.0;
  double tolerance = 0.0;  // systematic allowance subtracted before scaling
  double sigma = 0.0;      // max(0, |measured - expected| - tolerance) / stderr
};

struct MeasureCheckOptions {
  double dt = 1e-3;
  std::size_t N = 100000;
  std::uint64_t seed = 1;
  double threshold = 4.0;
};

struct MeasureCheckReport {
  std::string model;
  double dt = 0.0;
  std::size_t N = 0;
  bool saturated = true;
  double kraus_residual = 0.0;  // NaN for non-saturated models
  double kraus_residual_bound = 0.0;  // 10 dt^2
  std::vector<MomentCheck> outcome;   // E[J dt], Cov[J dt] against closed forms
  std::vector<MomentCheck> one_step;  // (dZ, d rho) moments against step_density
  double one_step_tolerance = 0.0;    // (rate dt)^2: the order at which the two steps differ
  double threshold = 4.0;
  double max_sigma() const;
  bool passes() const;
};

/// Moment comparison of the measurement step against the closed-form outcome
/// statistics and against step_density at (z, rho). The two samplers use
/// independent noise streams.
MeasureCheckReport measure_check(const CQModel& model, const PhaseVector& z, const DensityMatrix& rho,
                                 const MeasureCheckOptions& opts);

}  // namespace cqdyn
