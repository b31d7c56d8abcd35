#pragma once

#include "cqdyn/ensemble.hpp"
#include "cqdyn/integrator.hpp"
#include "cqdyn/zoo.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cqdyn {

/// Run configuration shared by every CLI subcommand. Loaded from JSON
///   {model, params: {..}, mode, T, dt, seed, N, every, workers, t, p,
///    resamples, init: {z: [..], state}, grid: {lo, hi, cells, axes},
///    outputs: [..]}
/// and then overridden by command-line flags. Unknown keys are rejected.
struct Config {
  std::string model = "diosi";
  ModelParams params;
  std::optional<Mode> mode;  // unset: pure for saturated models, density otherwise
  double T = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 1;
  std::size_t N = 1000;
  int every = 1;
  unsigned workers = 0;
  double t = 0.2;      // comparison time (compare)
  double p = 0.5;      // mixture weight (linearity)
  int resamples = 200;
  std::optional<std::vector<double>> init_z;
  /// "plus", "zero", "one", "ghz", "maximally_mixed", or a list of
  /// [re, im] amplitude pairs (stored as JSON).
  std::optional<nlohmann::json> init_state;
  std::optional<PhaseGrid> grid;
  std::vector<std::string> outputs;
};

Config config_from_json(const nlohmann::json& j);
Config load_config(const std::string& path);

/// Fully resolved form: parameters merged with the model defaults, the
/// effective mode filled in.
nlohmann::json to_json(const Config& cfg);

/// Registry model with the config's parameters.
BuiltinModel resolve_model(const Config& cfg);

/// The model's default initial condition with config overrides applied.
InitialState resolve_initial(const Config& cfg, const BuiltinModel& model);

/// Mode to use when the config leaves it open.
Mode resolve_mode(const Config& cfg, const BuiltinModel& model);

}  // namespace cqdyn
