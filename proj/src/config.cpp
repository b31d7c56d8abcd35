#include "cqdyn/config.hpp"

#include "cqdyn/errors.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace cqdyn {

namespace {

using nlohmann::json;

template <class T>
T get(const json& j, const char* key) {
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw UsageError(std::string("config: field '") + key + "': " + e.what());
  }
}

PhaseGrid grid_from_json(const json& g) {
  for (const auto& [k, v] : g.items()) {
    if (k != "lo" && k != "hi" && k != "cells" && k != "axes") throw UsageError("config: unknown grid field '" + k + "'");
  }
  auto lo = get<std::vector<double>>(g, "lo");
  auto hi = get<std::vector<double>>(g, "hi");
  auto cells = get<std::vector<int>>(g, "cells");
  std::vector<int> axes;
  if (g.contains("axes")) axes = get<std::vector<int>>(g, "axes");
  try {
    return PhaseGrid::make(std::move(lo), std::move(hi), std::move(cells), std::move(axes));
  } catch (const Error& e) {
    throw UsageError(std::string("config: grid: ") + e.what());
  }
}

StateVector named_state(const std::string& name, int d) {
  StateVector psi = StateVector::Zero(d);
  if (name == "zero") {
    psi(0) = 1.0;
  } else if (name == "one") {
    psi(d - 1) = 1.0;
  } else if (name == "plus") {
    psi.setConstant(1.0 / std::sqrt(static_cast<double>(d)));
  } else if (name == "ghz") {
    psi(0) = psi(d - 1) = 1.0 / std::sqrt(2.0);
  } else {
    throw UsageError("config: unknown initial state '" + name + "' (expected zero|one|plus|ghz|maximally_mixed)");
  }
  return psi;
}

}  // namespace

Config config_from_json(const json& j) {
  if (!j.is_object()) throw UsageError("config: top level must be a JSON object");
  static const std::set<std::string> known = {"model", "params", "mode", "T",    "dt",        "seed",
                                              "N",     "every",  "workers", "t", "p", "resamples",
                                              "init",  "grid",   "outputs"};
  for (const auto& [k, v] : j.items()) {
    if (!known.contains(k)) throw UsageError("config: unknown field '" + k + "'");
  }
  Config c;
  if (j.contains("model")) c.model = get<std::string>(j, "model");
  if (j.contains("params")) {
    const json& p = j.at("params");
    if (!p.is_object()) throw UsageError("config: 'params' must be an object");
    for (const auto& [k, v] : p.items()) {
      if (!v.is_number()) throw UsageError("config: parameter '" + k + "' must be a number");
      c.params[k] = v.get<double>();
    }
  }
  if (j.contains("mode") && !j.at("mode").is_null()) c.mode = parse_mode(get<std::string>(j, "mode"));
  if (j.contains("T")) c.T = get<double>(j, "T");
  if (j.contains("dt")) c.dt = get<double>(j, "dt");
  if (j.contains("seed")) c.seed = get<std::uint64_t>(j, "seed");
  if (j.contains("N")) c.N = get<std::size_t>(j, "N");
  if (j.contains("every")) c.every = get<int>(j, "every");
  if (j.contains("workers")) c.workers = get<unsigned>(j, "workers");
  if (j.contains("t")) c.t = get<double>(j, "t");
  if (j.contains("p")) c.p = get<double>(j, "p");
  if (j.contains("resamples")) c.resamples = get<int>(j, "resamples");
  if (j.contains("init")) {
    const json& init = j.at("init");
    if (!init.is_object()) throw UsageError("config: 'init' must be an object");
    for (const auto& [k, v] : init.items()) {
      if (k != "z" && k != "state") throw UsageError("config: unknown init field '" + k + "'");
    }
    if (init.contains("z")) c.init_z = get<std::vector<double>>(init, "z");
    if (init.contains("state")) c.init_state = init.at("state");
  }
  if (j.contains("grid") && !j.at("grid").is_null()) c.grid = grid_from_json(j.at("grid"));
  if (j.contains("outputs")) c.outputs = get<std::vector<std::string>>(j, "outputs");
  if (!(c.T > 0.0) || !(c.dt > 0.0)) throw UsageError("config: T and dt must be positive");
  if (c.every < 1) throw UsageError("config: every must be >= 1");
  if (!(c.p > 0.0 && c.p < 1.0)) throw UsageError("config: p must lie in (0, 1)");
  return c;
}

Config load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("config: cannot read '" + path + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  json j;
  try {
    j = json::parse(buf.str());
  } catch (const json::parse_error& e) {
    throw UsageError("config: '" + path + "' is not valid JSON: " + e.what());
  }
  return config_from_json(j);
}

json to_json(const Config& cfg) {
  json j;
  j["model"] = cfg.model;
  ModelParams params = builtin_defaults(cfg.model);
  for (const auto& [k, v] : cfg.params) params[k] = v;
  j["params"] = params;
  j["mode"] = cfg.mode ? json(std::string(to_string(*cfg.mode))) : json(nullptr);
  j["T"] = cfg.T;
  j["dt"] = cfg.dt;
  j["seed"] = cfg.seed;
  j["N"] = cfg.N;
  j["every"] = cfg.every;
  j["t"] = cfg.t;
  j["p"] = cfg.p;
  j["resamples"] = cfg.resamples;
  json init = json::object();
  if (cfg.init_z) init["z"] = *cfg.init_z;
  if (cfg.init_state) init["state"] = *cfg.init_state;
  j["init"] = init;
  if (cfg.grid) {
    j["grid"] = {{"lo", cfg.grid->lo}, {"hi", cfg.grid->hi}, {"cells", cfg.grid->cells}, {"axes", cfg.grid->axes}};
  } else {
    j["grid"] = nullptr;
  }
  j["outputs"] = cfg.outputs;
  return j;
}

BuiltinModel resolve_model(const Config& cfg) { return make_builtin(cfg.model, cfg.params); }

InitialState resolve_initial(const Config& cfg, const BuiltinModel& model) {
  InitialState s = model.initial;
  const int n = model.model.n;
  const int d = model.model.d;
  if (cfg.init_z) {
    if (static_cast<int>(cfg.init_z->size()) != n) {
      throw UsageError("config: init.z has " + std::to_string(cfg.init_z->size()) + " entries, model '" +
                       model.name + "' has " + std::to_string(n) + " coordinates");
    }
    s.z = Eigen::Map<const RealVector>(cfg.init_z->data(), n);
  }
  if (cfg.init_state) {
    const json& st = *cfg.init_state;
    if (st.is_string()) {
      const auto name = st.get<std::string>();
      if (name == "maximally_mixed") {
        s = InitialState::mixed(s.z, DensityMatrix::Identity(d, d) / static_cast<double>(d));
      } else {
        s = InitialState::pure(s.z, named_state(name, d));
      }
    } else if (st.is_array()) {
      if (static_cast<int>(st.size()) != d) throw UsageError("config: init.state needs " + std::to_string(d) + " amplitudes");
      StateVector psi(d);
      for (int i = 0; i < d; ++i) {
        const json& a = st[static_cast<std::size_t>(i)];
        if (a.is_number()) {
          psi(i) = a.get<double>();
        } else if (a.is_array() && a.size() == 2) {
          psi(i) = Complex(a[0].get<double>(), a[1].get<double>());
        } else {
          throw UsageError("config: amplitudes must be numbers or [re, im] pairs");
        }
      }
      if (!(psi.norm() > 0.0)) throw UsageError("config: init.state has zero norm");
      s = InitialState::pure(s.z, psi.normalized());
    } else {
      throw UsageError("config: init.state must be a name or an amplitude list");
    }
  }
  if (auto why = model.model.domain_violation(s.z)) throw UsageError("config: initial point outside domain: " + *why);
  return s;
}

Mode resolve_mode(const Config& cfg, const BuiltinModel& model) {
  if (cfg.mode) return *cfg.mode;
  const ValidationReport v = validate(model.model, model.initial.z);
  return v.saturated ? Mode::pure : Mode::density;
}

}  // namespace cqdyn
