#include "cqdyn/config.hpp"
#include "cqdyn/errors.hpp"
#include "cqdyn/report_io.hpp"

#include <doctest.h>

#include <sstream>

using namespace cqdyn;
using nlohmann::json;

TEST_CASE("csv fields are quoted per RFC 4180") {
  CHECK(csv_field("plain") == "plain");
  CHECK(csv_field("a,b") == "\"a,b\"");
  CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
  CHECK(csv_field("two\nlines") == "\"two\nlines\"");
}

TEST_CASE("numbers round-trip") {
  for (double x : {0.1, 1.0 / 3.0, -2.5e-300, 6.02214076e23}) CHECK(std::stod(format_number(x)) == x);
}

TEST_CASE("config parsing and validation") {
  const Config c = config_from_json(json::parse(R"({"model": "sqrt_well", "params": {"gamma": 0.3},
      "mode": "pure", "T": 2, "dt": 1e-4, "seed": 9, "N": 50,
      "init": {"z": [0.5, 0.0], "state": "zero"},
      "grid": {"lo": [0, -1], "hi": [1, 1], "cells": [10, 10]}, "outputs": ["x.csv"]})"));
  CHECK(c.model == "sqrt_well");
  CHECK(c.params.at("gamma") == 0.3);
  CHECK(*c.mode == Mode::pure);
  CHECK(c.grid->cells[1] == 10);
  const BuiltinModel b = resolve_model(c);
  const InitialState s = resolve_initial(c, b);
  CHECK(s.z(0) == 0.5);
  CHECK(std::abs(s.psi->coeff(0)) == 1.0);
  CHECK(to_json(c)["params"]["lambda"] == 1.0);  // defaults are resolved

  CHECK_THROWS_AS(config_from_json(json::parse(R"({"modle": "diosi"})")), UsageError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"T": -1})")), UsageError);
  CHECK_THROWS_AS(config_from_json(json::parse(R"({"mode": "quantum"})")), UsageError);
  const Config bad = config_from_json(json::parse(R"({"model": "sqrt_well", "init": {"z": [-1, 0]}})"));
  CHECK_THROWS_AS(resolve_initial(bad, resolve_model(bad)), UsageError);
}

TEST_CASE("trajectory csv layout") {
  Trajectory t;
  t.t = {0.0, 0.5};
  t.z = {PhaseVector::Zero(2), PhaseVector::Ones(2)};
  StateVector p(2);
  p << 1.0, 0.0;
  t.psi = {p, p};
  std::ostringstream out;
  write_trajectory_csv(out, t, json{{"model", "x"}});
  const std::string s = out.str();
  CHECK(s.rfind("# cqdyn ", 0) == 0);
  CHECK(s.find("t,z_1,z_2,bloch_x,bloch_y,bloch_z,purity\r\n") != std::string::npos);
  CHECK(s.find("0.5,1,1,0,0,1,1\r\n") != std::string::npos);
}

TEST_CASE("json reports carry version and config") {
  const json j = with_provenance({{"a", 1}}, {{"model", "diosi"}});
  CHECK(j["version"] == version());
  CHECK(j["config"]["model"] == "diosi");
  CHECK(j["a"] == 1);
}
