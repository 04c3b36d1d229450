// Copyright 2026 The hapticlab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "hapticlab/robot_model.hpp"
#include "hapticlab/scenario.hpp"

using namespace hapticlab;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "hapticlab_test_scenario" / name;
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

Scenario from(const json& doc) { return scenario_from_json(doc, data_directory() / "scenarios"); }

json reshape_doc() {
  return {{"kind", "reshape-step"}, {"model", "builtin:joint1"}, {"seed", 1},
          {"friction", {{"coulomb", 0.5}, {"viscous", 0.2}}}};
}

// Every line of every CSV in the directory has as many fields as its header.
void check_csv_shapes(const fs::path& dir) {
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() != ".csv") continue;
    std::istringstream lines(slurp(entry.path()));
    std::string header, line;
    REQUIRE(std::getline(lines, header));
    const auto cols = std::count(header.begin(), header.end(), ',');
    int rows = 0;
    while (std::getline(lines, line)) {
      CHECK(std::count(line.begin(), line.end(), ',') == cols);
      ++rows;
    }
    CHECK(rows > 0);
  }
}

void check_rerun_identical(const Scenario& s, const std::string& name) {
  const fs::path first = scratch(name + "_a"), second = scratch(name + "_b");
  const ScenarioResult a = run_scenario(s, first);
  CHECK(a.passed());
  const Scenario again = load_scenario(first / "metadata.json");
  run_scenario(again, second);
  for (const std::string& artifact : a.artifacts) {
    CAPTURE(artifact);
    CHECK(slurp(first / artifact) == slurp(second / artifact));
  }
  check_csv_shapes(first);
}

}  // namespace

TEST_CASE("overrides address nested keys and parse JSON values") {
  json doc = reshape_doc();
  apply_override(doc, "params.ratios=[1,3]");
  apply_override(doc, "sim.integrator=semi_implicit_euler");
  apply_override(doc, "seed=7");
  CHECK(doc["params"]["ratios"] == json::array({1, 3}));
  CHECK(doc["sim"]["integrator"] == "semi_implicit_euler");
  CHECK(doc["seed"] == 7);
  CHECK_THROWS_AS(apply_override(doc, "noequals"), ScenarioError);
  CHECK_THROWS_AS(apply_override(doc, "a..b=1"), ScenarioError);
  CHECK_THROWS_AS(apply_override(doc, "seed.x=1"), ScenarioError);
}

TEST_CASE("resolution writes every default and is idempotent") {
  const Scenario s = from(reshape_doc());
  CHECK(s.kind == ScenarioKind::kReshapeStep);
  CHECK(s.seed == 1);
  CHECK(s.config["params"]["ratios"] == json::array({1.0, 2.0, 3.0, 4.0}));
  CHECK(s.config["sim"]["dt"] == 1e-3);
  CHECK(s.config["controller"]["reshape"] == "by_group");
  const Scenario again = from(s.config);
  CHECK(again.config == s.config);

  const json meta = scenario_metadata(s);
  CHECK(meta["version"] == artifact_version());
  CHECK(scenario_from_json(meta, "/nonexistent").config == s.config);
}

TEST_CASE("invalid scenarios are rejected with the offending field") {
  auto message = [](const json& doc) {
    try {
      from(doc);
    } catch (const ScenarioError& e) {
      return std::string(e.what());
    }
    return std::string("accepted");
  };
  json doc = reshape_doc();
  doc.erase("seed");
  CHECK(message(doc).find("seed") != std::string::npos);

  doc = reshape_doc();
  doc["seed"] = -3;
  CHECK(message(doc).find("seed") != std::string::npos);

  doc = reshape_doc();
  doc["params"] = {{"ratio", 2}};
  CHECK(message(doc) == "params.ratio: unknown field");

  doc = reshape_doc();
  doc["kind"] = "juggle";
  CHECK(message(doc).find("juggle") != std::string::npos);

  doc = reshape_doc();
  doc["model"] = "no/such/model.json";
  CHECK(message(doc).find("model:") == 0);

  doc = reshape_doc();
  doc["friction"]["coulomb"] = {0.5, 0.5};
  CHECK(message(doc).find("friction.coulomb") == 0);

  // Stiff Coulomb regularization for the step size.
  doc = reshape_doc();
  doc["friction"]["deadband"] = 1e-6;
  CHECK(message(doc).find("step ratio") != std::string::npos);

  doc = {{"kind", "friction-sweep"}, {"model", "builtin:joint1"}, {"seed", 1},
         {"params", {{"operator", {{"stiffness", 0.0}}}}}};
  CHECK(message(doc).find("operator") != std::string::npos);

  doc = {{"kind", "teleop-wall"}, {"model", "builtin:panda_like"}, {"seed", 1},
         {"params", {{"coupling", {{"reflection_scale", 1.5}}}}}};
  CHECK(message(doc).find("params.coupling") == 0);

  doc = {{"kind", "optimize-setup"}, {"model", "builtin:planar2"}, {"seed", 1},
         {"params", {{"grid_oracle", {{"resolution", 11}}}}}};
  CHECK(message(doc).find("grid_oracle") != std::string::npos);
}

TEST_CASE("relative model paths resolve against the scenario file") {
  const fs::path dir = scratch("relative");
  fs::create_directories(dir / "models");
  fs::copy_file(data_directory() / "models" / "panda_like.json", dir / "models" / "arm.json");
  json doc = reshape_doc();
  doc["model"] = "models/arm.json";
  doc["friction"] = json::object();
  std::ofstream(dir / "scenario.json") << doc.dump();
  const Scenario s = load_scenario(dir / "scenario.json");
  CHECK(s.base_dir == fs::absolute(dir));
  CHECK(s.config["model"] == "models/arm.json");
}

TEST_CASE("reshape-step identifies B / r") {
  const Scenario s = from(reshape_doc());
  const fs::path out = scratch("reshape");
  const ScenarioResult r = run_scenario(s, out);
  CHECK(r.passed());
  REQUIRE(r.checks.size() == 4);
  for (const json& fit : r.summary["fits"]) {
    CHECK(fit["identified_over_b"].get<double>() * fit["ratio"].get<double>() == doctest::Approx(1.0).epsilon(0.02));
  }
  const json summary = json::parse(slurp(out / "summary.json"));
  CHECK(summary["passed"] == true);
  CHECK(summary["checks"].size() == 4);
}

TEST_CASE("a failing check is reported") {
  json doc = reshape_doc();
  doc["params"] = {{"ratios", {2}}, {"tolerance", 1e-9}};
  const ScenarioResult r = run_scenario(from(doc), scratch("failing"));
  CHECK_FALSE(r.passed());
  REQUIRE(r.failures().size() == 1);
  CHECK(r.failures()[0].name.find("r = 2") != std::string::npos);
}

TEST_CASE("frictionless sweep needs no operator torque") {
  json doc = {{"kind", "friction-sweep"}, {"model", "builtin:joint1"}, {"seed", 1},
              {"params", {{"velocities", {0.25, 0.5, 1.0}}}}};
  const fs::path out = scratch("frictionless");
  const ScenarioResult r = run_scenario(from(doc), out);
  CHECK(r.passed());
  for (const json& row : r.summary["rows"]) CHECK(std::abs(row["none"].get<double>()) < 1e-6);
  check_csv_shapes(out);
}

TEST_CASE("estimator scenario tracks the truth step") {
  const Scenario s = load_scenario(data_directory() / "scenarios" / "estimator_convergence.json");
  check_rerun_identical(s, "estimator");
}

TEST_CASE("teleop scenario re-runs bit-identically from metadata") {
  check_rerun_identical(load_scenario(data_directory() / "scenarios" / "teleop_wall.json"), "teleop");
}

TEST_CASE("optimize-setup on the planar toy: oracle, history schema and determinism") {
  Scenario s = load_scenario(data_directory() / "scenarios" / "optimize_setup_planar.json",
                             {"params.grid_oracle.resolution=21", "params.es.budget=96"});
  const fs::path out = scratch("planar");
  const ScenarioResult r = run_scenario(s, out);
  CHECK(r.passed());
  std::istringstream history(slurp(out / "history.csv"));
  std::string header;
  std::getline(history, header);
  CHECK(header == "eval_index,total,coverage,dexterity,wrench,collision");
  const json report = json::parse(slurp(out / "optimization_report.json"));
  CHECK(report["evaluations"] == 96);
  CHECK(report["best"]["setup"]["base_position"][2] == 0.0);
  CHECK_FALSE(report.contains("reference"));

  const fs::path again = scratch("planar_again");
  run_scenario(s, again);
  CHECK(slurp(out / "optimization_report.json") == slurp(again / "optimization_report.json"));
  CHECK(slurp(out / "history.csv") == slurp(again / "history.csv"));
}
