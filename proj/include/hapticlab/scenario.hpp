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

// Scenario files: one JSON document per experiment run.
//
//   {
//     "kind": "friction-sweep",
//     "model": "builtin:joint1" | "relative/or/absolute/path.json",
//     "seed": 1,
//     "sim": {"dt": 0.001, "integrator": "rk4"},
//     "friction": {"coulomb": 0.5, "viscous": 0.2, "deadband": 0.001},
//     "controller": {"reshape": "by_group" | r | [r...], ...},
//     "params": { kind-specific }
//   }
//
// Missing optional fields take defaults; resolve() returns the document with
// every default written out, which is what a run records as metadata.

#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

namespace hapticlab {

class ScenarioError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ScenarioKind { kFrictionSweep, kReshapeStep, kOptimizeSetup, kTeleopWall, kEstimatorConvergence };

const char* to_string(ScenarioKind k);
ScenarioKind scenario_kind_from_string(const std::string& s);

struct ScenarioInfo {
  ScenarioKind kind;
  const char* summary;
};
const std::vector<ScenarioInfo>& scenario_catalog();

/// A loaded scenario. `config` is fully resolved (all defaults explicit).
struct Scenario {
  ScenarioKind kind = ScenarioKind::kFrictionSweep;
  std::uint64_t seed = 0;
  nlohmann::json config;
  std::filesystem::path base_dir;  // relative model paths resolve against this
};

/// Applies "a.b.c=value" to a scenario document. The value is parsed as JSON
/// when possible and taken as a string otherwise.
void apply_override(nlohmann::json& doc, const std::string& assignment);

/// Validates and resolves a scenario document. Accepts either a scenario or a
/// run's metadata.json (whose "scenario" and "base_dir" are used).
Scenario scenario_from_json(const nlohmann::json& doc, const std::filesystem::path& base_dir);

/// Reads `path`, applies overrides in order, then resolves.
Scenario load_scenario(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

struct Check {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct ScenarioResult {
  std::vector<Check> checks;
  nlohmann::json summary;
  std::vector<std::string> artifacts;  // file names inside the output directory

  bool passed() const;
  std::vector<Check> failures() const;
};

/// Runs the scenario, writing artifacts plus metadata.json and summary.json
/// into `out_dir` (created if needed).
ScenarioResult run_scenario(const Scenario& scenario, const std::filesystem::path& out_dir);

/// The metadata document written next to the artifacts.
nlohmann::json scenario_metadata(const Scenario& scenario);

const char* artifact_version();

}  // namespace hapticlab
