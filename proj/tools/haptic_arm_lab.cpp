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

// haptic-arm-lab: run, validate and list scenarios.
//
// Exit codes: 0 all checks passed, 1 a check failed, 2 invalid input or error.

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hapticlab/scenario.hpp"

namespace {

constexpr int kChecksFailed = 1;
constexpr int kInvalid = 2;

hapticlab::Scenario load(const std::string& path, std::vector<std::string> overrides,
                         const std::optional<std::uint64_t>& seed) {
  if (seed) overrides.push_back("seed=" + std::to_string(*seed));
  return hapticlab::load_scenario(path, overrides);
}

int run(const std::string& path, const std::string& out, const std::vector<std::string>& overrides,
        const std::optional<std::uint64_t>& seed) {
  const hapticlab::Scenario scenario = load(path, overrides, seed);
  const hapticlab::ScenarioResult result = hapticlab::run_scenario(scenario, out);
  for (const hapticlab::Check& c : result.checks) {
    std::cout << (c.passed ? "PASS  " : "FAIL  ") << c.name;
    if (!c.detail.empty()) std::cout << "  (" << c.detail << ")";
    std::cout << "\n";
  }
  std::cout << "artifacts in " << out << ":";
  for (const std::string& a : result.artifacts) std::cout << " " << a;
  std::cout << "\n";
  if (result.passed()) return 0;
  std::cerr << "failed checks:\n";
  for (const hapticlab::Check& c : result.failures()) {
    std::cerr << "  " << c.name;
    if (!c.detail.empty()) std::cerr << ": " << c.detail;
    std::cerr << "\n";
  }
  return kChecksFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Desk-scale haptic display experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", hapticlab::artifact_version());

  std::string scenario_path, out_dir;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;

  CLI::App* run_cmd = app.add_subcommand("run", "Run a scenario and write its artifacts");
  run_cmd->add_option("scenario", scenario_path, "Scenario JSON or a run's metadata.json")->required();
  run_cmd->add_option("--out", out_dir, "Output directory")->required();
  run_cmd->add_option("--seed", seed, "Replace the scenario seed");
  run_cmd->add_option("--override", overrides, "key.path=value, applied in order")->take_all();

  CLI::App* validate_cmd = app.add_subcommand("validate", "Check a scenario and print it fully resolved");
  validate_cmd->add_option("scenario", scenario_path, "Scenario JSON")->required();
  validate_cmd->add_option("--override", overrides, "key.path=value, applied in order")->take_all();

  app.add_subcommand("list-scenarios", "List the scenario kinds");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kInvalid;
  }

  try {
    if (*run_cmd) return run(scenario_path, out_dir, overrides, seed);
    if (*validate_cmd) {
      const hapticlab::Scenario s = load(scenario_path, overrides, std::nullopt);
      std::cout << s.config.dump(2) << "\n";
      std::cerr << "valid " << hapticlab::to_string(s.kind) << " scenario\n";
      return 0;
    }
    for (const hapticlab::ScenarioInfo& info : hapticlab::scenario_catalog())
      std::cout << hapticlab::to_string(info.kind) << "\t" << info.summary << "\n";
    return 0;
  } catch (const hapticlab::ScenarioError& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return kInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kInvalid;
  }
}
