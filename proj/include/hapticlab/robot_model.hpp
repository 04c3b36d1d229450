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

#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "hapticlab/geometry.hpp"

namespace hapticlab {

/// Movement group of a joint; selects which inertia reshaping ratio applies.
enum class MotionGroup { kTranslational, kRotational };

const char* to_string(MotionGroup g);

/// One revolute joint and the link it carries.
///
/// Frame i is obtained from frame i-1 by the fixed `parent` transform followed
/// by a rotation of q_i about `axis` (expressed in frame i). The link's
/// center of mass and inertia are given in frame i.
struct JointSpec {
  std::string name;
  Pose parent;
  Vector3 axis = Vector3::UnitZ();
  double mass = 1.0;
  Vector3 com = Vector3::Zero();
  Matrix3 inertia = Matrix3::Identity();
  double position_lower = -3.14159;
  double position_upper = 3.14159;
  double velocity_limit = 2.0;
  double torque_limit = 100.0;
  double motor_inertia = 0.5;  // B
  double stiffness = 1000.0;   // K
  MotionGroup group = MotionGroup::kTranslational;
  double collision_radius = 0.05;
};

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RobotModel {
  std::string name;
  std::vector<JointSpec> joints;
  Vector3 gravity{0.0, 0.0, -9.81};
  /// Terminal (end-effector) frame relative to the last joint frame.
  Pose tool;

  Eigen::Index dof() const { return static_cast<Eigen::Index>(joints.size()); }

  VectorX motor_inertia() const;
  VectorX stiffness() const;
  VectorX torque_limits() const;
  VectorX lower_limits() const;
  VectorX upper_limits() const;
  VectorX mid_range() const;

  /// Throws ModelError naming the offending joint when an invariant fails.
  void validate() const;
};

/// Parses a model description. Missing or malformed fields raise ModelError
/// carrying the JSON path of the field (e.g. "joints[2].motor_inertia").
RobotModel model_from_json(const nlohmann::json& j);
nlohmann::json model_to_json(const RobotModel& m);
RobotModel load_model(const std::filesystem::path& path);

/// Built-in oracle models: "pendulum1", "joint1", "planar2".
/// "panda_like" is read from the bundled data directory.
RobotModel builtin_model(const std::string& name);
std::vector<std::string> builtin_model_names();

/// Resolves "builtin:<name>" or a filesystem path (relative to `base_dir`).
RobotModel resolve_model(const std::string& ref, const std::filesystem::path& base_dir = {});

std::filesystem::path data_directory();

/// Mirror image of the arm across the xz-plane of its base. Joint axes are
/// flipped so the same joint vector reproduces the mirrored posture.
RobotModel mirrored(const RobotModel& m);

}  // namespace hapticlab
