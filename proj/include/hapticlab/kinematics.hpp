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

#include <vector>

#include "hapticlab/geometry.hpp"
#include "hapticlab/robot_model.hpp"

namespace hapticlab {

/// World (base-frame) placement of every joint frame for one configuration.
struct ChainPlacement {
  std::vector<Pose> frames;  // frame i, after the joint rotation
  std::vector<Vector3> axes;  // joint axis i in the base frame
  Pose terminal;
};

ChainPlacement place_chain(const RobotModel& model, const VectorX& q);

/// Pose of the terminal frame in the base frame.
Pose forward_kinematics(const RobotModel& model, const VectorX& q);

/// Geometric Jacobian of the terminal frame origin, base frame.
/// Rows 0-2 are linear velocity, rows 3-5 angular velocity.
Matrix6X jacobian(const RobotModel& model, const VectorX& q);

/// Yoshikawa manipulability of the translational block, sqrt(det(Jv Jv^T)).
/// For arms with fewer than three joints the n x n Gram matrix Jv^T Jv is used.
double translational_manipulability(const Matrix6X& j);

}  // namespace hapticlab
