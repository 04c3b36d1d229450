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

#include "hapticlab/kinematics.hpp"

#include <cmath>

namespace hapticlab {

ChainPlacement place_chain(const RobotModel& model, const VectorX& q) {
  require_size(q, model.dof(), "joint positions");
  ChainPlacement out;
  out.frames.reserve(model.joints.size());
  out.axes.reserve(model.joints.size());
  Pose current;
  for (size_t i = 0; i < model.joints.size(); ++i) {
    const JointSpec& j = model.joints[i];
    current = current * j.parent;
    out.axes.push_back(current.rotation * j.axis);
    current.rotation = current.rotation * axis_angle(j.axis, q[static_cast<Eigen::Index>(i)]);
    out.frames.push_back(current);
  }
  out.terminal = current * model.tool;
  return out;
}

Pose forward_kinematics(const RobotModel& model, const VectorX& q) { return place_chain(model, q).terminal; }

Matrix6X jacobian(const RobotModel& model, const VectorX& q) {
  const ChainPlacement chain = place_chain(model, q);
  const Vector3& tip = chain.terminal.translation;
  Matrix6X jac(6, model.dof());
  for (Eigen::Index i = 0; i < model.dof(); ++i) {
    const Vector3& z = chain.axes[static_cast<size_t>(i)];
    const Vector3& origin = chain.frames[static_cast<size_t>(i)].translation;
    jac.col(i) << z.cross(tip - origin), z;
  }
  return jac;
}

double translational_manipulability(const Matrix6X& j) {
  const Eigen::MatrixXd jv = j.topRows<3>();
  const double det = jv.cols() < 3 ? (jv.transpose() * jv).determinant() : (jv * jv.transpose()).determinant();
  return std::sqrt(std::max(det, 0.0));
}

}  // namespace hapticlab
