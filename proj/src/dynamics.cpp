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

#include "hapticlab/dynamics.hpp"

#include "hapticlab/kinematics.hpp"

namespace hapticlab {

namespace {

using Matrix6 = Eigen::Matrix<double, 6, 6>;

// Spatial inertia of one link about the base origin, base coordinates,
// ordered (angular, linear) to match motion vectors (omega, v_origin).
Matrix6 spatial_inertia(double mass, const Vector3& com, const Matrix3& inertia_at_com) {
  const Matrix3 c = skew(com);
  Matrix6 out;
  out.topLeftCorner<3, 3>() = inertia_at_com - mass * c * c;
  out.topRightCorner<3, 3>() = mass * c;
  out.bottomLeftCorner<3, 3>() = -mass * c;
  out.bottomRightCorner<3, 3>() = mass * Matrix3::Identity();
  return out;
}

struct LinkWorld {
  Vector3 origin;
  Vector3 axis;
  Vector3 com;
  Matrix3 inertia;  // about the com, base coordinates
};

std::vector<LinkWorld> world_links(const RobotModel& model, const VectorX& q) {
  const ChainPlacement chain = place_chain(model, q);
  std::vector<LinkWorld> links(model.joints.size());
  for (size_t i = 0; i < links.size(); ++i) {
    const Pose& f = chain.frames[i];
    const JointSpec& j = model.joints[i];
    links[i] = {f.translation, chain.axes[i], f * j.com, f.rotation * j.inertia * f.rotation.transpose()};
  }
  return links;
}

}  // namespace

MatrixX mass_matrix(const RobotModel& model, const VectorX& q) {
  const auto links = world_links(model, q);
  const Eigen::Index n = model.dof();

  // Composite inertia of the subtree rooted at each link (a chain, so a suffix sum).
  std::vector<Matrix6> composite(links.size());
  Matrix6 acc = Matrix6::Zero();
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const auto& l = links[static_cast<size_t>(i)];
    acc += spatial_inertia(model.joints[static_cast<size_t>(i)].mass, l.com, l.inertia);
    composite[static_cast<size_t>(i)] = acc;
  }

  // Motion subspace of each revolute joint: (z, p x z).
  Matrix6X s(6, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& l = links[static_cast<size_t>(i)];
    s.col(i) << l.axis, l.origin.cross(l.axis);
  }

  MatrixX m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Vector6 f = composite[static_cast<size_t>(i)] * s.col(i);
    for (Eigen::Index j = 0; j <= i; ++j) {
      m(i, j) = s.col(j).dot(f);
      m(j, i) = m(i, j);
    }
  }
  return m;
}

VectorX inverse_dynamics(const RobotModel& model, const VectorX& q, const VectorX& qdot, const VectorX& qddot) {
  const Eigen::Index n = model.dof();
  require_size(qdot, n, "joint velocities");
  require_size(qddot, n, "joint accelerations");
  const auto links = world_links(model, q);

  std::vector<Vector3> force(links.size()), moment(links.size());

  // Outward pass. Gravity enters as an upward acceleration of the base.
  Vector3 omega = Vector3::Zero();
  Vector3 omega_dot = Vector3::Zero();
  Vector3 accel = -model.gravity;  // linear acceleration of the previous frame origin
  Vector3 prev_origin = Vector3::Zero();
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& l = links[static_cast<size_t>(i)];
    const Vector3 r = l.origin - prev_origin;
    accel += omega_dot.cross(r) + omega.cross(omega.cross(r));
    const Vector3 omega_prev = omega;
    omega = omega_prev + l.axis * qdot[i];
    omega_dot = omega_dot + l.axis * qddot[i] + omega_prev.cross(l.axis * qdot[i]);

    const Vector3 c = l.com - l.origin;
    const Vector3 accel_com = accel + omega_dot.cross(c) + omega.cross(omega.cross(c));
    const double mass = model.joints[static_cast<size_t>(i)].mass;
    force[static_cast<size_t>(i)] = mass * accel_com;
    moment[static_cast<size_t>(i)] = l.inertia * omega_dot + omega.cross(l.inertia * omega);
    prev_origin = l.origin;
  }

  // Inward pass: moments about each joint origin.
  VectorX tau(n);
  Vector3 f_child = Vector3::Zero();
  Vector3 n_child = Vector3::Zero();
  for (Eigen::Index i = n - 1; i >= 0; --i) {
    const auto& l = links[static_cast<size_t>(i)];
    const Vector3 f = force[static_cast<size_t>(i)] + f_child;
    Vector3 nm = moment[static_cast<size_t>(i)] + (l.com - l.origin).cross(force[static_cast<size_t>(i)]) + n_child;
    if (i + 1 < n) nm += (links[static_cast<size_t>(i + 1)].origin - l.origin).cross(f_child);
    tau[i] = l.axis.dot(nm);
    f_child = f;
    n_child = nm;
  }
  return tau;
}

VectorX bias_forces(const RobotModel& model, const VectorX& q, const VectorX& qdot) {
  return inverse_dynamics(model, q, qdot, VectorX::Zero(model.dof()));
}

VectorX gravity_vector(const RobotModel& model, const VectorX& q) {
  const VectorX zero = VectorX::Zero(model.dof());
  return inverse_dynamics(model, q, zero, zero);
}

double potential_energy(const RobotModel& model, const VectorX& q) {
  const ChainPlacement chain = place_chain(model, q);
  double u = 0.0;
  for (size_t i = 0; i < model.joints.size(); ++i) {
    u -= model.joints[i].mass * model.gravity.dot(chain.frames[i] * model.joints[i].com);
  }
  return u;
}

double kinetic_energy(const RobotModel& model, const VectorX& q, const VectorX& qdot) {
  require_size(qdot, model.dof(), "joint velocities");
  return 0.5 * qdot.dot(mass_matrix(model, q) * qdot);
}

}  // namespace hapticlab
