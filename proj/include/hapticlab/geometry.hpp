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

#include <Eigen/Core>
#include <Eigen/Geometry>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <stdexcept>
#include <string>

namespace hapticlab {

using Vector3 = Eigen::Vector3d;
using Matrix3 = Eigen::Matrix3d;
using Vector6 = Eigen::Matrix<double, 6, 1>;
using VectorX = Eigen::VectorXd;
using MatrixX = Eigen::MatrixXd;
using Matrix6X = Eigen::Matrix<double, 6, Eigen::Dynamic>;
using Quaternion = Eigen::Quaterniond;

/// Thrown when vector/matrix sizes disagree with the model's degrees of freedom.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

void require_size(const VectorX& v, Eigen::Index n, const char* what);

/// Rigid transform. The rotation is kept as a matrix so composition is exact
/// up to floating-point rounding; quaternions are produced on demand.
struct Pose {
  Vector3 translation = Vector3::Zero();
  Matrix3 rotation = Matrix3::Identity();

  static Pose identity() { return {}; }
  static Pose from_quaternion(const Vector3& t, const Quaternion& q);
  static Pose from_rotation_vector(const Vector3& t, const Vector3& rotvec);

  Pose operator*(const Pose& rhs) const;
  Vector3 operator*(const Vector3& p) const { return rotation * p + translation; }
  Pose inverse() const;

  /// Unit quaternion with non-negative scalar part.
  Quaternion quaternion() const;

  /// True when the rotation is orthonormal with determinant +1.
  bool is_valid(double tol = 1e-9) const;
};

/// Frame a wrench is expressed in. Consumers check the tag at their interface.
enum class Frame { kBase, kHuman, kEndEffector };

const char* to_string(Frame f);

struct Wrench {
  Vector3 force = Vector3::Zero();
  Vector3 torque = Vector3::Zero();
  Frame frame = Frame::kBase;

  Vector6 stacked() const;
  static Wrench from_stacked(const Vector6& w, Frame frame);
};

void require_frame(const Wrench& w, Frame expected, const char* consumer);

Matrix3 skew(const Vector3& v);

/// Exponential map of so(3): rotation vector (axis * angle) to rotation matrix.
Matrix3 rotation_from_vector(const Vector3& rotvec);

/// Logarithm map; returns the canonical rotation vector with norm in [0, pi].
Vector3 rotation_vector(const Matrix3& r);

/// Rotation of `angle` radians about the unit vector `axis`.
Matrix3 axis_angle(const Vector3& axis, double angle);

/// Rotation error e such that exp(e) * current = target, in the base frame.
Vector3 orientation_error(const Matrix3& target, const Matrix3& current);

/// Reflection across the plane y = plane_y (the sagittal plane of the user).
/// Orientations are conjugated with diag(1,-1,1) so the result stays proper.
Pose mirror_across_sagittal(const Pose& p, double plane_y);
Vector3 mirror_point(const Vector3& p, double plane_y);
Vector3 mirror_vector(const Vector3& v);
Matrix3 mirror_rotation(const Matrix3& r);

}  // namespace hapticlab
