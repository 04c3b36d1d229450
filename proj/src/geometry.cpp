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

#include "hapticlab/geometry.hpp"

#include <cmath>

namespace hapticlab {

void require_size(const VectorX& v, Eigen::Index n, const char* what) {
  if (v.size() != n) {
    throw DimensionError(std::string(what) + ": expected length " + std::to_string(n) +
                         ", got " + std::to_string(v.size()));
  }
}

Pose Pose::from_quaternion(const Vector3& t, const Quaternion& q) {
  return {t, q.normalized().toRotationMatrix()};
}

Pose Pose::from_rotation_vector(const Vector3& t, const Vector3& rotvec) {
  return {t, rotation_from_vector(rotvec)};
}

Pose Pose::operator*(const Pose& rhs) const {
  return {rotation * rhs.translation + translation, rotation * rhs.rotation};
}

Pose Pose::inverse() const {
  Matrix3 rt = rotation.transpose();
  return {-(rt * translation), rt};
}

Quaternion Pose::quaternion() const {
  Quaternion q(rotation);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  return q;
}

bool Pose::is_valid(double tol) const {
  if (!translation.allFinite() || !rotation.allFinite()) return false;
  const double ortho = (rotation.transpose() * rotation - Matrix3::Identity()).cwiseAbs().maxCoeff();
  return ortho < tol && std::abs(rotation.determinant() - 1.0) < tol;
}

const char* to_string(Frame f) {
  switch (f) {
    case Frame::kBase: return "base";
    case Frame::kHuman: return "human";
    case Frame::kEndEffector: return "end_effector";
  }
  return "unknown";
}

Vector6 Wrench::stacked() const {
  Vector6 w;
  w << force, torque;
  return w;
}

Wrench Wrench::from_stacked(const Vector6& w, Frame frame) {
  return {w.head<3>(), w.tail<3>(), frame};
}

void require_frame(const Wrench& w, Frame expected, const char* consumer) {
  if (w.frame != expected) {
    throw std::invalid_argument(std::string(consumer) + ": wrench expressed in '" + to_string(w.frame) +
                                "' frame, expected '" + to_string(expected) + "'");
  }
}

Matrix3 skew(const Vector3& v) {
  Matrix3 s;
  s << 0.0, -v.z(), v.y(),
       v.z(), 0.0, -v.x(),
       -v.y(), v.x(), 0.0;
  return s;
}

Matrix3 rotation_from_vector(const Vector3& rotvec) {
  const double angle = rotvec.norm();
  if (angle < 1e-300) return Matrix3::Identity();
  return Eigen::AngleAxisd(angle, rotvec / angle).toRotationMatrix();
}

Vector3 rotation_vector(const Matrix3& r) {
  Quaternion q(r);
  q.normalize();
  if (q.w() < 0.0) q.coeffs() *= -1.0;
  const double s = q.vec().norm();
  if (s < 1e-12) {
    // small-angle limit of 2*atan2(s, w) * v / s
    return 2.0 * q.vec() / q.w();
  }
  const double angle = 2.0 * std::atan2(s, q.w());
  return q.vec() * (angle / s);
}

Matrix3 axis_angle(const Vector3& axis, double angle) {
  return Eigen::AngleAxisd(angle, axis).toRotationMatrix();
}

Vector3 orientation_error(const Matrix3& target, const Matrix3& current) {
  return rotation_vector(target * current.transpose());
}

Vector3 mirror_vector(const Vector3& v) { return {v.x(), -v.y(), v.z()}; }

Vector3 mirror_point(const Vector3& p, double plane_y) { return {p.x(), 2.0 * plane_y - p.y(), p.z()}; }

Matrix3 mirror_rotation(const Matrix3& r) {
  const Eigen::DiagonalMatrix<double, 3> s(1.0, -1.0, 1.0);
  return s * r * s;
}

Pose mirror_across_sagittal(const Pose& p, double plane_y) {
  return {mirror_point(p.translation, plane_y), mirror_rotation(p.rotation)};
}

}  // namespace hapticlab
