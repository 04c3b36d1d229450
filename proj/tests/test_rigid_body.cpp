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

#include <cmath>
#include <numbers>

#include "hapticlab/dynamics.hpp"
#include "hapticlab/kinematics.hpp"
#include "test_support.hpp"

using namespace hapticlab;
using hapticlab::testing::random_chain;
using hapticlab::testing::random_vector;

namespace {

constexpr double kPi = std::numbers::pi;

RobotModel one_link_about_z(double length) {
  RobotModel m;
  m.name = "link_z";
  JointSpec j;
  j.name = "j1";
  j.axis = Vector3::UnitZ();
  j.com = Vector3(length, 0.0, 0.0);
  j.inertia = 1e-3 * Matrix3::Identity();
  m.joints.push_back(j);
  m.tool.translation = Vector3(length, 0.0, 0.0);
  return m;
}

// Independent FK oracle: straight product of 4x4 homogeneous matrices built
// with Rodrigues' formula.
Eigen::Matrix4d homogeneous(const Matrix3& r, const Vector3& t) {
  Eigen::Matrix4d h = Eigen::Matrix4d::Identity();
  h.topLeftCorner<3, 3>() = r;
  h.topRightCorner<3, 1>() = t;
  return h;
}

Matrix3 rodrigues(const Vector3& axis, double angle) {
  const Matrix3 k = skew(axis);
  return Matrix3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * k * k;
}

Eigen::Matrix4d fk_oracle(const RobotModel& m, const VectorX& q) {
  Eigen::Matrix4d t = Eigen::Matrix4d::Identity();
  for (size_t i = 0; i < m.joints.size(); ++i) {
    const JointSpec& j = m.joints[i];
    t = t * homogeneous(j.parent.rotation, j.parent.translation) *
        homogeneous(rodrigues(j.axis, q[static_cast<Eigen::Index>(i)]), Vector3::Zero());
  }
  return t * homogeneous(m.tool.rotation, m.tool.translation);
}

// Closed-form two-link planar inertia matrix with link inertias I1, I2 about z.
Eigen::Matrix2d two_link_mass_matrix(double m1, double m2, double l1, double lc1, double lc2, double i1, double i2,
                                     double q2) {
  const double c2 = std::cos(q2);
  Eigen::Matrix2d m;
  m(0, 0) = i1 + i2 + m1 * lc1 * lc1 + m2 * (l1 * l1 + lc2 * lc2 + 2.0 * l1 * lc2 * c2);
  m(0, 1) = i2 + m2 * (lc2 * lc2 + l1 * lc2 * c2);
  m(1, 0) = m(0, 1);
  m(1, 1) = i2 + m2 * lc2 * lc2;
  return m;
}

}  // namespace

TEST_CASE("forward kinematics of a single link") {
  const RobotModel arm = one_link_about_z(1.0);
  const Pose p0 = forward_kinematics(arm, VectorX::Zero(1));
  CHECK((p0.translation - Vector3(1, 0, 0)).norm() < 1e-15);
  CHECK((p0.rotation - Matrix3::Identity()).norm() < 1e-15);

  const Pose p1 = forward_kinematics(arm, VectorX::Constant(1, kPi / 2));
  CHECK((p1.translation - Vector3(0, 1, 0)).norm() < 1e-15);
}

TEST_CASE("forward kinematics matches composed homogeneous transforms") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const RobotModel chain = random_chain(rng, 7);
    const VectorX q = random_vector(rng, 7, kPi);
    const Pose p = forward_kinematics(chain, q);
    const Eigen::Matrix4d h = fk_oracle(chain, q);
    CHECK((p.translation - h.topRightCorner<3, 1>()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((p.rotation - h.topLeftCorner<3, 3>()).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(p.is_valid());
  }
}

TEST_CASE("forward kinematics rejects a wrong joint count") {
  CHECK_THROWS_AS(forward_kinematics(builtin_model("planar2"), VectorX::Zero(3)), DimensionError);
  CHECK_THROWS_AS(jacobian(builtin_model("planar2"), VectorX::Zero(1)), DimensionError);
  CHECK_THROWS_AS(mass_matrix(builtin_model("planar2"), VectorX::Zero(1)), DimensionError);
  CHECK_THROWS_AS(bias_forces(builtin_model("planar2"), VectorX::Zero(2), VectorX::Zero(3)), DimensionError);
}

TEST_CASE("jacobian of a single revolute joint") {
  const Matrix6X j = jacobian(one_link_about_z(0.7), VectorX::Zero(1));
  CHECK((j.col(0).head<3>() - Vector3(0, 0.7, 0)).norm() < 1e-15);
  CHECK((j.col(0).tail<3>() - Vector3(0, 0, 1)).norm() < 1e-15);
}

TEST_CASE("jacobian of a zero-length chain has no linear part") {
  RobotModel m;
  m.name = "point";
  for (int i = 0; i < 3; ++i) {
    JointSpec j;
    j.axis = Vector3(i == 0, i == 1, i == 2);
    m.joints.push_back(j);
  }
  const Matrix6X jac = jacobian(m, Vector3(0.3, -0.2, 1.1));
  CHECK(jac.topRows<3>().cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("jacobian matches central finite differences of forward kinematics") {
  std::mt19937_64 rng(11);
  const double h = 1e-6;
  for (int trial = 0; trial < 100; ++trial) {
    const RobotModel chain = random_chain(rng, 7);
    const VectorX q = random_vector(rng, 7, kPi);
    const Matrix6X jac = jacobian(chain, q);
    for (Eigen::Index c = 0; c < 7; ++c) {
      VectorX qp = q, qm = q;
      qp[c] += h;
      qm[c] -= h;
      const Pose fp = forward_kinematics(chain, qp);
      const Pose fm = forward_kinematics(chain, qm);
      Vector6 fd;
      fd.head<3>() = (fp.translation - fm.translation) / (2 * h);
      const Matrix3 rdot = (fp.rotation - fm.rotation) / (2 * h);
      const Matrix3 w = rdot * forward_kinematics(chain, q).rotation.transpose();
      fd.tail<3>() = Vector3(w(2, 1), w(0, 2), w(1, 0));
      const double scale = std::max(1.0, jac.col(c).norm());
      CHECK((fd - jac.col(c)).norm() / scale < 1e-6);
    }
  }
}

TEST_CASE("translational manipulability of the planar two-link arm") {
  const RobotModel arm = builtin_model("planar2");
  CHECK(translational_manipulability(jacobian(arm, Eigen::Vector2d(0.3, kPi / 2))) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(translational_manipulability(jacobian(arm, Eigen::Vector2d(0.3, 0.0))) < 1e-12);
}

TEST_CASE("pendulum mass matrix and gravity") {
  const RobotModel p = builtin_model("pendulum1");
  const double m = 1.0, l = 1.0, iyy = 1e-3, g = 9.81;
  CHECK(mass_matrix(p, VectorX::Zero(1))(0, 0) == doctest::Approx(m * l * l + iyy).epsilon(1e-14));
  // horizontal: full moment m g l
  CHECK(std::abs(gravity_vector(p, VectorX::Zero(1))[0] - m * g * l) < 1e-12);
  // hanging straight along gravity
  CHECK(std::abs(gravity_vector(p, VectorX::Constant(1, kPi / 2))[0]) < 1e-12);
  CHECK(std::abs(bias_forces(p, VectorX::Zero(1), VectorX::Zero(1))[0] - m * g * l) < 1e-12);

  RobotModel weightless = p;
  weightless.gravity.setZero();
  std::mt19937_64 rng(3);
  for (int i = 0; i < 20; ++i) {
    CHECK(gravity_vector(weightless, random_vector(rng, 1, kPi)).norm() == 0.0);
  }
  const VectorX tau = inverse_dynamics(weightless, VectorX::Zero(1), VectorX::Zero(1), VectorX::Ones(1));
  CHECK(tau[0] == doctest::Approx(m * l * l + iyy).epsilon(1e-14));
}

TEST_CASE("planar two-link mass matrix matches the closed form") {
  const RobotModel arm = builtin_model("planar2");
  std::mt19937_64 rng(5);
  for (int i = 0; i < 100; ++i) {
    const VectorX q = random_vector(rng, 2, kPi);
    const Eigen::Matrix2d oracle = two_link_mass_matrix(1.0, 1.0, 1.0, 1.0, 1.0, 1e-3, 1e-3, q[1]);
    CHECK((mass_matrix(arm, q) - oracle).cwiseAbs().maxCoeff() < 1e-10);
  }
}

TEST_CASE("mass matrix is symmetric positive definite at 1000 random states") {
  std::mt19937_64 rng(13);
  const RobotModel panda = builtin_model("panda_like");
  for (int i = 0; i < 1000; ++i) {
    const RobotModel& model = (i % 2 == 0) ? panda : random_chain(rng, 6);
    const VectorX q = random_vector(rng, model.dof(), kPi);
    const MatrixX m = mass_matrix(model, q);
    CHECK((m - m.transpose()).cwiseAbs().maxCoeff() < 1e-12);
    Eigen::SelfAdjointEigenSolver<MatrixX> es(m);
    CHECK(es.eigenvalues().minCoeff() > 0.0);
  }
}

TEST_CASE("inverse dynamics equals assembled M qdd + bias") {
  std::mt19937_64 rng(17);
  const RobotModel planar = builtin_model("planar2");
  for (int i = 0; i < 200; ++i) {
    const RobotModel model = (i < 100) ? planar : random_chain(rng, 7);
    const Eigen::Index n = model.dof();
    const VectorX q = random_vector(rng, n, kPi);
    const VectorX qd = random_vector(rng, n, 2.0);
    const VectorX qdd = random_vector(rng, n, 5.0);
    const VectorX lhs = inverse_dynamics(model, q, qd, qdd);
    const VectorX rhs = mass_matrix(model, q) * qdd + bias_forces(model, q, qd);
    CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-10);
    CHECK((bias_forces(model, q, VectorX::Zero(n)) - gravity_vector(model, q)).norm() == 0.0);
    CHECK((inverse_dynamics(model, q, qd, VectorX::Zero(n)) - bias_forces(model, q, qd)).norm() == 0.0);
  }
}

TEST_CASE("Coriolis terms satisfy the skew-symmetry energy identity") {
  // qd^T (Mdot - 2C) qd = 0, i.e. qd^T Mdot qd = 2 qd^T (bias - g).
  std::mt19937_64 rng(19);
  const double h = 1e-6;
  for (int i = 0; i < 100; ++i) {
    const RobotModel model = random_chain(rng, 5);
    const VectorX q = random_vector(rng, 5, kPi);
    const VectorX qd = random_vector(rng, 5, 1.5);
    const MatrixX mdot = (mass_matrix(model, q + h * qd) - mass_matrix(model, q - h * qd)) / (2 * h);
    const VectorX coriolis = bias_forces(model, q, qd) - gravity_vector(model, q);
    CHECK(std::abs(qd.dot(mdot * qd) - 2.0 * qd.dot(coriolis)) < 1e-8);
  }
}

TEST_CASE("model files round-trip and report missing fields by path") {
  const RobotModel panda = builtin_model("panda_like");
  CHECK(panda.dof() == 7);
  const RobotModel again = model_from_json(model_to_json(panda));
  CHECK(again.dof() == 7);
  const VectorX q = VectorX::LinSpaced(7, -1.0, 1.0);
  CHECK((mass_matrix(again, q) - mass_matrix(panda, q)).cwiseAbs().maxCoeff() < 1e-12);

  auto j = model_to_json(panda);
  j["joints"][2].erase("motor_inertia");
  try {
    model_from_json(j);
    FAIL("expected ModelError");
  } catch (const ModelError& e) {
    CHECK(std::string(e.what()).find("model.joints[2].motor_inertia") != std::string::npos);
  }

  auto k = model_to_json(panda);
  k["joints"][0]["stiffness"] = -1.0;
  CHECK_THROWS_AS(model_from_json(k), ModelError);
  auto lim = model_to_json(panda);
  lim["joints"][1]["position_limits"] = {1.0, -1.0};
  CHECK_THROWS_AS(model_from_json(lim), ModelError);
  CHECK_THROWS_AS(builtin_model("nope"), ModelError);
}

TEST_CASE("mirrored model reproduces mirror-image kinematics and dynamics") {
  const RobotModel panda = builtin_model("panda_like");
  const RobotModel mirror = mirrored(panda);
  std::mt19937_64 rng(23);
  for (int i = 0; i < 20; ++i) {
    const VectorX q = random_vector(rng, 7, 2.0);
    const VectorX qd = random_vector(rng, 7, 1.0);
    const Pose a = forward_kinematics(panda, q);
    const Pose b = forward_kinematics(mirror, q);
    const Pose expected = mirror_across_sagittal(a, 0.0);
    CHECK((b.translation - expected.translation).norm() < 1e-12);
    CHECK((b.rotation - expected.rotation).norm() < 1e-12);
    CHECK((bias_forces(mirror, q, qd) - bias_forces(panda, q, qd)).norm() < 1e-10);
    CHECK((mass_matrix(mirror, q) - mass_matrix(panda, q)).norm() < 1e-12);
  }
}
