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

// Position-force bilateral teleoperation between a haptic-display master and
// a remote arm or virtual proxy.
//
// Poses, twists and wrenches are expressed in the task frame, which is the
// human frame of setup.hpp. The remote site replicates the operator-side
// placement, so master and slave bases share the same pose. Twists stack
// (linear, angular).

#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hapticlab/controllers.hpp"
#include "hapticlab/fjr.hpp"
#include "hapticlab/setup.hpp"

namespace hapticlab {

struct TeleopConfig {
  double stiffness = 2000.0;           // N/m
  double rotational_stiffness = 50.0;  // N m / rad
  double damping = 60.0;               // N s / m
  double rotational_damping = 2.0;     // N m s / rad
  double joint_damping = 1.0;          // N m s / rad on the slave motors, damps self-motion
  double reflection_scale = 1.0;       // in (0, 1]
  int delay = 0;                       // steps, each direction
  int buffer_capacity = 4096;

  void validate() const;
};

struct VirtualEnvironment {
  bool present = false;
  Vector3 point = Vector3::Zero();
  Vector3 normal = Vector3::UnitX();  // outward, unit
  double stiffness = 5000.0;          // N/m
  double damping = 20.0;              // N s / m

  static VirtualEnvironment wall(const Vector3& point, const Vector3& normal, double stiffness, double damping);
  void validate() const;
  VirtualEnvironment mirrored(double plane_y) const;
};

/// Wrench the environment applies to a tool at `pose` moving with `twist`:
/// n (k delta - b v_in) for penetration delta > 0, never pulling (force . n >= 0).
Wrench virtual_wall_wrench(const Pose& pose, const Vector6& twist, const VirtualEnvironment& env);

/// Fixed-delay line. Each push returns the value pushed `delay` pushes earlier,
/// or nothing while the line is still filling.
class DelayLine {
 public:
  DelayLine(int delay, int capacity);

  std::optional<VectorX> push(const VectorX& value);
  int delay() const { return delay_; }

 private:
  int delay_;
  std::vector<VectorX> ring_;
  long pushed_ = 0;
};

struct ChannelBuffers {
  DelayLine forward;   // master pose and twist toward the slave
  DelayLine backward;  // slave contact wrench toward the master

  explicit ChannelBuffers(const TeleopConfig& cfg);
};

struct Coupling {
  Wrench command;           // slave servo wrench, zero before the forward line fills
  Wrench feedback;          // rendered on the master, zero before the backward line fills
  std::optional<Pose> target;  // delayed master pose seen by the slave
  Vector6 target_twist = Vector6::Zero();
};

/// One coordinator tick. `contact` is the wrench the slave exerts on its
/// environment; the master receives -scale times its delayed value.
Coupling couple(const Pose& master, const Vector6& master_twist, const Pose& slave, const Vector6& slave_twist,
                const Wrench& contact, const TeleopConfig& cfg, ChannelBuffers& buffers);

struct Keyframe {
  double time = 0.0;
  Vector3 position = Vector3::Zero();
  Vector3 rotation = Vector3::Zero();  // rotation vector
};

/// Hand pose script: cubic ease between keyframes (zero velocity at each),
/// held constant before the first and after the last.
class HandTrajectory {
 public:
  HandTrajectory() = default;
  explicit HandTrajectory(std::vector<Keyframe> keys);

  Pose pose(double t) const;
  Vector6 twist(double t) const;
  double end_time() const { return keys_.back().time; }
  const std::vector<Keyframe>& keys() const { return keys_; }
  HandTrajectory mirrored(double plane_y) const;

 private:
  std::vector<Keyframe> keys_;
};

/// The operator's grip on the master handle, a Cartesian spring-damper toward
/// the scripted hand pose.
struct HandSpring {
  double stiffness = 800.0;            // N/m
  double damping = 40.0;               // N s / m
  double rotational_stiffness = 20.0;  // N m / rad
  double rotational_damping = 1.0;     // N m s / rad

  void validate() const;
};

enum class SlaveKind { kRobot, kVirtual };

const char* to_string(SlaveKind k);
SlaveKind slave_kind_from_string(const std::string& s);

struct SessionConfig {
  TeleopConfig coupling;
  HandSpring hand;
  VirtualEnvironment environment;
  HapticConfig master_control;  // empty reshape: ratios from the model's groups
  SlaveKind slave = SlaveKind::kRobot;
  SimConfig master_sim;
  SimConfig slave_sim;
  bool bimanual = false;
  double sagittal_y = -0.19;  // mirror plane for the right channel

  void validate() const;
};

struct TeleopSample {
  double time = 0.0;
  int channel = 0;  // 0 left, 1 right
  Pose master;      // master handle (tool) pose
  Pose slave;
  Wrench command;
  Wrench feedback;
  Wrench contact;  // slave on environment
  double tracking_error = 0.0;  // |delayed master position - slave position|, 0 before the line fills
  double loop_energy = 0.0;     // both arms (master at its reshaped motor inertia), servo spring, wall
  double operator_power = 0.0;  // hand spring power into the master
};

struct TeleopLog {
  std::vector<TeleopSample> samples;  // channel blocks, each in time order

  std::vector<TeleopSample> channel(int c) const;
  static std::string csv_header();
  /// `t,channel,master_pose(7),slave_pose(7),cmd_wrench(6),fb_wrench(6),tracking_err`, poses as
  /// position then quaternion wxyz.
  void write_csv(std::ostream& out) const;
};

/// Lockstep master/slave simulation. The remote arm closes its Cartesian servo
/// on motor positions, corrected by the spring deflection its last command
/// holds, plus gravity compensation and motor damping. Both arms start at rest in the IK posture
/// for the first hand pose; in bimanual mode a second channel runs with the
/// mirrored model, placement, environment and hand script (unless given).
TeleopLog run_session(const RobotModel& model, const FrictionModel& master_friction,
                      const FrictionModel& slave_friction, const SetupConfiguration& placement,
                      const HandTrajectory& hand, const SessionConfig& cfg, double duration,
                      const std::optional<HandTrajectory>& right_hand = std::nullopt);

}  // namespace hapticlab
