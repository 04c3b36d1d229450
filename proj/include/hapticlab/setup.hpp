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

// Setup-configuration scoring and search for a haptic display arm.
//
// Human frame: origin at the shoulder of the served (left) arm, x forward,
// y to the left (away from the torso), z up. The right arm's setup is the
// mirror image across the sagittal plane.
// A setup places the robot base at X_b with orientation exp(R_b) in that
// frame; the end-effector holds the handle rotated by the grab angle about
// the handle (tool z) axis relative to the hand.

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "json.hpp"

#include "hapticlab/geometry.hpp"
#include "hapticlab/robot_model.hpp"

namespace hapticlab {

struct SetupConfiguration {
  Vector3 base_position = Vector3::Zero();  // X_b, m
  Vector3 base_rotation = Vector3::Zero();  // R_b, rotation vector, rad
  double grab_angle = 0.0;                  // rad

  Pose base_pose() const;
  Quaternion base_quaternion() const { return base_pose().quaternion(); }

  /// Packed as (X_b, R_b, theta_grab).
  VectorX to_vector() const;
  static SetupConfiguration from_vector(const VectorX& v);

  /// |theta_grab| <= pi and |R_b| <= pi, all finite.
  void validate() const;
};

enum class RotationConvention { kRotationVector, kRollPitchYaw };

RotationConvention rotation_convention_from_string(const std::string& s);
const char* to_string(RotationConvention c);

/// Canonical rotation vector for a base orientation given in `convention`
/// (roll-pitch-yaw means R = Rz(yaw) Ry(pitch) Rx(roll)).
Vector3 canonical_base_rotation(const Vector3& values, RotationConvention convention);

/// {"base_position": [...], "base_rotation": [...], "grab_angle": x}; reads an
/// optional "rotation_convention" and always writes rotation vector + quaternion.
SetupConfiguration setup_from_json(const nlohmann::json& j);
nlohmann::json setup_to_json(const SetupConfiguration& c);

/// The setup for the other arm, reflected across the sagittal plane y = plane_y.
SetupConfiguration mirrored(const SetupConfiguration& c, double plane_y);

struct Capsule {
  Vector3 a = Vector3::Zero();
  Vector3 b = Vector3::Zero();
  double radius = 0.0;
};

/// Closest distance between segments [p0, p1] and [q0, q1].
double segment_distance(const Vector3& p0, const Vector3& p1, const Vector3& q0, const Vector3& q1);

/// Surface distance; negative when the capsules interpenetrate.
double capsule_distance(const Capsule& c1, const Capsule& c2);

struct HumanModel {
  Vector3 shoulder = Vector3::Zero();
  double upper_arm = 0.30;
  double forearm = 0.27;
  double arm_radius = 0.05;
  Vector3 torso_top{0.0, -0.19, -0.05};
  Vector3 torso_bottom{0.0, -0.19, -0.50};
  double torso_radius = 0.15;
  double hand_clearance = 0.08;  // forearm capsule stops short of the grasped handle
  double required_force = 20.0;  // N, per workspace sample
  double required_torque = 2.0;  // N m

  double reach() const { return upper_arm + forearm; }
  /// y of the sagittal plane (the torso axis).
  double sagittal_y() const { return torso_top.y(); }
  void validate() const;

  /// Elbow on the swivel circle for this hand position, at its lowest point.
  /// Hands beyond reach get a straight arm pointing at them.
  Vector3 elbow(const Vector3& hand) const;
  /// Upper arm, forearm (shortened by hand_clearance) and torso.
  std::vector<Capsule> capsules(const Vector3& hand) const;

  HumanModel translated(const Vector3& offset) const;
};

HumanModel human_model_from_json(const nlohmann::json& j);
nlohmann::json human_model_to_json(const HumanModel& hm);

struct WorkspaceSample {
  Pose hand;  // human frame
  double force = 0.0;   // required force magnitude, N
  double torque = 0.0;  // required torque magnitude, N m
};

/// Shifted Halton samples of hand positions, uniform in volume over the
/// forward (x >= 0) half of the shell 0.2 L <= |p - shoulder| <= 0.95 L,
/// excluding positions within arm radius plus hand clearance of the torso. Orientations cycle through a
/// neutral grip (vertical handle, tool z down) and four tilts of `tilt` rad.
std::vector<WorkspaceSample> sample_human_workspace(const HumanModel& hm, int count, std::uint64_t seed,
                                                    double tilt = 0.35);

struct IkOptions {
  int max_iterations = 200;
  int restarts = 4;
  double position_tolerance = 1e-4;     // m
  double orientation_tolerance = 1e-3;  // rad
  double damping = 0.05;
  double max_step = 0.5;        // rad, per iteration
  int stall_iterations = 20;    // abandon an attempt after this many iterations without progress
  int polish_iterations = 30;   // Gauss-Newton refinement once within tolerance
};

enum class IkFailure { kNone, kJointLimits, kNoConvergence };

const char* to_string(IkFailure f);

struct IkResult {
  bool success = false;
  VectorX q;
  double position_error = 0.0;
  double orientation_error = 0.0;
  IkFailure failure = IkFailure::kNone;
  int attempts = 0;
};

/// Scores a converged posture; restarts continue while it is negative and the
/// highest-scoring posture is returned.
using PosturePreference = std::function<double(const VectorX& q)>;

/// Damped least squares from the mid-range posture and then four fixed
/// restarts, clamped to the joint limits. Arms with fewer than six joints
/// solve for position only. `target` is the tool pose in the robot base frame.
/// Without a preference the first converged posture is returned.
IkResult solve_ik_base(const RobotModel& model, const Pose& target, const IkOptions& opt = {},
                       const PosturePreference& preference = {});

/// `hand` is in the human frame; the tool target is hand * Rz(theta_grab).
IkResult solve_ik(const RobotModel& model, const SetupConfiguration& config, const Pose& hand,
                  const IkOptions& opt = {}, const PosturePreference& preference = {});

/// Tool target in the robot base frame for a hand pose in the human frame.
Pose tool_target(const SetupConfiguration& config, const Pose& hand);

/// Largest scale alpha with |J^T (alpha w)| within the torque limits; 0 when
/// J^T w vanishes (the direction cannot be rendered).
double wrench_scale(const Matrix6X& j, const VectorX& torque_limits, const Vector6& unit_wrench);

/// The 26 unit directions of the cube's faces, edges and corners.
const std::vector<Vector3>& cube_directions();

/// Product of 4 d (1 - d) over joints, d the position normalized into the limits.
double joint_limit_margin(const RobotModel& model, const VectorX& q);

/// Reference for normalizing dexterity: the largest translational
/// manipulability over a fixed set of in-limit configurations.
double dexterity_reference(const RobotModel& model, int configurations = 512);

struct ScoreWeights {
  double coverage = 0.4;
  double dexterity = 0.2;
  double wrench = 0.3;
  double collision = 0.1;

  void validate() const;
};

struct ScoreBreakdown {
  double coverage = 0.0;
  double dexterity = 0.0;             // mean manipulability x margin, unreachable samples count 0
  double dexterity_normalized = 0.0;  // dexterity / reference, clipped to [0, 1]
  double wrench_feasibility = 0.0;
  double collision_penalty = 0.0;
  double total = 0.0;
  bool interpenetration = false;
  int reachable = 0;
};

struct EvaluationContext {
  RobotModel model;
  HumanModel human;
  std::vector<WorkspaceSample> samples;
  ScoreWeights weights;
  IkOptions ik;
  double dexterity_reference = 1.0;
  double safe_distance = 0.1;             // m
  double interpenetration_penalty = 10.0;  // added per interpenetrating sample

  /// Fills dexterity_reference from the model.
  static EvaluationContext create(RobotModel model, HumanModel human, std::vector<WorkspaceSample> samples,
                                  ScoreWeights weights = {});
};

/// Per-sample intermediate results shared by the metrics.
struct SampleAnalysis {
  IkResult ik;
  double dexterity = 0.0;
  double wrench = 0.0;
  double min_distance = 0.0;
};

std::vector<SampleAnalysis> analyze_samples(const EvaluationContext& ctx, const SetupConfiguration& config);

double coverage_score(const EvaluationContext& ctx, const SetupConfiguration& config);
double dexterity_score(const EvaluationContext& ctx, const SetupConfiguration& config);
double wrench_feasibility_score(const EvaluationContext& ctx, const SetupConfiguration& config);
double collision_penalty(const EvaluationContext& ctx, const SetupConfiguration& config);

/// Robot link capsules in the human frame: base column, joint-to-joint
/// segments; the terminal segment holding the handle is left out.
std::vector<Capsule> robot_capsules(const RobotModel& model, const SetupConfiguration& config, const VectorX& q);

ScoreBreakdown evaluate(const EvaluationContext& ctx, const SetupConfiguration& config);

/// Minimal (mu/mu_w, lambda) evolution strategy on a box with a success-rule
/// step size. Degenerate dimensions (lo == hi) are held fixed.
struct EsOptions {
  int population = 16;
  int parents = 8;
  double initial_step = 0.3;  // fraction of the box width
  int budget = 320;
  std::uint64_t seed = 1;
  int workers = 1;
};

struct EsEvaluation {
  VectorX x;
  double score = 0.0;
  bool feasible = true;
  std::vector<double> details;  // objective-specific metrics carried into the history
};

using EsObjective = std::function<EsEvaluation(const VectorX& x)>;

/// Returns every evaluation in order; the box center is evaluated first.
std::vector<EsEvaluation> evolve(const VectorX& lower, const VectorX& upper, const EsObjective& objective,
                                 const EsOptions& opt);

/// Index of the best evaluation: feasible ones first, then highest score,
/// earliest on ties.
size_t best_evaluation(const std::vector<EsEvaluation>& history);

struct SetupBounds {
  VectorX lower = VectorX::Zero(7);
  VectorX upper = VectorX::Zero(7);

  void validate() const;
  SetupBounds translated(const Vector3& offset) const;
};

struct OptimizationEntry {
  SetupConfiguration config;
  ScoreBreakdown score;
};

struct OptimizationResult {
  SetupConfiguration best;
  ScoreBreakdown score;
  std::vector<OptimizationEntry> history;
};

OptimizationResult optimize(const EvaluationContext& ctx, const SetupBounds& bounds, const EsOptions& opt);

}  // namespace hapticlab
