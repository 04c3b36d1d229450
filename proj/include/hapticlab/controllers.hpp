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

// Haptic-display control stack: joint-torque-feedback inertia reshaping,
// energy-based friction estimation and compensation, gravity compensation
// and wrench rendering.

#pragma once

#include <deque>
#include <vector>

#include "hapticlab/fjr.hpp"
#include "hapticlab/geometry.hpp"
#include "hapticlab/robot_model.hpp"

namespace hapticlab {

/// Per-joint reshaping ratio r = B / B_theta (B_theta is the desired motor inertia).
struct ReshapeConfig {
  VectorX ratio;

  static ReshapeConfig disabled(Eigen::Index n) { return {VectorX::Ones(n)}; }
  static ReshapeConfig uniform(Eigen::Index n, double r) { return {VectorX::Constant(n, r)}; }
  /// Ratio chosen by each joint's motion group.
  static ReshapeConfig by_group(const RobotModel& model, double translational = 3.0, double rotational = 4.0);

  /// r >= 1 everywhere.
  void validate(Eigen::Index n) const;

  /// B_theta = B / r.
  VectorX desired_motor_inertia(const RobotModel& model) const;
};

/// tau_m = tau_j + (B / B_theta) (u - tau_j), elementwise.
///
/// Closed around the motor equation this yields
///   B_theta thetadd + tau_j = u + (B_theta / B) tau_f,
/// i.e. the motor appears r times lighter and its friction r times smaller.
VectorX inertia_reshape(const VectorX& tau_j, const VectorX& u, const ReshapeConfig& reshape);

struct EstimatorConfig {
  double energy_threshold = 1e-4;  // J; "zero stored energy"
  double rearm_factor = 10.0;      // energy must exceed factor * threshold between events
  double excitation_floor = 0.01;  // rad; minimum Coulomb basis per window
  double regularization = 1e-6;    // Tikhonov weight
  double deadband = 1e-3;          // rad/s; Coulomb regularization of the friction model
  double speed_spread = 0.05;      // relative spread of window mean speeds counted as diverse
  size_t history = 6;              // windows kept per joint (older ones are forgotten)

  void validate() const;
};

/// One completed window: dissipation bases and net input energy.
struct EnergyWindow {
  double coulomb_basis = 0.0;  // integral of sat(thetadot / eps) thetadot
  double viscous_basis = 0.0;  // integral of thetadot^2
  double input = 0.0;          // integral of tau_in thetadot
};

struct EstimatorEvent {
  double time = 0.0;
  std::vector<bool> accepted;  // per joint; false when the excitation floor was not met
  bool diverse = false;        // history spans distinct speeds (both coefficients identifiable)
  VectorX coulomb;
  VectorX viscous;
};

/// Model-free Coulomb/viscous friction estimator.
///
/// Input energy and the two dissipation bases are integrated per joint. When
/// the externally supplied stored energy drops below the threshold, the net
/// input of the window must have been dissipated by friction, which gives
/// one linear equation  f_c * D_c + f_v * D_v = E_in  per joint. Recent
/// windows are stacked and solved as a regularized non-negative least-squares
/// problem. Nothing here reads the robot model.
class FrictionEstimator {
 public:
  FrictionEstimator(Eigen::Index joints, EstimatorConfig cfg = {});

  /// Integrates up to this sample. Returns true when a zero-stored-energy event fired.
  bool update(const VectorX& tau_in, const VectorX& thetadot, double stored_energy, double dt);

  const VectorX& coulomb() const { return coulomb_; }
  const VectorX& viscous() const { return viscous_; }
  const std::vector<EstimatorEvent>& events() const { return events_; }
  const EstimatorConfig& config() const { return cfg_; }
  const VectorX& window_input() const { return window_input_; }
  const VectorX& window_coulomb_basis() const { return window_coulomb_; }
  const VectorX& window_viscous_basis() const { return window_viscous_; }
  /// True when the last event was skipped for at least one joint.
  bool last_event_ill_conditioned() const { return ill_conditioned_; }
  double time() const { return time_; }

 private:
  void close_window();

  EstimatorConfig cfg_;
  VectorX window_input_, window_coulomb_, window_viscous_;
  VectorX coulomb_, viscous_;
  VectorX previous_input_, previous_velocity_;
  std::vector<std::deque<EnergyWindow>> history_;
  std::vector<EstimatorEvent> events_;
  bool armed_ = false;
  bool ill_conditioned_ = false;
  double time_ = 0.0;
};

/// Functional form of FrictionEstimator::update.
FrictionEstimator estimator_update(FrictionEstimator est, const VectorX& tau_in, const VectorX& thetadot,
                                   double stored_energy, double dt);

/// Regularized non-negative least squares for rows a f_c + b f_v = e.
/// Returns {f_c, f_v}.
Eigen::Vector2d solve_friction_windows(const std::deque<EnergyWindow>& rows, double regularization);

/// Feed-forward that cancels `fraction` of the modeled friction:
/// +fraction * (f_c sat(thetadot / eps) + f_v thetadot).
VectorX friction_compensation(const VectorX& coulomb, const VectorX& viscous, const VectorX& thetadot,
                              double deadband, double fraction = 0.9);

struct HapticConfig {
  ReshapeConfig reshape;
  VectorX coulomb_estimate;  // friction seen through u (already divided by r when reshaping)
  VectorX viscous_estimate;
  double compensation_fraction = 0.9;
  double deadband = 1e-3;
  bool gravity_compensation = true;
  bool friction_compensation = true;
  // Lead (s) applied to the measured joint torque via its rate before reshaping.
  // A zero-order-hold loop with gain r otherwise pumps energy into stiff
  // joint modes; half the control period offsets the hold.
  double torque_lead = 0.5e-3;
};

struct HapticCommand {
  VectorX u;
  VectorX tau_m;
  std::vector<bool> saturated;
  bool any_saturated = false;
};

/// u = g(q) + J^T F + friction compensation, then tau_m = inertia_reshape(tau_j, u)
/// with tau_j led by `torque_lead`, clipped to the joint torque limits. The
/// wrench must be in the base frame.
HapticCommand haptic_control(const RobotModel& model, const Measurement& meas, const Wrench& rendered,
                             const HapticConfig& cfg);

}  // namespace hapticlab
