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

// Flexible-joint arm simulation.
//
//   motor side:  B thetadd + tau_j = tau_m + tau_f
//   link side:   M(q) qdd + C(q, qd) qd + g(q) = tau_j + tau_ext
//
// with the elastic joint torque tau_j = K (theta - q) and friction acting on
// the motor side.

#pragma once

#include <functional>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "hapticlab/geometry.hpp"
#include "hapticlab/robot_model.hpp"

namespace hapticlab {

struct FjrState {
  VectorX q;
  VectorX qdot;
  VectorX theta;
  VectorX thetadot;
  double time = 0.0;

  /// Motionless state with an unloaded spring (theta = q).
  static FjrState at_rest(const VectorX& q);

  /// Motionless state whose spring deflection balances gravity at q.
  static FjrState gravity_balanced(const RobotModel& model, const VectorX& q);

  void validate(Eigen::Index n) const;
};

/// Coulomb + viscous friction with a saturated (continuous) Coulomb term.
struct FrictionModel {
  VectorX coulomb;  // N m
  VectorX viscous;  // N m s / rad
  double deadband = 1e-3;  // rad/s

  static FrictionModel none(Eigen::Index n);
  static FrictionModel uniform(Eigen::Index n, double coulomb, double viscous, double deadband = 1e-3);

  void validate(Eigen::Index n) const;
};

enum class Integrator { kSemiImplicitEuler, kRk4 };

const char* to_string(Integrator i);
Integrator integrator_from_string(const std::string& s);

struct SimConfig {
  double dt = 1e-3;
  Integrator integrator = Integrator::kRk4;

  void validate() const;
};

/// Raised when the link-side inertia matrix cannot be factorized.
class SolverError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// tau_j = K (theta - q).
VectorX joint_torque(const RobotModel& model, const FjrState& state);

/// sat(x) clamped to [-1, 1].
double saturate(double x);

/// tau_f = -(f_c sat(thetadot / eps) + f_v thetadot), per joint.
VectorX friction_torque(const FrictionModel& fm, const VectorX& thetadot);

/// Largest per-joint f_c dt / (eps B): the step size relative to the motor
/// time constant inside the Coulomb regularization band. Explicit integration
/// is unstable there once this exceeds about 2.7 (rk4) or 2 (semi-implicit).
double friction_step_ratio(const RobotModel& model, const FrictionModel& fm, double dt);

/// Stability bound on friction_step_ratio for an integrator, with a margin.
double friction_step_limit(Integrator integrator);

/// Energy that crossed the system boundary during one step.
struct StepWork {
  double input = 0.0;     // integral of tau_m.thetadot + tau_ext.qdot
  double friction = 0.0;  // integral of tau_f.thetadot (non-positive)
};

/// Advances one fixed step with motor and external torques held constant.
FjrState step(const RobotModel& model, const FrictionModel& fm, const FjrState& state, const VectorX& tau_m,
              const VectorX& tau_ext, const SimConfig& cfg, StepWork* work = nullptr);

/// Kinetic + elastic + gravitational energy, with the gravitational part
/// measured relative to `reference_potential` (see potential_energy()).
double stored_energy(const RobotModel& model, const FjrState& state, double reference_potential = 0.0);

/// Signals a joint-torque-sensing controller can measure.
struct Measurement {
  double time = 0.0;
  VectorX theta;
  VectorX thetadot;
  VectorX tau_j;
  VectorX tau_j_dot;  // backward difference; zero on the first sample
  VectorX q;
  VectorX qdot;
};

using MotorController = std::function<VectorX(const Measurement&)>;
using ExternalTorqueSource = std::function<VectorX(double time, const FjrState& state)>;

struct TrajectorySample {
  FjrState state;
  VectorX tau_m;
  VectorX tau_j;
  VectorX tau_ext;
  double stored = 0.0;
  double input = 0.0;        // cumulative input work
  double dissipated = 0.0;   // cumulative friction dissipation (non-negative)
};

struct TrajectoryLog {
  Eigen::Index dof = 0;
  double reference_potential = 0.0;
  std::vector<TrajectorySample> samples;

  /// Header `t,q*,qdot*,theta*,thetadot*,tau_m*,tau_j*,tau_ext*,E_stored,E_in,E_diss`.
  void write_csv(std::ostream& out) const;
  static std::string csv_header(Eigen::Index dof);
};

/// Steps the simulation for `duration` seconds (round(duration/dt) steps),
/// calling the controller once per sample. Gravitational energy is referenced
/// to the initial posture. Step failures are rethrown with their timestamp.
TrajectoryLog run(const RobotModel& model, const FrictionModel& fm, const FjrState& initial,
                  const MotorController& controller, const ExternalTorqueSource& external, double duration,
                  const SimConfig& cfg);

}  // namespace hapticlab
