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

// Closed-loop experiments on the single-joint haptic display: apparent
// inertia identification, friction estimation runs and the interaction
// torque sweep.

#pragma once

#include <string>
#include <vector>

#include "hapticlab/controllers.hpp"
#include "hapticlab/fjr.hpp"

namespace hapticlab {

struct InertiaFit {
  double ratio = 1.0;
  double expected = 0.0;    // B / r
  double identified = 0.0;  // least-squares slope of (u + tau_f / r - tau_j) over thetadd
  double relative_error = 0.0;
  TrajectoryLog log;
};

/// Applies a constant u through inertia reshaping and regresses the apparent
/// motor inertia from the samples after `settle` seconds. Only the first
/// joint is excited; the rest are held by reshaped gravity compensation.
InertiaFit identify_apparent_inertia(const RobotModel& model, const FrictionModel& fm, double ratio, double u_step,
                                     double duration, double settle, const SimConfig& cfg);

/// Burst-and-brake excitation: u = A sin(2 pi f t) for `burst` seconds, then
/// u = -D thetadot - P tau_j until the cycle ends. The P term unloads the
/// joint spring so Coulomb friction cannot trap elastic energy at rest.
/// Amplitudes are cycled per burst.
struct ExcitationConfig {
  std::vector<double> amplitudes{0.8, 1.6, 2.4};
  double frequency = 1.0;  // Hz
  double burst = 1.0;      // s
  double cycle = 3.0;      // s
  double brake_gain = 1.0;  // N m s / rad
  double unloading = 3.0;

  void validate() const;
};

/// Friction estimation on a free arm. The estimator receives u (the input to
/// the reshaped plant), so with r > 1 it identifies the friction seen through
/// reshaping, f / r.
class EstimationSession {
 public:
  EstimationSession(RobotModel model, FrictionModel fm, ReshapeConfig reshape, EstimatorConfig est,
                    ExcitationConfig excitation, SimConfig sim);

  /// Simulates until `count` further events were accepted or `max_time`
  /// seconds elapsed. Returns the number of accepted events.
  int run_events(int count, double max_time);

  void set_friction(const FrictionModel& fm);
  const FrictionEstimator& estimator() const { return est_; }
  const FjrState& state() const { return state_; }
  const FrictionModel& friction() const { return fm_; }
  /// One row per accepted event: t, coulomb..., viscous..., true coulomb..., true viscous...
  const std::vector<std::vector<double>>& history() const { return history_; }

 private:
  RobotModel model_;
  FrictionModel fm_;
  ReshapeConfig reshape_;
  FrictionEstimator est_;
  ExcitationConfig excitation_;
  SimConfig sim_;
  FjrState state_;
  double reference_potential_ = 0.0;
  long step_index_ = 0;
  size_t seen_events_ = 0;
  std::vector<std::vector<double>> history_;
};

enum class CompensationMode { kNone, kReshaping, kFriction, kCombined };

const char* to_string(CompensationMode m);
const std::vector<CompensationMode>& all_compensation_modes();

struct SweepConfig {
  std::vector<double> velocities{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};  // rad/s
  double servo_stiffness = 500.0;  // N m / rad, operator grip on the link
  double servo_damping = 30.0;     // N m s / rad
  double settle = 2.0;             // s discarded before averaging
  double window = 1.0;             // s averaged
  int identification_events = 10;
  double max_identification_time = 120.0;
  double compensation_fraction = 0.9;
  ReshapeConfig reshape;  // empty: ratios from the model's motion groups
  EstimatorConfig estimator;
  ExcitationConfig excitation;

  void validate() const;
};

struct SweepPoint {
  CompensationMode mode = CompensationMode::kNone;
  double velocity = 0.0;
  double torque = 0.0;    // mean operator torque over the window
  double variance = 0.0;  // of the operator torque over the window
};

struct SweepResult {
  std::vector<SweepPoint> points;  // mode-major, velocities in config order
  VectorX ratio;
  std::vector<VectorX> coulomb_estimates;  // per mode (zero where unused)
  std::vector<VectorX> viscous_estimates;

  double torque(CompensationMode mode, size_t velocity_index) const;
};

/// Holds the first joint at constant velocity with a stiff operator servo and
/// records the torque the operator needs under each compensation mode.
/// Friction-compensating modes first identify their estimates with
/// compensation off, then sweep with frozen estimates.
SweepResult friction_sweep(const RobotModel& model, const FrictionModel& fm, const SweepConfig& cfg,
                           const SimConfig& sim);

/// Steady operator torque at one velocity for given controller settings.
SweepPoint measure_interaction(const RobotModel& model, const FrictionModel& fm, const HapticConfig& haptic,
                               double velocity, const SweepConfig& cfg, const SimConfig& sim);

}  // namespace hapticlab
