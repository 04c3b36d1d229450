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

#include "hapticlab/experiments.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

#include "hapticlab/dynamics.hpp"

namespace hapticlab {

InertiaFit identify_apparent_inertia(const RobotModel& model, const FrictionModel& fm, double ratio, double u_step,
                                     double duration, double settle, const SimConfig& cfg) {
  const Eigen::Index n = model.dof();
  if (!(settle >= 0.0 && settle < duration)) throw std::invalid_argument("settle time must lie in [0, duration)");
  ReshapeConfig reshape = ReshapeConfig::uniform(n, ratio);
  reshape.validate(n);

  VectorX push = VectorX::Zero(n);
  push[0] = u_step;
  auto controller = [&](const Measurement& m) {
    const VectorX u = gravity_vector(model, m.q) + push;
    return inertia_reshape(m.tau_j, u, reshape);
  };
  const FjrState start = FjrState::gravity_balanced(model, VectorX::Zero(n));

  InertiaFit fit;
  fit.ratio = ratio;
  fit.expected = model.motor_inertia()[0] / ratio;
  fit.log = run(model, fm, start, controller, nullptr, duration, cfg);

  // (B / r) thetadd = u + tau_f / r - tau_j, sampled per step with thetadd
  // from the velocity increment and tau_f averaged over the step.
  const auto& s = fit.log.samples;
  double sxy = 0.0, sxx = 0.0;
  for (size_t k = 0; k + 1 < s.size(); ++k) {
    if (s[k].state.time < settle) continue;
    const double acc = (s[k + 1].state.thetadot[0] - s[k].state.thetadot[0]) / cfg.dt;
    const double friction = 0.5 * (friction_torque(fm, s[k].state.thetadot)[0] +
                                   friction_torque(fm, s[k + 1].state.thetadot)[0]);
    const double u = gravity_vector(model, s[k].state.q)[0] + u_step;
    const double y = u + friction / ratio - s[k].tau_j[0];
    sxy += acc * y;
    sxx += acc * acc;
  }
  if (!(sxx > 0.0)) throw std::runtime_error("apparent inertia regression has no excitation");
  fit.identified = sxy / sxx;
  fit.relative_error = std::abs(fit.identified - fit.expected) / fit.expected;
  return fit;
}

void ExcitationConfig::validate() const {
  if (amplitudes.empty()) throw std::invalid_argument("excitation needs at least one amplitude");
  if (!(frequency > 0.0 && burst > 0.0 && cycle > burst && brake_gain > 0.0 && unloading >= 0.0))
    throw std::invalid_argument("excitation needs frequency, burst, brake gain > 0, unloading >= 0 and cycle > burst");
}

EstimationSession::EstimationSession(RobotModel model, FrictionModel fm, ReshapeConfig reshape,
                                     EstimatorConfig est, ExcitationConfig excitation, SimConfig sim)
    : model_(std::move(model)),
      fm_(std::move(fm)),
      reshape_(std::move(reshape)),
      est_(model_.dof(), est),
      excitation_(std::move(excitation)),
      sim_(sim) {
  const Eigen::Index n = model_.dof();
  fm_.validate(n);
  reshape_.validate(n);
  excitation_.validate();
  sim_.validate();
  state_ = FjrState::gravity_balanced(model_, VectorX::Zero(n));
  reference_potential_ = potential_energy(model_, state_.q);
}

void EstimationSession::set_friction(const FrictionModel& fm) {
  fm.validate(model_.dof());
  fm_ = fm;
}

int EstimationSession::run_events(int count, double max_time) {
  const Eigen::Index n = model_.dof();
  const long budget = std::lround(max_time / sim_.dt);
  int accepted = 0;
  for (long i = 0; i < budget && accepted < count; ++i) {
    const double t = static_cast<double>(step_index_) * sim_.dt;
    const auto cycle_index = static_cast<size_t>(std::floor(t / excitation_.cycle));
    const double phase = t - static_cast<double>(cycle_index) * excitation_.cycle;
    const double amplitude = excitation_.amplitudes[cycle_index % excitation_.amplitudes.size()];

    const VectorX tau_j = joint_torque(model_, state_);
    VectorX drive(n);
    if (phase < excitation_.burst) {
      drive.setConstant(amplitude * std::sin(2.0 * std::numbers::pi * excitation_.frequency * phase));
    } else {
      drive = -excitation_.brake_gain * state_.thetadot - excitation_.unloading * tau_j;
    }
    const VectorX u = gravity_vector(model_, state_.q) + drive;
    const VectorX tau_m = inertia_reshape(tau_j, u, reshape_);

    // Gravity compensation is conservative; only the drive does net work.
    est_.update(drive, state_.thetadot, stored_energy(model_, state_, reference_potential_), sim_.dt);
    state_ = step(model_, fm_, state_, tau_m, VectorX::Zero(n), sim_);
    ++step_index_;
    state_.time = static_cast<double>(step_index_) * sim_.dt;

    for (; seen_events_ < est_.events().size(); ++seen_events_) {
      const EstimatorEvent& ev = est_.events()[seen_events_];
      if (!ev.accepted[0]) continue;
      ++accepted;
      std::vector<double> row{ev.time};
      for (const VectorX& v : {ev.coulomb, ev.viscous, fm_.coulomb, fm_.viscous})
        row.insert(row.end(), v.data(), v.data() + v.size());
      history_.push_back(std::move(row));
    }
  }
  return accepted;
}

const char* to_string(CompensationMode m) {
  switch (m) {
    case CompensationMode::kNone:
      return "none";
    case CompensationMode::kReshaping:
      return "reshaping";
    case CompensationMode::kFriction:
      return "friction";
    case CompensationMode::kCombined:
      return "combined";
  }
  return "?";
}

const std::vector<CompensationMode>& all_compensation_modes() {
  static const std::vector<CompensationMode> modes{CompensationMode::kNone, CompensationMode::kReshaping,
                                                   CompensationMode::kFriction, CompensationMode::kCombined};
  return modes;
}

void SweepConfig::validate() const {
  if (velocities.empty()) throw std::invalid_argument("sweep needs at least one velocity");
  if (!(servo_stiffness > 0.0 && servo_damping >= 0.0)) throw std::invalid_argument("invalid operator servo gains");
  if (!(settle >= 0.0 && window > 0.0)) throw std::invalid_argument("sweep settle must be >= 0 and window > 0");
  if (identification_events < 1) throw std::invalid_argument("sweep needs at least one identification event");
  if (!(compensation_fraction >= 0.0 && compensation_fraction <= 1.0))
    throw std::invalid_argument("compensation fraction must lie in [0, 1]");
  estimator.validate();
  excitation.validate();
}

double SweepResult::torque(CompensationMode mode, size_t velocity_index) const {
  size_t seen = 0;
  for (const auto& p : points) {
    if (p.mode != mode) continue;
    if (seen++ == velocity_index) return p.torque;
  }
  throw std::out_of_range("no sweep point for that mode and velocity");
}

SweepPoint measure_interaction(const RobotModel& model, const FrictionModel& fm, const HapticConfig& haptic,
                               double velocity, const SweepConfig& cfg, const SimConfig& sim) {
  const Eigen::Index n = model.dof();
  const VectorX q0 = VectorX::Zero(n);
  VectorX velocities = VectorX::Zero(n);
  velocities[0] = velocity;

  // Start on the probe's steady state so no transient rings the lightly
  // damped motor-spring mode: the motor balance gives tau_j = u + tau_f / r
  // and the operator carries g - tau_j through its spring.
  FjrState start = FjrState::at_rest(q0);
  start.qdot = velocities;
  start.thetadot = velocities;
  const VectorX tau_f = friction_torque(fm, velocities);
  VectorX compensation = VectorX::Zero(n);
  if (haptic.friction_compensation) {
    compensation = friction_compensation(haptic.coulomb_estimate, haptic.viscous_estimate, velocities,
                                         haptic.deadband, haptic.compensation_fraction);
  }
  for (int pass = 0; pass < 2; ++pass) {
    const VectorX g = haptic.gravity_compensation ? gravity_vector(model, start.q) : VectorX::Zero(n);
    const VectorX tau_j = g + compensation + tau_f.cwiseQuotient(haptic.reshape.ratio);
    const VectorX carried = gravity_vector(model, start.q) - tau_j;
    start.q = q0 - carried / cfg.servo_stiffness;
    start.theta = start.q + tau_j.cwiseQuotient(model.stiffness());
  }

  auto operator_torque = [&](double t, const FjrState& s) {
    const VectorX target_q = q0 + velocities * t;
    return VectorX(cfg.servo_stiffness * (target_q - s.q) + cfg.servo_damping * (velocities - s.qdot));
  };
  auto controller = [&](const Measurement& m) {
    return haptic_control(model, m, Wrench{}, haptic).tau_m;
  };
  const TrajectoryLog log = run(model, fm, start, controller, operator_torque, cfg.settle + cfg.window, sim);

  SweepPoint p;
  p.velocity = velocity;
  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  for (const auto& s : log.samples) {
    if (s.state.time < cfg.settle - 1e-12) continue;
    sum += s.tau_ext[0];
    sum_sq += s.tau_ext[0] * s.tau_ext[0];
    ++count;
  }
  p.torque = sum / static_cast<double>(count);
  p.variance = std::max(0.0, sum_sq / static_cast<double>(count) - p.torque * p.torque);
  return p;
}

SweepResult friction_sweep(const RobotModel& model, const FrictionModel& fm, const SweepConfig& cfg,
                           const SimConfig& sim) {
  cfg.validate();
  sim.validate();
  const Eigen::Index n = model.dof();
  const ReshapeConfig grouped = cfg.reshape.ratio.size() ? cfg.reshape : ReshapeConfig::by_group(model);
  grouped.validate(n);

  SweepResult result;
  result.ratio = grouped.ratio;
  for (CompensationMode mode : all_compensation_modes()) {
    const bool reshaping = mode == CompensationMode::kReshaping || mode == CompensationMode::kCombined;
    const bool compensating = mode == CompensationMode::kFriction || mode == CompensationMode::kCombined;

    HapticConfig haptic;
    haptic.reshape = reshaping ? grouped : ReshapeConfig::disabled(n);
    haptic.coulomb_estimate = VectorX::Zero(n);
    haptic.viscous_estimate = VectorX::Zero(n);
    haptic.compensation_fraction = cfg.compensation_fraction;
    haptic.deadband = cfg.estimator.deadband;
    haptic.friction_compensation = compensating;
    if (compensating) {
      EstimationSession session(model, fm, haptic.reshape, cfg.estimator, cfg.excitation, sim);
      const int got = session.run_events(cfg.identification_events, cfg.max_identification_time);
      if (got < cfg.identification_events)
        throw std::runtime_error(std::string("friction identification for mode '") + to_string(mode) +
                                 "' produced only " + std::to_string(got) + " events");
      haptic.coulomb_estimate = session.estimator().coulomb();
      haptic.viscous_estimate = session.estimator().viscous();
    }
    result.coulomb_estimates.push_back(haptic.coulomb_estimate);
    result.viscous_estimates.push_back(haptic.viscous_estimate);

    for (double v : cfg.velocities) {
      SweepPoint p = measure_interaction(model, fm, haptic, v, cfg, sim);
      p.mode = mode;
      result.points.push_back(p);
    }
  }
  return result;
}

}  // namespace hapticlab
