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

#include "hapticlab/controllers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hapticlab/dynamics.hpp"
#include "hapticlab/kinematics.hpp"

namespace hapticlab {

ReshapeConfig ReshapeConfig::by_group(const RobotModel& model, double translational, double rotational) {
  ReshapeConfig cfg{VectorX(model.dof())};
  for (Eigen::Index i = 0; i < model.dof(); ++i) {
    cfg.ratio[i] =
        model.joints[static_cast<size_t>(i)].group == MotionGroup::kTranslational ? translational : rotational;
  }
  cfg.validate(model.dof());
  return cfg;
}

void ReshapeConfig::validate(Eigen::Index n) const {
  require_size(ratio, n, "reshape.ratio");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(ratio[i] >= 1.0) || !std::isfinite(ratio[i]))
      throw std::invalid_argument("reshape ratio must be finite and >= 1 (joint " + std::to_string(i) + ")");
  }
}

VectorX ReshapeConfig::desired_motor_inertia(const RobotModel& model) const {
  validate(model.dof());
  return model.motor_inertia().cwiseQuotient(ratio);
}

VectorX inertia_reshape(const VectorX& tau_j, const VectorX& u, const ReshapeConfig& reshape) {
  require_size(u, tau_j.size(), "reshape input u");
  require_size(reshape.ratio, tau_j.size(), "reshape.ratio");
  // r u + (1 - r) tau_j: same law, and exactly u when r = 1.
  return reshape.ratio.cwiseProduct(u) + (1.0 - reshape.ratio.array()).matrix().cwiseProduct(tau_j);
}

void EstimatorConfig::validate() const {
  if (!(energy_threshold > 0.0)) throw std::invalid_argument("estimator energy threshold must be positive");
  if (!(rearm_factor >= 1.0)) throw std::invalid_argument("estimator rearm factor must be >= 1");
  if (!(excitation_floor >= 0.0)) throw std::invalid_argument("estimator excitation floor must be >= 0");
  if (!(regularization >= 0.0)) throw std::invalid_argument("estimator regularization must be >= 0");
  if (!(deadband > 0.0)) throw std::invalid_argument("estimator deadband must be positive");
  if (history == 0) throw std::invalid_argument("estimator history must hold at least one window");
}

FrictionEstimator::FrictionEstimator(Eigen::Index joints, EstimatorConfig cfg)
    : cfg_(cfg),
      window_input_(VectorX::Zero(joints)),
      window_coulomb_(VectorX::Zero(joints)),
      window_viscous_(VectorX::Zero(joints)),
      coulomb_(VectorX::Zero(joints)),
      viscous_(VectorX::Zero(joints)),
      history_(static_cast<size_t>(joints)) {
  if (joints <= 0) throw std::invalid_argument("estimator needs at least one joint");
  cfg_.validate();
}

bool FrictionEstimator::update(const VectorX& tau_in, const VectorX& thetadot, double stored_energy, double dt) {
  const Eigen::Index n = coulomb_.size();
  require_size(tau_in, n, "estimator tau_in");
  require_size(thetadot, n, "estimator thetadot");
  if (!(dt > 0.0)) throw std::invalid_argument("estimator dt must be positive");
  // Trapezoidal rule over the last sample interval, with the input held
  // from the previous sample as a zero-order-hold actuator applies it.
  if (previous_velocity_.size() == n) {
    for (Eigen::Index i = 0; i < n; ++i) {
      const double v0 = previous_velocity_[i], v1 = thetadot[i];
      auto coulomb_power = [&](double v) { return std::clamp(v / cfg_.deadband, -1.0, 1.0) * v; };
      window_input_[i] += previous_input_[i] * 0.5 * (v0 + v1) * dt;
      window_coulomb_[i] += 0.5 * (coulomb_power(v0) + coulomb_power(v1)) * dt;
      window_viscous_[i] += 0.5 * (v0 * v0 + v1 * v1) * dt;
    }
  }
  previous_input_ = tau_in;
  previous_velocity_ = thetadot;
  time_ += dt;

  if (stored_energy > cfg_.rearm_factor * cfg_.energy_threshold) armed_ = true;
  if (!armed_ || stored_energy >= cfg_.energy_threshold) return false;
  armed_ = false;
  close_window();
  return true;
}

namespace {

bool speeds_diverse(const std::deque<EnergyWindow>& rows, double spread) {
  double lo = std::numeric_limits<double>::infinity(), hi = 0.0;
  for (const auto& r : rows) {
    if (r.coulomb_basis <= 0.0) continue;
    const double speed = r.viscous_basis / r.coulomb_basis;  // dissipation-weighted mean |thetadot|
    lo = std::min(lo, speed);
    hi = std::max(hi, speed);
  }
  return hi > 0.0 && (hi - lo) > spread * hi;
}

}  // namespace

void FrictionEstimator::close_window() {
  EstimatorEvent event;
  event.time = time_;
  event.accepted.assign(static_cast<size_t>(coulomb_.size()), false);
  event.diverse = true;
  ill_conditioned_ = false;
  for (Eigen::Index i = 0; i < coulomb_.size(); ++i) {
    auto& rows = history_[static_cast<size_t>(i)];
    if (window_coulomb_[i] < cfg_.excitation_floor) {
      // Too little motion: keep integrating so the next event sees a longer window.
      ill_conditioned_ = true;
      event.diverse = event.diverse && speeds_diverse(rows, cfg_.speed_spread);
      continue;
    }
    rows.push_back({window_coulomb_[i], window_viscous_[i], window_input_[i]});
    while (rows.size() > cfg_.history) rows.pop_front();
    const Eigen::Vector2d f = solve_friction_windows(rows, cfg_.regularization);
    coulomb_[i] = f[0];
    viscous_[i] = f[1];
    event.accepted[static_cast<size_t>(i)] = true;
    event.diverse = event.diverse && speeds_diverse(rows, cfg_.speed_spread);
    window_input_[i] = window_coulomb_[i] = window_viscous_[i] = 0.0;
  }
  event.coulomb = coulomb_;
  event.viscous = viscous_;
  events_.push_back(std::move(event));
}

Eigen::Vector2d solve_friction_windows(const std::deque<EnergyWindow>& rows, double regularization) {
  Eigen::Matrix2d normal = regularization * Eigen::Matrix2d::Identity();
  Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
  for (const auto& r : rows) {
    const Eigen::Vector2d a(r.coulomb_basis, r.viscous_basis);
    normal += a * a.transpose();
    rhs += a * r.input;
  }
  auto objective = [&](const Eigen::Vector2d& f) { return f.dot(normal * f) - 2.0 * rhs.dot(f); };

  // Two unknowns: the constrained optimum is the unconstrained one if feasible,
  // otherwise it lies on a face of the non-negative quadrant. A rank-deficient
  // system (one window, no regularization) takes the minimum-norm solution.
  const Eigen::Vector2d free = normal.completeOrthogonalDecomposition().solve(rhs);
  if (free.allFinite() && free.minCoeff() >= 0.0) return free;
  std::vector<Eigen::Vector2d> candidates{Eigen::Vector2d::Zero()};
  if (normal(0, 0) > 0.0) candidates.emplace_back(std::max(0.0, rhs[0] / normal(0, 0)), 0.0);
  if (normal(1, 1) > 0.0) candidates.emplace_back(0.0, std::max(0.0, rhs[1] / normal(1, 1)));
  Eigen::Vector2d best = candidates.front();
  for (const auto& c : candidates) {
    if (objective(c) < objective(best)) best = c;
  }
  return best;
}

FrictionEstimator estimator_update(FrictionEstimator est, const VectorX& tau_in, const VectorX& thetadot,
                                   double stored_energy, double dt) {
  est.update(tau_in, thetadot, stored_energy, dt);
  return est;
}

VectorX friction_compensation(const VectorX& coulomb, const VectorX& viscous, const VectorX& thetadot,
                              double deadband, double fraction) {
  require_size(coulomb, thetadot.size(), "coulomb estimate");
  require_size(viscous, thetadot.size(), "viscous estimate");
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("compensation fraction must lie in [0, 1]");
  if (!(deadband > 0.0)) throw std::invalid_argument("deadband must be positive");
  VectorX tau(thetadot.size());
  for (Eigen::Index i = 0; i < thetadot.size(); ++i) {
    tau[i] = fraction * (coulomb[i] * saturate(thetadot[i] / deadband) + viscous[i] * thetadot[i]);
  }
  return tau;
}

HapticCommand haptic_control(const RobotModel& model, const Measurement& meas, const Wrench& rendered,
                             const HapticConfig& cfg) {
  const Eigen::Index n = model.dof();
  require_frame(rendered, Frame::kBase, "rendered wrench");
  require_size(meas.q, n, "measurement.q");
  require_size(meas.tau_j, n, "measurement.tau_j");
  require_size(meas.thetadot, n, "measurement.thetadot");
  cfg.reshape.validate(n);

  HapticCommand cmd;
  cmd.u = jacobian(model, meas.q).transpose() * rendered.stacked();
  if (cfg.gravity_compensation) cmd.u += gravity_vector(model, meas.q);
  if (cfg.friction_compensation) {
    cmd.u += friction_compensation(cfg.coulomb_estimate, cfg.viscous_estimate, meas.thetadot, cfg.deadband,
                                   cfg.compensation_fraction);
  }
  VectorX tau_j = meas.tau_j;
  if (cfg.torque_lead != 0.0 && meas.tau_j_dot.size() == n) tau_j += cfg.torque_lead * meas.tau_j_dot;
  cmd.tau_m = inertia_reshape(tau_j, cmd.u, cfg.reshape);

  const VectorX limit = model.torque_limits();
  cmd.saturated.assign(static_cast<size_t>(n), false);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(cmd.tau_m[i]) > limit[i]) {
      cmd.tau_m[i] = std::copysign(limit[i], cmd.tau_m[i]);
      cmd.saturated[static_cast<size_t>(i)] = true;
      cmd.any_saturated = true;
    }
  }
  return cmd;
}

}  // namespace hapticlab
