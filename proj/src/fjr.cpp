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

#include "hapticlab/fjr.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "hapticlab/csv.hpp"
#include "hapticlab/dynamics.hpp"

namespace hapticlab {

FjrState FjrState::at_rest(const VectorX& q) {
  const VectorX zero = VectorX::Zero(q.size());
  return {q, zero, q, zero, 0.0};
}

FjrState FjrState::gravity_balanced(const RobotModel& model, const VectorX& q) {
  FjrState s = at_rest(q);
  s.theta = q + gravity_vector(model, q).cwiseQuotient(model.stiffness());
  return s;
}

void FjrState::validate(Eigen::Index n) const {
  require_size(q, n, "state.q");
  require_size(qdot, n, "state.qdot");
  require_size(theta, n, "state.theta");
  require_size(thetadot, n, "state.thetadot");
  if (!q.allFinite() || !qdot.allFinite() || !theta.allFinite() || !thetadot.allFinite() || !std::isfinite(time))
    throw std::invalid_argument("state contains non-finite entries");
}

FrictionModel FrictionModel::none(Eigen::Index n) { return uniform(n, 0.0, 0.0); }

FrictionModel FrictionModel::uniform(Eigen::Index n, double coulomb, double viscous, double deadband) {
  return {VectorX::Constant(n, coulomb), VectorX::Constant(n, viscous), deadband};
}

void FrictionModel::validate(Eigen::Index n) const {
  require_size(coulomb, n, "friction.coulomb");
  require_size(viscous, n, "friction.viscous");
  if ((coulomb.array() < 0.0).any() || (viscous.array() < 0.0).any())
    throw std::invalid_argument("friction coefficients must be non-negative");
  if (!(deadband > 0.0)) throw std::invalid_argument("friction deadband must be positive");
}

const char* to_string(Integrator i) { return i == Integrator::kRk4 ? "rk4" : "semi-implicit-euler"; }

Integrator integrator_from_string(const std::string& s) {
  if (s == "rk4") return Integrator::kRk4;
  if (s == "semi-implicit-euler") return Integrator::kSemiImplicitEuler;
  throw std::invalid_argument("unknown integrator '" + s + "' (expected rk4 or semi-implicit-euler)");
}

void SimConfig::validate() const {
  if (!(dt > 0.0 && dt <= 1e-2)) throw std::invalid_argument("dt must lie in (0, 0.01] s");
}

VectorX joint_torque(const RobotModel& model, const FjrState& state) {
  require_size(state.theta, model.dof(), "state.theta");
  require_size(state.q, model.dof(), "state.q");
  return model.stiffness().cwiseProduct(state.theta - state.q);
}

double saturate(double x) { return std::clamp(x, -1.0, 1.0); }

VectorX friction_torque(const FrictionModel& fm, const VectorX& thetadot) {
  require_size(thetadot, fm.coulomb.size(), "motor velocities");
  VectorX tau(thetadot.size());
  for (Eigen::Index i = 0; i < thetadot.size(); ++i) {
    tau[i] = -(fm.coulomb[i] * saturate(thetadot[i] / fm.deadband) + fm.viscous[i] * thetadot[i]);
  }
  return tau;
}

double friction_step_ratio(const RobotModel& model, const FrictionModel& fm, double dt) {
  fm.validate(model.dof());
  return (fm.coulomb.cwiseQuotient(model.motor_inertia()) * (dt / fm.deadband)).maxCoeff();
}

double friction_step_limit(Integrator integrator) { return integrator == Integrator::kRk4 ? 2.5 : 1.8; }

namespace {

struct Derivative {
  VectorX qdd;
  VectorX thetadd;
  double input_power = 0.0;
  double friction_power = 0.0;
};

Derivative evaluate(const RobotModel& model, const FrictionModel& fm, const VectorX& q, const VectorX& qd,
                    const VectorX& theta, const VectorX& thetad, const VectorX& tau_m, const VectorX& tau_ext) {
  const VectorX tau_j = model.stiffness().cwiseProduct(theta - q);
  const VectorX tau_f = friction_torque(fm, thetad);
  Derivative d;
  d.thetadd = (tau_m + tau_f - tau_j).cwiseQuotient(model.motor_inertia());
  const MatrixX m = mass_matrix(model, q);
  Eigen::LLT<MatrixX> llt(m);
  if (llt.info() != Eigen::Success) throw SolverError("link inertia matrix is not positive definite");
  d.qdd = llt.solve(tau_j + tau_ext - bias_forces(model, q, qd));
  if (!d.qdd.allFinite() || !d.thetadd.allFinite()) throw SolverError("non-finite acceleration");
  d.input_power = tau_m.dot(thetad) + tau_ext.dot(qd);
  d.friction_power = tau_f.dot(thetad);
  return d;
}

}  // namespace

FjrState step(const RobotModel& model, const FrictionModel& fm, const FjrState& s, const VectorX& tau_m,
              const VectorX& tau_ext, const SimConfig& cfg, StepWork* work) {
  const Eigen::Index n = model.dof();
  require_size(tau_m, n, "motor torque");
  require_size(tau_ext, n, "external torque");
  s.validate(n);
  const double h = cfg.dt;
  FjrState next = s;
  next.time = s.time + h;

  if (cfg.integrator == Integrator::kSemiImplicitEuler) {
    const Derivative d = evaluate(model, fm, s.q, s.qdot, s.theta, s.thetadot, tau_m, tau_ext);
    next.qdot = s.qdot + h * d.qdd;
    next.thetadot = s.thetadot + h * d.thetadd;
    next.q = s.q + h * next.qdot;
    next.theta = s.theta + h * next.thetadot;
    if (work) {
      const VectorX tau_f_next = friction_torque(fm, next.thetadot);
      work->input = 0.5 * h * (d.input_power + tau_m.dot(next.thetadot) + tau_ext.dot(next.qdot));
      work->friction = 0.5 * h * (d.friction_power + tau_f_next.dot(next.thetadot));
    }
    return next;
  }

  const Derivative k1 = evaluate(model, fm, s.q, s.qdot, s.theta, s.thetadot, tau_m, tau_ext);
  const VectorX q2 = s.q + 0.5 * h * s.qdot, qd2 = s.qdot + 0.5 * h * k1.qdd;
  const VectorX t2 = s.theta + 0.5 * h * s.thetadot, td2 = s.thetadot + 0.5 * h * k1.thetadd;
  const Derivative k2 = evaluate(model, fm, q2, qd2, t2, td2, tau_m, tau_ext);
  const VectorX q3 = s.q + 0.5 * h * qd2, qd3 = s.qdot + 0.5 * h * k2.qdd;
  const VectorX t3 = s.theta + 0.5 * h * td2, td3 = s.thetadot + 0.5 * h * k2.thetadd;
  const Derivative k3 = evaluate(model, fm, q3, qd3, t3, td3, tau_m, tau_ext);
  const VectorX q4 = s.q + h * qd3, qd4 = s.qdot + h * k3.qdd;
  const VectorX t4 = s.theta + h * td3, td4 = s.thetadot + h * k3.thetadd;
  const Derivative k4 = evaluate(model, fm, q4, qd4, t4, td4, tau_m, tau_ext);

  next.q = s.q + (h / 6.0) * (s.qdot + 2.0 * qd2 + 2.0 * qd3 + qd4);
  next.qdot = s.qdot + (h / 6.0) * (k1.qdd + 2.0 * k2.qdd + 2.0 * k3.qdd + k4.qdd);
  next.theta = s.theta + (h / 6.0) * (s.thetadot + 2.0 * td2 + 2.0 * td3 + td4);
  next.thetadot = s.thetadot + (h / 6.0) * (k1.thetadd + 2.0 * k2.thetadd + 2.0 * k3.thetadd + k4.thetadd);
  if (work) {
    work->input = (h / 6.0) * (k1.input_power + 2.0 * k2.input_power + 2.0 * k3.input_power + k4.input_power);
    work->friction =
        (h / 6.0) * (k1.friction_power + 2.0 * k2.friction_power + 2.0 * k3.friction_power + k4.friction_power);
  }
  return next;
}

double stored_energy(const RobotModel& model, const FjrState& state, double reference_potential) {
  state.validate(model.dof());
  const VectorX deflection = state.theta - state.q;
  return kinetic_energy(model, state.q, state.qdot) +
         0.5 * state.thetadot.dot(model.motor_inertia().cwiseProduct(state.thetadot)) +
         0.5 * deflection.dot(model.stiffness().cwiseProduct(deflection)) + potential_energy(model, state.q) -
         reference_potential;
}

std::string TrajectoryLog::csv_header(Eigen::Index dof) {
  std::vector<std::string> cols{"t"};
  for (const char* stem : {"q", "qdot", "theta", "thetadot", "tau_m", "tau_j", "tau_ext"})
    csv::append_repeated(cols, stem, dof);
  cols.insert(cols.end(), {"E_stored", "E_in", "E_diss"});
  return csv::join(cols);
}

void TrajectoryLog::write_csv(std::ostream& out) const {
  out << csv_header(dof) << '\n';
  for (const TrajectorySample& s : samples) {
    csv::Row row;
    row.add(s.state.time)
        .add(s.state.q)
        .add(s.state.qdot)
        .add(s.state.theta)
        .add(s.state.thetadot)
        .add(s.tau_m)
        .add(s.tau_j)
        .add(s.tau_ext)
        .add(s.stored)
        .add(s.input)
        .add(s.dissipated);
    out << row.str() << '\n';
  }
}

TrajectoryLog run(const RobotModel& model, const FrictionModel& fm, const FjrState& initial,
                  const MotorController& controller, const ExternalTorqueSource& external, double duration,
                  const SimConfig& cfg) {
  if (!(duration > 0.0)) throw std::invalid_argument("run duration must be positive");
  cfg.validate();
  const Eigen::Index n = model.dof();
  fm.validate(n);
  initial.validate(n);

  TrajectoryLog log;
  log.dof = n;
  log.reference_potential = potential_energy(model, initial.q);
  const auto steps = static_cast<long>(std::llround(duration / cfg.dt));
  log.samples.reserve(static_cast<size_t>(steps) + 1);

  FjrState state = initial;
  VectorX previous_tau_j;
  double input = 0.0, dissipated = 0.0;
  for (long k = 0; k <= steps; ++k) {
    Measurement meas;
    meas.time = state.time;
    meas.theta = state.theta;
    meas.thetadot = state.thetadot;
    meas.tau_j = joint_torque(model, state);
    meas.tau_j_dot = previous_tau_j.size() == n ? VectorX((meas.tau_j - previous_tau_j) / cfg.dt) : VectorX::Zero(n);
    meas.q = state.q;
    meas.qdot = state.qdot;
    previous_tau_j = meas.tau_j;

    TrajectorySample sample;
    sample.tau_m = controller ? controller(meas) : VectorX::Zero(n);
    sample.tau_ext = external ? external(state.time, state) : VectorX::Zero(n);
    sample.tau_j = meas.tau_j;
    sample.state = state;
    sample.stored = stored_energy(model, state, log.reference_potential);
    sample.input = input;
    sample.dissipated = dissipated;
    log.samples.push_back(sample);
    if (k == steps) break;

    StepWork work;
    try {
      state = step(model, fm, state, sample.tau_m, sample.tau_ext, cfg, &work);
    } catch (const std::exception& e) {
      throw SolverError("simulation failed at t=" + csv::number(state.time) + " s: " + e.what());
    }
    // Time is re-derived from the step index so long runs do not accumulate drift.
    state.time = initial.time + static_cast<double>(k + 1) * cfg.dt;
    input += work.input;
    dissipated -= work.friction;
  }
  return log;
}

}  // namespace hapticlab
