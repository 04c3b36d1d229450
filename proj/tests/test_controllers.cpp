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

#include "hapticlab/controllers.hpp"
#include "hapticlab/dynamics.hpp"
#include "hapticlab/experiments.hpp"
#include "hapticlab/kinematics.hpp"
#include "test_support.hpp"

using namespace hapticlab;

namespace {

VectorX vec1(double x) { return VectorX::Constant(1, x); }

double friction_of(double fc, double fv, double v) { return fc + fv * v; }

// Feeds one synthetic constant-velocity window: a rest sample, `samples`
// moving samples with energy above the rearm level, then the closing sample.
void feed_window(FrictionEstimator& est, double fc, double fv, double v, int samples, double dt) {
  const double tau = friction_of(fc, fv, v);
  est.update(vec1(tau), vec1(0.0), 1.0, dt);
  for (int i = 0; i < samples; ++i) est.update(vec1(tau), vec1(v), 1.0, dt);
  est.update(vec1(tau), vec1(v), 0.0, dt);
}

}  // namespace

TEST_CASE("inertia reshaping law") {
  const ReshapeConfig off = ReshapeConfig::disabled(3);
  const VectorX tau_j = VectorX::LinSpaced(3, -1.0, 2.0), u = VectorX::LinSpaced(3, 0.5, -0.7);
  CHECK(inertia_reshape(tau_j, u, off) == u);
  CHECK(inertia_reshape(vec1(2.0), vec1(0.0), ReshapeConfig::uniform(1, 3.0))[0] == -4.0);
  CHECK_THROWS_AS(inertia_reshape(tau_j, VectorX::Zero(2), off), DimensionError);
  CHECK_THROWS(ReshapeConfig::uniform(2, 0.5).validate(2));

  const RobotModel panda = builtin_model("panda_like");
  const ReshapeConfig grouped = ReshapeConfig::by_group(panda);
  for (Eigen::Index i = 0; i < 7; ++i) CHECK(grouped.ratio[i] == (i < 4 ? 3.0 : 4.0));
  CHECK(grouped.desired_motor_inertia(panda)[0] == doctest::Approx(0.1));
}

TEST_CASE("closed loop realizes the reshaped motor dynamics") {
  const RobotModel m = builtin_model("joint1");
  const FrictionModel fm = FrictionModel::uniform(1, 0.5, 0.2);
  for (double r : {1.0, 2.0, 3.0, 4.0}) {
    const InertiaFit fit = identify_apparent_inertia(m, fm, r, 2.0, 1.0, 0.1, SimConfig{});
    MESSAGE("r=" << r << " expected " << fit.expected << " identified " << fit.identified);
    CHECK(fit.relative_error < 0.02);
  }
}

TEST_CASE("two constant-speed windows identify both coefficients") {
  const double fc = 0.5, fv = 0.2, dt = 1e-3;
  const double t_window = 2000.5 * dt;  // trapezoid: half an interval from the rest sample
  const double e_in = friction_of(fc, fv, 0.4) * 0.4 * t_window;
  for (double lambda : {0.0, 1e-6}) {
    CAPTURE(lambda);
    EstimatorConfig cfg;
    cfg.regularization = lambda;
    FrictionEstimator est(1, cfg);

    feed_window(est, fc, fv, 0.4, 2000, dt);
    REQUIRE(est.events().size() == 1);
    CHECK(est.events().back().accepted[0]);
    CHECK_FALSE(est.events().back().diverse);
    // One window only pins the line f_c D_c + f_v D_v = E_in.
    const double on_line = est.coulomb()[0] * 0.4 * t_window + est.viscous()[0] * 0.16 * t_window;
    const double tol = lambda == 0.0 ? 1e-9 : 1e-5;
    CHECK(std::abs(on_line - e_in) < tol * e_in);
    if (lambda == 0.0) {
      // minimum-norm point of the line is parallel to (D_c, D_v)
      CHECK(std::abs(est.coulomb()[0] * 0.16 - est.viscous()[0] * 0.4) < 1e-12);
    }

    feed_window(est, fc, fv, 1.2, 1500, dt);
    REQUIRE(est.events().size() == 2);
    CHECK(est.events().back().diverse);
    CHECK(std::abs(est.coulomb()[0] - fc) < tol * fc);
    CHECK(std::abs(est.viscous()[0] - fv) < tol * fv);
  }
}

TEST_CASE("estimator holds without excitation") {
  FrictionEstimator est(1);
  for (int i = 0; i < 1000; ++i) est.update(vec1(0.3), vec1(0.0), 0.0, 1e-3);
  CHECK(est.events().empty());
  CHECK(est.coulomb()[0] == 0.0);

  feed_window(est, 0.5, 0.2, 0.4, 2000, 1e-3);
  const double fc = est.coulomb()[0], fv = est.viscous()[0];
  // Energy rises and falls while the joint barely moves: event skipped.
  est.update(vec1(0.0), vec1(1e-4), 1.0, 1e-3);
  est.update(vec1(0.0), vec1(1e-4), 0.0, 1e-3);
  REQUIRE(est.events().size() == 2);
  CHECK_FALSE(est.events().back().accepted[0]);
  CHECK(est.last_event_ill_conditioned());
  CHECK(est.coulomb()[0] == fc);
  CHECK(est.viscous()[0] == fv);
}

TEST_CASE("estimates are projected onto the non-negative quadrant") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    std::deque<EnergyWindow> rows;
    for (int k = 0; k < 3; ++k) {
      rows.push_back({testing::uniform(rng, 0.0, 2.0), testing::uniform(rng, 0.0, 2.0),
                      testing::uniform(rng, -1.0, 1.0)});
    }
    const Eigen::Vector2d f = solve_friction_windows(rows, 1e-6);
    CHECK(f.minCoeff() >= 0.0);
    // KKT conditions of min |A f - e|^2 + lambda |f|^2 subject to f >= 0.
    Eigen::Matrix2d normal = 1e-6 * Eigen::Matrix2d::Identity();
    Eigen::Vector2d rhs = Eigen::Vector2d::Zero();
    for (const auto& r : rows) {
      const Eigen::Vector2d a(r.coulomb_basis, r.viscous_basis);
      normal += a * a.transpose();
      rhs += a * r.input;
    }
    const Eigen::Vector2d grad = normal * f - rhs;
    for (int i = 0; i < 2; ++i) {
      if (f[i] > 0.0) CHECK(std::abs(grad[i]) < 1e-9);
      else CHECK(grad[i] > -1e-9);
    }
  }
}

TEST_CASE("simulated estimator converges through rest") {
  const RobotModel m = builtin_model("joint1");
  EstimationSession session(m, FrictionModel::uniform(1, 0.5, 0.2), ReshapeConfig::disabled(1), EstimatorConfig{},
                            ExcitationConfig{}, SimConfig{});
  CHECK(session.run_events(10, 100.0) == 10);
  const FrictionEstimator& est = session.estimator();
  MESSAGE("estimates " << est.coulomb()[0] << " " << est.viscous()[0]);
  CHECK(std::abs(est.coulomb()[0] - 0.5) < 0.05 * 0.5);
  CHECK(std::abs(est.viscous()[0] - 0.2) < 0.05 * 0.2);

  session.set_friction(FrictionModel::uniform(1, 0.75, 0.3));
  CHECK(session.run_events(10, 100.0) == 10);
  MESSAGE("after step " << est.coulomb()[0] << " " << est.viscous()[0]);
  CHECK(std::abs(est.coulomb()[0] - 0.75) < 0.05 * 0.75);
  CHECK(std::abs(est.viscous()[0] - 0.3) < 0.05 * 0.3);
}

TEST_CASE("frictionless arm yields near-zero estimates") {
  EstimationSession session(builtin_model("joint1"), FrictionModel::none(1), ReshapeConfig::disabled(1),
                            EstimatorConfig{}, ExcitationConfig{}, SimConfig{});
  session.run_events(10, 40.0);
  CHECK(session.estimator().coulomb()[0] <= 1e-3);
  CHECK(session.estimator().viscous()[0] <= 1e-3);
}

TEST_CASE("friction compensation cancels the modeled friction") {
  const FrictionModel fm = FrictionModel::uniform(3, 0.5, 0.2);
  CHECK(friction_compensation(fm.coulomb, fm.viscous, VectorX::Zero(3), fm.deadband).norm() == 0.0);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const VectorX v = testing::random_vector(rng, 3, 2.0);
    const VectorX full = friction_compensation(fm.coulomb, fm.viscous, v, fm.deadband, 1.0);
    CHECK((full + friction_torque(fm, v)).norm() == 0.0);
    const VectorX partial = friction_compensation(fm.coulomb, fm.viscous, v, fm.deadband, 0.9);
    CHECK((partial - 0.9 * full).norm() <= 1e-15 * full.norm());
  }
  CHECK_THROWS(friction_compensation(fm.coulomb, fm.viscous, VectorX::Zero(3), fm.deadband, 1.5));
}

TEST_CASE("haptic control renders wrenches through the Jacobian") {
  const RobotModel panda = builtin_model("panda_like");
  const VectorX q = (VectorX(7) << 0.1, -0.4, 0.2, -2.0, 0.1, 1.6, 0.7).finished();
  Measurement meas;
  meas.q = q;
  meas.qdot = VectorX::Zero(7);
  meas.theta = q;
  meas.thetadot = VectorX::Zero(7);
  meas.tau_j = gravity_vector(panda, q);

  HapticConfig cfg;
  cfg.reshape = ReshapeConfig::disabled(7);
  cfg.coulomb_estimate = cfg.viscous_estimate = VectorX::Zero(7);
  Wrench push;
  push.force = Vector3(0.0, 0.0, 10.0);
  const HapticCommand cmd = haptic_control(panda, meas, push, cfg);
  Vector6 w;
  w << 0, 0, 10, 0, 0, 0;
  const VectorX expected = gravity_vector(panda, q) + jacobian(panda, q).transpose() * w;
  CHECK((cmd.u - expected).norm() < 1e-12);
  CHECK((cmd.tau_m - expected).norm() < 1e-12);
  CHECK_FALSE(cmd.any_saturated);

  push.force = Vector3(0.0, 0.0, 5000.0);
  const HapticCommand big = haptic_control(panda, meas, push, cfg);
  CHECK(big.any_saturated);
  for (Eigen::Index i = 0; i < 7; ++i) {
    CHECK(std::abs(big.tau_m[i]) <= panda.torque_limits()[i]);
    if (big.saturated[static_cast<size_t>(i)]) CHECK(std::abs(big.tau_m[i]) == panda.torque_limits()[i]);
  }

  push.frame = Frame::kEndEffector;
  CHECK_THROWS(haptic_control(panda, meas, push, cfg));
  meas.q = VectorX::Zero(6);
  push.frame = Frame::kBase;
  CHECK_THROWS_AS(haptic_control(panda, meas, push, cfg), DimensionError);
}

TEST_CASE("gravity-compensated reshaped arm holds its pose") {
  const RobotModel panda = builtin_model("panda_like");
  const VectorX q0 = (VectorX(7) << 0.0, -0.5, 0.0, -2.0, 0.0, 1.6, 0.8).finished();
  auto hold = [&](const FrictionModel& fm, const SimConfig& sim) {
    REQUIRE(friction_step_ratio(panda, fm, sim.dt) < friction_step_limit(sim.integrator));
    HapticConfig cfg;
    cfg.reshape = ReshapeConfig::by_group(panda);
    cfg.coulomb_estimate = fm.coulomb.cwiseQuotient(cfg.reshape.ratio);
    cfg.viscous_estimate = fm.viscous.cwiseQuotient(cfg.reshape.ratio);
    cfg.torque_lead = 0.5 * sim.dt;
    auto controller = [&](const Measurement& m) { return haptic_control(panda, m, Wrench{}, cfg).tau_m; };
    const TrajectoryLog log = run(panda, fm, FjrState::gravity_balanced(panda, q0), controller, nullptr, 10.0, sim);
    double drift = 0.0;
    for (const auto& s : log.samples) drift = std::max(drift, (s.state.q - q0).cwiseAbs().maxCoeff());
    return drift;
  };
  CHECK(hold(FrictionModel::none(7), SimConfig{}) < 1e-3);
  CHECK(hold(FrictionModel::uniform(7, 0.3, 0.1), SimConfig{2e-4, Integrator::kRk4}) < 1e-3);
}

TEST_CASE("friction step ratio flags stiff Coulomb regularization") {
  const RobotModel panda = builtin_model("panda_like");
  const FrictionModel fm = FrictionModel::uniform(7, 0.3, 0.1);
  // wrist joint: 0.3 * 1e-3 / (1e-3 * 0.06)
  CHECK(friction_step_ratio(panda, fm, 1e-3) == doctest::Approx(5.0));
  CHECK(friction_step_ratio(panda, fm, 1e-3) > friction_step_limit(Integrator::kRk4));
}

TEST_CASE("reshaping divides reflected friction and the modes are ordered") {
  const RobotModel m = builtin_model("joint1");
  const FrictionModel fm = FrictionModel::uniform(1, 0.5, 0.2);
  const SweepConfig cfg;
  const SweepResult res = friction_sweep(m, fm, cfg, SimConfig{});
  const double r = res.ratio[0];
  for (size_t i = 0; i < cfg.velocities.size(); ++i) {
    const double none = res.torque(CompensationMode::kNone, i);
    const double reshaped = res.torque(CompensationMode::kReshaping, i);
    const double fc_only = res.torque(CompensationMode::kFriction, i);
    const double combined = res.torque(CompensationMode::kCombined, i);
    CAPTURE(cfg.velocities[i]);
    CHECK(std::abs(none - friction_of(0.5, 0.2, cfg.velocities[i])) < 1e-3);
    CHECK(std::abs(reshaped / none - 1.0 / r) < 0.05 / r);
    CHECK(combined <= reshaped + 1e-6);
    CHECK(combined <= fc_only + 1e-6);
    for (double t : {reshaped, fc_only, combined}) CHECK(t <= none + 1e-6);
  }
}
