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
#include <sstream>

#include "hapticlab/dynamics.hpp"
#include "hapticlab/fjr.hpp"
#include "test_support.hpp"

using namespace hapticlab;
using hapticlab::testing::random_vector;

namespace {

RobotModel vertical_planar2() {
  RobotModel m = builtin_model("planar2");
  for (auto& j : m.joints) j.axis = -Vector3::UnitY();
  m.name = "vertical_planar2";
  return m;
}

RobotModel weightless(RobotModel m) {
  m.gravity.setZero();
  return m;
}

FjrState excited_state(const RobotModel& m) {
  FjrState s = FjrState::at_rest(VectorX::LinSpaced(m.dof(), 0.3, -0.4));
  s.qdot = VectorX::LinSpaced(m.dof(), 1.0, -0.5);
  s.theta = s.q + VectorX::Constant(m.dof(), 0.02);
  s.thetadot = VectorX::LinSpaced(m.dof(), 0.5, 0.8);
  return s;
}

}  // namespace

TEST_CASE("joint torque is the elastic spring torque") {
  RobotModel m = builtin_model("joint1");
  m.joints[0].stiffness = 100.0;
  FjrState s = FjrState::at_rest(VectorX::Constant(1, 0.4));
  CHECK(joint_torque(m, s).norm() == 0.0);
  s.theta[0] = s.q[0] + 0.01;
  CHECK(joint_torque(m, s)[0] == doctest::Approx(1.0).epsilon(1e-12));

  std::mt19937_64 rng(1);
  const RobotModel panda = builtin_model("panda_like");
  for (int i = 0; i < 20; ++i) {
    FjrState r = FjrState::at_rest(random_vector(rng, 7, 2.0));
    r.theta = r.q + random_vector(rng, 7, 0.05);
    const VectorX tau = joint_torque(panda, r);
    for (Eigen::Index k = 0; k < 7; ++k) {
      const double oracle = panda.joints[static_cast<size_t>(k)].stiffness * (r.theta[k] - r.q[k]);
      CHECK(std::abs(tau[k] - oracle) <= 1e-15 * std::max(1.0, std::abs(oracle)));
    }
  }
}

TEST_CASE("friction torque opposes motion") {
  const FrictionModel fm = FrictionModel::uniform(3, 1.0, 0.5, 1e-3);
  CHECK(friction_torque(fm, VectorX::Zero(3)).norm() == 0.0);
  CHECK(friction_torque(fm, VectorX::Constant(3, 2.0))[1] == doctest::Approx(-2.0).epsilon(1e-15));
  std::mt19937_64 rng(2);
  for (int i = 0; i < 100; ++i) {
    VectorX v = random_vector(rng, 3, 3.0);
    const VectorX tau = friction_torque(fm, v);
    for (Eigen::Index k = 0; k < 3; ++k) {
      if (std::abs(v[k]) > fm.deadband) CHECK(tau[k] * v[k] < 0.0);
    }
  }
  CHECK_THROWS_AS(friction_torque(fm, VectorX::Zero(2)), DimensionError);
  CHECK_THROWS(FrictionModel::uniform(1, -1.0, 0.0).validate(1));
}

TEST_CASE("gravity-balanced equilibrium is held") {
  const RobotModel p = builtin_model("pendulum1");
  const FjrState start = FjrState::gravity_balanced(p, VectorX::Constant(1, 0.3));
  const VectorX tau_m = gravity_vector(p, start.q);
  const FrictionModel none = FrictionModel::none(1);
  SimConfig cfg;
  FjrState s = start;
  for (int i = 0; i < 1000; ++i) s = step(p, none, s, tau_m, VectorX::Zero(1), cfg);
  CHECK(std::abs(s.q[0] - start.q[0]) < 1e-9);
  CHECK(std::abs(s.theta[0] - start.theta[0]) < 1e-9);
  CHECK(std::abs(s.qdot[0]) < 1e-9);
}

TEST_CASE("free motion advances at constant rate") {
  const RobotModel m = weightless(builtin_model("joint1"));
  FjrState s = FjrState::at_rest(VectorX::Zero(1));
  s.qdot[0] = s.thetadot[0] = 0.7;
  for (auto integrator : {Integrator::kRk4, Integrator::kSemiImplicitEuler}) {
    SimConfig cfg{1e-3, integrator};
    FjrState x = s;
    for (int i = 0; i < 2000; ++i) x = step(m, FrictionModel::none(1), x, VectorX::Zero(1), VectorX::Zero(1), cfg);
    CHECK(std::abs(x.q[0] - 0.7 * 2.0) < 1e-9);
    CHECK(std::abs(x.qdot[0] - 0.7) < 1e-9);
  }
}

TEST_CASE("integrators agree as the step shrinks") {
  const RobotModel m = vertical_planar2();
  const FrictionModel fm = FrictionModel::uniform(2, 0.2, 0.1);
  auto simulate = [&](Integrator integ, double dt) {
    SimConfig cfg{dt, integ};
    FjrState s = excited_state(m);
    const auto steps = static_cast<int>(std::lround(0.2 / dt));
    for (int i = 0; i < steps; ++i) s = step(m, fm, s, VectorX::Constant(2, 0.5), VectorX::Zero(2), cfg);
    return s;
  };
  auto gap = [&](double dt) {
    const FjrState a = simulate(Integrator::kRk4, dt);
    const FjrState b = simulate(Integrator::kSemiImplicitEuler, dt);
    return (a.q - b.q).norm() + (a.theta - b.theta).norm();
  };
  const double g1 = gap(2e-4), g2 = gap(1e-4);
  CHECK(g2 < g1);
  // semi-implicit Euler is first order: halving dt halves the gap
  CHECK(g1 / g2 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("stored energy references the start posture") {
  const RobotModel p = builtin_model("pendulum1");
  const VectorX q0 = VectorX::Zero(1);
  const double ref = potential_energy(p, q0);
  CHECK(std::abs(stored_energy(p, FjrState::at_rest(q0), ref)) < 1e-15);
  const double lift = 0.4;
  const FjrState lifted = FjrState::at_rest(VectorX::Constant(1, lift));
  CHECK(std::abs(stored_energy(p, lifted, ref) - 1.0 * 9.81 * std::sin(lift)) < 1e-10);
}

TEST_CASE("frictionless unactuated arm conserves energy") {
  const RobotModel m = vertical_planar2();
  const FjrState start = excited_state(m);
  const SimConfig cfg{1e-4, Integrator::kRk4};
  const TrajectoryLog log = run(m, FrictionModel::none(2), start, nullptr, nullptr, 1.0, cfg);
  const double e0 = log.samples.front().stored;
  REQUIRE(e0 > 0.0);
  double worst = 0.0;
  for (const auto& s : log.samples) worst = std::max(worst, std::abs(s.stored - e0));
  MESSAGE("relative drift over 1 s: " << worst / e0);
  CHECK(worst / e0 < 1e-6);
}

TEST_CASE("friction makes stored energy non-increasing") {
  const RobotModel m = vertical_planar2();
  const FrictionModel fm = FrictionModel::uniform(2, 0.3, 0.2);
  const TrajectoryLog log = run(m, fm, excited_state(m), nullptr, nullptr, 1.0, SimConfig{1e-4, Integrator::kRk4});
  const double e0 = std::abs(log.samples.front().stored);
  for (size_t i = 1; i < log.samples.size(); ++i) {
    CHECK(log.samples[i].stored <= log.samples[i - 1].stored + 1e-9 * e0);
  }
}

TEST_CASE("work-energy identity holds on driven runs with friction") {
  const RobotModel m = vertical_planar2();
  const FrictionModel fm = FrictionModel::uniform(2, 0.3, 0.2);
  auto controller = [](const Measurement& meas) {
    return VectorX(VectorX::Constant(2, 1.5 * std::sin(6.0 * meas.time)));
  };
  auto external = [](double t, const FjrState&) { return VectorX(VectorX::Constant(2, 0.4 * std::cos(3.0 * t))); };
  for (auto integ : {Integrator::kRk4, Integrator::kSemiImplicitEuler}) {
    const SimConfig cfg{integ == Integrator::kRk4 ? 1e-3 : 1e-4, integ};
    const TrajectoryLog log = run(m, fm, excited_state(m), controller, external, 1.0, cfg);
    const auto& last = log.samples.back();
    const double delta = last.stored - log.samples.front().stored;
    const double balance = last.input - last.dissipated;
    const double scale = std::max({std::abs(delta), std::abs(last.input), std::abs(last.dissipated)});
    CHECK(std::abs(delta - balance) / scale < 1e-4);
  }
}

TEST_CASE("run logging, counting and determinism") {
  const RobotModel m = weightless(builtin_model("joint1"));
  const FjrState rest = FjrState::at_rest(VectorX::Constant(1, 0.25));
  const TrajectoryLog idle = run(m, FrictionModel::none(1), rest, nullptr, nullptr, 1.0, SimConfig{});
  CHECK(idle.samples.size() == 1001);
  CHECK(idle.samples.back().state.time == doctest::Approx(1.0).epsilon(1e-12));
  for (const auto& s : idle.samples) {
    CHECK(s.state.q == rest.q);
    CHECK(s.state.theta == rest.theta);
  }

  // Constant motor torque: logged input work equals tau * (theta(T) - theta(0)).
  const double tau = 0.8;
  auto constant = [&](const Measurement&) { return VectorX(VectorX::Constant(1, tau)); };
  const TrajectoryLog pushed = run(m, FrictionModel::none(1), rest, constant, nullptr, 1.0, SimConfig{});
  const double analytic = tau * (pushed.samples.back().state.theta[0] - rest.theta[0]);
  CHECK(std::abs(pushed.samples.back().input - analytic) < 1e-3 * std::abs(analytic));

  std::ostringstream a, b;
  const FrictionModel fm = FrictionModel::uniform(1, 0.5, 0.2);
  run(m, fm, rest, constant, nullptr, 0.5, SimConfig{}).write_csv(a);
  run(m, fm, rest, constant, nullptr, 0.5, SimConfig{}).write_csv(b);
  CHECK(a.str() == b.str());

  std::istringstream lines(a.str());
  std::string header;
  std::getline(lines, header);
  CHECK(header == "t,q0,qdot0,theta0,thetadot0,tau_m0,tau_j0,tau_ext0,E_stored,E_in,E_diss");
  for (std::string line; std::getline(lines, line);) {
    CHECK(std::count(line.begin(), line.end(), ',') == 10);
  }
}

TEST_CASE("run reports the failing timestamp") {
  const RobotModel m = builtin_model("joint1");
  int calls = 0;
  auto diverging = [&](const Measurement&) {
    ++calls;
    return VectorX(VectorX::Constant(1, calls > 10 ? std::numeric_limits<double>::infinity() : 0.0));
  };
  try {
    run(m, FrictionModel::none(1), FjrState::at_rest(VectorX::Zero(1)), diverging, nullptr, 1.0, SimConfig{});
    FAIL("expected failure");
  } catch (const SolverError& e) {
    CHECK(std::string(e.what()).find("t=0.01") != std::string::npos);
  }
  CHECK_THROWS(run(m, FrictionModel::none(1), FjrState::at_rest(VectorX::Zero(1)), nullptr, nullptr, 0.0, SimConfig{}));
  CHECK_THROWS((SimConfig{0.5, Integrator::kRk4}).validate());
}
