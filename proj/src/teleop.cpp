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

#include "hapticlab/teleop.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "hapticlab/csv.hpp"
#include "hapticlab/dynamics.hpp"
#include "hapticlab/kinematics.hpp"

namespace hapticlab {

void TeleopConfig::validate() const {
  for (double g : {stiffness, rotational_stiffness, damping, rotational_damping, joint_damping}) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("teleop gains must be finite and >= 0");
  }
  if (!(reflection_scale > 0.0 && reflection_scale <= 1.0))
    throw std::invalid_argument("reflection scale must lie in (0, 1]");
  if (buffer_capacity < 1) throw std::invalid_argument("buffer capacity must be positive");
  if (delay < 0 || delay >= buffer_capacity)
    throw std::invalid_argument("delay must lie in [0, buffer_capacity) steps");
}

VirtualEnvironment VirtualEnvironment::wall(const Vector3& point, const Vector3& normal, double stiffness,
                                            double damping) {
  VirtualEnvironment env;
  env.present = true;
  env.point = point;
  env.normal = normal;
  env.stiffness = stiffness;
  env.damping = damping;
  env.validate();
  return env;
}

void VirtualEnvironment::validate() const {
  if (!present) return;
  if (!point.allFinite() || !normal.allFinite() || std::abs(normal.norm() - 1.0) > 1e-9)
    throw std::invalid_argument("wall needs a finite point and a unit normal");
  if (!(stiffness >= 0.0 && damping >= 0.0)) throw std::invalid_argument("wall stiffness and damping must be >= 0");
}

VirtualEnvironment VirtualEnvironment::mirrored(double plane_y) const {
  VirtualEnvironment env = *this;
  env.point = mirror_point(point, plane_y);
  env.normal = mirror_vector(normal);
  return env;
}

Wrench virtual_wall_wrench(const Pose& pose, const Vector6& twist, const VirtualEnvironment& env) {
  Wrench w;
  w.frame = Frame::kHuman;
  if (!env.present) return w;
  const double depth = env.normal.dot(env.point - pose.translation);
  if (depth <= 0.0) return w;
  const double outward_speed = env.normal.dot(twist.head<3>());
  w.force = std::max(0.0, env.stiffness * depth - env.damping * outward_speed) * env.normal;
  return w;
}

DelayLine::DelayLine(int delay, int capacity) : delay_(delay) {
  if (delay < 0 || delay >= capacity) throw std::invalid_argument("delay must lie in [0, capacity)");
  ring_.resize(static_cast<size_t>(delay) + 1);
}

std::optional<VectorX> DelayLine::push(const VectorX& value) {
  const long size = static_cast<long>(ring_.size());
  ring_[static_cast<size_t>(pushed_ % size)] = value;
  ++pushed_;
  if (pushed_ <= delay_) return std::nullopt;
  return ring_[static_cast<size_t>((pushed_ - 1 - delay_) % size)];
}

ChannelBuffers::ChannelBuffers(const TeleopConfig& cfg)
    : forward(cfg.delay, cfg.buffer_capacity), backward(cfg.delay, cfg.buffer_capacity) {}

namespace {

// Position, row-major rotation and twist: 18 values, no rounding on the way.
VectorX pack_motion(const Pose& p, const Vector6& twist) {
  VectorX v(18);
  v.head<3>() = p.translation;
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) v[3 + 3 * r + c] = p.rotation(r, c);
  v.tail<6>() = twist;
  return v;
}

Pose unpack_pose(const VectorX& v) {
  Pose p;
  p.translation = v.head<3>();
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) p.rotation(r, c) = v[3 + 3 * r + c];
  return p;
}

}  // namespace

Coupling couple(const Pose& master, const Vector6& master_twist, const Pose& slave, const Vector6& slave_twist,
                const Wrench& contact, const TeleopConfig& cfg, ChannelBuffers& buffers) {
  require_frame(contact, Frame::kHuman, "contact wrench");
  Coupling out;
  out.command.frame = Frame::kHuman;
  out.feedback.frame = Frame::kHuman;

  if (const auto sent = buffers.forward.push(pack_motion(master, master_twist))) {
    const Pose target = unpack_pose(*sent);
    out.target = target;
    out.target_twist = sent->tail<6>();
    out.command.force = cfg.stiffness * (target.translation - slave.translation) +
                        cfg.damping * (out.target_twist.head<3>() - slave_twist.head<3>());
    out.command.torque = cfg.rotational_stiffness * orientation_error(target.rotation, slave.rotation) +
                         cfg.rotational_damping * (out.target_twist.tail<3>() - slave_twist.tail<3>());
  }
  if (const auto reflected = buffers.backward.push(contact.stacked())) {
    out.feedback = Wrench::from_stacked(-cfg.reflection_scale * *reflected, Frame::kHuman);
  }
  return out;
}

HandTrajectory::HandTrajectory(std::vector<Keyframe> keys) : keys_(std::move(keys)) {
  if (keys_.empty()) throw std::invalid_argument("hand trajectory needs at least one keyframe");
  for (size_t i = 0; i < keys_.size(); ++i) {
    const Keyframe& k = keys_[i];
    if (!std::isfinite(k.time) || !k.position.allFinite() || !k.rotation.allFinite())
      throw std::invalid_argument("keyframes must be finite");
    if (i > 0 && !(k.time > keys_[i - 1].time))
      throw std::invalid_argument("keyframe times must be strictly increasing");
  }
}

namespace {

struct Segment {
  const Keyframe* a;
  const Keyframe* b;
  double s = 0.0;     // eased progress
  double rate = 0.0;  // ds/dt
};

Segment locate(const std::vector<Keyframe>& keys, double t) {
  if (keys.empty()) throw std::logic_error("empty hand trajectory");
  if (t <= keys.front().time) return {&keys.front(), &keys.front()};
  if (t >= keys.back().time) return {&keys.back(), &keys.back()};
  const auto it = std::upper_bound(keys.begin(), keys.end(), t, [](double v, const Keyframe& k) { return v < k.time; });
  const Keyframe& b = *it;
  const Keyframe& a = *(it - 1);
  const double span = b.time - a.time, x = (t - a.time) / span;
  return {&a, &b, x * x * (3.0 - 2.0 * x), 6.0 * x * (1.0 - x) / span};
}

}  // namespace

Pose HandTrajectory::pose(double t) const {
  const Segment seg = locate(keys_, t);
  const Matrix3 ra = rotation_from_vector(seg.a->rotation);
  const Vector3 relative = rotation_vector(ra.transpose() * rotation_from_vector(seg.b->rotation));
  Pose p;
  p.translation = seg.a->position + seg.s * (seg.b->position - seg.a->position);
  p.rotation = ra * rotation_from_vector(seg.s * relative);
  return p;
}

Vector6 HandTrajectory::twist(double t) const {
  const Segment seg = locate(keys_, t);
  Vector6 v = Vector6::Zero();
  if (seg.a == seg.b) return v;
  const Matrix3 ra = rotation_from_vector(seg.a->rotation);
  v.head<3>() = seg.rate * (seg.b->position - seg.a->position);
  v.tail<3>() = seg.rate * (ra * rotation_vector(ra.transpose() * rotation_from_vector(seg.b->rotation)));
  return v;
}

HandTrajectory HandTrajectory::mirrored(double plane_y) const {
  std::vector<Keyframe> keys = keys_;
  for (Keyframe& k : keys) {
    k.position = mirror_point(k.position, plane_y);
    k.rotation = -mirror_vector(k.rotation);
  }
  return HandTrajectory(std::move(keys));
}

void HandSpring::validate() const {
  for (double g : {stiffness, damping, rotational_stiffness, rotational_damping}) {
    if (!(g >= 0.0) || !std::isfinite(g)) throw std::invalid_argument("hand spring gains must be finite and >= 0");
  }
}

const char* to_string(SlaveKind k) { return k == SlaveKind::kRobot ? "robot" : "virtual"; }

SlaveKind slave_kind_from_string(const std::string& s) {
  if (s == "robot") return SlaveKind::kRobot;
  if (s == "virtual") return SlaveKind::kVirtual;
  throw std::invalid_argument("unknown slave kind '" + s + "' (expected robot or virtual)");
}

void SessionConfig::validate() const {
  coupling.validate();
  hand.validate();
  environment.validate();
  master_sim.validate();
  slave_sim.validate();
  if (master_sim.dt != slave_sim.dt) throw std::invalid_argument("master and slave simulations must share dt");
  if (!std::isfinite(sagittal_y)) throw std::invalid_argument("sagittal plane must be finite");
}

std::vector<TeleopSample> TeleopLog::channel(int c) const {
  std::vector<TeleopSample> out;
  for (const auto& s : samples)
    if (s.channel == c) out.push_back(s);
  return out;
}

std::string TeleopLog::csv_header() {
  std::vector<std::string> cols{"t", "channel"};
  for (const char* who : {"master", "slave"})
    for (const char* c : {"px", "py", "pz", "qw", "qx", "qy", "qz"}) cols.push_back(std::string(who) + "_" + c);
  for (const char* who : {"cmd", "fb"})
    for (const char* c : {"fx", "fy", "fz", "tx", "ty", "tz"}) cols.push_back(std::string(who) + "_" + c);
  cols.push_back("tracking_err");
  return csv::join(cols);
}

void TeleopLog::write_csv(std::ostream& out) const {
  out << csv_header() << '\n';
  auto add_pose = [](csv::Row& row, const Pose& p) {
    const Quaternion q = p.quaternion();
    row.add(p.translation).add(q.w()).add(q.x()).add(q.y()).add(q.z());
  };
  for (const auto& s : samples) {
    csv::Row row;
    row.add(s.time).add_text(s.channel == 0 ? "left" : "right");
    add_pose(row, s.master);
    add_pose(row, s.slave);
    row.add(s.command.stacked()).add(s.feedback.stacked()).add(s.tracking_error);
    out << row.str() << '\n';
  }
}

namespace {

struct Arm {
  RobotModel model;
  FrictionModel friction;
  Pose base;
  FjrState state;
  VectorX previous_tau_j;
  double reference_potential = 0.0;

  Measurement measure(double dt) {
    Measurement m;
    m.time = state.time;
    m.theta = state.theta;
    m.thetadot = state.thetadot;
    m.tau_j = joint_torque(model, state);
    m.tau_j_dot = previous_tau_j.size() ? VectorX((m.tau_j - previous_tau_j) / dt) : VectorX::Zero(model.dof());
    m.q = state.q;
    m.qdot = state.qdot;
    previous_tau_j = m.tau_j;
    return m;
  }
  Pose tool() const { return base * forward_kinematics(model, state.q); }
  Vector6 twist(const Matrix6X& j) const {
    const Vector6 local = j * state.qdot;
    Vector6 v;
    v << base.rotation * local.head<3>(), base.rotation * local.tail<3>();
    return v;
  }
  Wrench to_base(const Wrench& w) const {
    require_frame(w, Frame::kHuman, "task-frame wrench");
    return {base.rotation.transpose() * w.force, base.rotation.transpose() * w.torque, Frame::kBase};
  }
  // Kinetic terms use the apparent motor inertia the controller renders.
  RobotModel energy_model;
  double energy() const { return stored_energy(energy_model, state, reference_potential); }
  // Motor position less the spring deflection the last command would hold
  // statically; equals q at rest without motor friction.
  VectorX last_command;
  VectorX motor_posture() const { return state.theta - last_command.cwiseQuotient(model.stiffness()); }
};

struct ChannelSpec {
  const RobotModel* model;
  SetupConfiguration placement;
  VirtualEnvironment environment;
  HandTrajectory hand;
};

void run_channel(int index, const ChannelSpec& spec, const FrictionModel& master_friction,
                 const FrictionModel& slave_friction, const SessionConfig& cfg, double duration, TeleopLog& log) {
  const RobotModel& model = *spec.model;
  const Eigen::Index n = model.dof();
  const double dt = cfg.master_sim.dt;
  Pose grab;
  grab.rotation = axis_angle(Vector3::UnitZ(), spec.placement.grab_angle);

  const IkResult start = solve_ik(model, spec.placement, spec.hand.pose(0.0));
  if (!start.success)
    throw std::runtime_error("initial hand pose is not reachable (" + std::string(to_string(start.failure)) + ")");

  HapticConfig master_control = cfg.master_control;
  if (master_control.reshape.ratio.size() == 0) master_control.reshape = ReshapeConfig::by_group(model);

  Arm master{model, master_friction, spec.placement.base_pose(), FjrState::gravity_balanced(model, start.q), {},
             potential_energy(model, start.q), model, gravity_vector(model, start.q)};
  Arm slave = master;
  slave.friction = slave_friction;
  const VectorX shaped = master_control.reshape.desired_motor_inertia(model);
  for (Eigen::Index i = 0; i < n; ++i) master.energy_model.joints[static_cast<size_t>(i)].motor_inertia = shaped[i];
  if (master_control.coulomb_estimate.size() == 0) master_control.coulomb_estimate = VectorX::Zero(n);
  if (master_control.viscous_estimate.size() == 0) master_control.viscous_estimate = VectorX::Zero(n);
  HapticConfig slave_control;
  slave_control.reshape = ReshapeConfig::disabled(n);
  slave_control.friction_compensation = false;
  slave_control.torque_lead = 0.0;

  ChannelBuffers buffers(cfg.coupling);
  const Pose proxy_home = slave.tool();
  Pose proxy = proxy_home;
  Vector6 proxy_twist = Vector6::Zero();
  const bool robot_slave = cfg.slave == SlaveKind::kRobot;

  const auto steps = static_cast<long>(std::llround(duration / dt));
  for (long k = 0; k <= steps; ++k) {
    const double t = static_cast<double>(k) * dt;
    const Matrix6X jm = jacobian(model, master.state.q), js = jacobian(model, slave.state.q);
    const Pose master_pose = master.tool();
    const Vector6 master_twist = master.twist(jm);
    const Pose slave_pose = robot_slave ? slave.tool() : proxy;
    const Vector6 slave_twist = robot_slave ? slave.twist(js) : proxy_twist;

    const Wrench wall = virtual_wall_wrench(slave_pose, slave_twist, spec.environment);
    const Wrench contact{-wall.force, -wall.torque, Frame::kHuman};
    // The servo closes on motor-side states; link-side feedback through the
    // elastic joints is non-collocated and destabilizes the slave.
    Pose servo_pose = slave_pose;
    Vector6 servo_twist = slave_twist;
    if (robot_slave) {
      const VectorX qbar = slave.motor_posture();
      const Matrix6X jbar = jacobian(model, qbar);
      const Vector6 local = jbar * slave.state.thetadot;
      servo_pose = slave.base * forward_kinematics(model, qbar);
      servo_twist << slave.base.rotation * local.head<3>(), slave.base.rotation * local.tail<3>();
    }
    const Coupling c = couple(master_pose, master_twist, servo_pose, servo_twist, contact, cfg.coupling, buffers);

    // Operator hand.
    const Pose target = spec.hand.pose(t) * grab;
    const Vector6 target_twist = spec.hand.twist(t);
    Wrench hand{cfg.hand.stiffness * (target.translation - master_pose.translation) +
                    cfg.hand.damping * (target_twist.head<3>() - master_twist.head<3>()),
                cfg.hand.rotational_stiffness * orientation_error(target.rotation, master_pose.rotation) +
                    cfg.hand.rotational_damping * (target_twist.tail<3>() - master_twist.tail<3>()),
                Frame::kHuman};

    const Measurement mm = master.measure(dt);
    const VectorX master_tau = haptic_control(model, mm, master.to_base(c.feedback), master_control).tau_m;
    const VectorX master_ext = jm.transpose() * master.to_base(hand).stacked();

    TeleopSample s;
    s.time = t;
    s.channel = index;
    s.master = master_pose;
    s.command = c.command;
    s.feedback = c.feedback;
    s.contact = contact;
    s.operator_power = hand.stacked().dot(master_twist);
    s.loop_energy = master.energy();
    if (const double depth = spec.environment.present ? spec.environment.normal.dot(spec.environment.point -
                                                                                     slave_pose.translation)
                                                      : 0.0;
        depth > 0.0) {
      s.loop_energy += 0.5 * spec.environment.stiffness * depth * depth;
    }
    if (c.target) {
      s.tracking_error = (c.target->translation - slave_pose.translation).norm();
      const Vector3 ep = c.target->translation - servo_pose.translation;
      const Vector3 er = orientation_error(c.target->rotation, servo_pose.rotation);
      s.loop_energy += 0.5 * (cfg.coupling.stiffness * ep.squaredNorm() + cfg.coupling.rotational_stiffness * er.squaredNorm());
    }

    if (robot_slave) {
      s.slave = slave_pose;
      s.loop_energy += slave.energy();
      const Measurement ms = slave.measure(dt);
      const VectorX qbar = slave.motor_posture();
      const VectorX slave_tau = jacobian(model, qbar).transpose() * slave.to_base(c.command).stacked() +
                                gravity_vector(model, ms.q) - cfg.coupling.joint_damping * ms.thetadot;
      const VectorX slave_ext = js.transpose() * slave.to_base(wall).stacked();
      slave.last_command = slave_tau;
      log.samples.push_back(s);
      if (k == steps) break;
      master.state = step(model, master.friction, master.state, master_tau, master_ext, cfg.master_sim);
      slave.state = step(model, slave.friction, slave.state, slave_tau, slave_ext, cfg.slave_sim);
    } else {
      // The proxy follows the delayed master exactly; contact acts one tick later.
      s.slave = proxy;
      s.tracking_error = 0.0;
      log.samples.push_back(s);
      if (k == steps) break;
      master.state = step(model, master.friction, master.state, master_tau, master_ext, cfg.master_sim);
      if (c.target) {
        proxy = *c.target;
        proxy_twist = c.target_twist;
      }
    }
  }
}

}  // namespace

TeleopLog run_session(const RobotModel& model, const FrictionModel& master_friction,
                      const FrictionModel& slave_friction, const SetupConfiguration& placement,
                      const HandTrajectory& hand, const SessionConfig& cfg, double duration,
                      const std::optional<HandTrajectory>& right_hand) {
  cfg.validate();
  placement.validate();
  master_friction.validate(model.dof());
  slave_friction.validate(model.dof());
  if (!(duration > 0.0)) throw std::invalid_argument("session duration must be positive");
  if (hand.keys().empty()) throw std::invalid_argument("hand trajectory is empty");

  TeleopLog log;
  run_channel(0, {&model, placement, cfg.environment, hand}, master_friction, slave_friction, cfg, duration, log);
  if (cfg.bimanual) {
    const RobotModel right = mirrored(model);
    const HandTrajectory script = right_hand ? *right_hand : hand.mirrored(cfg.sagittal_y);
    run_channel(1,
                {&right, mirrored(placement, cfg.sagittal_y), cfg.environment.mirrored(cfg.sagittal_y), script},
                master_friction, slave_friction, cfg, duration, log);
  }
  return log;
}

}  // namespace hapticlab
