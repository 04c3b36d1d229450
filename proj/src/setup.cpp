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

#include "hapticlab/setup.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <stdexcept>
#include <thread>

#include "hapticlab/kinematics.hpp"

namespace hapticlab {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;

Vector3 vector3_from_json(const json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument(path + " must be an array of 3 numbers");
  return {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

json vector3_to_json(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

double radical_inverse(std::uint64_t index, unsigned base) {
  double result = 0.0, f = 1.0 / base;
  while (index > 0) {
    result += f * static_cast<double>(index % base);
    index /= base;
    f /= base;
  }
  return result;
}

double fractional(double x) { return x - std::floor(x); }

}  // namespace

// --- configuration ---------------------------------------------------------

Pose SetupConfiguration::base_pose() const { return Pose::from_rotation_vector(base_position, base_rotation); }

VectorX SetupConfiguration::to_vector() const {
  VectorX v(7);
  v << base_position, base_rotation, grab_angle;
  return v;
}

SetupConfiguration SetupConfiguration::from_vector(const VectorX& v) {
  require_size(v, 7, "setup vector");
  return {v.head<3>(), v.segment<3>(3), v[6]};
}

void SetupConfiguration::validate() const {
  if (!base_position.allFinite() || !base_rotation.allFinite() || !std::isfinite(grab_angle))
    throw std::invalid_argument("setup configuration must be finite");
  if (std::abs(grab_angle) > kPi) throw std::invalid_argument("grab angle must lie in [-pi, pi]");
  if (base_rotation.norm() > kPi + 1e-12) throw std::invalid_argument("base rotation vector must have norm <= pi");
}

RotationConvention rotation_convention_from_string(const std::string& s) {
  if (s == "rotation_vector") return RotationConvention::kRotationVector;
  if (s == "roll_pitch_yaw") return RotationConvention::kRollPitchYaw;
  throw std::invalid_argument("unknown rotation convention '" + s + "' (expected rotation_vector or roll_pitch_yaw)");
}

const char* to_string(RotationConvention c) {
  return c == RotationConvention::kRotationVector ? "rotation_vector" : "roll_pitch_yaw";
}

Vector3 canonical_base_rotation(const Vector3& values, RotationConvention convention) {
  if (convention == RotationConvention::kRotationVector) {
    if (values.norm() <= kPi) return values;
    return rotation_vector(rotation_from_vector(values));
  }
  const Matrix3 r = axis_angle(Vector3::UnitZ(), values.z()) * axis_angle(Vector3::UnitY(), values.y()) *
                    axis_angle(Vector3::UnitX(), values.x());
  return rotation_vector(r);
}

SetupConfiguration setup_from_json(const json& j) {
  if (!j.is_object()) throw std::invalid_argument("setup must be a JSON object");
  const RotationConvention conv = rotation_convention_from_string(j.value("rotation_convention", "rotation_vector"));
  for (const char* key : {"base_position", "base_rotation", "grab_angle"}) {
    if (!j.contains(key)) throw std::invalid_argument(std::string("missing field 'setup.") + key + "'");
  }
  SetupConfiguration c;
  c.base_position = vector3_from_json(j.at("base_position"), "setup.base_position");
  c.base_rotation = canonical_base_rotation(vector3_from_json(j.at("base_rotation"), "setup.base_rotation"), conv);
  c.grab_angle = j.at("grab_angle").get<double>();
  c.validate();
  return c;
}

json setup_to_json(const SetupConfiguration& c) {
  const Quaternion q = c.base_quaternion();
  return {{"base_position", vector3_to_json(c.base_position)},
          {"base_rotation", vector3_to_json(c.base_rotation)},
          {"rotation_convention", "rotation_vector"},
          {"base_quaternion_wxyz", json::array({q.w(), q.x(), q.y(), q.z()})},
          {"grab_angle", c.grab_angle}};
}

SetupConfiguration mirrored(const SetupConfiguration& c, double plane_y) {
  // S exp([r]) S = exp([-S r]) for the reflection S = diag(1, -1, 1).
  return {mirror_point(c.base_position, plane_y), -mirror_vector(c.base_rotation), -c.grab_angle};
}

// --- geometry --------------------------------------------------------------

double segment_distance(const Vector3& p0, const Vector3& p1, const Vector3& q0, const Vector3& q1) {
  const Vector3 d1 = p1 - p0, d2 = q1 - q0, r = p0 - q0;
  const double a = d1.squaredNorm(), e = d2.squaredNorm(), f = d2.dot(r);
  constexpr double eps = 1e-18;
  double s = 0.0, t = 0.0;
  if (a <= eps && e <= eps) return r.norm();
  if (a <= eps) {
    t = std::clamp(f / e, 0.0, 1.0);
  } else {
    const double c = d1.dot(r);
    if (e <= eps) {
      s = std::clamp(-c / a, 0.0, 1.0);
    } else {
      const double b = d1.dot(d2), denom = a * e - b * b;
      s = denom > eps * a * e ? std::clamp((b * f - c * e) / denom, 0.0, 1.0) : 0.0;
      t = (b * s + f) / e;
      if (t < 0.0) {
        t = 0.0;
        s = std::clamp(-c / a, 0.0, 1.0);
      } else if (t > 1.0) {
        t = 1.0;
        s = std::clamp((b - c) / a, 0.0, 1.0);
      }
    }
  }
  return ((p0 + s * d1) - (q0 + t * d2)).norm();
}

double capsule_distance(const Capsule& c1, const Capsule& c2) {
  return segment_distance(c1.a, c1.b, c2.a, c2.b) - c1.radius - c2.radius;
}

// --- human -----------------------------------------------------------------

void HumanModel::validate() const {
  for (double v : {upper_arm, forearm, arm_radius, torso_radius}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw std::invalid_argument("human lengths and radii must be positive");
  }
  if (!(hand_clearance >= 0.0 && hand_clearance < forearm))
    throw std::invalid_argument("hand clearance must lie in [0, forearm)");
  if (!(required_force >= 0.0 && required_torque >= 0.0))
    throw std::invalid_argument("required wrench magnitudes must be non-negative");
  if (!shoulder.allFinite() || !torso_top.allFinite() || !torso_bottom.allFinite())
    throw std::invalid_argument("human geometry must be finite");
}

Vector3 HumanModel::elbow(const Vector3& hand) const {
  const Vector3 axis = hand - shoulder;
  if (!axis.allFinite()) throw std::invalid_argument("hand position must be finite");
  // Out of reach the arm points straight at the hand; too close it folds fully.
  const Vector3 n = axis.norm() > 1e-12 ? Vector3(axis.normalized()) : Vector3(Vector3::UnitX());
  const double d = std::clamp(axis.norm(), std::abs(upper_arm - forearm) + 1e-12, reach());
  const double along = (upper_arm * upper_arm - forearm * forearm + d * d) / (2.0 * d);
  const double radius = std::sqrt(std::max(0.0, upper_arm * upper_arm - along * along));
  Vector3 down = -Vector3::UnitZ() + n.z() * n;  // -z projected onto the swivel plane
  if (down.norm() < 1e-9) down = -Vector3::UnitX() + n.x() * n;
  return shoulder + along * n + radius * down.normalized();
}

std::vector<Capsule> HumanModel::capsules(const Vector3& hand) const {
  const Vector3 e = elbow(hand);
  const Vector3 wrist = hand + (e - hand).normalized() * hand_clearance;
  return {{shoulder, e, arm_radius}, {e, wrist, arm_radius}, {torso_top, torso_bottom, torso_radius}};
}

HumanModel HumanModel::translated(const Vector3& offset) const {
  HumanModel h = *this;
  h.shoulder += offset;
  h.torso_top += offset;
  h.torso_bottom += offset;
  return h;
}

HumanModel human_model_from_json(const json& j) {
  HumanModel hm;
  if (!j.is_object()) throw std::invalid_argument("human model must be a JSON object");
  auto read = [&](const char* key, double& dst) {
    if (j.contains(key)) dst = j.at(key).get<double>();
  };
  auto read3 = [&](const char* key, Vector3& dst) {
    if (j.contains(key)) dst = vector3_from_json(j.at(key), std::string("human.") + key);
  };
  read3("shoulder", hm.shoulder);
  read("upper_arm", hm.upper_arm);
  read("forearm", hm.forearm);
  read("arm_radius", hm.arm_radius);
  read3("torso_top", hm.torso_top);
  read3("torso_bottom", hm.torso_bottom);
  read("torso_radius", hm.torso_radius);
  read("hand_clearance", hm.hand_clearance);
  read("required_force", hm.required_force);
  read("required_torque", hm.required_torque);
  hm.validate();
  return hm;
}

json human_model_to_json(const HumanModel& hm) {
  return {{"shoulder", vector3_to_json(hm.shoulder)},     {"upper_arm", hm.upper_arm},
          {"forearm", hm.forearm},                       {"arm_radius", hm.arm_radius},
          {"torso_top", vector3_to_json(hm.torso_top)},   {"torso_bottom", vector3_to_json(hm.torso_bottom)},
          {"torso_radius", hm.torso_radius},             {"hand_clearance", hm.hand_clearance},
          {"required_force", hm.required_force},         {"required_torque", hm.required_torque},
          {"_note", "simulator geometry constants, not measured human data"}};
}

std::vector<WorkspaceSample> sample_human_workspace(const HumanModel& hm, int count, std::uint64_t seed,
                                                    double tilt) {
  hm.validate();
  if (count <= 0) throw std::invalid_argument("sample count must be positive");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const double shift[3] = {unit(rng), unit(rng), unit(rng)};

  // Neutral grip: vertical handle held from above, tool z pointing down.
  const Matrix3 neutral = axis_angle(Vector3::UnitX(), kPi);
  const Matrix3 grips[5] = {neutral, neutral * axis_angle(Vector3::UnitX(), tilt),
                            neutral * axis_angle(Vector3::UnitX(), -tilt), neutral * axis_angle(Vector3::UnitY(), tilt),
                            neutral * axis_angle(Vector3::UnitY(), -tilt)};

  const double r_in = 0.2 * hm.reach(), r_out = 0.95 * hm.reach();
  // The hand and its handle need room beside the torso.
  const Capsule torso{hm.torso_top, hm.torso_bottom, hm.torso_radius + hm.arm_radius + hm.hand_clearance};
  std::vector<WorkspaceSample> out;
  out.reserve(static_cast<size_t>(count));
  for (std::uint64_t k = 1; static_cast<int>(out.size()) < count; ++k) {
    const double u0 = fractional(radical_inverse(k, 2) + shift[0]);
    const double u1 = fractional(radical_inverse(k, 3) + shift[1]);
    const double u2 = fractional(radical_inverse(k, 5) + shift[2]);
    const double r = std::cbrt(r_in * r_in * r_in + u0 * (r_out * r_out * r_out - r_in * r_in * r_in));
    const double x = u1, rho = std::sqrt(std::max(0.0, 1.0 - x * x)), phi = 2.0 * kPi * u2;
    const Vector3 p = hm.shoulder + r * Vector3(x, rho * std::cos(phi), rho * std::sin(phi));
    if (segment_distance(p, p, torso.a, torso.b) < torso.radius) continue;
    WorkspaceSample s;
    s.hand.translation = p;
    s.hand.rotation = grips[out.size() % 5];
    s.force = hm.required_force;
    s.torque = hm.required_torque;
    out.push_back(s);
  }
  return out;
}

// --- inverse kinematics ----------------------------------------------------

const char* to_string(IkFailure f) {
  switch (f) {
    case IkFailure::kNone:
      return "none";
    case IkFailure::kJointLimits:
      return "joint-limits";
    case IkFailure::kNoConvergence:
      return "no-convergence";
  }
  return "?";
}

Pose tool_target(const SetupConfiguration& config, const Pose& hand) {
  Pose grab;
  grab.rotation = axis_angle(Vector3::UnitZ(), config.grab_angle);
  return config.base_pose().inverse() * (hand * grab);
}

namespace {

struct Attempt {
  VectorX q;
  double position_error = std::numeric_limits<double>::infinity();
  double orientation_error = std::numeric_limits<double>::infinity();
  bool success = false;
  bool at_limit = false;
};

Vector6 pose_error(const RobotModel& model, const Pose& target, const VectorX& q, bool full_pose) {
  const Pose tip = forward_kinematics(model, q);
  Vector6 err;
  err.head<3>() = target.translation - tip.translation;
  err.tail<3>() = full_pose ? orientation_error(target.rotation, tip.rotation) : Vector3::Zero();
  return err;
}

// Undamped Gauss-Newton steps past the tolerance while they keep reducing the
// error. Near the reach boundary the damped iteration stalls with the arm
// visibly bent even though the position error is already within tolerance.
void polish(const RobotModel& model, const Pose& target, Attempt& a, const IkOptions& opt, bool full_pose) {
  const VectorX lo = model.lower_limits(), hi = model.upper_limits();
  const Eigen::Index rows = full_pose ? 6 : 3;
  Vector6 err = pose_error(model, target, a.q, full_pose);
  for (int it = 0; it < opt.polish_iterations && err.norm() > 1e-13; ++it) {
    const MatrixX j = jacobian(model, a.q).topRows(rows);
    VectorX dq = j.completeOrthogonalDecomposition().solve(err.head(rows));
    const double step = dq.cwiseAbs().maxCoeff();
    if (step > opt.max_step) dq *= opt.max_step / step;
    const VectorX q = (a.q + dq).cwiseMax(lo).cwiseMin(hi);
    const Vector6 next = pose_error(model, target, q, full_pose);
    if (!(next.norm() < err.norm())) break;
    a.q = q;
    err = next;
  }
  a.position_error = err.head<3>().norm();
  a.orientation_error = err.tail<3>().norm();
}

Attempt dls_attempt(const RobotModel& model, const Pose& target, VectorX q, const IkOptions& opt, bool full_pose) {
  const VectorX lo = model.lower_limits(), hi = model.upper_limits();
  const Eigen::Index rows = full_pose ? 6 : 3;
  Attempt best;
  int stalled = 0;
  for (int it = 0; it <= opt.max_iterations; ++it) {
    const Pose tip = forward_kinematics(model, q);
    Vector6 err;
    err.head<3>() = target.translation - tip.translation;
    err.tail<3>() = full_pose ? orientation_error(target.rotation, tip.rotation) : Vector3::Zero();
    const double pe = err.head<3>().norm(), oe = err.tail<3>().norm();
    const double merit = pe + 0.1 * oe;
    if (merit < best.position_error + 0.1 * best.orientation_error - 1e-12) {
      best.q = q;
      best.position_error = pe;
      best.orientation_error = oe;
      stalled = 0;
    } else if (++stalled >= opt.stall_iterations) {
      break;
    }
    if (pe < opt.position_tolerance && (!full_pose || oe < opt.orientation_tolerance)) {
      best.q = q;
      best.position_error = pe;
      best.orientation_error = oe;
      best.success = true;
      polish(model, target, best, opt, full_pose);
      return best;
    }
    if (it == opt.max_iterations) break;
    const MatrixX j = jacobian(model, q).topRows(rows);
    const MatrixX jjt = j * j.transpose() + opt.damping * opt.damping * MatrixX::Identity(rows, rows);
    VectorX dq = j.transpose() * jjt.ldlt().solve(err.head(rows));
    const double step = dq.cwiseAbs().maxCoeff();
    if (step > opt.max_step) dq *= opt.max_step / step;
    q = (q + dq).cwiseMax(lo).cwiseMin(hi);
  }
  // Pressed against a limit: within 0.1% of the range.
  const VectorX tol = 1e-3 * (hi - lo);
  best.at_limit = ((best.q - lo).array() < tol.array()).any() || ((hi - best.q).array() < tol.array()).any();
  return best;
}

}  // namespace

IkResult solve_ik_base(const RobotModel& model, const Pose& target, const IkOptions& opt,
                       const PosturePreference& preference) {
  if (!target.is_valid(1e-6) || !target.translation.allFinite()) throw std::invalid_argument("invalid IK target");
  const Eigen::Index n = model.dof();
  const bool full_pose = n >= 6;
  const VectorX lo = model.lower_limits(), hi = model.upper_limits();

  // Seeds: mid-range, then fixed alternating offsets through the range.
  static constexpr double kPattern[4][2] = {{0.3, 0.7}, {0.7, 0.3}, {0.2, 0.2}, {0.8, 0.8}};
  IkResult result;
  // Farther than the sum of all link offsets: no posture can get there.
  double reach = model.tool.translation.norm();
  for (const JointSpec& j : model.joints) reach += j.parent.translation.norm();
  if (target.translation.norm() > reach + opt.position_tolerance) {
    result.q = model.mid_range();
    result.position_error = target.translation.norm() - reach;
    result.failure = IkFailure::kNoConvergence;
    return result;
  }
  Attempt best;
  double best_preference = -std::numeric_limits<double>::infinity();
  for (int k = 0; k <= opt.restarts; ++k) {
    VectorX seed = model.mid_range();
    if (k > 0) {
      const auto& pat = kPattern[(k - 1) % 4];
      for (Eigen::Index i = 0; i < n; ++i) seed[i] = lo[i] + pat[i % 2] * (hi[i] - lo[i]);
    }
    Attempt a = dls_attempt(model, target, seed, opt, full_pose);
    ++result.attempts;
    if (a.success) {
      if (!preference) {
        best = a;
        break;
      }
      const double pref = preference(a.q);
      if (!best.success || pref > best_preference) {
        best = a;
        best_preference = pref;
      }
      if (pref >= 0.0) break;
      continue;
    }
    if (best.success) continue;
    if (a.position_error + 0.1 * a.orientation_error < best.position_error + 0.1 * best.orientation_error)
      best = a;
  }
  result.success = best.success;
  result.q = best.q;
  result.position_error = best.position_error;
  result.orientation_error = full_pose ? best.orientation_error : 0.0;
  result.failure = best.success ? IkFailure::kNone : (best.at_limit ? IkFailure::kJointLimits : IkFailure::kNoConvergence);
  return result;
}

IkResult solve_ik(const RobotModel& model, const SetupConfiguration& config, const Pose& hand, const IkOptions& opt,
                  const PosturePreference& preference) {
  return solve_ik_base(model, tool_target(config, hand), opt, preference);
}

// --- metrics ---------------------------------------------------------------

double wrench_scale(const Matrix6X& j, const VectorX& torque_limits, const Vector6& unit_wrench) {
  require_size(torque_limits, j.cols(), "torque limits");
  const VectorX tau = j.transpose() * unit_wrench;
  double alpha = std::numeric_limits<double>::infinity();
  bool any = false;
  for (Eigen::Index i = 0; i < tau.size(); ++i) {
    if (std::abs(tau[i]) <= 1e-12) continue;
    any = true;
    alpha = std::min(alpha, torque_limits[i] / std::abs(tau[i]));
  }
  return any ? alpha : 0.0;
}

const std::vector<Vector3>& cube_directions() {
  static const std::vector<Vector3> dirs = [] {
    std::vector<Vector3> d;
    for (int x = -1; x <= 1; ++x)
      for (int y = -1; y <= 1; ++y)
        for (int z = -1; z <= 1; ++z)
          if (x || y || z) d.push_back(Vector3(x, y, z).normalized());
    return d;
  }();
  return dirs;
}

double joint_limit_margin(const RobotModel& model, const VectorX& q) {
  require_size(q, model.dof(), "joint vector");
  double m = 1.0;
  for (Eigen::Index i = 0; i < q.size(); ++i) {
    const auto& jt = model.joints[static_cast<size_t>(i)];
    const double d = std::clamp((q[i] - jt.position_lower) / (jt.position_upper - jt.position_lower), 0.0, 1.0);
    m *= 4.0 * d * (1.0 - d);
  }
  return m;
}

double dexterity_reference(const RobotModel& model, int configurations) {
  const VectorX lo = model.lower_limits(), hi = model.upper_limits();
  static constexpr unsigned kPrimes[] = {2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37};
  double best = 0.0;
  for (int k = 1; k <= configurations; ++k) {
    VectorX q(model.dof());
    for (Eigen::Index i = 0; i < q.size(); ++i)
      q[i] = lo[i] + radical_inverse(static_cast<std::uint64_t>(k), kPrimes[i % 12]) * (hi[i] - lo[i]);
    best = std::max(best, translational_manipulability(jacobian(model, q)));
  }
  return best > 0.0 ? best : 1.0;
}

void ScoreWeights::validate() const {
  for (double w : {coverage, dexterity, wrench, collision}) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw std::invalid_argument("score weights must be finite and >= 0");
  }
}

EvaluationContext EvaluationContext::create(RobotModel model, HumanModel human, std::vector<WorkspaceSample> samples,
                                            ScoreWeights weights) {
  EvaluationContext ctx;
  ctx.dexterity_reference = hapticlab::dexterity_reference(model);
  ctx.model = std::move(model);
  ctx.human = std::move(human);
  ctx.samples = std::move(samples);
  ctx.weights = weights;
  return ctx;
}

std::vector<Capsule> robot_capsules(const RobotModel& model, const SetupConfiguration& config, const VectorX& q) {
  const ChainPlacement chain = place_chain(model, q);
  const Pose base = config.base_pose();
  std::vector<Capsule> out;
  Vector3 previous = base.translation;
  for (size_t i = 0; i < chain.frames.size(); ++i) {
    const Vector3 origin = base * chain.frames[i].translation;
    out.push_back({previous, origin, model.joints[i].collision_radius});
    previous = origin;
  }
  return out;
}

std::vector<SampleAnalysis> analyze_samples(const EvaluationContext& ctx, const SetupConfiguration& config) {
  config.validate();
  const RobotModel& model = ctx.model;
  const VectorX limits = model.torque_limits();
  const Matrix3 to_base = config.base_pose().rotation.transpose();
  std::vector<SampleAnalysis> out(ctx.samples.size());
  for (size_t k = 0; k < ctx.samples.size(); ++k) {
    const WorkspaceSample& s = ctx.samples[k];
    SampleAnalysis& a = out[k];
    const std::vector<Capsule> human = ctx.human.capsules(s.hand.translation);
    auto clearance = [&](const VectorX& q) {
      double d = std::numeric_limits<double>::infinity();
      for (const Capsule& r : robot_capsules(model, config, q))
        for (const Capsule& h : human) d = std::min(d, capsule_distance(r, h));
      return d;
    };
    // Redundancy is spent on keeping clear of the operator.
    a.ik = solve_ik(model, config, s.hand, ctx.ik, [&](const VectorX& q) { return clearance(q) - ctx.safe_distance; });
    if (!a.ik.success) continue;

    const Matrix6X j = jacobian(model, a.ik.q);
    a.dexterity = translational_manipulability(j) * joint_limit_margin(model, a.ik.q);

    double feasible = 1.0;
    for (const Vector3& d : cube_directions()) {
      const Vector3 dir = to_base * d;
      if (s.force > 0.0) {
        Vector6 w = Vector6::Zero();
        w.head<3>() = dir;
        feasible = std::min(feasible, wrench_scale(j, limits, w) / s.force);
      }
      if (s.torque > 0.0) {
        Vector6 w = Vector6::Zero();
        w.tail<3>() = dir;
        feasible = std::min(feasible, wrench_scale(j, limits, w) / s.torque);
      }
    }
    a.wrench = std::clamp(feasible, 0.0, 1.0);

    a.min_distance = clearance(a.ik.q);
  }
  return out;
}

namespace {

ScoreBreakdown summarize(const EvaluationContext& ctx, const std::vector<SampleAnalysis>& analysis) {
  ScoreBreakdown b;
  double dex = 0.0, wrench = 0.0, penalty = 0.0;
  for (const SampleAnalysis& a : analysis) {
    if (!a.ik.success) continue;
    ++b.reachable;
    dex += a.dexterity;
    wrench += a.wrench;
    penalty += std::max(0.0, ctx.safe_distance - a.min_distance) / ctx.safe_distance;
    if (a.min_distance < 0.0) {
      penalty += ctx.interpenetration_penalty;
      b.interpenetration = true;
    }
  }
  const double count = static_cast<double>(analysis.size());
  b.coverage = count > 0 ? b.reachable / count : 0.0;
  b.dexterity = count > 0 ? dex / count : 0.0;
  b.dexterity_normalized = std::clamp(b.dexterity / ctx.dexterity_reference, 0.0, 1.0);
  b.wrench_feasibility = count > 0 ? wrench / count : 0.0;
  b.collision_penalty = b.reachable > 0 ? penalty / b.reachable : 0.0;
  const ScoreWeights& w = ctx.weights;
  b.total = w.coverage * b.coverage + w.dexterity * b.dexterity_normalized + w.wrench * b.wrench_feasibility -
            w.collision * b.collision_penalty;
  return b;
}

}  // namespace

double coverage_score(const EvaluationContext& ctx, const SetupConfiguration& config) {
  return summarize(ctx, analyze_samples(ctx, config)).coverage;
}

double dexterity_score(const EvaluationContext& ctx, const SetupConfiguration& config) {
  return summarize(ctx, analyze_samples(ctx, config)).dexterity;
}

double wrench_feasibility_score(const EvaluationContext& ctx, const SetupConfiguration& config) {
  return summarize(ctx, analyze_samples(ctx, config)).wrench_feasibility;
}

double collision_penalty(const EvaluationContext& ctx, const SetupConfiguration& config) {
  return summarize(ctx, analyze_samples(ctx, config)).collision_penalty;
}

ScoreBreakdown evaluate(const EvaluationContext& ctx, const SetupConfiguration& config) {
  ctx.weights.validate();
  return summarize(ctx, analyze_samples(ctx, config));
}

// --- search ----------------------------------------------------------------

namespace {

bool better(const EsEvaluation& a, const EsEvaluation& b) {
  if (a.feasible != b.feasible) return a.feasible;
  return a.score > b.score;
}

void evaluate_batch(const EsObjective& objective, std::vector<EsEvaluation>& batch, int workers) {
  const size_t n = batch.size();
  const size_t threads = std::min<size_t>(static_cast<size_t>(std::max(1, workers)), n);
  if (threads <= 1) {
    for (auto& e : batch) e = objective(e.x);
    return;
  }
  // Results land at their own index, so the schedule cannot change the outcome.
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (size_t i = t; i < n; i += threads) batch[i] = objective(batch[i].x);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

size_t best_evaluation(const std::vector<EsEvaluation>& history) {
  if (history.empty()) throw std::invalid_argument("empty evaluation history");
  size_t best = 0;
  for (size_t i = 1; i < history.size(); ++i)
    if (better(history[i], history[best])) best = i;
  return best;
}

std::vector<EsEvaluation> evolve(const VectorX& lower, const VectorX& upper, const EsObjective& objective,
                                 const EsOptions& opt) {
  const Eigen::Index d = lower.size();
  require_size(upper, d, "upper bounds");
  if (d == 0) throw std::invalid_argument("search space is empty");
  if (!lower.allFinite() || !upper.allFinite() || (upper.array() < lower.array()).any())
    throw std::invalid_argument("bounds must be finite with lower <= upper");
  if (opt.population < 2 || opt.parents < 1 || opt.parents > opt.population)
    throw std::invalid_argument("population must be >= 2 with 1 <= parents <= population");
  if (opt.budget < 1) throw std::invalid_argument("budget must be positive");
  if (!(opt.initial_step > 0.0)) throw std::invalid_argument("initial step must be positive");

  const VectorX width = upper - lower;
  auto to_box = [&](const VectorX& u) { return VectorX(lower + u.cwiseProduct(width)); };

  std::vector<double> weights(static_cast<size_t>(opt.parents));
  double wsum = 0.0;
  for (int i = 0; i < opt.parents; ++i) {
    weights[static_cast<size_t>(i)] = std::log(opt.parents + 0.5) - std::log(i + 1.0);
    wsum += weights[static_cast<size_t>(i)];
  }
  for (double& w : weights) w /= wsum;

  constexpr double kTargetSuccess = 0.2;
  const double damping = 1.0 + 0.5 * static_cast<double>((width.array() > 0.0).count());

  std::mt19937_64 rng(opt.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  VectorX mean = VectorX::Constant(d, 0.5);
  double sigma = opt.initial_step;

  std::vector<EsEvaluation> history;
  history.reserve(static_cast<size_t>(opt.budget));
  std::vector<EsEvaluation> first{{to_box(mean), 0.0, true, {}}};
  evaluate_batch(objective, first, opt.workers);
  history.push_back(first.front());
  EsEvaluation incumbent = first.front();

  while (static_cast<int>(history.size()) < opt.budget) {
    const int lambda = std::min(opt.population, opt.budget - static_cast<int>(history.size()));
    std::vector<VectorX> unit(static_cast<size_t>(lambda));
    std::vector<EsEvaluation> batch(static_cast<size_t>(lambda));
    for (int k = 0; k < lambda; ++k) {
      VectorX u(d);
      for (Eigen::Index i = 0; i < d; ++i) {
        const double z = normal(rng);
        u[i] = width[i] > 0.0 ? std::clamp(mean[i] + sigma * z, 0.0, 1.0) : 0.5;
      }
      unit[static_cast<size_t>(k)] = u;
      batch[static_cast<size_t>(k)].x = to_box(u);
    }
    evaluate_batch(objective, batch, opt.workers);

    std::vector<size_t> order(batch.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) { return better(batch[a], batch[b]); });

    // One-fifth success rule on the share of offspring beating the incumbent.
    int successes = 0;
    for (const auto& e : batch) successes += better(e, incumbent);
    const double rate = static_cast<double>(successes) / static_cast<double>(batch.size());
    sigma = std::clamp(sigma * std::exp((rate - kTargetSuccess) / (damping * (1.0 - kTargetSuccess))), 1e-9, 0.5);
    if (better(batch[order.front()], incumbent)) incumbent = batch[order.front()];

    const size_t mu = std::min(static_cast<size_t>(opt.parents), order.size());
    VectorX next = VectorX::Zero(d);
    double used = 0.0;
    for (size_t i = 0; i < mu; ++i) {
      next += weights[i] * unit[order[i]];
      used += weights[i];
    }
    mean = next / used;
    for (auto& e : batch) history.push_back(std::move(e));
  }
  return history;
}

void SetupBounds::validate() const {
  require_size(lower, 7, "setup bounds lower");
  require_size(upper, 7, "setup bounds upper");
  if (!lower.allFinite() || !upper.allFinite() || (upper.array() < lower.array()).any())
    throw std::invalid_argument("setup bounds must be finite with lower <= upper");
  if (lower.segment<3>(3).cwiseAbs().maxCoeff() > kPi || upper.segment<3>(3).cwiseAbs().maxCoeff() > kPi ||
      std::abs(lower[6]) > kPi || std::abs(upper[6]) > kPi)
    throw std::invalid_argument("rotation and grab-angle bounds must lie within [-pi, pi]");
}

SetupBounds SetupBounds::translated(const Vector3& offset) const {
  SetupBounds b = *this;
  b.lower.head<3>() += offset;
  b.upper.head<3>() += offset;
  return b;
}

OptimizationResult optimize(const EvaluationContext& ctx, const SetupBounds& bounds, const EsOptions& opt) {
  bounds.validate();
  ctx.weights.validate();
  if (ctx.samples.empty()) throw std::invalid_argument("optimization needs workspace samples");

  // Rotation-vector boxes may hold vectors longer than pi; those wrap to the
  // canonical representative before scoring.
  auto decode = [](const VectorX& x) {
    SetupConfiguration c = SetupConfiguration::from_vector(x);
    c.base_rotation = canonical_base_rotation(c.base_rotation, RotationConvention::kRotationVector);
    return c;
  };
  auto objective = [&](const VectorX& x) {
    const ScoreBreakdown b = evaluate(ctx, decode(x));
    return EsEvaluation{x, b.total, !b.interpenetration,
                        {b.coverage, b.dexterity, b.dexterity_normalized, b.wrench_feasibility, b.collision_penalty,
                         b.total, b.interpenetration ? 1.0 : 0.0, static_cast<double>(b.reachable)}};
  };
  const std::vector<EsEvaluation> history = evolve(bounds.lower, bounds.upper, objective, opt);

  OptimizationResult result;
  result.history.reserve(history.size());
  for (const EsEvaluation& e : history) {
    const auto& v = e.details;
    ScoreBreakdown b{v[0], v[1], v[2], v[3], v[4], v[5], v[6] != 0.0, static_cast<int>(v[7])};
    result.history.push_back({decode(e.x), b});
  }
  const size_t best = best_evaluation(history);
  result.best = result.history[best].config;
  result.score = result.history[best].score;
  return result;
}

}  // namespace hapticlab
