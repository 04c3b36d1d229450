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

#include "hapticlab/robot_model.hpp"

#include <cmath>
#include <fstream>

#ifndef HAPTICLAB_DATA_DIR
#define HAPTICLAB_DATA_DIR "data"
#endif

namespace hapticlab {

using nlohmann::json;

const char* to_string(MotionGroup g) {
  return g == MotionGroup::kTranslational ? "translational" : "rotational";
}

namespace {

VectorX collect(const RobotModel& m, double JointSpec::*field) {
  VectorX v(m.dof());
  for (Eigen::Index i = 0; i < m.dof(); ++i) v[i] = m.joints[static_cast<size_t>(i)].*field;
  return v;
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  if (!obj.is_object()) throw ModelError(path + ": expected an object");
  auto it = obj.find(key);
  if (it == obj.end()) throw ModelError("missing field '" + path + "." + key + "'");
  return *it;
}

double number(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_number()) throw ModelError(path + "." + key + ": expected a number");
  return v.get<double>();
}

Vector3 vec3(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  if (!v.is_array() || v.size() != 3) throw ModelError(path + "." + key + ": expected an array of 3 numbers");
  Vector3 out;
  for (int i = 0; i < 3; ++i) {
    if (!v[static_cast<size_t>(i)].is_number()) throw ModelError(path + "." + key + ": expected numbers");
    out[i] = v[static_cast<size_t>(i)].get<double>();
  }
  return out;
}

Matrix3 mat3(const json& obj, const std::string& key, const std::string& path) {
  const json& v = field(obj, key, path);
  const std::string where = path + "." + key;
  if (!v.is_array() || v.size() != 3) throw ModelError(where + ": expected a 3x3 array");
  Matrix3 out;
  for (size_t r = 0; r < 3; ++r) {
    if (!v[r].is_array() || v[r].size() != 3) throw ModelError(where + ": expected a 3x3 array");
    for (size_t c = 0; c < 3; ++c) {
      if (!v[r][c].is_number()) throw ModelError(where + ": expected numbers");
      out(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = v[r][c].get<double>();
    }
  }
  return out;
}

Pose pose(const json& obj, const std::string& key, const std::string& path) {
  const json& p = field(obj, key, path);
  const std::string where = path + "." + key;
  return Pose::from_rotation_vector(vec3(p, "translation", where), vec3(p, "rotation_vector", where));
}

json to_json(const Vector3& v) { return json::array({v.x(), v.y(), v.z()}); }

json to_json(const Matrix3& m) {
  json rows = json::array();
  for (int r = 0; r < 3; ++r) rows.push_back(json::array({m(r, 0), m(r, 1), m(r, 2)}));
  return rows;
}

json to_json(const Pose& p) {
  return {{"translation", to_json(p.translation)}, {"rotation_vector", to_json(rotation_vector(p.rotation))}};
}

JointSpec point_mass_joint(const std::string& name, const Pose& parent, const Vector3& axis, double mass,
                           const Vector3& com) {
  JointSpec j;
  j.name = name;
  j.parent = parent;
  j.axis = axis;
  j.mass = mass;
  j.com = com;
  // Small rotational inertia keeps the tensor positive definite.
  j.inertia = 1e-3 * Matrix3::Identity();
  j.position_lower = -2.9;
  j.position_upper = 2.9;
  j.velocity_limit = 3.0;
  j.torque_limit = 50.0;
  j.motor_inertia = 0.3;
  j.stiffness = 300.0;
  return j;
}

}  // namespace

VectorX RobotModel::motor_inertia() const { return collect(*this, &JointSpec::motor_inertia); }
VectorX RobotModel::stiffness() const { return collect(*this, &JointSpec::stiffness); }
VectorX RobotModel::torque_limits() const { return collect(*this, &JointSpec::torque_limit); }
VectorX RobotModel::lower_limits() const { return collect(*this, &JointSpec::position_lower); }
VectorX RobotModel::upper_limits() const { return collect(*this, &JointSpec::position_upper); }
VectorX RobotModel::mid_range() const { return 0.5 * (lower_limits() + upper_limits()); }

void RobotModel::validate() const {
  if (joints.empty()) throw ModelError(name + ": model has no joints");
  if (!gravity.allFinite()) throw ModelError(name + ": gravity must be finite");
  if (!tool.is_valid()) throw ModelError(name + ": tool transform is not a proper rigid transform");
  for (size_t i = 0; i < joints.size(); ++i) {
    const JointSpec& j = joints[i];
    const std::string where = "joints[" + std::to_string(i) + "] (" + j.name + ")";
    if (!j.parent.is_valid()) throw ModelError(where + ": parent transform is not a proper rigid transform");
    if (std::abs(j.axis.norm() - 1.0) > 1e-9) throw ModelError(where + ": axis must be a unit vector");
    if (!(j.mass > 0.0)) throw ModelError(where + ": mass must be > 0");
    if ((j.inertia - j.inertia.transpose()).cwiseAbs().maxCoeff() > 1e-12)
      throw ModelError(where + ": inertia must be symmetric");
    Eigen::SelfAdjointEigenSolver<Matrix3> es(j.inertia);
    if (!(es.eigenvalues().minCoeff() > 0.0)) throw ModelError(where + ": inertia must be positive definite");
    if (!(j.position_lower < j.position_upper)) throw ModelError(where + ": position lower limit must be < upper");
    if (!(j.velocity_limit > 0.0)) throw ModelError(where + ": velocity limit must be > 0");
    if (!(j.torque_limit > 0.0)) throw ModelError(where + ": torque limit must be > 0");
    if (!(j.motor_inertia > 0.0)) throw ModelError(where + ": motor inertia must be > 0");
    if (!(j.stiffness > 0.0)) throw ModelError(where + ": stiffness must be > 0");
    if (!(j.collision_radius >= 0.0)) throw ModelError(where + ": collision radius must be >= 0");
  }
}

RobotModel model_from_json(const json& j) {
  RobotModel m;
  const std::string root = "model";
  const json& name = field(j, "name", root);
  if (!name.is_string()) throw ModelError("model.name: expected a string");
  m.name = name.get<std::string>();
  m.gravity = vec3(j, "gravity", root);
  m.tool = pose(j, "tool", root);
  const json& joints = field(j, "joints", root);
  if (!joints.is_array()) throw ModelError("model.joints: expected an array");
  const double dof = number(j, "dof", root);
  if (dof != static_cast<double>(joints.size()))
    throw ModelError("model.dof: declares " + std::to_string(static_cast<long>(dof)) + " joints but " +
                     std::to_string(joints.size()) + " are listed");
  for (size_t i = 0; i < joints.size(); ++i) {
    const json& jj = joints[i];
    const std::string path = "model.joints[" + std::to_string(i) + "]";
    JointSpec s;
    const json& jname = field(jj, "name", path);
    if (!jname.is_string()) throw ModelError(path + ".name: expected a string");
    s.name = jname.get<std::string>();
    s.parent = pose(jj, "parent", path);
    s.axis = vec3(jj, "axis", path);
    s.mass = number(jj, "mass", path);
    s.com = vec3(jj, "com", path);
    s.inertia = mat3(jj, "inertia", path);
    const json& lim = field(jj, "position_limits", path);
    if (!lim.is_array() || lim.size() != 2 || !lim[0].is_number() || !lim[1].is_number())
      throw ModelError(path + ".position_limits: expected [lower, upper]");
    s.position_lower = lim[0].get<double>();
    s.position_upper = lim[1].get<double>();
    s.velocity_limit = number(jj, "velocity_limit", path);
    s.torque_limit = number(jj, "torque_limit", path);
    s.motor_inertia = number(jj, "motor_inertia", path);
    s.stiffness = number(jj, "stiffness", path);
    const json& group = field(jj, "group", path);
    if (group == "translational") {
      s.group = MotionGroup::kTranslational;
    } else if (group == "rotational") {
      s.group = MotionGroup::kRotational;
    } else {
      throw ModelError(path + ".group: expected \"translational\" or \"rotational\"");
    }
    s.collision_radius = number(jj, "collision_radius", path);
    m.joints.push_back(std::move(s));
  }
  m.validate();
  return m;
}

json model_to_json(const RobotModel& m) {
  json joints = json::array();
  for (const JointSpec& s : m.joints) {
    joints.push_back({{"name", s.name},
                      {"parent", to_json(s.parent)},
                      {"axis", to_json(s.axis)},
                      {"mass", s.mass},
                      {"com", to_json(s.com)},
                      {"inertia", to_json(s.inertia)},
                      {"position_limits", json::array({s.position_lower, s.position_upper})},
                      {"velocity_limit", s.velocity_limit},
                      {"torque_limit", s.torque_limit},
                      {"motor_inertia", s.motor_inertia},
                      {"stiffness", s.stiffness},
                      {"group", to_string(s.group)},
                      {"collision_radius", s.collision_radius}});
  }
  return {{"name", m.name},
          {"dof", m.joints.size()},
          {"gravity", to_json(m.gravity)},
          {"tool", to_json(m.tool)},
          {"joints", joints}};
}

RobotModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ModelError("cannot open robot model file '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ModelError(path.string() + ": " + e.what());
  }
  return model_from_json(j);
}

std::filesystem::path data_directory() { return std::filesystem::path(HAPTICLAB_DATA_DIR); }

std::vector<std::string> builtin_model_names() { return {"pendulum1", "joint1", "planar2", "panda_like"}; }

RobotModel builtin_model(const std::string& name) {
  RobotModel m;
  m.name = name;
  if (name == "pendulum1") {
    // Point mass 1 kg at 1 m swinging in the xz-plane; q = 0 is horizontal.
    m.joints.push_back(point_mass_joint("j1", Pose::identity(), -Vector3::UnitY(), 1.0, Vector3(1.0, 0.0, 0.0)));
    m.tool.translation = Vector3(1.0, 0.0, 0.0);
  } else if (name == "joint1") {
    // Single joint about the vertical axis, so gravity does no work.
    JointSpec j = point_mass_joint("j1", Pose::identity(), Vector3::UnitZ(), 2.0, Vector3(0.2, 0.0, 0.0));
    j.inertia = Eigen::Vector3d(0.01, 0.02, 0.02).asDiagonal();
    j.position_lower = -1e3;
    j.position_upper = 1e3;
    j.velocity_limit = 5.0;
    m.joints.push_back(j);
    m.tool.translation = Vector3(0.4, 0.0, 0.0);
  } else if (name == "planar2") {
    // Two unit links in the horizontal plane with 1 kg point masses at the tips.
    m.joints.push_back(point_mass_joint("j1", Pose::identity(), Vector3::UnitZ(), 1.0, Vector3(1.0, 0.0, 0.0)));
    Pose elbow;
    elbow.translation = Vector3(1.0, 0.0, 0.0);
    m.joints.push_back(point_mass_joint("j2", elbow, Vector3::UnitZ(), 1.0, Vector3(1.0, 0.0, 0.0)));
    m.tool.translation = Vector3(1.0, 0.0, 0.0);
  } else if (name == "panda_like") {
    return load_model(data_directory() / "models" / "panda_like.json");
  } else {
    throw ModelError("unknown built-in model '" + name + "'");
  }
  m.validate();
  return m;
}

RobotModel resolve_model(const std::string& ref, const std::filesystem::path& base_dir) {
  constexpr std::string_view prefix = "builtin:";
  if (ref.rfind(prefix, 0) == 0) return builtin_model(ref.substr(prefix.size()));
  std::filesystem::path p(ref);
  if (p.is_relative() && !base_dir.empty()) p = base_dir / p;
  return load_model(p);
}

RobotModel mirrored(const RobotModel& m) {
  RobotModel out = m;
  out.name = m.name + "_mirrored";
  const Eigen::DiagonalMatrix<double, 3> s(1.0, -1.0, 1.0);
  for (JointSpec& j : out.joints) {
    j.parent.translation = mirror_vector(j.parent.translation);
    j.parent.rotation = mirror_rotation(j.parent.rotation);
    // S R(a, q) S = R(S a, -q); flipping the axis keeps the joint coordinate.
    j.axis = -mirror_vector(j.axis);
    j.com = mirror_vector(j.com);
    j.inertia = s * j.inertia * s;
  }
  out.tool.translation = mirror_vector(m.tool.translation);
  out.tool.rotation = mirror_rotation(m.tool.rotation);
  return out;
}

}  // namespace hapticlab
