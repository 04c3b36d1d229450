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

#include "hapticlab/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <limits>
#include <numbers>
#include <set>
#include <sstream>

#include "hapticlab/csv.hpp"
#include "hapticlab/experiments.hpp"
#include "hapticlab/setup.hpp"
#include "hapticlab/teleop.hpp"

namespace hapticlab {

using nlohmann::json;
namespace fs = std::filesystem;

const char* artifact_version() { return HAPTICLAB_VERSION; }

const char* to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::kFrictionSweep: return "friction-sweep";
    case ScenarioKind::kReshapeStep: return "reshape-step";
    case ScenarioKind::kOptimizeSetup: return "optimize-setup";
    case ScenarioKind::kTeleopWall: return "teleop-wall";
    case ScenarioKind::kEstimatorConvergence: return "estimator-convergence";
  }
  return "?";
}

const std::vector<ScenarioInfo>& scenario_catalog() {
  static const std::vector<ScenarioInfo> catalog{
      {ScenarioKind::kFrictionSweep, "interaction torque vs velocity for the four compensation modes"},
      {ScenarioKind::kReshapeStep, "apparent motor inertia identified from a torque step"},
      {ScenarioKind::kOptimizeSetup, "setup-configuration search with reference-setup comparison"},
      {ScenarioKind::kTeleopWall, "approach, press and retract against a virtual wall"},
      {ScenarioKind::kEstimatorConvergence, "friction estimates per zero-energy event, optional truth step"},
  };
  return catalog;
}

ScenarioKind scenario_kind_from_string(const std::string& s) {
  for (const ScenarioInfo& info : scenario_catalog()) {
    if (s == to_string(info.kind)) return info.kind;
  }
  throw ScenarioError("unknown scenario kind '" + s + "'");
}

bool ScenarioResult::passed() const {
  return std::all_of(checks.begin(), checks.end(), [](const Check& c) { return c.passed; });
}

std::vector<Check> ScenarioResult::failures() const {
  std::vector<Check> out;
  for (const Check& c : checks)
    if (!c.passed) out.push_back(c);
  return out;
}

void apply_override(json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ScenarioError("override '" + assignment + "' is not key=value");
  const std::string key = assignment.substr(0, eq), text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;

  json* node = &doc;
  std::stringstream parts(key);
  std::string part;
  std::vector<std::string> path;
  while (std::getline(parts, part, '.')) {
    if (part.empty()) throw ScenarioError("override key '" + key + "' has an empty component");
    path.push_back(part);
  }
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    if (!node->is_object()) throw ScenarioError("override '" + key + "' descends into a non-object");
    node = &(*node)[path[i]];
    if (node->is_null()) *node = json::object();
  }
  if (!node->is_object()) throw ScenarioError("override '" + key + "' descends into a non-object");
  (*node)[path.back()] = value;
}

namespace {

// Reads one JSON object with defaults, records every resolved value and
// rejects fields nobody asked for.
class Block {
 public:
  Block(const json& in, std::string path) : in_(in.is_null() ? json::object() : in), path_(std::move(path)) {
    if (!in_.is_object()) throw ScenarioError(where("") + "expected an object");
  }

  bool has(const std::string& key) const { return in_.contains(key); }

  double number(const std::string& key, double def, double lo = -kInf, double hi = kInf) {
    const double v = fetch(key, json(def)).is_number() ? in_.value(key, def) : bad<double>(key, "a number");
    if (!std::isfinite(v) || v < lo || v > hi) throw ScenarioError(where(key) + "out of range");
    out[key] = v;
    return v;
  }
  int integer(const std::string& key, int def, int lo = std::numeric_limits<int>::min(),
              int hi = std::numeric_limits<int>::max()) {
    const json& v = fetch(key, json(def));
    if (!v.is_number_integer()) bad<int>(key, "an integer");
    const long long x = v.get<long long>();
    if (x < lo || x > hi) throw ScenarioError(where(key) + "out of range");
    out[key] = x;
    return static_cast<int>(x);
  }
  bool flag(const std::string& key, bool def) {
    const json& v = fetch(key, json(def));
    if (!v.is_boolean()) bad<bool>(key, "true or false");
    out[key] = v.get<bool>();
    return v.get<bool>();
  }
  std::string text(const std::string& key, const std::string& def) {
    const json& v = fetch(key, json(def));
    if (!v.is_string()) bad<int>(key, "a string");
    out[key] = v;
    return v.get<std::string>();
  }
  std::string required_text(const std::string& key) {
    if (!has(key)) throw ScenarioError(where(key) + "is required");
    return text(key, "");
  }
  std::vector<double> numbers(const std::string& key, const std::vector<double>& def, size_t size = 0) {
    const json& v = fetch(key, json(def));
    if (!v.is_array()) bad<int>(key, "an array of numbers");
    std::vector<double> xs;
    for (const json& e : v) {
      if (!e.is_number() || !std::isfinite(e.get<double>())) bad<int>(key, "an array of finite numbers");
      xs.push_back(e.get<double>());
    }
    if (size && xs.size() != size) throw ScenarioError(where(key) + "expected " + std::to_string(size) + " values");
    out[key] = xs;
    return xs;
  }
  Vector3 vec3(const std::string& key, const Vector3& def) {
    const auto xs = numbers(key, {def.x(), def.y(), def.z()}, 3);
    return {xs[0], xs[1], xs[2]};
  }
  /// A scalar applied to every joint or one value per joint; stored as given.
  VectorX per_joint(const std::string& key, double def, Eigen::Index n, double lo) {
    const json& v = fetch(key, json(def));
    VectorX x(n);
    if (v.is_number()) {
      x.setConstant(v.get<double>());
    } else if (v.is_array() && static_cast<Eigen::Index>(v.size()) == n) {
      for (Eigen::Index i = 0; i < n; ++i) {
        if (!v[static_cast<size_t>(i)].is_number()) bad<int>(key, "numbers");
        x[i] = v[static_cast<size_t>(i)].get<double>();
      }
    } else {
      bad<int>(key, "a number or " + std::to_string(n) + " numbers");
    }
    if (!x.allFinite() || (x.array() < lo).any()) throw ScenarioError(where(key) + "out of range");
    out[key] = v;
    return x;
  }
  json raw(const std::string& key, const json& def) {
    out[key] = fetch(key, def);
    return out[key];
  }

  template <class F>
  auto nested(const std::string& key, F&& read) {
    used_.insert(key);
    Block child(in_.contains(key) ? in_[key] : json::object(), path_.empty() ? key : path_ + "." + key);
    auto result = read(child);
    out[key] = child.finish();
    return result;
  }

  json finish() const {
    for (const auto& item : in_.items()) {
      if (!used_.count(item.key())) throw ScenarioError(where(item.key()) + "unknown field");
    }
    return out;
  }

  std::string where(const std::string& key) const {
    const std::string full = path_.empty() ? key : (key.empty() ? path_ : path_ + "." + key);
    return full.empty() ? std::string() : full + ": ";
  }

  json out = json::object();

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  const json& fetch(const std::string& key, const json& def) {
    used_.insert(key);
    if (in_.contains(key)) return in_[key];
    defaults_.push_back(def);
    return defaults_.back();
  }
  template <class T>
  [[noreturn]] T bad(const std::string& key, const std::string& what) const {
    throw ScenarioError(where(key) + "expected " + what);
  }

  json in_;
  std::string path_;
  std::set<std::string> used_;
  std::vector<json> defaults_;
};

struct Common {
  RobotModel model;
  FrictionModel friction;
  SimConfig sim;
  ReshapeConfig reshape;  // resolved ratios
  double compensation_fraction = 0.9;
  double torque_lead = 0.5e-3;
};

ReshapeConfig read_reshape(Block& b, const RobotModel& model, const json& def) {
  const json v = b.raw("reshape", def);
  const Eigen::Index n = model.dof();
  ReshapeConfig r;
  if (v.is_string() && v.get<std::string>() == "by_group") {
    r = ReshapeConfig::by_group(model);
  } else if (v.is_number()) {
    r = ReshapeConfig::uniform(n, v.get<double>());
  } else if (v.is_array() && static_cast<Eigen::Index>(v.size()) == n) {
    r.ratio.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) r.ratio[i] = v[static_cast<size_t>(i)].get<double>();
  } else {
    throw ScenarioError(b.where("reshape") + "expected \"by_group\", a ratio or one ratio per joint");
  }
  try {
    r.validate(n);
  } catch (const std::exception& e) {
    throw ScenarioError(b.where("reshape") + e.what());
  }
  return r;
}

Common read_common(Block& top, ScenarioKind kind, const fs::path& base_dir) {
  Common c;
  const std::string model_ref = top.required_text("model");
  try {
    c.model = resolve_model(model_ref, base_dir);
  } catch (const std::exception& e) {
    throw ScenarioError(std::string("model: ") + e.what());
  }
  const Eigen::Index n = c.model.dof();

  top.nested("sim", [&](Block& b) {
    c.sim.dt = b.number("dt", 1e-3, 1e-7, 0.1);
    try {
      c.sim.integrator = integrator_from_string(b.text("integrator", "rk4"));
    } catch (const std::exception& e) {
      throw ScenarioError(b.where("integrator") + e.what());
    }
    return 0;
  });
  top.nested("friction", [&](Block& b) {
    c.friction.coulomb = b.per_joint("coulomb", 0.0, n, 0.0);
    c.friction.viscous = b.per_joint("viscous", 0.0, n, 0.0);
    c.friction.deadband = b.number("deadband", 1e-3, 1e-9);
    return 0;
  });
  const double ratio = friction_step_ratio(c.model, c.friction, c.sim.dt);
  if (ratio > friction_step_limit(c.sim.integrator)) {
    std::ostringstream msg;
    msg << "friction: Coulomb regularization too stiff for dt (step ratio " << ratio << " > "
        << friction_step_limit(c.sim.integrator) << "); reduce sim.dt or raise friction.deadband";
    throw ScenarioError(msg.str());
  }
  top.nested("controller", [&](Block& b) {
    const json def = kind == ScenarioKind::kEstimatorConvergence ? json(1.0) : json("by_group");
    c.reshape = read_reshape(b, c.model, def);
    c.compensation_fraction = b.number("compensation_fraction", 0.9, 0.0, 1.0);
    c.torque_lead = b.number("torque_lead", 0.5e-3, 0.0, 1.0);
    return 0;
  });
  return c;
}

EstimatorConfig read_estimator(Block& b) {
  EstimatorConfig e;
  e.energy_threshold = b.number("energy_threshold", e.energy_threshold, 0.0);
  e.rearm_factor = b.number("rearm_factor", e.rearm_factor, 1.0);
  e.excitation_floor = b.number("excitation_floor", e.excitation_floor, 0.0);
  e.regularization = b.number("regularization", e.regularization, 0.0);
  e.deadband = b.number("deadband", e.deadband, 1e-9);
  e.speed_spread = b.number("speed_spread", e.speed_spread, 0.0);
  e.history = static_cast<size_t>(b.integer("history", static_cast<int>(e.history), 1));
  return e;
}

ExcitationConfig read_excitation(Block& b) {
  ExcitationConfig x;
  x.amplitudes = b.numbers("amplitudes", x.amplitudes);
  x.frequency = b.number("frequency", x.frequency);
  x.burst = b.number("burst", x.burst);
  x.cycle = b.number("cycle", x.cycle);
  x.brake_gain = b.number("brake_gain", x.brake_gain);
  x.unloading = b.number("unloading", x.unloading);
  return x;
}

template <class T>
T guarded(const std::string& what, const std::function<T()>& f) {
  try {
    return f();
  } catch (const ScenarioError&) {
    throw;
  } catch (const std::exception& e) {
    throw ScenarioError(what + ": " + e.what());
  }
}

// ---------------------------------------------------------------- params

struct SweepParams {
  SweepConfig sweep;
  double variance_threshold = 1e-8;
  double ratio_tolerance = 0.05;
  double order_tolerance = 1e-6;
};

SweepParams read_sweep(Block& p, const Common& c) {
  SweepParams s;
  s.sweep.velocities = p.numbers("velocities", s.sweep.velocities);
  p.nested("operator", [&](Block& b) {
    s.sweep.servo_stiffness = b.number("stiffness", s.sweep.servo_stiffness);
    s.sweep.servo_damping = b.number("damping", s.sweep.servo_damping);
    if (!(s.sweep.servo_stiffness > 0.0 && s.sweep.servo_damping > 0.0))
      throw ScenarioError(b.where("") + "operator gains must be > 0");
    return 0;
  });
  s.sweep.settle = p.number("settle", s.sweep.settle, 0.0);
  s.sweep.window = p.number("window", s.sweep.window, 1e-6);
  s.sweep.identification_events = p.integer("identification_events", s.sweep.identification_events, 1);
  s.sweep.max_identification_time = p.number("max_identification_time", s.sweep.max_identification_time, 0.0);
  s.sweep.estimator = p.nested("estimator", read_estimator);
  s.sweep.excitation = p.nested("excitation", read_excitation);
  s.variance_threshold = p.number("variance_threshold", s.variance_threshold, 0.0);
  s.ratio_tolerance = p.number("ratio_tolerance", s.ratio_tolerance, 0.0);
  s.order_tolerance = p.number("order_tolerance", s.order_tolerance, 0.0);
  s.sweep.reshape = c.reshape;
  s.sweep.compensation_fraction = c.compensation_fraction;
  guarded<int>("params", [&] {
    s.sweep.validate();
    return 0;
  });
  return s;
}

struct ReshapeParams {
  std::vector<double> ratios{1.0, 2.0, 3.0, 4.0};
  double u_step = 2.0;
  double duration = 1.0;
  double settle = 0.1;
  double tolerance = 0.02;
};

ReshapeParams read_reshape_step(Block& p) {
  ReshapeParams r;
  r.ratios = p.numbers("ratios", r.ratios);
  for (double x : r.ratios)
    if (!(x >= 1.0)) throw ScenarioError(p.where("ratios") + "ratios must be >= 1");
  r.u_step = p.number("u_step", r.u_step);
  r.duration = p.number("duration", r.duration, 1e-3);
  r.settle = p.number("settle", r.settle, 0.0, r.duration);
  r.tolerance = p.number("tolerance", r.tolerance, 0.0);
  if (r.u_step == 0.0) throw ScenarioError(p.where("u_step") + "must be nonzero");
  if (!(r.settle < r.duration)) throw ScenarioError(p.where("settle") + "must be below duration");
  return r;
}

struct OptimizeParams {
  HumanModel human;
  std::vector<WorkspaceSample> samples;
  ScoreWeights weights;
  double safe_distance = 0.1;
  double interpenetration_penalty = 10.0;
  SetupBounds bounds;
  EsOptions es;
  bool compare_reference = false;
  int grid_resolution = 0;
  double grid_tolerance = 0.01;
};

const char* kReferenceSetup = R"({"base_position": [-0.205, 0.066, 0.262],
                               "base_rotation": [-0.900, 0.177, -0.219],
                               "grab_angle": -0.569})";

OptimizeParams read_optimize(Block& p, const Common& c, std::uint64_t seed) {
  OptimizeParams o;
  const json human = p.raw("human", human_model_to_json(HumanModel{}));
  o.human = guarded<HumanModel>("params.human", [&] { return human_model_from_json(human); });

  p.nested("workspace", [&](Block& b) {
    if (b.has("points")) {
      const json pts = b.raw("points", json::array());
      const double force = b.number("force", o.human.required_force, 0.0);
      const double torque = b.number("torque", 0.0, 0.0);
      const Vector3 rotation = b.vec3("rotation", Vector3::Zero());
      if (!pts.is_array() || pts.empty()) throw ScenarioError(b.where("points") + "expected a non-empty array");
      for (const json& pt : pts) {
        if (!pt.is_array() || pt.size() != 3) throw ScenarioError(b.where("points") + "expected [x, y, z] entries");
        WorkspaceSample w;
        w.hand = Pose::from_rotation_vector(rotation, Vector3(pt[0].get<double>(), pt[1].get<double>(),
                                                              pt[2].get<double>()));
        w.force = force;
        w.torque = torque;
        o.samples.push_back(w);
      }
    } else {
      const int count = b.integer("samples", 256, 1, 1 << 20);
      const double tilt = b.number("tilt", 0.35, 0.0, 1.5);
      o.samples = sample_human_workspace(o.human, count, seed, tilt);
    }
    return 0;
  });
  p.nested("weights", [&](Block& b) {
    o.weights.coverage = b.number("coverage", o.weights.coverage);
    o.weights.dexterity = b.number("dexterity", o.weights.dexterity);
    o.weights.wrench = b.number("wrench", o.weights.wrench);
    o.weights.collision = b.number("collision", o.weights.collision);
    guarded<int>("params.weights", [&] {
      o.weights.validate();
      return 0;
    });
    return 0;
  });
  o.safe_distance = p.number("safe_distance", o.safe_distance, 0.0);
  o.interpenetration_penalty = p.number("interpenetration_penalty", o.interpenetration_penalty, 0.0);
  p.nested("bounds", [&](Block& b) {
    const auto lo = b.numbers("lower", {-0.6, -0.5, -0.2, -1.5, -1.5, -1.5, -std::numbers::pi}, 7);
    const auto hi = b.numbers("upper", {0.4, 0.6, 0.6, 1.5, 1.5, 1.5, std::numbers::pi}, 7);
    for (int i = 0; i < 7; ++i) {
      o.bounds.lower[i] = lo[static_cast<size_t>(i)];
      o.bounds.upper[i] = hi[static_cast<size_t>(i)];
    }
    guarded<int>("params.bounds", [&] {
      o.bounds.validate();
      return 0;
    });
    return 0;
  });
  p.nested("es", [&](Block& b) {
    o.es.population = b.integer("population", o.es.population, 2);
    o.es.parents = b.integer("parents", o.es.parents, 1, o.es.population);
    o.es.initial_step = b.number("initial_step", o.es.initial_step, 1e-9, 1.0);
    o.es.budget = b.integer("budget", o.es.budget, 1);
    o.es.workers = b.integer("workers", o.es.workers, 1, 256);
    return 0;
  });
  o.es.seed = seed;
  o.compare_reference = p.flag("compare_reference", c.model.name == "panda_like");
  if (o.compare_reference && c.model.dof() != 7)
    throw ScenarioError(p.where("compare_reference") + "the reference setup is for a 7-joint arm");
  p.nested("grid_oracle", [&](Block& b) {
    o.grid_resolution = b.integer("resolution", 0, 0, 1001);
    o.grid_tolerance = b.number("tolerance", o.grid_tolerance, 0.0, 1.0);
    return 0;
  });
  if (o.grid_resolution) {
    int free_dims = 0;
    for (int i = 0; i < 7; ++i) free_dims += o.bounds.lower[i] < o.bounds.upper[i];
    if (free_dims != 2) throw ScenarioError("params.grid_oracle: needs exactly two free bound dimensions");
    if (o.grid_resolution < 2) throw ScenarioError("params.grid_oracle.resolution: needs at least 2 points");
  }
  return o;
}

struct TeleopParams {
  SessionConfig session;
  SetupConfiguration placement;
  HandTrajectory hand;
  double duration = 11.5;
  double free_start = 3.5, free_end = 4.0;
  double press_start = 9.0, press_end = 10.0;
  double tracking_tolerance = 1e-3;
  double feedback_tolerance = 0.01;
};

json default_keyframes() {
  const json grip = {std::numbers::pi, 0.0, 0.0};
  auto key = [&](double t, double x, double y, double z) {
    return json{{"time", t}, {"position", {x, y, z}}, {"rotation", grip}};
  };
  // Approach in free space, hold, press 2 cm past the wall, hold, retract.
  return json::array({key(0.0, 0.35, 0.10, -0.10), key(0.5, 0.35, 0.10, -0.10), key(1.5, 0.38, 0.15, -0.05),
                      key(4.0, 0.38, 0.15, -0.05), key(5.0, 0.42, 0.15, -0.05), key(10.0, 0.42, 0.15, -0.05),
                      key(10.5, 0.35, 0.15, -0.05)});
}

TeleopParams read_teleop(Block& p, const Common& c) {
  TeleopParams t;
  SessionConfig& s = t.session;
  p.nested("coupling", [&](Block& b) {
    TeleopConfig& k = s.coupling;
    k.stiffness = b.number("stiffness", k.stiffness);
    k.rotational_stiffness = b.number("rotational_stiffness", k.rotational_stiffness);
    k.damping = b.number("damping", k.damping);
    k.rotational_damping = b.number("rotational_damping", k.rotational_damping);
    k.joint_damping = b.number("joint_damping", k.joint_damping);
    k.reflection_scale = b.number("reflection_scale", k.reflection_scale);
    k.delay = b.integer("delay", k.delay);
    k.buffer_capacity = b.integer("buffer_capacity", k.buffer_capacity);
    guarded<int>("params.coupling", [&] {
      k.validate();
      return 0;
    });
    return 0;
  });
  p.nested("hand", [&](Block& b) {
    s.hand.stiffness = b.number("stiffness", s.hand.stiffness, 0.0);
    s.hand.damping = b.number("damping", s.hand.damping, 0.0);
    s.hand.rotational_stiffness = b.number("rotational_stiffness", s.hand.rotational_stiffness, 0.0);
    s.hand.rotational_damping = b.number("rotational_damping", s.hand.rotational_damping, 0.0);
    return 0;
  });
  p.nested("wall", [&](Block& b) {
    const bool present = b.flag("present", true);
    const Vector3 point = b.vec3("point", Vector3(0.40, 0.0, 0.0));
    const Vector3 normal = b.vec3("normal", Vector3(-1.0, 0.0, 0.0));
    const double k = b.number("stiffness", 5000.0, 0.0), d = b.number("damping", 20.0, 0.0);
    if (present) {
      s.environment = guarded<VirtualEnvironment>("params.wall", [&] { return VirtualEnvironment::wall(point, normal, k, d); });
    }
    return 0;
  });
  const json placement = p.raw("placement", json::parse(kReferenceSetup));
  t.placement = guarded<SetupConfiguration>("params.placement", [&] { return setup_from_json(placement); });
  const json keys = p.raw("keyframes", default_keyframes());
  t.hand = guarded<HandTrajectory>("params.keyframes", [&] {
    std::vector<Keyframe> frames;
    for (const json& k : keys) {
      Keyframe f;
      f.time = k.at("time").get<double>();
      const auto pos = k.at("position").get<std::vector<double>>();
      const auto rot = k.value("rotation", std::vector<double>{0.0, 0.0, 0.0});
      if (pos.size() != 3 || rot.size() != 3) throw ScenarioError("position and rotation need 3 values");
      f.position = Vector3(pos[0], pos[1], pos[2]);
      f.rotation = Vector3(rot[0], rot[1], rot[2]);
      frames.push_back(f);
    }
    return HandTrajectory(std::move(frames));
  });
  t.duration = p.number("duration", t.duration, 1e-3, 3600.0);
  try {
    s.slave = slave_kind_from_string(p.text("slave", "robot"));
  } catch (const std::exception& e) {
    throw ScenarioError(p.where("slave") + e.what());
  }
  s.bimanual = p.flag("bimanual", false);
  s.sagittal_y = p.number("sagittal_y", s.sagittal_y);
  const auto free = p.numbers("free_window", {t.free_start, t.free_end}, 2);
  const auto press = p.numbers("press_window", {t.press_start, t.press_end}, 2);
  t.free_start = free[0];
  t.free_end = free[1];
  t.press_start = press[0];
  t.press_end = press[1];
  if (!(t.free_start < t.free_end && t.free_end <= t.duration && t.press_start < t.press_end &&
        t.press_end <= t.duration))
    throw ScenarioError("params: free_window and press_window must be ordered and inside the duration");
  t.tracking_tolerance = p.number("tracking_tolerance", t.tracking_tolerance, 0.0);
  t.feedback_tolerance = p.number("feedback_tolerance", t.feedback_tolerance, 0.0);

  s.master_sim = c.sim;
  s.slave_sim = c.sim;
  s.master_control.reshape = c.reshape;
  s.master_control.torque_lead = c.torque_lead;
  s.master_control.compensation_fraction = c.compensation_fraction;
  guarded<int>("params", [&] {
    s.validate();
    return 0;
  });
  return t;
}

struct EstimatorParams {
  EstimatorConfig estimator;
  ExcitationConfig excitation;
  int events = 10;
  int events_after_step = 10;
  bool step = true;
  double step_factor = 1.5;
  double max_time = 100.0;
  double tolerance = 0.05;
  double zero_tolerance = 1e-3;
};

EstimatorParams read_estimator_params(Block& p) {
  EstimatorParams e;
  e.estimator = p.nested("estimator", read_estimator);
  e.excitation = p.nested("excitation", read_excitation);
  guarded<int>("params.excitation", [&] {
    e.excitation.validate();
    return 0;
  });
  e.events = p.integer("events", e.events, 1);
  e.step = p.flag("step", e.step);
  e.step_factor = p.number("step_factor", e.step_factor, 0.0);
  e.events_after_step = p.integer("events_after_step", e.events_after_step, 1);
  e.max_time = p.number("max_time", e.max_time, 1e-3);
  e.tolerance = p.number("tolerance", e.tolerance, 0.0);
  e.zero_tolerance = p.number("zero_tolerance", e.zero_tolerance, 0.0);
  return e;
}

// Resolves the whole document. Running re-reads the resolved copy through
// the same readers, so validation and execution cannot disagree.
Scenario resolve(const json& doc, const fs::path& base_dir, Common* common = nullptr,
                 const std::function<void(ScenarioKind, Block&, const Common&, std::uint64_t)>& params = {}) {
  Block top(doc, "");
  Scenario s;
  s.base_dir = base_dir;
  s.kind = scenario_kind_from_string(top.required_text("kind"));
  if (!top.has("seed")) throw ScenarioError("seed: is required");
  const json& seed = doc.at("seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<long long>() >= 0))
    throw ScenarioError("seed: expected a non-negative integer");
  s.seed = seed.get<std::uint64_t>();
  top.raw("seed", seed);
  Common c = read_common(top, s.kind, base_dir);
  top.nested("params", [&](Block& p) {
    switch (s.kind) {
      case ScenarioKind::kFrictionSweep: read_sweep(p, c); break;
      case ScenarioKind::kReshapeStep: read_reshape_step(p); break;
      case ScenarioKind::kOptimizeSetup: read_optimize(p, c, s.seed); break;
      case ScenarioKind::kTeleopWall: read_teleop(p, c); break;
      case ScenarioKind::kEstimatorConvergence: read_estimator_params(p); break;
    }
    if (params) params(s.kind, p, c, s.seed);
    return 0;
  });
  s.config = top.finish();
  if (common) *common = std::move(c);
  return s;
}

// ---------------------------------------------------------------- output

class Output {
 public:
  Output(fs::path dir, ScenarioResult& result) : dir_(std::move(dir)), result_(result) {}

  void text(const std::string& name, const std::string& content) {
    std::ofstream f(dir_ / name, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    f << content;
    if (!f) throw std::runtime_error("failed writing " + (dir_ / name).string());
    result_.artifacts.push_back(name);
  }
  void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }

 private:
  fs::path dir_;
  ScenarioResult& result_;
};

void check(ScenarioResult& r, std::string name, bool passed, std::string detail) {
  r.checks.push_back({std::move(name), passed, std::move(detail)});
}

std::string fmt(double v) { return csv::number(v); }

// ---------------------------------------------------------------- kinds

void run_sweep(const Common& c, const SweepParams& p, Output& out, ScenarioResult& r) {
  const SweepResult res = friction_sweep(c.model, c.friction, p.sweep, c.sim);
  const auto& modes = all_compensation_modes();
  const size_t nv = p.sweep.velocities.size();

  // Torque the operator needs with the friction removed, per velocity, so the
  // friction-attributable part can be separated from inertial or gravity load.
  const Eigen::Index n = c.model.dof();
  auto frictionless = [&](const ReshapeConfig& reshape, double v) {
    HapticConfig h;
    h.reshape = reshape;
    h.coulomb_estimate = VectorX::Zero(n);
    h.viscous_estimate = VectorX::Zero(n);
    h.friction_compensation = false;
    return measure_interaction(c.model, FrictionModel::none(n), h, v, p.sweep, c.sim).torque;
  };
  const double ratio = res.ratio[0];

  std::vector<std::string> cols{"velocity"};
  for (CompensationMode m : modes) cols.push_back(std::string(to_string(m)));
  cols.push_back("settled");
  std::string csv_text = csv::join(cols) + "\n";

  bool ordered = true, scaled = true, settled_all = true;
  int scaled_count = 0;
  constexpr double kNegligibleTorque = 1e-9;  // N m
  std::string order_detail, scale_detail, settle_detail;
  json rows = json::array();
  for (size_t i = 0; i < nv; ++i) {
    const double v = p.sweep.velocities[i];
    csv::Row row;
    row.add(v);
    bool settled = true;
    json jrow{{"velocity", v}};
    for (size_t m = 0; m < modes.size(); ++m) {
      const SweepPoint& pt = res.points[m * nv + i];
      row.add(pt.torque);
      jrow[to_string(modes[m])] = pt.torque;
      settled = settled && pt.variance < p.variance_threshold;
    }
    row.add_text(settled ? "1" : "0");
    csv_text += row.str() + "\n";
    if (!settled) {
      settled_all = false;
      settle_detail += " v=" + fmt(v);
    }

    const double none = res.torque(CompensationMode::kNone, i), reshaped = res.torque(CompensationMode::kReshaping, i);
    const double fc = res.torque(CompensationMode::kFriction, i), combined = res.torque(CompensationMode::kCombined, i);
    const double tol = p.order_tolerance;
    if (!(combined <= reshaped + tol && combined <= fc + tol && reshaped <= none + tol && fc <= none + tol)) {
      ordered = false;
      order_detail += " v=" + fmt(v);
    }
    const double base_none = frictionless(ReshapeConfig::disabled(n), v);
    const double base_reshaped = frictionless(res.ratio.size() ? ReshapeConfig{res.ratio} : c.reshape, v);
    // Without friction there is nothing to scale at this speed.
    const bool has_friction = std::abs(none - base_none) > kNegligibleTorque;
    const double attributable = has_friction ? (reshaped - base_reshaped) / (none - base_none) : 0.0;
    jrow["reshape_friction_ratio"] = has_friction ? json(attributable) : json(nullptr);
    if (has_friction) ++scaled_count;
    if (has_friction && !(std::abs(attributable * ratio - 1.0) <= p.ratio_tolerance)) {
      scaled = false;
      scale_detail += " v=" + fmt(v) + " got " + fmt(attributable);
    }
    jrow["settled"] = settled;
    rows.push_back(jrow);
  }
  out.text("friction_sweep.csv", csv_text);

  check(r, "mode ordering: combined <= single methods <= none at every velocity", ordered,
        ordered ? "" : "violated at" + order_detail);
  if (scaled && scaled_count == 0) scale_detail = "; no friction torque at any speed";
  check(r, "reshape-only friction torque scaled by 1/r", scaled, "r = " + fmt(ratio) + (scaled ? "" : ";") + scale_detail);
  check(r, "every probe settled", settled_all, settled_all ? "" : "unsettled at" + settle_detail);

  json est = json::object();
  for (size_t m = 0; m < modes.size(); ++m) {
    est[to_string(modes[m])] = {{"coulomb", std::vector<double>(res.coulomb_estimates[m].data(),
                                                                res.coulomb_estimates[m].data() + n)},
                                {"viscous", std::vector<double>(res.viscous_estimates[m].data(),
                                                                res.viscous_estimates[m].data() + n)}};
  }
  r.summary = {{"ratio", ratio}, {"rows", rows}, {"estimates", est}};
}

void run_reshape(const Common& c, const ReshapeParams& p, Output& out, ScenarioResult& r) {
  json fits = json::array();
  std::string csv_text = "ratio,expected,identified,relative_error\n";
  for (double ratio : p.ratios) {
    const InertiaFit fit = identify_apparent_inertia(c.model, c.friction, ratio, p.u_step, p.duration, p.settle, c.sim);
    fits.push_back({{"ratio", ratio},
                    {"expected", fit.expected},
                    {"identified", fit.identified},
                    {"identified_over_b", fit.identified / c.model.motor_inertia()[0]},
                    {"relative_error", fit.relative_error}});
    csv_text += csv::Row().add(ratio).add(fit.expected).add(fit.identified).add(fit.relative_error).str() + "\n";
    check(r, "apparent inertia B/r at r = " + fmt(ratio), fit.relative_error <= p.tolerance,
          "identified " + fmt(fit.identified) + ", expected " + fmt(fit.expected) + ", relative error " +
              fmt(fit.relative_error));
  }
  out.json_file("reshape_step.json", {{"motor_inertia", c.model.motor_inertia()[0]}, {"fits", fits}});
  out.text("reshape_step.csv", csv_text);
  r.summary = {{"fits", fits}};
}

json score_json(const ScoreBreakdown& s) {
  return {{"total", s.total},
          {"coverage", s.coverage},
          {"dexterity", s.dexterity},
          {"dexterity_normalized", s.dexterity_normalized},
          {"wrench_feasibility", s.wrench_feasibility},
          {"collision_penalty", s.collision_penalty},
          {"interpenetration", s.interpenetration},
          {"reachable", s.reachable}};
}

bool finite(const ScoreBreakdown& s) {
  return std::isfinite(s.total) && std::isfinite(s.coverage) && std::isfinite(s.dexterity) &&
         std::isfinite(s.wrench_feasibility) && std::isfinite(s.collision_penalty);
}

void run_optimize(const Common& c, const OptimizeParams& p, Output& out, ScenarioResult& r) {
  EvaluationContext ctx = EvaluationContext::create(c.model, p.human, p.samples, p.weights);
  ctx.safe_distance = p.safe_distance;
  ctx.interpenetration_penalty = p.interpenetration_penalty;
  const OptimizationResult res = optimize(ctx, p.bounds, p.es);

  std::string history = "eval_index,total,coverage,dexterity,wrench,collision\n";
  for (size_t k = 0; k < res.history.size(); ++k) {
    const ScoreBreakdown& s = res.history[k].score;
    history += csv::Row()
                   .add_text(std::to_string(k))
                   .add(s.total)
                   .add(s.coverage)
                   .add(s.dexterity_normalized)
                   .add(s.wrench_feasibility)
                   .add(s.collision_penalty)
                   .str() +
               "\n";
  }
  out.text("history.csv", history);

  json report{{"model", c.model.name},
              {"samples", p.samples.size()},
              {"evaluations", res.history.size()},
              {"best", {{"setup", setup_to_json(res.best)}, {"score", score_json(res.score)}}}};
  check(r, "optimum score is finite", finite(res.score), "total " + fmt(res.score.total));

  if (p.compare_reference) {
    const json literal = json::parse(kReferenceSetup);
    const SetupConfiguration t1 = setup_from_json(literal);
    const SetupConfiguration back = setup_from_json(json::parse(setup_to_json(t1).dump()));
    const bool exact = back.base_position == t1.base_position && back.base_rotation == t1.base_rotation &&
                       back.grab_angle == t1.grab_angle &&
                       t1.base_position == Vector3(-0.205, 0.066, 0.262) &&
                       t1.base_rotation == Vector3(-0.900, 0.177, -0.219) && t1.grab_angle == -0.569;
    const ScoreBreakdown s1 = evaluate(ctx, t1);
    report["reference"] = {{"setup", setup_to_json(t1)}, {"score", score_json(s1)}};
    report["reference_minus_best"] = s1.total - res.score.total;
    check(r, "reference setup round-trips bit-exactly", exact, "");
    check(r, "reference setup score is finite", finite(s1), "total " + fmt(s1.total));
    check(r, "reference setup is collision-free", !s1.interpenetration,
          "collision penalty " + fmt(s1.collision_penalty));
  }

  if (p.grid_resolution) {
    std::vector<int> dims;
    for (int i = 0; i < 7; ++i)
      if (p.bounds.lower[i] < p.bounds.upper[i]) dims.push_back(i);
    const int g = p.grid_resolution;
    double best = -std::numeric_limits<double>::infinity();
    bool best_feasible = false;
    VectorX arg = p.bounds.lower;
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        VectorX x = p.bounds.lower;
        for (int d = 0; d < 2; ++d) {
          const int idx = d == 0 ? i : j, k = dims[static_cast<size_t>(d)];
          x[k] = p.bounds.lower[k] + (p.bounds.upper[k] - p.bounds.lower[k]) * idx / (g - 1);
        }
        const ScoreBreakdown s = evaluate(ctx, SetupConfiguration::from_vector(x));
        const bool f = !s.interpenetration;
        if ((f && !best_feasible) || (f == best_feasible && s.total > best)) {
          best = s.total;
          best_feasible = f;
          arg = x;
        }
      }
    }
    const SetupConfiguration grid_best = SetupConfiguration::from_vector(arg);
    report["grid_oracle"] = {{"resolution", g}, {"setup", setup_to_json(grid_best)}, {"total", best}};
    const bool ok = best_feasible && !res.score.interpenetration && res.score.total >= (1.0 - p.grid_tolerance) * best;
    check(r, "optimum within tolerance of the grid oracle", ok,
          "optimum " + fmt(res.score.total) + " vs grid " + fmt(best));
  }
  out.json_file("optimization_report.json", report);
  r.summary = report;
}

void run_teleop(const Common& c, const TeleopParams& p, Output& out, ScenarioResult& r) {
  const SessionConfig& cfg = p.session;
  const TeleopLog log = run_session(c.model, c.friction, c.friction, p.placement, p.hand, cfg, p.duration);
  std::ostringstream csv_text;
  log.write_csv(csv_text);
  out.text("teleop.csv", csv_text.str());

  const double scale = cfg.coupling.reflection_scale;
  const int delay = cfg.coupling.delay;
  const VirtualEnvironment& env = cfg.environment;
  double free_err = 0.0, max_contact = 0.0, fb_err = 0.0, worst_energy_rise = 0.0;
  bool adhesive = false;
  json channels = json::array();
  for (int ch = 0; ch < (cfg.bimanual ? 2 : 1); ++ch) {
    const auto samples = log.channel(ch);
    const Vector3 normal = ch == 1 ? env.mirrored(cfg.sagittal_y).normal : env.normal;
    double press_sum = 0.0, ch_free = 0.0;
    int press_count = 0;
    for (size_t i = 0; i < samples.size(); ++i) {
      const TeleopSample& s = samples[i];
      if (s.time >= p.free_start - 1e-12 && s.time <= p.free_end + 1e-12) ch_free = std::max(ch_free, s.tracking_error);
      max_contact = std::max(max_contact, s.contact.force.norm());
      if (env.present && -s.contact.force.dot(normal) < 0.0) adhesive = true;
      // Feedback at i reflects the contact sent `delay` ticks earlier.
      const Vector6 sent = i >= static_cast<size_t>(delay) ? samples[i - static_cast<size_t>(delay)].contact.stacked()
                                                          : Vector6::Zero();
      const double err = (s.feedback.stacked() + scale * sent).norm();
      fb_err = std::max(fb_err, err / std::max(scale * sent.norm(), 1e-9));
      if (s.time >= p.press_start - 1e-12 && s.time <= p.press_end + 1e-12) {
        press_sum += -s.contact.force.dot(normal);
        ++press_count;
      }
      if (i > 0 && s.time >= p.free_start) worst_energy_rise = std::max(worst_energy_rise, s.loop_energy - samples[i - 1].loop_energy);
    }
    free_err = std::max(free_err, ch_free);
    json chj{{"channel", ch == 0 ? "left" : "right"}, {"free_tracking_error", ch_free}};
    if (env.present && press_count) {
      // Operator spring, coupling spring (for the arm) and wall in series.
      const double press_force = press_sum / press_count;
      const Pose hand = ch == 1 ? p.hand.mirrored(cfg.sagittal_y).pose(p.press_start) : p.hand.pose(p.press_start);
      const Vector3 point = ch == 1 ? env.mirrored(cfg.sagittal_y).point : env.point;
      const double depth = normal.dot(point - hand.translation);
      const double kw = env.stiffness, kp = cfg.coupling.stiffness, kh = cfg.hand.stiffness;
      const double keff = cfg.slave == SlaveKind::kRobot ? kw * kp / (kw + kp) : kw;
      const double oracle = depth > 0.0 ? keff * depth / (1.0 + scale * keff / kh) : 0.0;
      chj["press_force"] = press_force;
      chj["press_force_oracle"] = oracle;
      check(r, std::string("press equilibrium matches the series-spring balance (") + (ch ? "right" : "left") + ")",
            oracle > 0.0 && std::abs(press_force - oracle) <= p.feedback_tolerance * oracle,
            "mean contact " + fmt(press_force) + " N vs " + fmt(oracle) + " N");
    }
    channels.push_back(chj);
  }
  check(r, "free-space steady tracking error below tolerance", free_err < p.tracking_tolerance,
        "max " + fmt(free_err) + " m over [" + fmt(p.free_start) + ", " + fmt(p.free_end) + "] s");
  check(r, "feedback equals -scale x delayed contact", fb_err <= p.feedback_tolerance,
        "worst relative mismatch " + fmt(fb_err));
  check(r, "wall never pulls (non-adhesion at every sample)", !adhesive, "");

  r.summary = {{"max_contact_force", max_contact},
               {"free_tracking_error", free_err},
               {"feedback_mismatch", fb_err},
               {"non_adhesion", !adhesive},
               {"energy_growth_after_free_start", worst_energy_rise},
               {"energy_growth_flag", worst_energy_rise > 1e-6},
               {"channels", channels},
               {"samples", log.samples.size()}};
}

void run_estimator(const Common& c, const EstimatorParams& p, Output& out, ScenarioResult& r) {
  const Eigen::Index n = c.model.dof();
  EstimationSession session(c.model, c.friction, c.reshape, p.estimator, p.excitation, c.sim);

  // The estimator sees friction through reshaping, i.e. f / r.
  auto evaluate_error = [&](const FrictionModel& truth, const std::string& label) {
    const VectorX fc = truth.coulomb.cwiseQuotient(c.reshape.ratio), fv = truth.viscous.cwiseQuotient(c.reshape.ratio);
    const VectorX& ec = session.estimator().coulomb();
    const VectorX& ev = session.estimator().viscous();
    bool ok = true;
    std::string detail;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (const auto& [est, tru, name] : {std::tuple{ec[i], fc[i], "coulomb"}, std::tuple{ev[i], fv[i], "viscous"}}) {
        const bool zero = tru == 0.0;
        const double err = zero ? std::abs(est) : std::abs(est - tru) / tru;
        const bool pass = zero ? err <= p.zero_tolerance : err <= p.tolerance;
        ok = ok && pass;
        detail += std::string(detail.empty() ? "" : "; ") + name + std::to_string(i) + " " + fmt(est) + " vs " +
                  fmt(tru);
      }
    }
    check(r, label, ok, detail);
  };

  const int first = session.run_events(p.events, p.max_time);
  check(r, "accepted " + std::to_string(p.events) + " events", first == p.events, "got " + std::to_string(first));
  evaluate_error(c.friction, "estimates within tolerance after " + std::to_string(p.events) + " events");
  json summary{{"events", first}};
  if (p.step) {
    FrictionModel stepped = c.friction;
    stepped.coulomb *= p.step_factor;
    stepped.viscous *= p.step_factor;
    summary["step_time"] = session.state().time;
    session.set_friction(stepped);
    const int second = session.run_events(p.events_after_step, p.max_time);
    check(r, "accepted " + std::to_string(p.events_after_step) + " events after the step",
          second == p.events_after_step, "got " + std::to_string(second));
    evaluate_error(stepped, "estimates re-converged within " + std::to_string(p.events_after_step) +
                                " events after the truth step");
    summary["events_after_step"] = second;
  }

  std::vector<std::string> cols{"event", "t"};
  csv::append_repeated(cols, "coulomb_hat", n);
  csv::append_repeated(cols, "viscous_hat", n);
  csv::append_repeated(cols, "coulomb_true", n);
  csv::append_repeated(cols, "viscous_true", n);
  std::string text = csv::join(cols) + "\n";
  for (size_t k = 0; k < session.history().size(); ++k) {
    csv::Row row;
    row.add_text(std::to_string(k + 1));
    for (double v : session.history()[k]) row.add(v);
    text += row.str() + "\n";
  }
  out.text("estimates.csv", text);
  summary["coulomb"] = std::vector<double>(session.estimator().coulomb().data(), session.estimator().coulomb().data() + n);
  summary["viscous"] = std::vector<double>(session.estimator().viscous().data(), session.estimator().viscous().data() + n);
  r.summary = summary;
}

}  // namespace

Scenario scenario_from_json(const json& doc, const fs::path& base_dir) {
  if (doc.is_object() && doc.contains("scenario") && doc.contains("base_dir")) {
    return resolve(doc.at("scenario"), fs::path(doc.at("base_dir").get<std::string>()));
  }
  return resolve(doc, base_dir);
}

Scenario load_scenario(const fs::path& path, const std::vector<std::string>& overrides) {
  std::ifstream f(path);
  if (!f) throw ScenarioError("cannot open scenario " + path.string());
  json doc = json::parse(f, nullptr, false);
  if (doc.is_discarded()) throw ScenarioError(path.string() + " is not valid JSON");
  json* target = &doc;
  fs::path base = fs::absolute(path).parent_path();
  if (doc.is_object() && doc.contains("scenario") && doc.contains("base_dir")) {
    target = &doc["scenario"];
    base = fs::path(doc["base_dir"].get<std::string>());
  }
  for (const std::string& o : overrides) apply_override(*target, o);
  return resolve(*target, base);
}

json scenario_metadata(const Scenario& s) {
  return {{"artifact", "hapticlab"},
          {"version", artifact_version()},
          {"kind", to_string(s.kind)},
          {"seed", s.seed},
          {"base_dir", s.base_dir.string()},
          {"scenario", s.config}};
}

ScenarioResult run_scenario(const Scenario& scenario, const fs::path& out_dir) {
  fs::create_directories(out_dir);
  ScenarioResult result;
  Output out(out_dir, result);
  out.json_file("metadata.json", scenario_metadata(scenario));

  resolve(scenario.config, scenario.base_dir, nullptr,
          [&](ScenarioKind kind, Block& p, const Common& c, std::uint64_t seed) {
            // Re-reading the resolved block yields the same values it recorded.
            Block again(p.out, "params");
            switch (kind) {
              case ScenarioKind::kFrictionSweep: run_sweep(c, read_sweep(again, c), out, result); break;
              case ScenarioKind::kReshapeStep: run_reshape(c, read_reshape_step(again), out, result); break;
              case ScenarioKind::kOptimizeSetup: run_optimize(c, read_optimize(again, c, seed), out, result); break;
              case ScenarioKind::kTeleopWall: run_teleop(c, read_teleop(again, c), out, result); break;
              case ScenarioKind::kEstimatorConvergence:
                run_estimator(c, read_estimator_params(again), out, result);
                break;
            }
          });

  json checks = json::array();
  for (const Check& ch : result.checks) checks.push_back({{"name", ch.name}, {"passed", ch.passed}, {"detail", ch.detail}});
  json summary{{"kind", to_string(scenario.kind)},
               {"passed", result.passed()},
               {"checks", checks},
               {"results", result.summary}};
  out.json_file("summary.json", summary);
  return result;
}

}  // namespace hapticlab
