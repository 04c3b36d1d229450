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

#pragma once

#include "hapticlab/geometry.hpp"
#include "hapticlab/robot_model.hpp"

namespace hapticlab {

// Link-side rigid-body terms of  M(q) qdd + C(q, qd) qd + g(q) = tau.
// Every function is pure and reentrant.

/// Joint-space inertia matrix from the composite-rigid-body recursion.
MatrixX mass_matrix(const RobotModel& model, const VectorX& q);

/// Recursive Newton-Euler inverse dynamics.
VectorX inverse_dynamics(const RobotModel& model, const VectorX& q, const VectorX& qdot, const VectorX& qddot);

/// C(q, qd) qd + g(q).
VectorX bias_forces(const RobotModel& model, const VectorX& q, const VectorX& qdot);

/// g(q).
VectorX gravity_vector(const RobotModel& model, const VectorX& q);

/// Gravitational potential -sum_i m_i g . c_i(q), referenced to the base origin.
double potential_energy(const RobotModel& model, const VectorX& q);

/// 1/2 qd^T M(q) qd.
double kinetic_energy(const RobotModel& model, const VectorX& q, const VectorX& qdot);

}  // namespace hapticlab
