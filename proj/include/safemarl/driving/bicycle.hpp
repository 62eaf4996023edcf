/*
 * Copyright 2026 The safemarl Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "safemarl/driving/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>

namespace safemarl::driving {

struct VehicleState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;  // radians, wrapped to (-pi, pi]
  double speed = 0.0;    // m/s, within [0, v_max]
  double length = 5.0;
  double width = 2.0;
  std::size_t lane = 0;   // index into the agent's lane set
  double progress = 0.0;  // arclength along the agent's route

  [[nodiscard]] Vec2 position() const { return {x, y}; }
  [[nodiscard]] OrientedBox footprint() const { return {{x, y}, heading, length, width}; }
};

struct BicycleLimits {
  double v_max = 20.0;
  double steer_max = 0.5;
};

/// Kinematic bicycle with the centre of gravity midway between the axles,
/// advanced by one explicit-Euler step. Steering is clamped to the limits.
inline VehicleState bicycle_step(const VehicleState& v, double accel, double steer, double dt,
                                 const BicycleLimits& limits = {}) {
  steer = std::clamp(steer, -limits.steer_max, limits.steer_max);
  const double slip = std::atan(0.5 * std::tan(steer));
  VehicleState next = v;
  next.x += v.speed * dt * std::cos(v.heading + slip);
  next.y += v.speed * dt * std::sin(v.heading + slip);
  next.heading = v.heading + v.speed / (0.5 * v.length) * std::sin(slip) * dt;
  if (next.heading > std::numbers::pi || next.heading <= -std::numbers::pi) {
    next.heading = wrap_angle(next.heading);
  }
  next.speed = std::clamp(v.speed + accel * dt, 0.0, limits.v_max);
  return next;
}

}  // namespace safemarl::driving
