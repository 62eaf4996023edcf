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

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>

namespace safemarl::agents {

/// Linear interpolation from `start` to `end` over the first `fraction` of
/// `total` steps, constant afterwards.
struct LinearSchedule {
  double start = 1.0;
  double end = 0.05;
  double fraction = 0.5;

  void validate() const {
    if (!(fraction > 0.0 && fraction <= 1.0)) throw std::invalid_argument("schedule fraction must lie in (0, 1]");
    if (end > start) throw std::invalid_argument("schedule must be nonincreasing");
  }

  [[nodiscard]] double operator()(std::uint64_t step, std::uint64_t total) const {
    const double horizon = fraction * static_cast<double>(total);
    if (horizon <= 0.0) return end;
    const double t = std::min(1.0, static_cast<double>(step) / horizon);
    return start + t * (end - start);
  }
};

/// Box bounds for continuous actions; actors emit tanh in [-1, 1] which is
/// mapped affinely onto [low, high].
struct ActionBounds {
  double low = -1.0;
  double high = 1.0;

  [[nodiscard]] double mid() const { return 0.5 * (low + high); }
  [[nodiscard]] double half() const { return 0.5 * (high - low); }

  template <typename M>
  [[nodiscard]] M scale(const M& squashed) const {
    return (squashed.array() * half() + mid()).matrix();
  }
  template <typename M>
  [[nodiscard]] M clip(const M& a) const {
    return a.cwiseMax(low).cwiseMin(high);
  }
};

/// Thresholds may be +infinity, which JSON cannot carry; it is written "inf".
inline nlohmann::json threshold_to_json(double d) {
  if (std::isinf(d) && d > 0.0) return "inf";
  return d;
}

inline double threshold_from_json(const nlohmann::json& j) {
  if (j.is_string()) {
    const auto s = j.get<std::string>();
    if (s == "inf" || s == "+inf" || s == "infinity") return std::numeric_limits<double>::infinity();
    throw std::invalid_argument("bad threshold: " + s);
  }
  if (j.is_null()) return std::numeric_limits<double>::infinity();
  return j.get<double>();
}

}  // namespace safemarl::agents
