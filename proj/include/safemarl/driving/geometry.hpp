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

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <vector>

namespace safemarl::driving {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  [[nodiscard]] double dot(Vec2 o) const { return x * o.x + y * o.y; }
  [[nodiscard]] double cross(Vec2 o) const { return x * o.y - y * o.x; }
  [[nodiscard]] double norm() const { return std::hypot(x, y); }
};

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a + std::numbers::pi, two_pi);
  if (a <= 0.0) a += two_pi;
  return a - std::numbers::pi;
}

/// Rectangle centred at `center`, long side along `heading`.
struct OrientedBox {
  Vec2 center;
  double heading = 0.0;
  double length = 5.0;
  double width = 2.0;

  [[nodiscard]] std::array<Vec2, 4> corners() const {
    const Vec2 u{std::cos(heading), std::sin(heading)};
    const Vec2 v{-u.y, u.x};
    const Vec2 hu = u * (0.5 * length);
    const Vec2 hv = v * (0.5 * width);
    return {center + hu + hv, center - hu + hv, center - hu - hv, center + hu - hv};
  }
};

/// Separating-axis overlap test for two oriented rectangles. Touching edges
/// count as overlap.
inline bool boxes_overlap(const OrientedBox& a, const OrientedBox& b) {
  const auto ca = a.corners();
  const auto cb = b.corners();
  const std::array<Vec2, 4> axes = {Vec2{std::cos(a.heading), std::sin(a.heading)},
                                    Vec2{-std::sin(a.heading), std::cos(a.heading)},
                                    Vec2{std::cos(b.heading), std::sin(b.heading)},
                                    Vec2{-std::sin(b.heading), std::cos(b.heading)}};
  for (const Vec2& axis : axes) {
    double amin = std::numeric_limits<double>::infinity();
    double amax = -amin;
    double bmin = amin;
    double bmax = -amin;
    for (const Vec2& p : ca) {
      const double d = p.dot(axis);
      amin = std::min(amin, d);
      amax = std::max(amax, d);
    }
    for (const Vec2& p : cb) {
      const double d = p.dot(axis);
      bmin = std::min(bmin, d);
      bmax = std::max(bmax, d);
    }
    if (amax < bmin || bmax < amin) return false;
  }
  return true;
}

struct PathProjection {
  double s = 0.0;        // arclength of the closest point
  double lateral = 0.0;  // signed offset, positive to the left of travel
  double heading = 0.0;  // path heading at the closest point
};

struct Pose {
  Vec2 position;
  double heading = 0.0;
};

/// Piecewise-linear path with arclength parameterisation, built from line and
/// arc pieces.
class Path {
 public:
  Path() = default;

  explicit Path(Vec2 start) { points_.push_back(start); s_.push_back(0.0); }

  Path& line_to(Vec2 p) {
    require_start();
    push(p);
    return *this;
  }

  /// Arc around `center` from the current point, sweeping `sweep` radians
  /// (positive counter-clockwise), discretised every `step` radians.
  Path& arc(Vec2 center, double sweep, double step = 0.05) {
    require_start();
    const Vec2 r0 = points_.back() - center;
    const double radius = r0.norm();
    const double a0 = std::atan2(r0.y, r0.x);
    const int n = std::max(1, static_cast<int>(std::ceil(std::abs(sweep) / step)));
    for (int k = 1; k <= n; ++k) {
      const double a = a0 + sweep * static_cast<double>(k) / n;
      push({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
    }
    return *this;
  }

  /// Joins the end back to the start. Closed paths do not extend their end
  /// segments when projecting.
  Path& close() {
    require_start();
    push(points_.front());
    closed_ = true;
    return *this;
  }

  [[nodiscard]] bool closed() const { return closed_; }
  [[nodiscard]] double length() const { return s_.empty() ? 0.0 : s_.back(); }
  [[nodiscard]] const std::vector<Vec2>& points() const { return points_; }

  [[nodiscard]] PathProjection project(Vec2 p) const {
    if (points_.size() < 2) throw std::logic_error("path needs at least two points");
    PathProjection best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i + 1 < points_.size(); ++i) {
      const Vec2 a = points_[i];
      const Vec2 seg = points_[i + 1] - a;
      const double len2 = seg.dot(seg);
      double t = len2 > 0.0 ? (p - a).dot(seg) / len2 : 0.0;
      // The first and last segments extend to infinity so positions before the
      // start or beyond the end project with a meaningful lateral offset.
      if (i > 0 || closed_) t = std::max(t, 0.0);
      if (i + 2 < points_.size() || closed_) t = std::min(t, 1.0);
      const Vec2 q = a + seg * t;
      const Vec2 diff = p - q;
      const double d2 = diff.dot(diff);
      if (d2 < best_d2) {
        best_d2 = d2;
        const double len = std::sqrt(len2);
        best.s = s_[i] + t * len;
        best.heading = std::atan2(seg.y, seg.x);
        best.lateral = len > 0.0 ? seg.cross(p - a) / len : 0.0;
      }
    }
    return best;
  }

  [[nodiscard]] Pose pose_at(double s) const {
    if (points_.size() < 2) throw std::logic_error("path needs at least two points");
    const auto it = std::upper_bound(s_.begin(), s_.end(), s);
    std::size_t i = it == s_.begin() ? 0 : static_cast<std::size_t>(it - s_.begin()) - 1;
    i = std::min(i, points_.size() - 2);
    const Vec2 a = points_[i];
    const Vec2 seg = points_[i + 1] - a;
    const double len = s_[i + 1] - s_[i];
    const double t = len > 0.0 ? (s - s_[i]) / len : 0.0;
    return {a + seg * t, std::atan2(seg.y, seg.x)};
  }

 private:
  void require_start() const {
    if (points_.empty()) throw std::logic_error("path has no start point");
  }
  void push(Vec2 p) {
    s_.push_back(s_.back() + (p - points_.back()).norm());
    points_.push_back(p);
  }

  std::vector<Vec2> points_;
  std::vector<double> s_;
  bool closed_ = false;
};

}  // namespace safemarl::driving
