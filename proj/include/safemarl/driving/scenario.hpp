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

// Two-vehicle driving scenarios: merge, roundabout, intersection, racetrack.
//
// Every agent owns a route (a Path used to measure longitudinal progress) and
// a set of parallel lanes ordered right to left. Discrete meta-actions move a
// target lane and nudge the speed; a lateral controller steers toward the
// target lane. Continuous scenarios expose one normalised control in [-1, 1]:
// throttle on the intersection (lateral control automatic) and steering on the
// racetrack (speed held constant).

#pragma once

#include "safemarl/driving/bicycle.hpp"
#include "safemarl/driving/geometry.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <memory>
#include <numbers>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace safemarl::driving {

enum class ScenarioKind { Merge, Roundabout, Intersection, Racetrack };

inline std::string_view to_string(ScenarioKind k) {
  switch (k) {
    case ScenarioKind::Merge: return "merge";
    case ScenarioKind::Roundabout: return "roundabout";
    case ScenarioKind::Intersection: return "intersection";
    case ScenarioKind::Racetrack: return "racetrack";
  }
  return "?";
}

inline ScenarioKind scenario_from_string(std::string_view s) {
  if (s == "merge") return ScenarioKind::Merge;
  if (s == "roundabout") return ScenarioKind::Roundabout;
  if (s == "intersection") return ScenarioKind::Intersection;
  if (s == "racetrack") return ScenarioKind::Racetrack;
  throw std::invalid_argument("unknown scenario: " + std::string(s));
}

inline bool is_discrete(ScenarioKind k) {
  return k == ScenarioKind::Merge || k == ScenarioKind::Roundabout;
}

enum class MetaAction : std::uint8_t { LaneLeft = 0, Idle = 1, LaneRight = 2, Faster = 3, Slower = 4 };
inline constexpr std::size_t kMetaActions = 5;

inline std::string_view to_string(MetaAction a) {
  switch (a) {
    case MetaAction::LaneLeft: return "LANE_LEFT";
    case MetaAction::Idle: return "IDLE";
    case MetaAction::LaneRight: return "LANE_RIGHT";
    case MetaAction::Faster: return "FASTER";
    case MetaAction::Slower: return "SLOWER";
  }
  return "?";
}

inline constexpr int kScenarioFormatVersion = 1;

struct ScenarioConfig {
  ScenarioKind kind = ScenarioKind::Merge;
  double dt = 0.1;
  std::size_t horizon = 200;

  double v_max = 20.0;
  double steer_max = 0.5;
  double accel_step = 2.0;  // FASTER / SLOWER magnitude, m/s^2
  double accel_max = 5.0;   // continuous throttle bound, m/s^2
  double vehicle_length = 5.0;
  double vehicle_width = 2.0;
  double lane_width = 4.0;
  double nominal_speed = 10.0;
  double position_noise = 2.0;
  double speed_noise = 1.0;

  double speed_band_low = 8.0;
  double speed_band_high = 12.0;
  double speed_reward = 2.0;
  double first_bonus = 10.0;
  double second_bonus = 5.0;
  double collision_cost = 5.0;

  double lateral_kp = 0.08;  // rad per metre of lateral error
  double lateral_kd = 0.9;   // rad per rad of heading error

  // merge
  double ramp_end = 80.0;
  double merge_finish = 140.0;
  // roundabout
  double ring_radius = 24.0;
  double leader_approach = 67.7;
  double follower_approach = 30.0;
  double exit_length = 30.0;
  // intersection
  double approach_length = 40.0;
  double past_center = 25.0;
  // racetrack
  double straight_length = 100.0;
  double track_radius = 30.0;
  double follower_heading_offset = 0.05;

  static ScenarioConfig defaults(ScenarioKind kind) {
    ScenarioConfig c;
    c.kind = kind;
    switch (kind) {
      case ScenarioKind::Merge: c.horizon = 200; break;
      case ScenarioKind::Roundabout: c.horizon = 220; break;
      case ScenarioKind::Intersection: c.horizon = 120; break;
      case ScenarioKind::Racetrack:
        c.horizon = 300;
        c.steer_max = 0.3;
        c.speed_noise = 0.0;
        break;
    }
    return c;
  }
};

#define SAFEMARL_SCENARIO_FIELDS(X)                                                              \
  X(dt) X(horizon) X(v_max) X(steer_max) X(accel_step) X(accel_max) X(vehicle_length)            \
  X(vehicle_width) X(lane_width) X(nominal_speed) X(position_noise) X(speed_noise)                \
  X(speed_band_low) X(speed_band_high) X(speed_reward) X(first_bonus) X(second_bonus)            \
  X(collision_cost) X(lateral_kp) X(lateral_kd) X(ramp_end) X(merge_finish) X(ring_radius)       \
  X(leader_approach) X(follower_approach) X(exit_length) X(approach_length) X(past_center)        \
  X(straight_length) X(track_radius) X(follower_heading_offset)

inline nlohmann::json to_json(const ScenarioConfig& c) {
  nlohmann::json j;
  j["format_version"] = kScenarioFormatVersion;
  j["kind"] = std::string(to_string(c.kind));
#define X(f) j[#f] = c.f;
  SAFEMARL_SCENARIO_FIELDS(X)
#undef X
  return j;
}

/// Missing keys keep the per-kind defaults.
inline ScenarioConfig scenario_config_from_json(const nlohmann::json& j) {
  if (j.contains("format_version") && j.at("format_version").get<int>() != kScenarioFormatVersion) {
    throw std::invalid_argument("unsupported scenario config format_version");
  }
  ScenarioConfig c = ScenarioConfig::defaults(scenario_from_string(j.at("kind").get<std::string>()));
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
  SAFEMARL_SCENARIO_FIELDS(X)
#undef X
  return c;
}

inline ScenarioConfig load_scenario_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open scenario config: " + path);
  return scenario_config_from_json(nlohmann::json::parse(in));
}

struct Lane {
  Path path;
  double available_from = -std::numeric_limits<double>::infinity();  // route progress
  double available_to = std::numeric_limits<double>::infinity();
};

struct AgentLayout {
  Path route;
  double loop_length = 0.0;  // > 0 for closed routes
  std::vector<Lane> lanes;   // right to left
  std::size_t start_lane = 0;
  double start_progress = 0.0;
  double finish_progress = std::numeric_limits<double>::infinity();
  double conflict_progress = 0.0;  // landmark: progress of the contested point
};

struct Layout {
  ScenarioConfig config;
  std::array<AgentLayout, 2> agents;
  std::vector<OrientedBox> obstacles;
};

inline std::shared_ptr<const Layout> build_layout(const ScenarioConfig& cfg) {
  auto layout = std::make_shared<Layout>();
  layout->config = cfg;
  const double w = cfg.lane_width;
  constexpr double pi = std::numbers::pi;

  auto straight = [](Vec2 a, Vec2 b) { return Path(a).line_to(b); };

  switch (cfg.kind) {
    case ScenarioKind::Merge: {
      const double x0 = -50.0;
      const double x1 = cfg.merge_finish + 200.0;
      auto lane_at = [&](double y) { return straight({x0, y}, {x1, y}); };
      for (auto& a : layout->agents) {
        a.route = lane_at(0.0);
        a.start_progress = -x0;
        a.finish_progress = cfg.merge_finish - x0;
        a.conflict_progress = cfg.ramp_end - x0;
      }
      AgentLayout& leader = layout->agents[0];
      leader.lanes = {{lane_at(0.0)}, {lane_at(w)}};
      leader.start_lane = 0;
      AgentLayout& follower = layout->agents[1];
      follower.lanes = {{lane_at(-w), -std::numeric_limits<double>::infinity(), cfg.ramp_end - x0},
                        {lane_at(0.0)},
                        {lane_at(w)}};
      follower.start_lane = 0;
      layout->obstacles.push_back({{cfg.ramp_end + 2.0, -w}, 0.0, 4.0, w});
      break;
    }
    case ScenarioKind::Roundabout: {
      // Clockwise circulation; the ring centre lies to the right of travel, so
      // the inner lane is lane 0 and the outer (route) lane is lane 1.
      const double r = cfg.ring_radius;
      const double r_in = r - w;
      const Vec2 c{0.0, 0.0};
      const double quarter = 0.5 * pi * r;
      // Leader enters at the west point heading north, follower at the south
      // point heading west; both leave at the north point heading east.
      AgentLayout& leader = layout->agents[0];
      const double lead_pre = cfg.leader_approach + 20.0;
      leader.route = Path({-r, -lead_pre}).line_to({-r, 0.0}).arc(c, -0.5 * pi).line_to({cfg.exit_length + 100.0, r});
      leader.start_progress = 20.0;
      leader.conflict_progress = lead_pre;
      leader.finish_progress = lead_pre + quarter + cfg.exit_length;
      const Path lead_inner = Path({-r_in, 0.0}).arc(c, -0.5 * pi);
      leader.lanes = {{lead_inner, lead_pre + 5.0, lead_pre + quarter - 5.0}, {leader.route}};
      leader.start_lane = 1;

      AgentLayout& follower = layout->agents[1];
      const double fol_pre = cfg.follower_approach + 20.0;
      follower.route = Path({fol_pre, -r}).line_to({0.0, -r}).arc(c, -pi).line_to({cfg.exit_length + 100.0, r});
      follower.start_progress = 20.0;
      follower.conflict_progress = fol_pre + quarter;
      follower.finish_progress = fol_pre + 2.0 * quarter + cfg.exit_length;
      const Path fol_inner = Path({0.0, -r_in}).arc(c, -pi);
      follower.lanes = {{fol_inner, fol_pre + 5.0, fol_pre + 2.0 * quarter - 5.0}, {follower.route}};
      follower.start_lane = 1;
      break;
    }
    case ScenarioKind::Intersection: {
      const double pre = cfg.approach_length + 20.0;
      const double post = cfg.past_center + 100.0;
      AgentLayout& leader = layout->agents[0];  // south to north
      leader.route = straight({0.0, -pre}, {0.0, post});
      AgentLayout& follower = layout->agents[1];  // west to east
      follower.route = straight({-pre, 0.0}, {post, 0.0});
      for (auto& a : layout->agents) {
        a.lanes = {{a.route}};
        a.start_progress = 20.0;
        a.conflict_progress = pre;
        a.finish_progress = pre + cfg.past_center;
      }
      break;
    }
    case ScenarioKind::Racetrack: {
      // Counter-clockwise stadium; the centre is on the left, so the outer
      // lane is lane 0 and the inner lane is lane 1.
      const double half = 0.5 * cfg.straight_length;
      auto loop = [&](double radius) {
        return Path({-half, -radius})
            .line_to({half, -radius})
            .arc({half, 0.0}, pi)
            .line_to({-half, radius})
            .arc({-half, 0.0}, pi)
            .close();
      };
      for (auto& a : layout->agents) {
        a.route = loop(cfg.track_radius);
        a.loop_length = a.route.length();
        a.lanes = {{loop(cfg.track_radius + 0.5 * w)}, {loop(cfg.track_radius - 0.5 * w)}};
        a.start_progress = half;
        a.conflict_progress = half + cfg.straight_length;  // first bend
      }
      layout->agents[0].start_lane = 1;
      layout->agents[1].start_lane = 0;
      break;
    }
  }
  return layout;
}

struct StepOutcome {
  std::vector<double> obs1;
  std::vector<double> obs2;
  std::vector<double> global_state;
  double r1 = 0.0;
  double r2 = 0.0;
  double c1 = 0.0;
  double c2 = 0.0;
  bool done = false;
  bool collision1 = false;
  bool collision2 = false;
  bool off_road1 = false;
  bool off_road2 = false;
  bool finished1 = false;  // agent has crossed its finish line (this step or earlier)
  bool finished2 = false;
};

struct Control {
  double accel = 0.0;
  double steer = 0.0;
};

class SteppedAfterDone : public std::logic_error {
 public:
  SteppedAfterDone() : std::logic_error("scenario stepped after the episode ended") {}
};

struct ScenarioState {
  std::shared_ptr<const Layout> layout;
  std::array<VehicleState, 2> vehicles;
  std::array<std::size_t, 2> target_lane{0, 0};
  std::array<bool, 2> finished{false, false};
  std::vector<std::size_t> finish_order;
  std::size_t steps = 0;
  bool done = false;

  [[nodiscard]] const ScenarioConfig& config() const { return layout->config; }
  [[nodiscard]] ScenarioKind kind() const { return layout->config.kind; }
};

namespace detail {

inline double route_progress(const AgentLayout& a, Vec2 p, double previous) {
  const double s = a.route.project(p).s;
  if (a.loop_length <= 0.0) return s;
  // Unwrap on closed routes: choose the representative closest to `previous`.
  const double laps = std::round((previous - s) / a.loop_length);
  return s + laps * a.loop_length;
}

inline VehicleState place_on_route(const AgentLayout& a, const ScenarioConfig& cfg, std::size_t lane,
                                   double progress, double speed) {
  // Map route progress to the lane through the route pose.
  const Pose on_route = a.route.pose_at(progress);
  const PathProjection pj = a.lanes[lane].path.project(on_route.position);
  const Pose p = a.lanes[lane].path.pose_at(pj.s);
  VehicleState v;
  v.x = p.position.x;
  v.y = p.position.y;
  v.heading = wrap_angle(p.heading);
  v.speed = speed;
  v.length = cfg.vehicle_length;
  v.width = cfg.vehicle_width;
  v.lane = lane;
  v.progress = progress;
  return v;
}

inline bool lane_available(const AgentLayout& a, std::size_t lane, double progress) {
  return lane < a.lanes.size() && progress >= a.lanes[lane].available_from &&
         progress <= a.lanes[lane].available_to;
}

inline bool on_road(const Layout& layout, std::size_t agent, const VehicleState& v) {
  const ScenarioConfig& cfg = layout.config;
  const double w = cfg.lane_width;
  switch (cfg.kind) {
    case ScenarioKind::Merge: {
      if (v.y >= -0.5 * w && v.y <= 1.5 * w) return true;
      return v.y >= -1.5 * w && v.y < -0.5 * w && v.x <= cfg.ramp_end + 4.0;
    }
    case ScenarioKind::Roundabout: {
      const double r = std::hypot(v.x, v.y);
      if (r >= cfg.ring_radius - 1.5 * w && r <= cfg.ring_radius + 0.5 * w) return true;
      return std::abs(layout.agents[agent].route.project(v.position()).lateral) <= 0.5 * w;
    }
    case ScenarioKind::Intersection:
      return std::abs(v.x) <= 0.5 * w || std::abs(v.y) <= 0.5 * w;
    case ScenarioKind::Racetrack:
      return std::abs(layout.agents[agent].route.project(v.position()).lateral) <= w;
  }
  return true;
}

/// Lateral offset from the nearest lane centre of the agent's lane set.
inline double nearest_lane_offset(const AgentLayout& a, Vec2 p) {
  double best = std::numeric_limits<double>::infinity();
  for (const Lane& lane : a.lanes) best = std::min(best, std::abs(lane.path.project(p).lateral));
  return best;
}

}  // namespace detail

/// Places both vehicles at their nominal poses plus uniform noise of
/// +/- position_noise along the route and +/- speed_noise on the speed.
inline ScenarioState reset(const ScenarioConfig& cfg, std::uint64_t seed) {
  ScenarioState s;
  s.layout = build_layout(cfg);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);
  for (std::size_t i = 0; i < 2; ++i) {
    const AgentLayout& a = s.layout->agents[i];
    const double progress = a.start_progress + cfg.position_noise * unit(rng);
    const double speed = std::clamp(cfg.nominal_speed + cfg.speed_noise * unit(rng), 0.0, cfg.v_max);
    s.vehicles[i] = detail::place_on_route(a, cfg, a.start_lane, progress, speed);
    s.target_lane[i] = a.start_lane;
  }
  if (cfg.kind == ScenarioKind::Racetrack) {
    // The outer car starts angled toward the inner lane.
    s.vehicles[1].heading = wrap_angle(s.vehicles[1].heading + cfg.follower_heading_offset);
  }
  return s;
}

inline ScenarioState reset(ScenarioKind kind, std::uint64_t seed) {
  return reset(ScenarioConfig::defaults(kind), seed);
}

/// Steering that tracks the agent's target-lane centreline: curvature
/// feedforward plus proportional-derivative feedback on lateral and heading
/// error.
inline double lane_keeping_steer(const ScenarioState& scn, std::size_t agent) {
  const ScenarioConfig& cfg = scn.config();
  const VehicleState& v = scn.vehicles[agent];
  const Path& path = scn.layout->agents[agent].lanes[scn.target_lane[agent]].path;
  const PathProjection pj = path.project(v.position());
  const double heading_error = wrap_angle(v.heading - pj.heading);

  const double ahead = 4.0;
  const double curvature = wrap_angle(path.pose_at(pj.s + ahead).heading - pj.heading) / ahead;
  const double slip = std::asin(std::clamp(0.5 * v.length * curvature, -1.0, 1.0));
  const double feedforward = std::atan(2.0 * std::tan(slip));

  const double steer = feedforward - cfg.lateral_kp * pj.lateral - cfg.lateral_kd * heading_error;
  return std::clamp(steer, -cfg.steer_max, cfg.steer_max);
}

/// Applies a meta-action for `agent`: lane actions move the target lane one
/// step (ignored when that lane does not exist at the current progress),
/// FASTER/SLOWER set +/- accel_step. Returns the low-level control.
inline Control apply_discrete_action(ScenarioState& scn, std::size_t agent, MetaAction action) {
  const ScenarioConfig& cfg = scn.config();
  const AgentLayout& a = scn.layout->agents[agent];
  const double progress = scn.vehicles[agent].progress;
  std::size_t& target = scn.target_lane[agent];

  if (action == MetaAction::LaneLeft && detail::lane_available(a, target + 1, progress)) {
    ++target;
  } else if (action == MetaAction::LaneRight && target > 0 &&
             detail::lane_available(a, target - 1, progress)) {
    --target;
  }
  // Lanes that end push the car back toward the route lane.
  while (!detail::lane_available(a, target, progress + 5.0)) {
    const std::size_t route_lane = a.start_lane;
    if (target == route_lane) break;
    target += target < route_lane ? 1 : -1;
  }

  Control c;
  if (action == MetaAction::Faster) c.accel = cfg.accel_step;
  if (action == MetaAction::Slower) c.accel = -cfg.accel_step;
  c.steer = lane_keeping_steer(scn, agent);
  return c;
}

/// Maps a normalised action in [-1, 1] to a low-level control.
inline Control apply_continuous_action(const ScenarioState& scn, std::size_t agent, double action) {
  const ScenarioConfig& cfg = scn.config();
  action = std::clamp(action, -1.0, 1.0);
  Control c;
  if (scn.kind() == ScenarioKind::Racetrack) {
    c.steer = action * cfg.steer_max;
  } else {
    c.accel = action * cfg.accel_max;
    c.steer = lane_keeping_steer(scn, agent);
  }
  return c;
}

inline constexpr std::size_t kOwnFeatures = 9;
inline constexpr std::size_t kRelativeFeatures = 5;
inline constexpr std::size_t kLandmarkFeatures = 2;
inline constexpr std::size_t kObservationSize = kOwnFeatures + 1 + kRelativeFeatures + kLandmarkFeatures;
inline constexpr std::size_t kGlobalStateSize = 2 * (kOwnFeatures + kLandmarkFeatures) + kRelativeFeatures;

namespace detail {

struct Scales {
  double position = 100.0;
  double relative = 50.0;
  double gap = 10.0;  // follower-minus-leader offsets in the global state, clamped to +-3
};

inline std::array<double, kOwnFeatures> own_features(const ScenarioState& scn, std::size_t i) {
  const ScenarioConfig& cfg = scn.config();
  const AgentLayout& a = scn.layout->agents[i];
  const VehicleState& v = scn.vehicles[i];
  const Scales sc;
  const double route_len = a.loop_length > 0.0 ? a.loop_length : a.finish_progress;
  const double lateral = a.route.project(v.position()).lateral;
  const double target_lateral = a.lanes[scn.target_lane[i]].path.project(v.position()).lateral;
  return {v.x / sc.position,
          v.y / sc.position,
          std::cos(v.heading),
          std::sin(v.heading),
          v.speed / cfg.v_max,
          lateral / cfg.lane_width,
          v.progress / route_len,
          target_lateral / cfg.lane_width,
          scn.finished[i] ? 1.0 : 0.0};
}

inline std::array<double, kLandmarkFeatures> landmarks(const ScenarioState& scn, std::size_t i) {
  const ScenarioConfig& cfg = scn.config();
  const AgentLayout& a = scn.layout->agents[i];
  const VehicleState& v = scn.vehicles[i];
  const Scales sc;
  if (cfg.kind == ScenarioKind::Racetrack) {
    const double lap = std::fmod(v.progress, a.loop_length);
    const double to_bend = std::fmod(a.conflict_progress - lap + a.loop_length, 0.5 * a.loop_length);
    return {to_bend / sc.position, detail::nearest_lane_offset(a, v.position()) / cfg.lane_width};
  }
  return {std::clamp((a.finish_progress - v.progress) / sc.position, -1.0, 2.0),
          std::clamp((a.conflict_progress - v.progress) / sc.relative, -2.0, 2.0)};
}

inline std::vector<double> observation(const ScenarioState& scn, std::size_t i) {
  const std::size_t j = 1 - i;
  const ScenarioConfig& cfg = scn.config();
  const VehicleState& me = scn.vehicles[i];
  const VehicleState& other = scn.vehicles[j];
  const Scales sc;
  std::vector<double> o;
  o.reserve(kObservationSize);
  for (double f : own_features(scn, i)) o.push_back(f);
  o.push_back(scn.finished[j] ? 1.0 : 0.0);
  const double dh = other.heading - me.heading;
  o.push_back((other.x - me.x) / sc.relative);
  o.push_back((other.y - me.y) / sc.relative);
  o.push_back((other.speed - me.speed) / cfg.v_max);
  o.push_back(std::cos(dh));
  o.push_back(std::sin(dh));
  for (double f : landmarks(scn, i)) o.push_back(f);
  return o;
}

}  // namespace detail

/// Local observations for both agents and the global state used by critics.
inline void observe(const ScenarioState& scn, std::vector<double>& obs1, std::vector<double>& obs2,
                    std::vector<double>& global_state) {
  obs1 = detail::observation(scn, 0);
  obs2 = detail::observation(scn, 1);
  global_state.clear();
  global_state.reserve(kGlobalStateSize);
  for (std::size_t i = 0; i < 2; ++i) {
    for (double f : detail::own_features(scn, i)) global_state.push_back(f);
  }
  for (std::size_t i = 0; i < 2; ++i) {
    for (double f : detail::landmarks(scn, i)) global_state.push_back(f);
  }
  // Close-range geometry, so critics can resolve gaps of a few metres.
  const VehicleState& a = scn.vehicles[0];
  const VehicleState& b = scn.vehicles[1];
  const detail::Scales sc;
  const double dh = b.heading - a.heading;
  global_state.push_back(std::clamp((b.x - a.x) / sc.gap, -3.0, 3.0));
  global_state.push_back(std::clamp((b.y - a.y) / sc.gap, -3.0, 3.0));
  global_state.push_back((b.speed - a.speed) / scn.config().v_max);
  global_state.push_back(std::cos(dh));
  global_state.push_back(std::sin(dh));
}

inline StepOutcome observe(const ScenarioState& scn) {
  StepOutcome out;
  observe(scn, out.obs1, out.obs2, out.global_state);
  out.finished1 = scn.finished[0];
  out.finished2 = scn.finished[1];
  out.done = scn.done;
  return out;
}

/// Advances both vehicles one dt under the given low-level controls and
/// scores the step.
inline StepOutcome scenario_step(ScenarioState& scn, const std::array<Control, 2>& controls) {
  if (scn.done) throw SteppedAfterDone();
  const ScenarioConfig& cfg = scn.config();
  const Layout& layout = *scn.layout;
  const BicycleLimits limits{cfg.v_max, cfg.steer_max};

  std::array<double, 2> previous_progress{};
  for (std::size_t i = 0; i < 2; ++i) {
    previous_progress[i] = scn.vehicles[i].progress;
    const double accel = cfg.kind == ScenarioKind::Racetrack ? 0.0 : controls[i].accel;
    VehicleState next = bicycle_step(scn.vehicles[i], accel, controls[i].steer, cfg.dt, limits);
    next.progress = detail::route_progress(layout.agents[i], next.position(), previous_progress[i]);
    // Current lane: nearest lane centreline among those that exist here.
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t l = 0; l < layout.agents[i].lanes.size(); ++l) {
      if (!detail::lane_available(layout.agents[i], l, next.progress)) continue;
      const double d = std::abs(layout.agents[i].lanes[l].path.project(next.position()).lateral);
      if (d < best) {
        best = d;
        next.lane = l;
      }
    }
    scn.vehicles[i] = next;
  }
  ++scn.steps;

  StepOutcome out;
  std::array<bool, 2> collided{false, false};
  if (boxes_overlap(scn.vehicles[0].footprint(), scn.vehicles[1].footprint())) {
    collided = {true, true};
  }
  for (std::size_t i = 0; i < 2; ++i) {
    for (const OrientedBox& ob : layout.obstacles) {
      if (boxes_overlap(scn.vehicles[i].footprint(), ob)) collided[i] = true;
    }
  }

  std::array<double, 2> reward{0.0, 0.0};
  std::array<bool, 2> off_road{false, false};
  for (std::size_t i = 0; i < 2; ++i) {
    const VehicleState& v = scn.vehicles[i];
    off_road[i] = !detail::on_road(layout, i, v);
    if (v.speed >= cfg.speed_band_low && v.speed <= cfg.speed_band_high) reward[i] += cfg.speed_reward;
    if (cfg.kind == ScenarioKind::Racetrack && !off_road[i]) {
      const double offset = detail::nearest_lane_offset(layout.agents[i], v.position());
      reward[i] += std::max(0.0, 1.0 - offset / (0.5 * cfg.lane_width));
    }
  }

  if (cfg.kind != ScenarioKind::Racetrack) {
    // Agents crossing on the same step are ordered by how far past the line they are.
    std::array<std::size_t, 2> order{0, 1};
    const double over0 = scn.vehicles[0].progress - layout.agents[0].finish_progress;
    const double over1 = scn.vehicles[1].progress - layout.agents[1].finish_progress;
    if (over1 > over0) order = {1, 0};
    for (std::size_t i : order) {
      if (scn.finished[i] || scn.vehicles[i].progress < layout.agents[i].finish_progress) continue;
      scn.finished[i] = true;
      reward[i] += scn.finish_order.empty() ? cfg.first_bonus : cfg.second_bonus;
      scn.finish_order.push_back(i);
    }
  }

  out.r1 = reward[0];
  out.r2 = reward[1];
  out.c1 = collided[0] ? cfg.collision_cost : 0.0;
  out.c2 = collided[1] ? cfg.collision_cost : 0.0;
  out.collision1 = collided[0];
  out.collision2 = collided[1];
  out.off_road1 = off_road[0];
  out.off_road2 = off_road[1];
  out.finished1 = scn.finished[0];
  out.finished2 = scn.finished[1];
  const bool both_finished = cfg.kind != ScenarioKind::Racetrack && scn.finished[0] && scn.finished[1];
  scn.done = collided[0] || collided[1] || both_finished || scn.steps >= cfg.horizon;
  out.done = scn.done;
  observe(scn, out.obs1, out.obs2, out.global_state);
  return out;
}

inline StepOutcome step_discrete(ScenarioState& scn, MetaAction a1, MetaAction a2) {
  if (!is_discrete(scn.kind())) throw std::invalid_argument("scenario does not take meta-actions");
  if (scn.done) throw SteppedAfterDone();
  const std::array<Control, 2> c{apply_discrete_action(scn, 0, a1), apply_discrete_action(scn, 1, a2)};
  return scenario_step(scn, c);
}

inline StepOutcome step_continuous(ScenarioState& scn, double a1, double a2) {
  if (is_discrete(scn.kind())) throw std::invalid_argument("scenario takes meta-actions");
  if (scn.done) throw SteppedAfterDone();
  const std::array<Control, 2> c{apply_continuous_action(scn, 0, a1), apply_continuous_action(scn, 1, a2)};
  return scenario_step(scn, c);
}

}  // namespace safemarl::driving
