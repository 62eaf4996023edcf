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


#include "safemarl/driving/bicycle.hpp"
#include "safemarl/driving/geometry.hpp"
#include "safemarl/driving/replay_export.hpp"
#include "safemarl/driving/scenario.hpp"

#include <gtest/gtest.h>

#include <random>
#include <sstream>

namespace {

namespace dr = safemarl::driving;
using dr::MetaAction;
using dr::ScenarioConfig;
using dr::ScenarioKind;

constexpr std::array<ScenarioKind, 4> kAllKinds = {ScenarioKind::Merge, ScenarioKind::Roundabout,
                                                   ScenarioKind::Intersection, ScenarioKind::Racetrack};

ScenarioConfig quiet(ScenarioKind kind) {
  auto cfg = ScenarioConfig::defaults(kind);
  cfg.position_noise = 0.0;
  cfg.speed_noise = 0.0;
  return cfg;
}

TEST(Bicycle, StraightLineStep) {
  dr::VehicleState v;
  v.speed = 10.0;
  const auto n = dr::bicycle_step(v, 0.0, 0.0, 0.1);
  EXPECT_EQ(n.x, 1.0);
  EXPECT_EQ(n.y, 0.0);
  EXPECT_EQ(n.heading, 0.0);
}

TEST(Bicycle, StandingCarDoesNotMove) {
  dr::VehicleState v;
  v.x = 3;
  v.y = -2;
  v.heading = 0.7;
  const auto n = dr::bicycle_step(v, 0.0, 0.4, 0.1);
  EXPECT_EQ(n.x, v.x);
  EXPECT_EQ(n.y, v.y);
  EXPECT_EQ(n.heading, v.heading);
}

TEST(Bicycle, SpeedClampsAtZero) {
  dr::VehicleState v;
  v.speed = 1.0;
  EXPECT_EQ(dr::bicycle_step(v, -20.0, 0.0, 0.1).speed, 0.0);
}

TEST(Bicycle, SteeringClampedAndHeadingWrapped) {
  dr::VehicleState v;
  v.speed = 15.0;
  v.heading = 3.1;
  const auto a = dr::bicycle_step(v, 0.0, 5.0, 0.1, {20.0, 0.5});
  const auto b = dr::bicycle_step(v, 0.0, 0.5, 0.1, {20.0, 0.5});
  EXPECT_EQ(a.x, b.x);
  EXPECT_GT(a.heading, -std::numbers::pi);
  EXPECT_LE(a.heading, std::numbers::pi);
  EXPECT_LT(a.heading, 0.0);  // wrapped past pi
}

TEST(Geometry, SeparatingAxis) {
  const dr::OrientedBox a{{0, 0}, 0.0, 5.0, 2.0};
  EXPECT_TRUE(dr::boxes_overlap(a, {{4.9, 0}, 0.0, 5.0, 2.0}));
  EXPECT_TRUE(dr::boxes_overlap(a, {{5.0, 0}, 0.0, 5.0, 2.0}));  // touching
  EXPECT_FALSE(dr::boxes_overlap(a, {{5.01, 0}, 0.0, 5.0, 2.0}));
  // Rotated boxes whose bounding circles overlap but whose bodies do not.
  EXPECT_FALSE(dr::boxes_overlap({{0, 0}, 0.785398, 5.0, 1.0}, {{3.2, -3.2}, 0.785398, 5.0, 1.0}));
}

TEST(Geometry, PathProjectionAndClosedLoops) {
  dr::Path p = dr::Path({0, 0}).line_to({10, 0});
  auto pj = p.project({4, 2});
  EXPECT_DOUBLE_EQ(pj.s, 4.0);
  EXPECT_DOUBLE_EQ(pj.lateral, 2.0);
  EXPECT_DOUBLE_EQ(p.project({-3, 0}).s, -3.0);  // open ends extend
  dr::Path loop = dr::Path({0, 0}).line_to({10, 0}).line_to({10, 10}).line_to({0, 10}).close();
  EXPECT_TRUE(loop.closed());
  EXPECT_DOUBLE_EQ(loop.length(), 40.0);
  EXPECT_GE(loop.project({-1, 5}).s, 0.0);
}

TEST(Actions, IdleOnCentredStraightLane) {
  auto scn = dr::reset(quiet(ScenarioKind::Merge), 0);
  const auto c = dr::apply_discrete_action(scn, 0, MetaAction::Idle);
  EXPECT_NEAR(c.accel, 0.0, 0.0);
  EXPECT_NEAR(c.steer, 0.0, 1e-12);
}

TEST(Actions, FasterAndSlower) {
  auto scn = dr::reset(quiet(ScenarioKind::Merge), 0);
  EXPECT_EQ(dr::apply_discrete_action(scn, 0, MetaAction::Faster).accel, 2.0);
  EXPECT_EQ(dr::apply_discrete_action(scn, 0, MetaAction::Slower).accel, -2.0);
}

TEST(Actions, LaneLeftAtLeftmostLaneIsIdle) {
  auto scn = dr::reset(quiet(ScenarioKind::Merge), 0);
  scn.target_lane[0] = scn.layout->agents[0].lanes.size() - 1;
  auto copy = scn;
  const auto left = dr::apply_discrete_action(scn, 0, MetaAction::LaneLeft);
  const auto idle = dr::apply_discrete_action(copy, 0, MetaAction::Idle);
  EXPECT_EQ(left.steer, idle.steer);
  EXPECT_EQ(scn.target_lane[0], copy.target_lane[0]);
}

TEST(Actions, LaneChangeMovesTargetLane) {
  auto scn = dr::reset(quiet(ScenarioKind::Merge), 0);
  dr::apply_discrete_action(scn, 1, MetaAction::LaneLeft);
  EXPECT_EQ(scn.target_lane[1], 1u);
  EXPECT_GT(dr::lane_keeping_steer(scn, 1), 0.0);  // steer left toward y = 0
  dr::apply_discrete_action(scn, 1, MetaAction::LaneRight);
  EXPECT_EQ(scn.target_lane[1], 0u);
}

TEST(Step, SpeedBandReward) {
  auto scn = dr::reset(quiet(ScenarioKind::Merge), 0);
  const auto out = dr::step_discrete(scn, MetaAction::Idle, MetaAction::Idle);
  EXPECT_EQ(out.r1, 2.0);
  EXPECT_EQ(out.c1, 0.0);
  EXPECT_FALSE(out.done);
}

TEST(Step, OverlapCostsBothAgents) {
  for (ScenarioKind kind : kAllKinds) {
    auto scn = dr::reset(quiet(kind), 0);
    scn.vehicles[1] = scn.vehicles[0];
    const auto out = dr::scenario_step(scn, {});
    EXPECT_EQ(out.c1, 5.0) << dr::to_string(kind);
    EXPECT_EQ(out.c2, 5.0);
    EXPECT_TRUE(out.collision1 && out.collision2);
    EXPECT_TRUE(out.done);
    EXPECT_THROW(dr::scenario_step(scn, {}), dr::SteppedAfterDone);
  }
}

TEST(Step, FinishBonusesInOrder) {
  auto cfg = quiet(ScenarioKind::Intersection);
  auto scn = dr::reset(cfg, 0);
  const auto& lay = *scn.layout;
  scn.vehicles[0] = dr::detail::place_on_route(lay.agents[0], cfg, 0, lay.agents[0].finish_progress - 0.5, 10.0);
  scn.vehicles[1] = dr::detail::place_on_route(lay.agents[1], cfg, 0, lay.agents[1].finish_progress - 20.0, 10.0);
  double leader_bonus = 0.0;
  double follower_bonus = 0.0;
  while (!scn.done) {
    const auto out = dr::step_continuous(scn, 0.0, 0.0);
    leader_bonus += out.r1 - 2.0;
    follower_bonus += out.r2 - 2.0;
  }
  EXPECT_EQ(scn.finish_order, (std::vector<std::size_t>{0, 1}));
  EXPECT_DOUBLE_EQ(leader_bonus, 10.0);
  EXPECT_DOUBLE_EQ(follower_bonus, 5.0);
}

TEST(Reset, Deterministic) {
  for (ScenarioKind kind : kAllKinds) {
    const auto a = dr::reset(kind, 42);
    const auto b = dr::reset(kind, 42);
    for (std::size_t i = 0; i < 2; ++i) {
      EXPECT_EQ(a.vehicles[i].x, b.vehicles[i].x);
      EXPECT_EQ(a.vehicles[i].speed, b.vehicles[i].speed);
      EXPECT_EQ(a.vehicles[i].heading, b.vehicles[i].heading);
    }
  }
}

TEST(Reset, NoiseBounds) {
  for (ScenarioKind kind : kAllKinds) {
    const auto cfg = ScenarioConfig::defaults(kind);
    for (std::uint64_t seed = 0; seed < 10000; ++seed) {
      const auto s = dr::reset(cfg, seed);
      for (std::size_t i = 0; i < 2; ++i) {
        const auto& a = s.layout->agents[i];
        ASSERT_LE(std::abs(s.vehicles[i].progress - a.start_progress), cfg.position_noise);
        ASSERT_LE(std::abs(s.vehicles[i].speed - cfg.nominal_speed), cfg.speed_noise);
      }
    }
  }
}

TEST(Reset, NominalIdleRolloutsCollide) {
  for (ScenarioKind kind : {ScenarioKind::Merge, ScenarioKind::Roundabout, ScenarioKind::Intersection}) {
    auto scn = dr::reset(quiet(kind), 0);
    bool collided = false;
    while (!scn.done) {
      const auto out = dr::is_discrete(kind) ? dr::step_discrete(scn, MetaAction::Idle, MetaAction::Idle)
                                             : dr::step_continuous(scn, 0.0, 0.0);
      collided = collided || out.collision1 || out.collision2;
    }
    EXPECT_TRUE(collided) << dr::to_string(kind);
  }
}

TEST(Observe, IdenticalStatesHaveZeroRelativeFeatures) {
  auto scn = dr::reset(ScenarioKind::Intersection, 3);
  scn.vehicles[1] = scn.vehicles[0];
  const auto o = dr::observe(scn);
  const std::size_t rel = dr::kOwnFeatures + 1;
  EXPECT_EQ(o.obs1[rel], 0.0);
  EXPECT_EQ(o.obs1[rel + 1], 0.0);
  EXPECT_EQ(o.obs1[rel + 2], 0.0);
}

TEST(Observe, GlobalStateCarriesClampedGap) {
  auto scn = dr::reset(quiet(ScenarioKind::Merge), 0);
  const std::size_t rel = dr::kGlobalStateSize - dr::kRelativeFeatures;
  auto g = dr::observe(scn).global_state;
  EXPECT_DOUBLE_EQ(g[rel], 0.0);  // side by side at reset
  EXPECT_DOUBLE_EQ(g[rel + 1], -0.4);  // ramp 4 m to the right
  EXPECT_DOUBLE_EQ(g[rel + 3], 1.0);
  scn.vehicles[1].x = scn.vehicles[0].x + 100.0;
  g = dr::observe(scn).global_state;
  EXPECT_DOUBLE_EQ(g[rel], 3.0);
}

TEST(Observe, ShapesConstantAndRelativeFeaturesAntisymmetric) {
  for (ScenarioKind kind : kAllKinds) {
    auto scn = dr::reset(kind, 5);
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> pick(0, 4);
    std::uniform_real_distribution<double> u(-1, 1);
    while (!scn.done) {
      const auto o = dr::is_discrete(kind)
                         ? dr::step_discrete(scn, MetaAction(pick(rng)), MetaAction(pick(rng)))
                         : dr::step_continuous(scn, u(rng), u(rng));
      ASSERT_EQ(o.obs1.size(), dr::kObservationSize);
      ASSERT_EQ(o.obs2.size(), dr::kObservationSize);
      ASSERT_EQ(o.global_state.size(), dr::kGlobalStateSize);
      const std::size_t rel = dr::kOwnFeatures + 1;
      for (std::size_t k : {rel, rel + 1, rel + 2, rel + 4}) EXPECT_NEAR(o.obs1[k], -o.obs2[k], 1e-12);
      EXPECT_NEAR(o.obs1[rel + 3], o.obs2[rel + 3], 1e-12);
    }
  }
}

TEST(Actions, ScenarioKindMismatchThrows) {
  auto merge = dr::reset(ScenarioKind::Merge, 0);
  EXPECT_THROW(dr::step_continuous(merge, 0.0, 0.0), std::invalid_argument);
  auto cross = dr::reset(ScenarioKind::Intersection, 0);
  EXPECT_THROW(dr::step_discrete(cross, MetaAction::Idle, MetaAction::Idle), std::invalid_argument);
}

TEST(Racetrack, SteeringOnlyAndCenteringReward) {
  auto scn = dr::reset(quiet(ScenarioKind::Racetrack), 0);
  const double speed = scn.vehicles[0].speed;
  const auto out = dr::step_continuous(scn, 0.0, 0.0);
  EXPECT_EQ(scn.vehicles[0].speed, speed);
  EXPECT_GT(out.r1, 2.0);  // speed band plus centring
}

TEST(ScenarioConfig, JsonRoundTrip) {
  auto cfg = ScenarioConfig::defaults(ScenarioKind::Roundabout);
  cfg.ring_radius = 26.0;
  const auto back = dr::scenario_config_from_json(dr::to_json(cfg));
  EXPECT_EQ(dr::to_json(back), dr::to_json(cfg));
  EXPECT_THROW(dr::scenario_from_string("highway"), std::invalid_argument);
}

TEST(Replay, RecordsBothAgentsPerStep) {
  auto scn = dr::reset(ScenarioKind::Merge, 0);
  dr::EpisodeRecorder rec;
  rec.record_reset(scn);
  const auto out = dr::step_discrete(scn, MetaAction::Faster, MetaAction::Idle);
  rec.record_step(scn, "FASTER", "IDLE", out);
  EXPECT_EQ(rec.rows().size(), 4u);
  std::ostringstream ss;
  rec.write_csv(ss);
  EXPECT_EQ(ss.str().rfind("step,agent,x,y,heading,speed,action,r,c,events\n", 0), 0u);
}

}  // namespace
