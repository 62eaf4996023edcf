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


#include "safemarl/harness/config.hpp"
#include "safemarl/harness/metrics.hpp"
#include "safemarl/harness/plot.hpp"
#include "safemarl/harness/training.hpp"
#include "safemarl/harness/verify.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

namespace {

namespace fs = std::filesystem;
namespace hs = safemarl::harness;
using safemarl::driving::ScenarioConfig;
using safemarl::driving::ScenarioKind;

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("safemarl_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

hs::RunConfig tiny(hs::Algorithm algo, const fs::path& out) {
  hs::RunConfig c;
  c.algorithm = algo;
  c.scenario = ScenarioConfig::defaults(algo == hs::Algorithm::Csq ? ScenarioKind::Merge : ScenarioKind::Intersection);
  c.total_steps = 300;
  c.warmup_steps = 32;
  c.batch_size = 16;
  c.buffer_capacity = 1000;
  c.critic_hidden = {8};
  c.actor_hidden = {8};
  c.eval_every = 100;
  c.eval_episodes = 2;
  c.out_dir = out.string();
  return c;
}

std::string csv_with(const std::vector<hs::MetricsRow>& rows, const std::string& extra = "") {
  std::ostringstream ss;
  hs::write_metrics_preamble(ss);
  for (const auto& r : rows) hs::write_metrics_row(ss, r);
  ss << extra;
  return ss.str();
}

TEST(Config, JsonRoundTrip) {
  hs::RunConfig c;
  c.algorithm = hs::Algorithm::CsMaddpg;
  c.scenario = ScenarioConfig::defaults(ScenarioKind::Racetrack);
  c.d1 = std::numeric_limits<double>::infinity();
  c.critic_hidden = {7, 5};
  c.noise = {0.3, 0.01, 0.4};
  c.lr_final_scale = 0.25;
  const auto back = hs::run_config_from_json(hs::to_json(c));
  EXPECT_EQ(hs::to_json(back), hs::to_json(c));
  EXPECT_TRUE(std::isinf(back.d1));
  EXPECT_EQ(back.critic_hidden, (std::vector<std::size_t>{7, 5}));
}

TEST(Config, MissingKeysUseDefaults) {
  const auto c = hs::run_config_from_json(nlohmann::json{{"algorithm", "csq"}});
  EXPECT_EQ(hs::to_json(c), hs::to_json(hs::RunConfig{}));
}

TEST(Config, Validation) {
  auto bad = [](auto mutate) {
    hs::RunConfig c;
    mutate(c);
    return c;
  };
  EXPECT_THROW(bad([](auto& c) { c.gamma = 1.0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.batch_size = 0; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.batch_size = c.buffer_capacity + 1; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.d2 = std::nan(""); }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.epsilon.start = 1.5; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) { c.algorithm = hs::Algorithm::CsMaddpg; }).validate(), std::invalid_argument);
  EXPECT_THROW(bad([](auto& c) {
                 c.scenario = ScenarioConfig::defaults(ScenarioKind::Intersection);
               }).validate(),
               std::invalid_argument);
  EXPECT_THROW(hs::algorithm_from_string("ppo"), std::invalid_argument);
  EXPECT_THROW(hs::run_config_from_json(nlohmann::json{{"format_version", 99}}), std::exception);
}

TEST(Training, ZeroStepsGivesOneRow) {
  auto c = tiny(hs::Algorithm::Csq, scratch("zero"));
  c.total_steps = 0;
  const auto result = hs::run_training(c);
  ASSERT_EQ(result.rows.size(), 1u);
  EXPECT_EQ(result.rows[0].step, 0u);
  EXPECT_TRUE(fs::exists(fs::path(c.out_dir) / "checkpoint.ckpt"));
}

TEST(Training, CsqRunsAreReproducible) {
  const auto a = tiny(hs::Algorithm::Csq, scratch("csq_a"));
  const auto b = tiny(hs::Algorithm::Csq, scratch("csq_b"));
  hs::run_training(a);
  hs::run_training(b);
  const auto ma = slurp(fs::path(a.out_dir) / "metrics.csv");
  EXPECT_EQ(ma, slurp(fs::path(b.out_dir) / "metrics.csv"));
  std::istringstream in(ma);
  EXPECT_EQ(hs::parse_metrics(in).rows.size(), 4u);
  EXPECT_TRUE(fs::exists(fs::path(a.out_dir) / "timing.csv"));
  EXPECT_TRUE(fs::exists(fs::path(a.out_dir) / "config.json"));
}

TEST(Training, MaddpgRunsAreReproducible) {
  const auto a = tiny(hs::Algorithm::CsMaddpg, scratch("md_a"));
  const auto b = tiny(hs::Algorithm::CsMaddpg, scratch("md_b"));
  const auto ra = hs::run_training(a);
  hs::run_training(b);
  EXPECT_EQ(slurp(fs::path(a.out_dir) / "metrics.csv"), slurp(fs::path(b.out_dir) / "metrics.csv"));
  for (const auto& row : ra.rows) {
    EXPECT_GE(row.lambda1, 0.0);
    EXPECT_GE(row.lambda2, 0.0);
  }
}

TEST(Training, DifferentSeedsDiffer) {
  auto a = tiny(hs::Algorithm::Csq, "");
  auto b = a;
  b.seed = 1;
  const auto ra = hs::run_training(a);
  const auto rb = hs::run_training(b);
  EXPECT_NE(ra.rows.back().leader_return, rb.rows.back().leader_return);
}

TEST(Training, DivergenceAbortsWithMarker) {
  auto c = tiny(hs::Algorithm::Csq, scratch("diverge"));
  c.critic_lr = 1e200;
  EXPECT_THROW(hs::run_training(c), safemarl::nn::NonFiniteParameter);
  EXPECT_NE(slurp(fs::path(c.out_dir) / "metrics.csv").find("# aborted at step"), std::string::npos);
}

TEST(Evaluate, PureAndDeterministic) {
  auto c = tiny(hs::Algorithm::Csq, "");
  const auto result = hs::run_training(c);
  const auto before = safemarl::nn::serialize_checkpoint(result.checkpoint);
  const auto r1 = hs::evaluate(result.checkpoint, 3, 11);
  const auto r2 = hs::evaluate(result.checkpoint, 3, 11);
  std::ostringstream a;
  std::ostringstream b;
  hs::write_metrics_row(a, r1);
  hs::write_metrics_row(b, r2);
  EXPECT_EQ(a.str(), b.str());
  EXPECT_EQ(safemarl::nn::serialize_checkpoint(result.checkpoint), before);
  EXPECT_EQ(r1.episodes, 3u);
}

TEST(Evaluate, RejectsBadRequests) {
  auto c = tiny(hs::Algorithm::Csq, "");
  c.total_steps = 0;
  const auto result = hs::run_training(c);
  EXPECT_THROW(hs::evaluate(result.checkpoint, 0, 0), std::invalid_argument);
  EXPECT_THROW(hs::evaluate(result.checkpoint, ScenarioConfig::defaults(ScenarioKind::Intersection), 1, 0),
               std::invalid_argument);
}

TEST(Evaluate, ReplayRecordsFirstEpisode) {
  safemarl::driving::EpisodeRecorder rec;
  const auto row = hs::evaluate_policy(ScenarioConfig::defaults(ScenarioKind::Merge), hs::idle_policy(), 2, 0, 0.9, &rec);
  ASSERT_FALSE(rec.rows().empty());
  EXPECT_EQ(rec.rows().front().step, 0u);
  EXPECT_EQ(rec.rows().back().action, "IDLE");
  EXPECT_GE(row.collision_rate, 0.0);
  EXPECT_DOUBLE_EQ(row.collision_rate + row.safety_rate, 1.0);
}

TEST(Metrics, ParseRoundTripAndMalformedRows) {
  hs::MetricsRow r;
  r.step = 10;
  r.episodes = 4;
  r.leader_return = 1.25;
  r.lambda1 = 0.5;
  std::ostringstream bad;
  hs::write_metrics_row(bad, r);
  std::string garbled = bad.str();
  garbled.replace(garbled.find("1.25"), 4, "abc");
  std::istringstream in(csv_with({r}, "1,2,3\n" + garbled));
  const auto parsed = hs::parse_metrics(in);
  ASSERT_EQ(parsed.rows.size(), 1u);
  EXPECT_EQ(parsed.rows[0].step, 10u);
  EXPECT_EQ(parsed.rows[0].leader_return, 1.25);
  EXPECT_EQ(parsed.rows[0].lambda1, 0.5);
  EXPECT_TRUE(std::isnan(parsed.rows[0].lambda2));
  EXPECT_EQ(parsed.malformed, 2u);
  EXPECT_EQ(parsed.warnings.size(), 2u);
}

TEST(Metrics, WrongHeaderIsReported) {
  std::istringstream in("step,reward\n1,2\n");
  const auto parsed = hs::parse_metrics(in);
  EXPECT_TRUE(parsed.rows.empty());
  EXPECT_FALSE(parsed.warnings.empty());
}

TEST(Plot, EmptySeriesDrawsAxes) {
  const auto svg = hs::render_svg("t", "x", "y", {});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_EQ(svg.find("class=\"series\""), std::string::npos);
}

TEST(Plot, SinglePointIsAMarker) {
  const auto svg = hs::render_svg("t", "x", "y", {{"a", {{1.0, 2.0}}}});
  EXPECT_NE(svg.find("<circle"), std::string::npos);
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
}

TEST(Plot, LegendPerFile) {
  const auto dir = scratch("plot");
  hs::MetricsRow r;
  r.lambda1 = 0.1;
  r.lambda2 = 0.2;
  for (const char* name : {"a.csv", "b.csv"}) {
    std::ofstream(dir / name) << csv_with({r, r});
  }
  const auto out = hs::emit_plots({dir / "a.csv", dir / "b.csv"}, dir / "plots");
  EXPECT_EQ(out.written.size(), 5u);
  const auto svg = slurp(dir / "plots" / "leader_reward.svg");
  std::size_t entries = 0;
  for (auto p = svg.find("legend-entry"); p != std::string::npos; p = svg.find("legend-entry", p + 1)) ++entries;
  EXPECT_EQ(entries, 2u);
  EXPECT_NE(svg.find("<polyline"), std::string::npos);
}

TEST(Plot, AllMalformedThrows) {
  const auto dir = scratch("plot_bad");
  std::ofstream(dir / "bad.csv") << csv_with({}, "1,2,3\n");
  EXPECT_THROW(hs::emit_plots({dir / "bad.csv"}, dir / "plots"), hs::PlotInputError);
  EXPECT_THROW(hs::emit_plots({dir / "missing.csv"}, dir / "plots"), hs::PlotInputError);
  EXPECT_THROW(hs::emit_plots({}, dir / "plots"), hs::PlotInputError);
}

TEST(Verify, SameSeedSameReport) {
  hs::VerifyOptions o;
  o.trials = 1;
  o.seed = 9;
  std::ostringstream a;
  std::ostringstream b;
  hs::print_report(a, hs::verify_properties(o));
  hs::print_report(b, hs::verify_properties(o));
  EXPECT_EQ(a.str(), b.str());
  o.trials = 0;
  EXPECT_THROW(hs::verify_properties(o), std::invalid_argument);
}

TEST(Verify, MyopicGamesContractExactly) {
  hs::VerifyOptions o;
  o.trials = 20;
  o.gamma = 0.0;
  std::mt19937_64 rng(1);
  const auto r = hs::check_contraction(o, rng);
  EXPECT_TRUE(r.ok());
  EXPECT_LE(r.worst, 0.0);
}

TEST(Verify, TabularRunWritesReport) {
  hs::RunConfig c;
  c.algorithm = hs::Algorithm::TabularVerify;
  c.verify_trials = 2;
  c.out_dir = scratch("verify").string();
  const auto result = hs::run_training(c);
  ASSERT_TRUE(result.verify.has_value());
  EXPECT_EQ(result.verify->properties.size(), 4u);
  EXPECT_NE(slurp(fs::path(c.out_dir) / "verify_report.txt").find("solver-oracle"), std::string::npos);
}

}  // namespace
