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

#include "safemarl/agents/csq.hpp"
#include "safemarl/agents/maddpg.hpp"
#include "safemarl/agents/replay.hpp"
#include "safemarl/checkpoint.hpp"
#include "safemarl/driving/replay_export.hpp"
#include "safemarl/driving/scenario.hpp"
#include "safemarl/harness/config.hpp"
#include "safemarl/harness/metrics.hpp"
#include "safemarl/harness/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <optional>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace safemarl::harness {

using driving::MetaAction;
using Vector = Eigen::VectorXd;

/// Both agents' choices for one step; the discrete or continuous half is
/// used depending on the scenario.
struct JointAction {
  MetaAction m1 = MetaAction::Idle;
  MetaAction m2 = MetaAction::Idle;
  double u1 = 0.0;
  double u2 = 0.0;
};

using Policy = std::function<JointAction(const driving::StepOutcome&)>;

inline driving::StepOutcome apply_joint(driving::ScenarioState& scn, const JointAction& a) {
  return driving::is_discrete(scn.kind()) ? driving::step_discrete(scn, a.m1, a.m2)
                                          : driving::step_continuous(scn, a.u1, a.u2);
}

inline Vector to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Reset seed of the k-th episode drawn from stream `base`.
inline std::uint64_t episode_seed(std::uint64_t base, std::uint64_t k) { return splitmix64(base ^ splitmix64(k)); }

// Independent streams derived from the run seed.
inline std::uint64_t training_stream(std::uint64_t seed) { return splitmix64(seed * 4 + 1); }
inline std::uint64_t agent_stream(std::uint64_t seed) { return splitmix64(seed * 4 + 2); }
inline std::uint64_t evaluation_stream(std::uint64_t seed) { return splitmix64(seed * 4 + 3); }

namespace detail {

inline std::string action_label(bool discrete, MetaAction m, double u) {
  if (discrete) return std::string(driving::to_string(m));
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", u);
  return buf;
}

}  // namespace detail

/// Runs `episodes` episodes with reset seeds episode_seed(seed, 0..), no
/// exploration beyond what `policy` does itself, and aggregates them. When
/// `replay` is given the first episode is recorded into it.
inline MetricsRow evaluate_policy(const driving::ScenarioConfig& scenario, const Policy& policy,
                                  std::size_t episodes, std::uint64_t seed, double gamma,
                                  driving::EpisodeRecorder* replay = nullptr) {
  if (episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  MetricsRow row;
  row.episodes = episodes;
  std::size_t collided = 0;
  std::size_t leader_first = 0;
  std::size_t follower_first = 0;
  std::size_t unfinished = 0;
  const bool discrete = driving::is_discrete(scenario.kind);
  for (std::size_t e = 0; e < episodes; ++e) {
    driving::ScenarioState scn = driving::reset(scenario, episode_seed(seed, e));
    driving::StepOutcome obs = driving::observe(scn);
    const bool record = replay != nullptr && e == 0;
    if (record) replay->record_reset(scn);
    double discount = 1.0;
    bool any_collision = false;
    while (!scn.done) {
      const JointAction a = policy(obs);
      driving::StepOutcome out = apply_joint(scn, a);
      if (record) {
        replay->record_step(scn, detail::action_label(discrete, a.m1, a.u1), detail::action_label(discrete, a.m2, a.u2),
                            out);
      }
      row.leader_return += out.r1;
      row.follower_return += out.r2;
      row.leader_discounted_return += discount * out.r1;
      row.follower_discounted_return += discount * out.r2;
      row.leader_cost += out.c1;
      row.follower_cost += out.c2;
      discount *= gamma;
      any_collision = any_collision || out.collision1 || out.collision2;
      obs = std::move(out);
    }
    if (any_collision) ++collided;
    if (scn.finish_order.empty()) {
      ++unfinished;
    } else if (scn.finish_order.front() == 0) {
      ++leader_first;
    } else {
      ++follower_first;
    }
  }
  const double n = static_cast<double>(episodes);
  for (double* f : {&row.leader_return, &row.follower_return, &row.leader_discounted_return,
                    &row.follower_discounted_return, &row.leader_cost, &row.follower_cost}) {
    *f /= n;
  }
  row.collision_rate = static_cast<double>(collided) / n;
  row.safety_rate = 1.0 - row.collision_rate;
  row.leader_first_rate = static_cast<double>(leader_first) / n;
  row.follower_first_rate = static_cast<double>(follower_first) / n;
  row.unfinished_rate = static_cast<double>(unfinished) / n;
  return row;
}

/// Greedy constrained-equilibrium policy of a CSQ pair. Holds a reference.
inline Policy csq_policy(const agents::CsqPair& pair) {
  return [&pair, rng = std::mt19937_64(0)](const driving::StepOutcome& o) mutable {
    const auto c = agents::csq_select_actions(pair, to_vector(o.global_state), false, rng);
    return JointAction{static_cast<MetaAction>(c.a1), static_cast<MetaAction>(c.a2), 0.0, 0.0};
  };
}

/// Noise-free actor policy of a CS-MADDPG pair. Holds a reference.
inline Policy maddpg_policy(const agents::CsMaddpgPair& pair) {
  return [&pair, rng = std::mt19937_64(0)](const driving::StepOutcome& o) mutable {
    const auto [a1, a2] = agents::maddpg_select_actions(pair, to_vector(o.obs1), to_vector(o.obs2), false, rng);
    return JointAction{MetaAction::Idle, MetaAction::Idle, a1(0), a2(0)};
  };
}

/// No intervention: IDLE for meta-actions, zero for continuous controls.
inline Policy idle_policy() {
  return [](const driving::StepOutcome&) { return JointAction{}; };
}

inline Policy random_policy(bool discrete, std::uint64_t seed) {
  auto rng = std::make_shared<std::mt19937_64>(seed);
  return [rng, discrete](const driving::StepOutcome&) {
    JointAction a;
    if (discrete) {
      std::uniform_int_distribution<int> pick(0, static_cast<int>(driving::kMetaActions) - 1);
      a.m1 = static_cast<MetaAction>(pick(*rng));
      a.m2 = static_cast<MetaAction>(pick(*rng));
    } else {
      std::uniform_real_distribution<double> u(-1.0, 1.0);
      a.u1 = u(*rng);
      a.u2 = u(*rng);
    }
    return a;
  };
}

struct TrainingResult {
  std::vector<MetricsRow> rows;
  nn::Checkpoint checkpoint;
  std::optional<VerifyReport> verify;  // tabular-verify runs only
};

namespace detail {

/// Streams rows to <out_dir>/metrics.csv as they are produced.
class RunWriter {
 public:
  explicit RunWriter(const RunConfig& cfg) : dir_(cfg.out_dir) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    std::ofstream(dir_ / "config.json") << to_json(cfg).dump(2) << "\n";
    metrics_.open(dir_ / "metrics.csv", std::ios::trunc);
    if (!metrics_) throw std::runtime_error("cannot write " + (dir_ / "metrics.csv").string());
    write_metrics_preamble(metrics_);
  }

  void row(const MetricsRow& r) {
    if (!metrics_.is_open()) return;
    write_metrics_row(metrics_, r);
    metrics_.flush();
    if (!metrics_) throw std::runtime_error("failed writing metrics");
  }

  void abort(std::uint64_t step, const std::string& why) {
    if (metrics_.is_open()) metrics_ << "# aborted at step " << step << ": " << why << "\n" << std::flush;
  }

  void finish(const TrainingResult& result) {
    if (dir_.empty()) return;
    std::ofstream timing(dir_ / "timing.csv", std::ios::trunc);
    write_timing_csv(timing, result.rows);
    nn::save_checkpoint(dir_ / "checkpoint.ckpt", result.checkpoint);
  }

 private:
  std::filesystem::path dir_;
  std::ofstream metrics_;
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

inline void log_row(std::ostream* log, const MetricsRow& r) {
  if (log == nullptr) return;
  char buf[200];
  std::snprintf(buf, sizeof buf, "step %llu  J1 %.2f  J2 %.2f  collision %.3f  lambda %.3g/%.3g  %.1fs\n",
                static_cast<unsigned long long>(r.step), r.leader_return, r.follower_return, r.collision_rate,
                r.lambda1, r.lambda2, r.wall_clock);
  *log << buf << std::flush;
}

inline void fill_losses(MetricsRow& row, const agents::CriticLosses& l) {
  row.loss_q1 = l.q1;
  row.loss_q2 = l.q2;
  row.loss_g1 = l.g1;
  row.loss_g2 = l.g2;
}

inline agents::CriticLosses nan_losses() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  return {nan, nan, nan, nan};
}

inline double lr_scale(const RunConfig& cfg, std::uint64_t step) {
  const double frac = static_cast<double>(step) / static_cast<double>(std::max<std::uint64_t>(cfg.total_steps, 1));
  return 1.0 - (1.0 - cfg.lr_final_scale) * frac;
}

inline TrainingResult train_csq(const RunConfig& cfg, RunWriter& writer, std::ostream* log) {
  const auto t0 = Clock::now();
  const driving::ScenarioConfig& scenario = cfg.scenario;
  std::mt19937_64 rng(agent_stream(cfg.seed));
  const std::uint64_t train_seeds = training_stream(cfg.seed);
  const std::uint64_t eval_seed = evaluation_stream(cfg.seed);
  std::uint64_t episodes = 0;

  driving::ScenarioState scn = driving::reset(scenario, episode_seed(train_seeds, episodes++));
  driving::StepOutcome obs = driving::observe(scn);

  agents::CsqConfig acfg;
  acfg.hidden = cfg.critic_hidden;
  acfg.critic_lr = cfg.critic_lr;
  acfg.gamma = cfg.gamma;
  acfg.rho = cfg.rho;
  acfg.d1 = cfg.d1;
  acfg.d2 = cfg.d2;
  agents::CsqPair pair =
      agents::CsqPair::create(obs.global_state.size(), driving::kMetaActions, driving::kMetaActions, acfg, rng);
  pair.epsilon = cfg.epsilon(0, cfg.total_steps);
  agents::ReplayBuffer<agents::DiscreteTransition> buffer(cfg.buffer_capacity);
  agents::CriticLosses losses = nan_losses();

  TrainingResult result;
  auto evaluate_now = [&](std::uint64_t step) {
    MetricsRow row = evaluate_policy(scenario, csq_policy(pair), cfg.eval_episodes, eval_seed, cfg.gamma);
    row.step = step;
    fill_losses(row, losses);
    row.exploration = pair.epsilon;
    row.wall_clock = seconds_since(t0);
    writer.row(row);
    log_row(log, row);
    result.rows.push_back(row);
  };

  evaluate_now(0);
  const std::size_t ready = std::max(cfg.batch_size, cfg.warmup_steps);
  for (std::uint64_t step = 0; step < cfg.total_steps; ++step) {
    try {
      pair.epsilon = cfg.epsilon(step, cfg.total_steps);
      Vector s = to_vector(obs.global_state);
      const auto choice = agents::csq_select_actions(pair, s, true, rng);
      driving::StepOutcome out =
          driving::step_discrete(scn, static_cast<MetaAction>(choice.a1), static_cast<MetaAction>(choice.a2));
      buffer.push({std::move(s), to_vector(obs.obs1), to_vector(obs.obs2), choice.a1, choice.a2, out.r1, out.r2,
                   out.c1, out.c2, out.done, to_vector(out.global_state), to_vector(out.obs1), to_vector(out.obs2)});
      if (out.done) {
        scn = driving::reset(scenario, episode_seed(train_seeds, episodes++));
        obs = driving::observe(scn);
      } else {
        obs = std::move(out);
      }
      if (buffer.size() >= ready && (step + 1) % cfg.update_every == 0) {
        for (auto& opt : pair.optimizers) opt.learning_rate = cfg.critic_lr * lr_scale(cfg, step);
        for (std::size_t u = 0; u < cfg.updates_per_step; ++u) {
          losses = agents::csq_update(pair, buffer.sample(cfg.batch_size, rng));
          agents::csq_soft_update(pair);
        }
      }
    } catch (const nn::NonFiniteParameter& e) {
      writer.abort(step, e.what());
      throw;
    }
    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps) evaluate_now(step + 1);
  }

  result.checkpoint = agents::csq_checkpoint(pair);
  result.checkpoint.state["run_config"] = to_json(cfg);
  result.checkpoint.state["steps"] = cfg.total_steps;
  result.checkpoint.state["episodes"] = episodes;
  return result;
}

inline TrainingResult train_maddpg(const RunConfig& cfg, RunWriter& writer, std::ostream* log) {
  const auto t0 = Clock::now();
  const driving::ScenarioConfig& scenario = cfg.scenario;
  std::mt19937_64 rng(agent_stream(cfg.seed));
  const std::uint64_t train_seeds = training_stream(cfg.seed);
  const std::uint64_t eval_seed = evaluation_stream(cfg.seed);
  std::uint64_t episodes = 0;

  driving::ScenarioState scn = driving::reset(scenario, episode_seed(train_seeds, episodes++));
  driving::StepOutcome obs = driving::observe(scn);

  agents::MaddpgConfig acfg;
  acfg.actor_hidden = cfg.actor_hidden;
  acfg.critic_hidden = cfg.critic_hidden;
  acfg.actor_lr = cfg.actor_lr;
  acfg.critic_lr = cfg.critic_lr;
  acfg.lagrange_lr1 = cfg.lagrange_lr1;
  acfg.lagrange_lr2 = cfg.lagrange_lr2;
  acfg.gamma = cfg.gamma;
  acfg.rho = cfg.rho;
  acfg.d1 = cfg.d1;
  acfg.d2 = cfg.d2;
  acfg.noise = cfg.noise(0, cfg.total_steps);
  agents::CsMaddpgPair pair = agents::CsMaddpgPair::create(obs.global_state.size(), obs.obs1.size(),
                                                           obs.obs2.size(), 1, acfg, rng);
  agents::ReplayBuffer<agents::ContinuousTransition> buffer(cfg.buffer_capacity);
  agents::CriticLosses losses = nan_losses();
  agents::ActorObjectives objectives{std::numeric_limits<double>::quiet_NaN(),
                                     std::numeric_limits<double>::quiet_NaN()};

  TrainingResult result;
  auto evaluate_now = [&](std::uint64_t step) {
    MetricsRow row = evaluate_policy(scenario, maddpg_policy(pair), cfg.eval_episodes, eval_seed, cfg.gamma);
    row.step = step;
    fill_losses(row, losses);
    row.actor1_objective = objectives.leader;
    row.actor2_objective = objectives.follower;
    row.lambda1 = pair.lambda1;
    row.lambda2 = pair.lambda2;
    row.exploration = pair.noise;
    row.wall_clock = seconds_since(t0);
    writer.row(row);
    log_row(log, row);
    result.rows.push_back(row);
  };

  evaluate_now(0);
  const std::size_t ready = std::max(cfg.batch_size, cfg.warmup_steps);
  for (std::uint64_t step = 0; step < cfg.total_steps; ++step) {
    try {
      pair.noise = cfg.noise(step, cfg.total_steps);
      Vector o1 = to_vector(obs.obs1);
      Vector o2 = to_vector(obs.obs2);
      auto [a1, a2] = agents::maddpg_select_actions(pair, o1, o2, true, rng);
      driving::StepOutcome out = driving::step_continuous(scn, a1(0), a2(0));
      buffer.push({to_vector(obs.global_state), std::move(o1), std::move(o2), std::move(a1), std::move(a2), out.r1,
                   out.r2, out.c1, out.c2, out.done, to_vector(out.global_state), to_vector(out.obs1),
                   to_vector(out.obs2)});
      if (out.done) {
        scn = driving::reset(scenario, episode_seed(train_seeds, episodes++));
        obs = driving::observe(scn);
      } else {
        obs = std::move(out);
      }
      if (buffer.size() >= ready && (step + 1) % cfg.update_every == 0) {
        const double scale = lr_scale(cfg, step);
        for (auto& opt : pair.critic_opt) opt.learning_rate = cfg.critic_lr * scale;
        pair.actor1_opt.learning_rate = cfg.actor_lr * scale;
        pair.actor2_opt.learning_rate = cfg.actor_lr * scale;
        for (std::size_t u = 0; u < cfg.updates_per_step; ++u) {
          const auto batch = buffer.sample(cfg.batch_size, rng);
          losses = agents::maddpg_update_critics(pair, batch);
          objectives = agents::maddpg_update_actors(pair, batch);
          agents::update_lagrange(pair, batch);
          agents::maddpg_soft_update(pair);
        }
      }
    } catch (const nn::NonFiniteParameter& e) {
      writer.abort(step, e.what());
      throw;
    }
    if ((step + 1) % cfg.eval_every == 0 || step + 1 == cfg.total_steps) evaluate_now(step + 1);
  }

  result.checkpoint = agents::maddpg_checkpoint(pair);
  result.checkpoint.state["run_config"] = to_json(cfg);
  result.checkpoint.state["steps"] = cfg.total_steps;
  result.checkpoint.state["episodes"] = episodes;
  return result;
}

}  // namespace detail

/// Trains per `cfg`, evaluating at step 0, every eval_every steps and at the
/// end. With a non-empty out_dir writes config.json, metrics.csv,
/// timing.csv and checkpoint.ckpt there. A tabular-verify run executes the
/// property suites instead and writes verify_report.txt.
inline TrainingResult run_training(const RunConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (cfg.algorithm == Algorithm::TabularVerify) {
    VerifyOptions o;
    o.trials = cfg.verify_trials;
    o.seed = cfg.seed;
    o.gamma = cfg.verify_gamma;
    TrainingResult result;
    result.verify = verify_properties(o);
    if (!cfg.out_dir.empty()) {
      std::filesystem::create_directories(cfg.out_dir);
      std::ofstream(std::filesystem::path(cfg.out_dir) / "config.json") << to_json(cfg).dump(2) << "\n";
      std::ofstream report(std::filesystem::path(cfg.out_dir) / "verify_report.txt");
      print_report(report, *result.verify);
    }
    if (log != nullptr) print_report(*log, *result.verify);
    return result;
  }
  detail::RunWriter writer(cfg);
  TrainingResult result =
      cfg.algorithm == Algorithm::Csq ? detail::train_csq(cfg, writer, log) : detail::train_maddpg(cfg, writer, log);
  writer.finish(result);
  return result;
}

/// Greedy evaluation of a trained checkpoint on `scenario`. The checkpoint is
/// only read.
inline MetricsRow evaluate(const nn::Checkpoint& ckpt, const driving::ScenarioConfig& scenario, std::size_t episodes,
                           std::uint64_t seed, driving::EpisodeRecorder* replay = nullptr) {
  if (episodes == 0) throw std::invalid_argument("evaluation needs at least one episode");
  const std::string algorithm = ckpt.state.value("algorithm", "");
  const double gamma = ckpt.state.at("gamma").get<double>();
  const std::size_t state_size = driving::kGlobalStateSize;
  MetricsRow row;
  if (algorithm == "csq") {
    const agents::CsqPair pair = agents::csq_from_checkpoint(ckpt);
    if (!driving::is_discrete(scenario.kind) || pair.state_size() != state_size || pair.n1 != driving::kMetaActions ||
        pair.n2 != driving::kMetaActions) {
      throw std::invalid_argument("csq checkpoint does not match the scenario's state or action sizes");
    }
    row = evaluate_policy(scenario, csq_policy(pair), episodes, seed, gamma, replay);
  } else if (algorithm == "cs-maddpg") {
    const agents::CsMaddpgPair pair = agents::maddpg_from_checkpoint(ckpt);
    if (driving::is_discrete(scenario.kind) || pair.state_size() != state_size ||
        pair.obs1_size() != driving::kObservationSize || pair.obs2_size() != driving::kObservationSize ||
        pair.action_size != 1) {
      throw std::invalid_argument("cs-maddpg checkpoint does not match the scenario's observation or action sizes");
    }
    row = evaluate_policy(scenario, maddpg_policy(pair), episodes, seed, gamma, replay);
    row.lambda1 = pair.lambda1;
    row.lambda2 = pair.lambda2;
  } else {
    throw std::invalid_argument("checkpoint has unknown algorithm '" + algorithm + "'");
  }
  row.step = ckpt.state.value("steps", std::uint64_t{0});
  return row;
}

/// Evaluates on the scenario recorded in the checkpoint's run config.
inline MetricsRow evaluate(const nn::Checkpoint& ckpt, std::size_t episodes, std::uint64_t seed,
                           driving::EpisodeRecorder* replay = nullptr) {
  if (!ckpt.state.contains("run_config")) throw std::invalid_argument("checkpoint carries no run config");
  const RunConfig cfg = run_config_from_json(ckpt.state.at("run_config"));
  return evaluate(ckpt, cfg.scenario, episodes, seed, replay);
}

}  // namespace safemarl::harness
