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

#include "safemarl/agents/common.hpp"
#include "safemarl/driving/scenario.hpp"

#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace safemarl::harness {

enum class Algorithm { Csq, CsMaddpg, TabularVerify };

inline std::string_view to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Csq: return "csq";
    case Algorithm::CsMaddpg: return "cs-maddpg";
    case Algorithm::TabularVerify: return "tabular-verify";
  }
  return "?";
}

inline Algorithm algorithm_from_string(std::string_view s) {
  if (s == "csq") return Algorithm::Csq;
  if (s == "cs-maddpg") return Algorithm::CsMaddpg;
  if (s == "tabular-verify") return Algorithm::TabularVerify;
  throw std::invalid_argument("unknown algorithm: " + std::string(s));
}

inline constexpr int kRunConfigFormatVersion = 1;

struct RunConfig {
  Algorithm algorithm = Algorithm::Csq;
  driving::ScenarioConfig scenario = driving::ScenarioConfig::defaults(driving::ScenarioKind::Merge);
  std::uint64_t seed = 0;
  std::uint64_t total_steps = 200000;
  double gamma = 0.99;
  double d1 = 1.0;
  double d2 = 1.0;
  double critic_lr = 1e-3;
  double actor_lr = 1e-4;
  double lagrange_lr1 = 1e-2;
  double lagrange_lr2 = 1e-2;
  double rho = 0.995;
  double lr_final_scale = 1.0;  // learning rates fall linearly to this multiple by the last step
  std::size_t buffer_capacity = 100000;
  std::size_t batch_size = 128;
  std::size_t updates_per_step = 1;
  std::size_t update_every = 1;  // environment steps between update rounds
  std::size_t warmup_steps = 1000;
  std::vector<std::size_t> critic_hidden{128, 128};
  std::vector<std::size_t> actor_hidden{64, 64};
  agents::LinearSchedule epsilon{1.0, 0.05, 0.5};
  agents::LinearSchedule noise{0.2, 0.02, 1.0};
  std::uint64_t eval_every = 2000;
  std::size_t eval_episodes = 20;
  std::string out_dir = "runs/default";
  // tabular-verify only
  std::size_t verify_trials = 200;
  double verify_gamma = 0.8;

  void validate() const {
    if (algorithm != Algorithm::TabularVerify) {
      const bool discrete = driving::is_discrete(scenario.kind);
      if (algorithm == Algorithm::Csq && !discrete) {
        throw std::invalid_argument("csq needs a discrete-action scenario (merge or roundabout)");
      }
      if (algorithm == Algorithm::CsMaddpg && discrete) {
        throw std::invalid_argument("cs-maddpg needs a continuous-action scenario (intersection or racetrack)");
      }
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("gamma must lie in [0, 1)");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("rho must lie in [0, 1]");
    if (std::isnan(d1) || std::isnan(d2)) throw std::invalid_argument("thresholds must not be NaN");
    if (batch_size == 0 || batch_size > buffer_capacity) throw std::invalid_argument("batch size must lie in [1, buffer capacity]");
    if (update_every == 0) throw std::invalid_argument("update_every must be positive");
    if (eval_every == 0) throw std::invalid_argument("eval_every must be positive");
    if (eval_episodes == 0) throw std::invalid_argument("eval_episodes must be positive");
    if (scenario.horizon == 0) throw std::invalid_argument("horizon must be positive");
    if (!(critic_lr > 0.0 && actor_lr > 0.0 && lagrange_lr1 >= 0.0 && lagrange_lr2 >= 0.0)) {
      throw std::invalid_argument("learning rates must be positive");
    }
    if (!(lr_final_scale > 0.0 && lr_final_scale <= 1.0)) throw std::invalid_argument("lr_final_scale must lie in (0, 1]");
    epsilon.validate();
    noise.validate();
    if (epsilon.start > 1.0 || epsilon.end < 0.0) throw std::invalid_argument("epsilon must stay in [0, 1]");
    if (noise.end < 0.0) throw std::invalid_argument("noise must stay nonnegative");
    if (verify_trials == 0) throw std::invalid_argument("verify_trials must be positive");
  }
};

namespace detail {

inline nlohmann::json schedule_json(const agents::LinearSchedule& s) {
  return {{"start", s.start}, {"end", s.end}, {"fraction", s.fraction}};
}

inline agents::LinearSchedule schedule_from(const nlohmann::json& j, agents::LinearSchedule s) {
  if (j.contains("start")) j.at("start").get_to(s.start);
  if (j.contains("end")) j.at("end").get_to(s.end);
  if (j.contains("fraction")) j.at("fraction").get_to(s.fraction);
  return s;
}

}  // namespace detail

#define SAFEMARL_RUN_FIELDS(X)                                                                      \
  X(seed) X(total_steps) X(gamma) X(critic_lr) X(actor_lr) X(lagrange_lr1) X(lagrange_lr2) X(rho) \
  X(lr_final_scale)                                                                               \
  X(buffer_capacity) X(batch_size) X(updates_per_step) X(update_every) X(warmup_steps)            \
  X(critic_hidden) X(actor_hidden) X(eval_every) X(eval_episodes) X(out_dir) X(verify_trials)     \
  X(verify_gamma)

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["format_version"] = kRunConfigFormatVersion;
  j["algorithm"] = std::string(to_string(c.algorithm));
  j["scenario"] = driving::to_json(c.scenario);
  j["horizon"] = c.scenario.horizon;
  j["d1"] = agents::threshold_to_json(c.d1);
  j["d2"] = agents::threshold_to_json(c.d2);
  j["epsilon"] = detail::schedule_json(c.epsilon);
  j["noise"] = detail::schedule_json(c.noise);
#define X(f) j[#f] = c.f;
  SAFEMARL_RUN_FIELDS(X)
#undef X
  return j;
}

/// "scenario" is either a kind name or a scenario object; a top-level
/// "horizon" overrides the scenario's. Missing keys keep their defaults.
inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (j.contains("format_version") && j.at("format_version").get<int>() != kRunConfigFormatVersion) {
    throw std::invalid_argument("unsupported run config format_version");
  }
  RunConfig c;
  if (j.contains("algorithm")) c.algorithm = algorithm_from_string(j.at("algorithm").get<std::string>());
  if (j.contains("scenario")) {
    const auto& s = j.at("scenario");
    c.scenario = s.is_string() ? driving::ScenarioConfig::defaults(driving::scenario_from_string(s.get<std::string>()))
                               : driving::scenario_config_from_json(s);
  }
  if (j.contains("horizon")) j.at("horizon").get_to(c.scenario.horizon);
  if (j.contains("d1")) c.d1 = agents::threshold_from_json(j.at("d1"));
  if (j.contains("d2")) c.d2 = agents::threshold_from_json(j.at("d2"));
  if (j.contains("epsilon")) c.epsilon = detail::schedule_from(j.at("epsilon"), c.epsilon);
  if (j.contains("noise")) c.noise = detail::schedule_from(j.at("noise"), c.noise);
#define X(f) \
  if (j.contains(#f)) j.at(#f).get_to(c.f);
  SAFEMARL_RUN_FIELDS(X)
#undef X
  c.validate();
  return c;
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument("config " + path + " is not valid JSON: " + e.what());
  }
  return run_config_from_json(j);
}

}  // namespace safemarl::harness
