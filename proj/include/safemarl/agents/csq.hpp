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


// Constrained Stackelberg Q-learning with function approximation.
//
// Each critic maps the global state to one output per joint action, index
// a1 * n2 + a2, so a single forward pass fills a whole stage game.

#pragma once

#include "safemarl/agents/common.hpp"
#include "safemarl/agents/replay.hpp"
#include "safemarl/checkpoint.hpp"
#include "safemarl/matgame.hpp"
#include "safemarl/nn.hpp"

#include <array>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <vector>

namespace safemarl::agents {

enum CriticIndex : std::size_t { kQ1 = 0, kQ2 = 1, kG1 = 2, kG2 = 3 };
inline constexpr std::array<const char*, 4> kCriticNames = {"q1", "q2", "g1", "g2"};

struct CsqConfig {
  std::vector<std::size_t> hidden{128, 128};
  double critic_lr = 1e-3;
  double gamma = 0.99;
  double rho = 0.995;
  double d1 = matgame::kUnconstrained;
  double d2 = matgame::kUnconstrained;
};

struct CsqPair {
  std::size_t n1 = 0;
  std::size_t n2 = 0;
  std::array<nn::Mlp, 4> critics;  // indexed by CriticIndex
  std::array<nn::Mlp, 4> targets;
  std::array<nn::OptimizerState, 4> optimizers;
  double d1 = matgame::kUnconstrained;
  double d2 = matgame::kUnconstrained;
  double gamma = 0.99;
  double rho = 0.995;
  double epsilon = 1.0;

  static CsqPair create(std::size_t state_size, std::size_t n1, std::size_t n2, const CsqConfig& cfg,
                        std::mt19937_64& rng) {
    CsqPair p;
    p.n1 = n1;
    p.n2 = n2;
    std::vector<std::size_t> sizes{state_size};
    sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
    sizes.push_back(n1 * n2);
    for (std::size_t k = 0; k < 4; ++k) {
      p.critics[k] = nn::Mlp::random(sizes, nn::Activation::Identity, rng);
      p.targets[k] = p.critics[k];
      p.optimizers[k] = nn::OptimizerState::adam(cfg.critic_lr);
    }
    p.d1 = cfg.d1;
    p.d2 = cfg.d2;
    p.gamma = cfg.gamma;
    p.rho = cfg.rho;
    return p;
  }

  [[nodiscard]] std::size_t state_size() const { return critics[kQ1].input_size(); }
  [[nodiscard]] std::size_t joint(std::size_t a1, std::size_t a2) const { return a1 * n2 + a2; }

  void validate() const {
    if (n1 == 0 || n2 == 0) throw std::invalid_argument("empty action set");
    for (std::size_t k = 0; k < 4; ++k) {
      if (critics[k].output_size() != n1 * n2 || !critics[k].same_architecture(targets[k])) {
        throw std::invalid_argument("critic shapes do not match the joint action set");
      }
    }
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
  }
};

/// Builds the stage game at one state from four columns of critic outputs.
inline matgame::ConstrainedBimatrixGame csq_stage_game(const CsqPair& p,
                                                       const std::array<nn::Vector, 4>& outputs) {
  matgame::ConstrainedBimatrixGame g;
  std::array<matgame::Matrix*, 4> dst{&g.q1, &g.q2, &g.g1, &g.g2};
  const auto n1 = static_cast<Eigen::Index>(p.n1);
  const auto n2 = static_cast<Eigen::Index>(p.n2);
  for (std::size_t k = 0; k < 4; ++k) {
    // Outputs are laid out a1-major, i.e. a row-major n1 x n2 table.
    *dst[k] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
        outputs[k].data(), n1, n2);
  }
  g.d1 = p.d1;
  g.d2 = p.d2;
  return g;
}

inline matgame::ConstrainedBimatrixGame csq_stage_game(const CsqPair& p, const nn::Vector& state) {
  std::array<nn::Vector, 4> out;
  for (std::size_t k = 0; k < 4; ++k) out[k] = p.critics[k].forward(state);
  return csq_stage_game(p, out);
}

struct CsqChoice {
  std::size_t a1 = 0;
  std::size_t a2 = 0;
  bool feasible = false;  // feasibility flag of the equilibrium solve
};

/// Equilibrium joint action of the online critics; when exploring, with
/// probability epsilon a uniformly random feasible joint action replaces it
/// (uniform over all joint actions if none is feasible).
inline CsqChoice csq_select_actions(const CsqPair& p, const nn::Vector& state, bool explore,
                                    std::mt19937_64& rng) {
  const auto game = csq_stage_game(p, state);
  const auto sol = matgame::solve_constrained_stackelberg(game);
  CsqChoice choice{sol.leader_action, sol.follower_action, sol.feasible};
  if (!explore) return choice;
  if (std::uniform_real_distribution<double>(0.0, 1.0)(rng) >= p.epsilon) return choice;

  std::vector<std::size_t> feasible;
  for (std::size_t a1 = 0; a1 < p.n1; ++a1) {
    for (std::size_t a2 = 0; a2 < p.n2; ++a2) {
      const auto i = static_cast<Eigen::Index>(a1);
      const auto j = static_cast<Eigen::Index>(a2);
      if (game.g1(i, j) <= p.d1 && game.g2(i, j) <= p.d2) feasible.push_back(p.joint(a1, a2));
    }
  }
  std::size_t pick = 0;
  if (feasible.empty()) {
    pick = std::uniform_int_distribution<std::size_t>(0, p.n1 * p.n2 - 1)(rng);
  } else {
    pick = feasible[std::uniform_int_distribution<std::size_t>(0, feasible.size() - 1)(rng)];
  }
  choice.a1 = pick / p.n2;
  choice.a2 = pick % p.n2;
  return choice;
}

struct CriticLosses {
  double q1 = 0.0;
  double q2 = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;

  [[nodiscard]] double& operator[](std::size_t k) {
    return k == kQ1 ? q1 : k == kQ2 ? q2 : k == kG1 ? g1 : g2;
  }
  [[nodiscard]] double operator[](std::size_t k) const {
    return k == kQ1 ? q1 : k == kQ2 ? q2 : k == kG1 ? g1 : g2;
  }
};

namespace detail {

template <typename T, typename F>
nn::Matrix stack_columns(const Batch<T>& batch, F&& field) {
  const auto rows = field(*batch.front()).size();
  nn::Matrix m(rows, static_cast<Eigen::Index>(batch.size()));
  for (std::size_t b = 0; b < batch.size(); ++b) m.col(static_cast<Eigen::Index>(b)) = field(*batch[b]);
  return m;
}

inline double signal(const DiscreteTransition& t, std::size_t k) {
  return k == kQ1 ? t.r1 : k == kQ2 ? t.r2 : k == kG1 ? t.c1 : t.c2;
}

}  // namespace detail

/// One descent step per critic on the mean squared TD error. Target joint
/// actions come from the constrained equilibrium of the ONLINE critics at s';
/// their values from the TARGET critics. Returns the losses before the step.
inline CriticLosses csq_update(CsqPair& p, const Batch<DiscreteTransition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const nn::Matrix s = detail::stack_columns(batch, [](const DiscreteTransition& t) -> const Vector& { return t.state; });
  const nn::Matrix s_next =
      detail::stack_columns(batch, [](const DiscreteTransition& t) -> const Vector& { return t.next_state; });

  std::array<nn::Matrix, 4> online_next;
  std::array<nn::Matrix, 4> target_next;
  for (std::size_t k = 0; k < 4; ++k) {
    online_next[k] = p.critics[k].forward_batch(s_next);
    target_next[k] = p.targets[k].forward_batch(s_next);
  }

  std::vector<Eigen::Index> target_joint(batch.size(), 0);
  for (Eigen::Index b = 0; b < n; ++b) {
    if (batch[static_cast<std::size_t>(b)]->done) continue;
    std::array<nn::Vector, 4> cols;
    for (std::size_t k = 0; k < 4; ++k) cols[k] = online_next[k].col(b);
    const auto sol = matgame::solve_constrained_stackelberg(csq_stage_game(p, cols));
    target_joint[static_cast<std::size_t>(b)] = static_cast<Eigen::Index>(p.joint(sol.leader_action, sol.follower_action));
  }

  CriticLosses losses;
  for (std::size_t k = 0; k < 4; ++k) {
    const nn::ForwardCache cache = p.critics[k].forward_cached(s);
    const nn::Matrix& out = p.critics[k].output_of(cache);
    nn::Matrix upstream = nn::Matrix::Zero(out.rows(), out.cols());
    double loss = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
      const DiscreteTransition& t = *batch[static_cast<std::size_t>(b)];
      double y = detail::signal(t, k);
      if (!t.done) y += p.gamma * target_next[k](target_joint[static_cast<std::size_t>(b)], b);
      const auto row = static_cast<Eigen::Index>(p.joint(t.a1, t.a2));
      const double diff = out(row, b) - y;
      loss += diff * diff * inv_n;
      upstream(row, b) = 2.0 * diff * inv_n;
    }
    losses[k] = loss;
    nn::apply_update(p.critics[k], p.optimizers[k], p.critics[k].backward(cache, upstream), nn::Direction::Descent);
  }
  return losses;
}

inline void csq_soft_update(CsqPair& p) {
  for (std::size_t k = 0; k < 4; ++k) nn::soft_blend_into(p.targets[k], p.critics[k], p.rho);
}

inline nn::Checkpoint csq_checkpoint(const CsqPair& p) {
  nn::Checkpoint ckpt;
  for (std::size_t k = 0; k < 4; ++k) {
    ckpt.add(kCriticNames[k], p.critics[k]);
    ckpt.add(std::string(kCriticNames[k]) + "_target", p.targets[k]);
  }
  ckpt.state = {{"algorithm", "csq"},      {"n1", p.n1},       {"n2", p.n2},
                {"d1", threshold_to_json(p.d1)}, {"d2", threshold_to_json(p.d2)},
                {"gamma", p.gamma},        {"rho", p.rho},     {"epsilon", p.epsilon}};
  return ckpt;
}

/// Optimizer moments are not stored; a restored pair restarts them.
inline CsqPair csq_from_checkpoint(const nn::Checkpoint& ckpt, double critic_lr = 1e-3) {
  if (ckpt.state.value("algorithm", "") != "csq") throw std::invalid_argument("checkpoint is not a csq run");
  CsqPair p;
  p.n1 = ckpt.state.at("n1").get<std::size_t>();
  p.n2 = ckpt.state.at("n2").get<std::size_t>();
  for (std::size_t k = 0; k < 4; ++k) {
    p.critics[k] = ckpt.network(kCriticNames[k]);
    p.targets[k] = ckpt.network(std::string(kCriticNames[k]) + "_target");
    p.optimizers[k] = nn::OptimizerState::adam(critic_lr);
  }
  p.d1 = threshold_from_json(ckpt.state.at("d1"));
  p.d2 = threshold_from_json(ckpt.state.at("d2"));
  p.gamma = ckpt.state.at("gamma").get<double>();
  p.rho = ckpt.state.at("rho").get<double>();
  p.epsilon = ckpt.state.at("epsilon").get<double>();
  p.validate();
  return p;
}

}  // namespace safemarl::agents
