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


// Constrained Stackelberg MADDPG. The leader actor sees its observation; the
// follower actor sees its observation and the leader's action. Critics and
// cost critics are centralised over (global state, a1, a2). Each agent ascends
// its Lagrangian Q_i - lambda_i (G_i - d_i).

#pragma once

#include "safemarl/agents/common.hpp"
#include "safemarl/agents/csq.hpp"
#include "safemarl/agents/replay.hpp"
#include "safemarl/checkpoint.hpp"
#include "safemarl/nn.hpp"

#include <array>
#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <utility>
#include <vector>

namespace safemarl::agents {

struct MaddpgConfig {
  std::vector<std::size_t> actor_hidden{64, 64};
  std::vector<std::size_t> critic_hidden{128, 128};
  double actor_lr = 1e-4;
  double critic_lr = 1e-3;
  double lagrange_lr1 = 1e-2;  // beta_1
  double lagrange_lr2 = 1e-2;  // beta_2
  double gamma = 0.99;
  double rho = 0.995;
  double d1 = matgame::kUnconstrained;
  double d2 = matgame::kUnconstrained;
  double noise = 0.2;
  double lambda_init = 0.0;
  ActionBounds bounds;
};

struct CsMaddpgPair {
  std::size_t action_size = 1;
  nn::Mlp actor1;  // o1 -> a1
  nn::Mlp actor2;  // [o2; a1] -> a2
  nn::Mlp actor1_target;
  nn::Mlp actor2_target;
  std::array<nn::Mlp, 4> critics;  // [s; a1; a2] -> scalar, indexed by CriticIndex
  std::array<nn::Mlp, 4> targets;
  nn::OptimizerState actor1_opt;
  nn::OptimizerState actor2_opt;
  std::array<nn::OptimizerState, 4> critic_opt;
  double lambda1 = 0.0;
  double lambda2 = 0.0;
  double d1 = matgame::kUnconstrained;
  double d2 = matgame::kUnconstrained;
  double beta1 = 1e-2;
  double beta2 = 1e-2;
  double noise = 0.2;
  double gamma = 0.99;
  double rho = 0.995;
  ActionBounds bounds;

  static CsMaddpgPair create(std::size_t state_size, std::size_t obs1_size, std::size_t obs2_size,
                             std::size_t action_size, const MaddpgConfig& cfg, std::mt19937_64& rng) {
    auto layers = [](std::size_t in, const std::vector<std::size_t>& hidden, std::size_t out) {
      std::vector<std::size_t> s{in};
      s.insert(s.end(), hidden.begin(), hidden.end());
      s.push_back(out);
      return s;
    };
    CsMaddpgPair p;
    p.action_size = action_size;
    p.actor1 = nn::Mlp::random(layers(obs1_size, cfg.actor_hidden, action_size), nn::Activation::Tanh, rng);
    p.actor2 = nn::Mlp::random(layers(obs2_size + action_size, cfg.actor_hidden, action_size),
                               nn::Activation::Tanh, rng);
    p.actor1_target = p.actor1;
    p.actor2_target = p.actor2;
    for (std::size_t k = 0; k < 4; ++k) {
      p.critics[k] = nn::Mlp::random(layers(state_size + 2 * action_size, cfg.critic_hidden, 1),
                                     nn::Activation::Identity, rng);
      p.targets[k] = p.critics[k];
      p.critic_opt[k] = nn::OptimizerState::adam(cfg.critic_lr);
    }
    p.actor1_opt = nn::OptimizerState::adam(cfg.actor_lr);
    p.actor2_opt = nn::OptimizerState::adam(cfg.actor_lr);
    p.lambda1 = cfg.lambda_init;
    p.lambda2 = cfg.lambda_init;
    p.d1 = cfg.d1;
    p.d2 = cfg.d2;
    p.beta1 = cfg.lagrange_lr1;
    p.beta2 = cfg.lagrange_lr2;
    p.noise = cfg.noise;
    p.gamma = cfg.gamma;
    p.rho = cfg.rho;
    p.bounds = cfg.bounds;
    return p;
  }

  [[nodiscard]] std::size_t state_size() const { return critics[kQ1].input_size() - 2 * action_size; }
  [[nodiscard]] std::size_t obs1_size() const { return actor1.input_size(); }
  [[nodiscard]] std::size_t obs2_size() const { return actor2.input_size() - action_size; }

  void validate() const {
    if (actor2.input_size() <= action_size || actor1.output_size() != action_size ||
        actor2.output_size() != action_size) {
      throw std::invalid_argument("actor shapes do not match the action size");
    }
    if (lambda1 < 0.0 || lambda2 < 0.0) throw std::invalid_argument("multipliers must be nonnegative");
  }
};

enum class ChainMode { Vertical, Horizontal };

/// Decisions of n chained actors, returned in agent order. Vertical: actor k
/// sees [o_k; a_0; ...; a_{k-1}]. Horizontal: the first `leaders` actors see
/// their observation only, every later actor sees [o_k; a_0; ...; a_{leaders-1}].
/// Outputs are mapped onto `bounds` and clipped.
inline std::vector<Vector> chain_decisions(const std::vector<const nn::Mlp*>& actors,
                                           const std::vector<Vector>& observations, ChainMode mode,
                                           std::size_t leaders = 1, const ActionBounds& bounds = {}) {
  if (actors.size() != observations.size()) throw std::invalid_argument("one observation per actor");
  if (mode == ChainMode::Horizontal && (leaders == 0 || leaders > actors.size())) {
    throw std::invalid_argument("bad leader count");
  }
  std::vector<Vector> actions;
  actions.reserve(actors.size());
  for (std::size_t k = 0; k < actors.size(); ++k) {
    const std::size_t upstream = mode == ChainMode::Vertical ? k : (k < leaders ? 0 : leaders);
    Eigen::Index len = observations[k].size();
    for (std::size_t j = 0; j < upstream; ++j) len += actions[j].size();
    if (static_cast<std::size_t>(len) != actors[k]->input_size()) {
      throw std::invalid_argument("actor " + std::to_string(k) + " expects " +
                                  std::to_string(actors[k]->input_size()) + " inputs, chain provides " +
                                  std::to_string(len));
    }
    Vector in(len);
    Eigen::Index at = 0;
    in.segment(at, observations[k].size()) = observations[k];
    at += observations[k].size();
    for (std::size_t j = 0; j < upstream; ++j) {
      in.segment(at, actions[j].size()) = actions[j];
      at += actions[j].size();
    }
    actions.push_back(bounds.clip(bounds.scale(actors[k]->forward(in))));
  }
  return actions;
}

namespace detail {

inline nn::Matrix vstack(const nn::Matrix& a, const nn::Matrix& b) {
  nn::Matrix m(a.rows() + b.rows(), a.cols());
  m << a, b;
  return m;
}

inline nn::Matrix vstack(const nn::Matrix& a, const nn::Matrix& b, const nn::Matrix& c) {
  nn::Matrix m(a.rows() + b.rows() + c.rows(), a.cols());
  m << a, b, c;
  return m;
}

inline double signal(const ContinuousTransition& t, std::size_t k) {
  return k == kQ1 ? t.r1 : k == kQ2 ? t.r2 : k == kG1 ? t.c1 : t.c2;
}

}  // namespace detail

/// Leader acts on obs1; the follower acts on obs2 and the leader's action
/// after noise and clipping. Gaussian noise only when exploring.
inline std::pair<Vector, Vector> maddpg_select_actions(const CsMaddpgPair& p, const Vector& obs1,
                                                       const Vector& obs2, bool explore,
                                                       std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto perturb = [&](Vector a) {
    if (explore && p.noise > 0.0) {
      for (Eigen::Index i = 0; i < a.size(); ++i) a(i) += p.noise * gauss(rng);
    }
    return p.bounds.clip(a);
  };
  const Vector a1 = perturb(p.bounds.scale(p.actor1.forward(obs1)));
  Vector in2(obs2.size() + a1.size());
  in2 << obs2, a1;
  const Vector a2 = perturb(p.bounds.scale(p.actor2.forward(in2)));
  return {a1, a2};
}

/// One descent step per critic toward r_i + (1 - done) gamma Q_i^targ(s', a1', a2')
/// with a1' = mu_1^targ(o1'), a2' = mu_2^targ(o2', a1'). Returns pre-step losses.
inline CriticLosses maddpg_update_critics(CsMaddpgPair& p, const Batch<ContinuousTransition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  using T = ContinuousTransition;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const nn::Matrix s = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.state; });
  const nn::Matrix a1 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.a1; });
  const nn::Matrix a2 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.a2; });
  const nn::Matrix s2 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.next_state; });
  const nn::Matrix o1n = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.next_obs1; });
  const nn::Matrix o2n = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.next_obs2; });

  const nn::Matrix a1n = p.bounds.scale(p.actor1_target.forward_batch(o1n));
  const nn::Matrix a2n = p.bounds.scale(p.actor2_target.forward_batch(detail::vstack(o2n, a1n)));
  const nn::Matrix x_next = detail::vstack(s2, a1n, a2n);
  const nn::Matrix x = detail::vstack(s, a1, a2);

  CriticLosses losses;
  for (std::size_t k = 0; k < 4; ++k) {
    const nn::Matrix next_value = p.targets[k].forward_batch(x_next);
    const nn::ForwardCache cache = p.critics[k].forward_cached(x);
    const nn::Matrix& out = p.critics[k].output_of(cache);
    nn::Matrix upstream(1, n);
    double loss = 0.0;
    for (Eigen::Index b = 0; b < n; ++b) {
      const T& t = *batch[static_cast<std::size_t>(b)];
      double y = detail::signal(t, k);
      if (!t.done) y += p.gamma * next_value(0, b);
      const double diff = out(0, b) - y;
      loss += diff * diff * inv_n;
      upstream(0, b) = 2.0 * diff * inv_n;
    }
    losses[k] = loss;
    nn::apply_update(p.critics[k], p.critic_opt[k], p.critics[k].backward(cache, upstream), nn::Direction::Descent);
  }
  return losses;
}

struct ActorGradients {
  nn::Gradients leader;
  nn::Gradients follower;
  double leader_objective = 0.0;    // batch mean of Q_1 - lambda_1 (G_1 - d_1)
  double follower_objective = 0.0;  // batch mean of Q_2 - lambda_2 (G_2 - d_2)
};

/// Gradients of the batch-mean Lagrangians with respect to the actor
/// parameters, without stepping. The leader's gradient runs through a1 both
/// directly into the critics and through the follower actor's a1 input; the
/// follower's treats a1 as a constant. A constraint with infinite threshold
/// contributes nothing.
inline ActorGradients maddpg_actor_gradients(const CsMaddpgPair& p, const Batch<ContinuousTransition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  using T = ContinuousTransition;
  const auto n = static_cast<Eigen::Index>(batch.size());
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto sd = static_cast<Eigen::Index>(p.state_size());
  const auto ad = static_cast<Eigen::Index>(p.action_size);
  const auto o2d = static_cast<Eigen::Index>(p.obs2_size());

  const nn::Matrix s = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.state; });
  const nn::Matrix o1 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.obs1; });
  const nn::Matrix o2 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.obs2; });

  const nn::ForwardCache c1 = p.actor1.forward_cached(o1);
  const nn::Matrix a1 = p.bounds.scale(p.actor1.output_of(c1));
  const nn::ForwardCache c2 = p.actor2.forward_cached(detail::vstack(o2, a1));
  const nn::Matrix a2 = p.bounds.scale(p.actor2.output_of(c2));
  const nn::Matrix x = detail::vstack(s, a1, a2);

  // d(batch-sum of Lagrangian_i)/dx and the batch-mean Lagrangian value.
  auto lagrangian = [&](std::size_t q, std::size_t g, double lambda, double d, double& mean) {
    const nn::ForwardCache cq = p.critics[q].forward_cached(x);
    nn::Matrix dx = p.critics[q].backward(cq, nn::Matrix::Ones(1, n)).input;
    mean = p.critics[q].output_of(cq).mean();
    if (std::isfinite(d)) {
      const nn::ForwardCache cg = p.critics[g].forward_cached(x);
      dx += p.critics[g].backward(cg, nn::Matrix::Constant(1, n, -lambda)).input;
      mean -= lambda * (p.critics[g].output_of(cg).mean() - d);
    }
    return dx;
  };

  ActorGradients out;
  const nn::Matrix dx1 = lagrangian(kQ1, kG1, p.lambda1, p.d1, out.leader_objective);
  const nn::Matrix dx2 = lagrangian(kQ2, kG2, p.lambda2, p.d2, out.follower_objective);
  const double half = p.bounds.half();

  // Leader: direct a1 path plus the path through the follower actor.
  const nn::Matrix through_follower =
      p.actor2.backward(c2, half * dx1.middleRows(sd + ad, ad)).input.middleRows(o2d, ad);
  const nn::Matrix da1 = dx1.middleRows(sd, ad) + through_follower;
  out.leader = p.actor1.backward(c1, (half * inv_n) * da1);

  // Follower: a1 held fixed.
  out.follower = p.actor2.backward(c2, (half * inv_n) * dx2.middleRows(sd + ad, ad));
  return out;
}

struct ActorObjectives {
  double leader = 0.0;
  double follower = 0.0;
};

/// One ascent step per actor; both gradients are taken at the pre-step
/// parameters. Returns the batch-mean Lagrangians before the step.
inline ActorObjectives maddpg_update_actors(CsMaddpgPair& p, const Batch<ContinuousTransition>& batch) {
  const ActorGradients g = maddpg_actor_gradients(p, batch);
  nn::apply_update(p.actor1, p.actor1_opt, g.leader, nn::Direction::Ascent);
  nn::apply_update(p.actor2, p.actor2_opt, g.follower, nn::Direction::Ascent);
  return {g.leader_objective, g.follower_objective};
}

/// Projected multiplier step lambda <- max(0, lambda + beta * violation).
inline double lagrange_step(double lambda, double beta, double violation) {
  return std::max(0.0, lambda + beta * violation);
}

/// Moves each multiplier by its batch-mean constraint violation
/// G_i(s, mu(o)) - d_i under the current actors. Infinite thresholds pin the
/// multiplier at 0.
inline std::pair<double, double> update_lagrange(CsMaddpgPair& p, const Batch<ContinuousTransition>& batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  using T = ContinuousTransition;
  const nn::Matrix s = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.state; });
  const nn::Matrix o1 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.obs1; });
  const nn::Matrix o2 = detail::stack_columns(batch, [](const T& t) -> const Vector& { return t.obs2; });
  const nn::Matrix a1 = p.bounds.scale(p.actor1.forward_batch(o1));
  const nn::Matrix a2 = p.bounds.scale(p.actor2.forward_batch(detail::vstack(o2, a1)));
  const nn::Matrix x = detail::vstack(s, a1, a2);

  auto step = [&](double lambda, double beta, double d, std::size_t g) {
    if (!std::isfinite(d)) return 0.0;
    return lagrange_step(lambda, beta, p.critics[g].forward_batch(x).mean() - d);
  };
  p.lambda1 = step(p.lambda1, p.beta1, p.d1, kG1);
  p.lambda2 = step(p.lambda2, p.beta2, p.d2, kG2);
  return {p.lambda1, p.lambda2};
}

inline void maddpg_soft_update(CsMaddpgPair& p) {
  nn::soft_blend_into(p.actor1_target, p.actor1, p.rho);
  nn::soft_blend_into(p.actor2_target, p.actor2, p.rho);
  for (std::size_t k = 0; k < 4; ++k) nn::soft_blend_into(p.targets[k], p.critics[k], p.rho);
}

inline nn::Checkpoint maddpg_checkpoint(const CsMaddpgPair& p) {
  nn::Checkpoint ckpt;
  ckpt.add("actor1", p.actor1);
  ckpt.add("actor2", p.actor2);
  ckpt.add("actor1_target", p.actor1_target);
  ckpt.add("actor2_target", p.actor2_target);
  for (std::size_t k = 0; k < 4; ++k) {
    ckpt.add(kCriticNames[k], p.critics[k]);
    ckpt.add(std::string(kCriticNames[k]) + "_target", p.targets[k]);
  }
  ckpt.state = {{"algorithm", "cs-maddpg"},
                {"action_size", p.action_size},
                {"lambda1", p.lambda1},
                {"lambda2", p.lambda2},
                {"d1", threshold_to_json(p.d1)},
                {"d2", threshold_to_json(p.d2)},
                {"beta1", p.beta1},
                {"beta2", p.beta2},
                {"noise", p.noise},
                {"gamma", p.gamma},
                {"rho", p.rho},
                {"action_low", p.bounds.low},
                {"action_high", p.bounds.high}};
  return ckpt;
}

/// Optimizer moments are not stored; a restored pair restarts them.
inline CsMaddpgPair maddpg_from_checkpoint(const nn::Checkpoint& ckpt, double actor_lr = 1e-4,
                                           double critic_lr = 1e-3) {
  if (ckpt.state.value("algorithm", "") != "cs-maddpg") {
    throw std::invalid_argument("checkpoint is not a cs-maddpg run");
  }
  CsMaddpgPair p;
  const auto& st = ckpt.state;
  p.action_size = st.at("action_size").get<std::size_t>();
  p.actor1 = ckpt.network("actor1");
  p.actor2 = ckpt.network("actor2");
  p.actor1_target = ckpt.network("actor1_target");
  p.actor2_target = ckpt.network("actor2_target");
  for (std::size_t k = 0; k < 4; ++k) {
    p.critics[k] = ckpt.network(kCriticNames[k]);
    p.targets[k] = ckpt.network(std::string(kCriticNames[k]) + "_target");
    p.critic_opt[k] = nn::OptimizerState::adam(critic_lr);
  }
  p.actor1_opt = nn::OptimizerState::adam(actor_lr);
  p.actor2_opt = nn::OptimizerState::adam(actor_lr);
  p.lambda1 = st.at("lambda1").get<double>();
  p.lambda2 = st.at("lambda2").get<double>();
  p.d1 = threshold_from_json(st.at("d1"));
  p.d2 = threshold_from_json(st.at("d2"));
  p.beta1 = st.at("beta1").get<double>();
  p.beta2 = st.at("beta2").get<double>();
  p.noise = st.at("noise").get<double>();
  p.gamma = st.at("gamma").get<double>();
  p.rho = st.at("rho").get<double>();
  p.bounds = {st.at("action_low").get<double>(), st.at("action_high").get<double>()};
  p.validate();
  return p;
}

}  // namespace safemarl::agents
