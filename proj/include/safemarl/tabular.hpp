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

// Finite two-player constrained Markov games and the constrained
// leader/follower Bellman operator over joint reward and cost Q-tables.

#pragma once

#include "safemarl/matgame.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace safemarl::tabular {

using Matrix = Eigen::MatrixXd;

/// Per-state matrices are indexed [a1][a2]. `transition[s]` has one row per
/// joint action (row a1 * n_actions2 + a2) and one column per next state.
struct FiniteConstrainedMarkovGame {
  std::size_t n_states = 0;
  std::size_t n_actions1 = 0;
  std::size_t n_actions2 = 0;
  std::vector<Matrix> rewards1;
  std::vector<Matrix> rewards2;
  std::vector<Matrix> costs1;
  std::vector<Matrix> costs2;
  std::vector<Matrix> transition;
  double gamma = 0.9;
  double d1 = matgame::kUnconstrained;
  double d2 = matgame::kUnconstrained;

  [[nodiscard]] std::size_t joint_index(std::size_t a1, std::size_t a2) const {
    return a1 * n_actions2 + a2;
  }

  void validate() const {
    if (n_states == 0 || n_actions1 == 0 || n_actions2 == 0) {
      throw std::invalid_argument("game dimensions must be positive");
    }
    if (!(gamma >= 0.0 && gamma < 1.0)) {
      throw std::invalid_argument("gamma must lie in [0, 1)");
    }
    const auto a1 = static_cast<Eigen::Index>(n_actions1);
    const auto a2 = static_cast<Eigen::Index>(n_actions2);
    for (const auto* tensor : {&rewards1, &rewards2, &costs1, &costs2}) {
      if (tensor->size() != n_states) throw std::invalid_argument("reward/cost tensor state count");
      for (const Matrix& m : *tensor) {
        if (m.rows() != a1 || m.cols() != a2 || !m.allFinite()) {
          throw std::invalid_argument("reward/cost tensor shape or values");
        }
      }
    }
    if (transition.size() != n_states) throw std::invalid_argument("transition state count");
    for (const Matrix& p : transition) {
      if (p.rows() != a1 * a2 || p.cols() != static_cast<Eigen::Index>(n_states)) {
        throw std::invalid_argument("transition shape");
      }
      if ((p.array() < 0.0).any()) throw std::invalid_argument("negative transition probability");
      for (Eigen::Index r = 0; r < p.rows(); ++r) {
        if (std::abs(p.row(r).sum() - 1.0) > 1e-9) {
          throw std::invalid_argument("transition row does not sum to 1");
        }
      }
    }
  }
};

struct JointQTables {
  std::vector<Matrix> q1;
  std::vector<Matrix> q2;
  std::vector<Matrix> g1;
  std::vector<Matrix> g2;

  static JointQTables zeros(const FiniteConstrainedMarkovGame& game) {
    const Matrix z = Matrix::Zero(static_cast<Eigen::Index>(game.n_actions1),
                                  static_cast<Eigen::Index>(game.n_actions2));
    JointQTables t;
    t.q1.assign(game.n_states, z);
    t.q2.assign(game.n_states, z);
    t.g1.assign(game.n_states, z);
    t.g2.assign(game.n_states, z);
    return t;
  }

  [[nodiscard]] std::size_t n_states() const { return q1.size(); }
};

/// max over states and joint actions of |a - b| on the reward tables only.
inline double reward_distance(const JointQTables& a, const JointQTables& b) {
  double d = 0.0;
  for (std::size_t s = 0; s < a.n_states(); ++s) {
    d = std::max(d, (a.q1[s] - b.q1[s]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.q2[s] - b.q2[s]).cwiseAbs().maxCoeff());
  }
  return d;
}

/// max over all four tables, states and joint actions of |a - b|.
inline double sup_distance(const JointQTables& a, const JointQTables& b) {
  double d = reward_distance(a, b);
  for (std::size_t s = 0; s < a.n_states(); ++s) {
    d = std::max(d, (a.g1[s] - b.g1[s]).cwiseAbs().maxCoeff());
    d = std::max(d, (a.g2[s] - b.g2[s]).cwiseAbs().maxCoeff());
  }
  return d;
}

struct EquilibriumValues {
  double q1 = 0.0;
  double q2 = 0.0;
  double g1 = 0.0;
  double g2 = 0.0;
  matgame::StackelbergSolution solution;
};

inline matgame::ConstrainedBimatrixGame stage_game(const JointQTables& tables, std::size_t state,
                                                   double d1, double d2) {
  if (state >= tables.n_states()) throw std::out_of_range("state out of range");
  matgame::ConstrainedBimatrixGame g;
  g.q1 = tables.q1[state];
  g.q2 = tables.q2[state];
  g.g1 = tables.g1[state];
  g.g2 = tables.g2[state];
  g.d1 = d1;
  g.d2 = d2;
  return g;
}

/// Payoffs and costs at the constrained equilibrium of the stage game at
/// `state`. The same joint action indexes all four tables.
inline EquilibriumValues equilibrium_values(const JointQTables& tables, std::size_t state, double d1,
                                            double d2) {
  const auto sol = matgame::solve_constrained_stackelberg(stage_game(tables, state, d1, d2));
  const auto i = static_cast<Eigen::Index>(sol.leader_action);
  const auto j = static_cast<Eigen::Index>(sol.follower_action);
  return {tables.q1[state](i, j), tables.q2[state](i, j), tables.g1[state](i, j),
          tables.g2[state](i, j), sol};
}

/// One application of the constrained Bellman operator with exact next-state
/// expectation.
inline JointQTables bellman_backup(const FiniteConstrainedMarkovGame& game,
                                   const JointQTables& tables) {
  const auto n = static_cast<Eigen::Index>(game.n_states);
  Eigen::VectorXd v1(n), v2(n), w1(n), w2(n);
  for (std::size_t s = 0; s < game.n_states; ++s) {
    const auto eq = equilibrium_values(tables, s, game.d1, game.d2);
    const auto k = static_cast<Eigen::Index>(s);
    v1(k) = eq.q1;
    v2(k) = eq.q2;
    w1(k) = eq.g1;
    w2(k) = eq.g2;
  }

  JointQTables out = JointQTables::zeros(game);
  for (std::size_t s = 0; s < game.n_states; ++s) {
    const Matrix& p = game.transition[s];
    for (std::size_t a1 = 0; a1 < game.n_actions1; ++a1) {
      for (std::size_t a2 = 0; a2 < game.n_actions2; ++a2) {
        const auto row = p.row(static_cast<Eigen::Index>(game.joint_index(a1, a2)));
        const auto i = static_cast<Eigen::Index>(a1);
        const auto j = static_cast<Eigen::Index>(a2);
        out.q1[s](i, j) = game.rewards1[s](i, j) + game.gamma * row.dot(v1);
        out.q2[s](i, j) = game.rewards2[s](i, j) + game.gamma * row.dot(v2);
        out.g1[s](i, j) = game.costs1[s](i, j) + game.gamma * row.dot(w1);
        out.g2[s](i, j) = game.costs2[s](i, j) + game.gamma * row.dot(w2);
      }
    }
  }
  return out;
}

class NonConvergence : public std::runtime_error {
 public:
  explicit NonConvergence(double residual)
      : std::runtime_error("fixed-point iteration did not converge (residual " +
                           std::to_string(residual) + ")"),
        residual_(residual) {}
  [[nodiscard]] double residual() const { return residual_; }

 private:
  double residual_;
};

struct FixedPointResult {
  JointQTables tables;
  std::size_t iterations = 0;
  std::vector<double> residuals;  // sup-norm change after each backup
};

/// Iterates the backup from zero tables until the sup-norm change over all
/// four tables drops below `tol`.
inline FixedPointResult fixed_point(const FiniteConstrainedMarkovGame& game, double tol,
                                    std::size_t max_iter) {
  if (!(tol > 0.0)) throw std::invalid_argument("tol must be positive");
  FixedPointResult result;
  result.tables = JointQTables::zeros(game);
  for (std::size_t it = 1; it <= max_iter; ++it) {
    JointQTables next = bellman_backup(game, result.tables);
    const double residual = sup_distance(next, result.tables);
    result.tables = std::move(next);
    result.iterations = it;
    result.residuals.push_back(residual);
    if (residual < tol) return result;
  }
  throw NonConvergence(result.residuals.empty() ? 0.0 : result.residuals.back());
}

struct ContractionGap {
  double backed_up = 0.0;  // ||P A - P B|| on reward tables
  double bound = 0.0;      // gamma * ||A - B||
};

/// The right-hand side uses the distance over all four tables because the
/// cost tables steer which joint action the operator reads.
inline ContractionGap contraction_gap(const FiniteConstrainedMarkovGame& game,
                                      const JointQTables& a, const JointQTables& b) {
  const JointQTables pa = bellman_backup(game, a);
  const JointQTables pb = bellman_backup(game, b);
  return {reward_distance(pa, pb), game.gamma * sup_distance(a, b)};
}

/// Robbins-Monro step size 1 / (k + 1)^omega, where k counts prior visits of
/// the (state, a1, a2) triple being updated.
struct LearningRate {
  double omega = 0.7;

  void validate() const {
    if (!(omega > 0.5 && omega <= 1.0)) throw std::invalid_argument("omega must lie in (0.5, 1]");
  }
  [[nodiscard]] double operator()(std::uint64_t visits) const {
    return 1.0 / std::pow(static_cast<double>(visits) + 1.0, omega);
  }
};

inline std::size_t sample_next_state(const FiniteConstrainedMarkovGame& game, std::size_t s,
                                     std::size_t a1, std::size_t a2, std::mt19937_64& rng) {
  const auto row = game.transition[s].row(static_cast<Eigen::Index>(game.joint_index(a1, a2)));
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double acc = 0.0;
  for (Eigen::Index k = 0; k < row.size(); ++k) {
    acc += row(k);
    if (u < acc) return static_cast<std::size_t>(k);
  }
  // Rounding can leave u above the accumulated mass; take the last reachable state.
  for (Eigen::Index k = row.size() - 1; k > 0; --k) {
    if (row(k) > 0.0) return static_cast<std::size_t>(k);
  }
  return 0;
}

/// Asynchronous sample-based constrained Q-learning. Each sample draws a
/// uniformly random (state, a1, a2), draws s' from the transition kernel and
/// moves the four visited entries toward r + gamma * (value at the
/// constrained equilibrium of s').
inline JointQTables csq_tabular_learn(const FiniteConstrainedMarkovGame& game,
                                      const LearningRate& schedule, std::uint64_t samples,
                                      std::uint64_t seed) {
  schedule.validate();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick_state(0, game.n_states - 1);
  std::uniform_int_distribution<std::size_t> pick_a1(0, game.n_actions1 - 1);
  std::uniform_int_distribution<std::size_t> pick_a2(0, game.n_actions2 - 1);

  JointQTables t = JointQTables::zeros(game);
  std::vector<std::uint64_t> visits(game.n_states * game.n_actions1 * game.n_actions2, 0);

  for (std::uint64_t k = 0; k < samples; ++k) {
    const std::size_t s = pick_state(rng);
    const std::size_t a1 = pick_a1(rng);
    const std::size_t a2 = pick_a2(rng);
    const std::size_t next = sample_next_state(game, s, a1, a2, rng);
    const auto eq = equilibrium_values(t, next, game.d1, game.d2);

    auto& count = visits[s * game.n_actions1 * game.n_actions2 + game.joint_index(a1, a2)];
    const double alpha = schedule(count);
    ++count;

    const auto i = static_cast<Eigen::Index>(a1);
    const auto j = static_cast<Eigen::Index>(a2);
    auto blend = [&](double& entry, double target) { entry = (1.0 - alpha) * entry + alpha * target; };
    blend(t.q1[s](i, j), game.rewards1[s](i, j) + game.gamma * eq.q1);
    blend(t.q2[s](i, j), game.rewards2[s](i, j) + game.gamma * eq.q2);
    blend(t.g1[s](i, j), game.costs1[s](i, j) + game.gamma * eq.g1);
    blend(t.g2[s](i, j), game.costs2[s](i, j) + game.gamma * eq.g2);
  }
  return t;
}

/// Checks the hypotheses under which sample-based learning is expected to
/// settle on `tables`: at every state the constrained equilibrium is feasible,
/// it is the strict global optimum of the leader over doubly-feasible pairs
/// and of the follower within the committed row, and no cost entry sits
/// within `margin` of its threshold. All strict inequalities use `margin`.
inline bool convergence_assumptions_hold(const FiniteConstrainedMarkovGame& game,
                                         const JointQTables& tables, double margin) {
  for (std::size_t s = 0; s < tables.n_states(); ++s) {
    const auto eq = equilibrium_values(tables, s, game.d1, game.d2);
    if (!eq.solution.feasible) return false;
    const auto li = static_cast<Eigen::Index>(eq.solution.leader_action);
    const auto fj = static_cast<Eigen::Index>(eq.solution.follower_action);
    for (Eigen::Index i = 0; i < tables.q1[s].rows(); ++i) {
      for (Eigen::Index j = 0; j < tables.q1[s].cols(); ++j) {
        const double c1 = tables.g1[s](i, j);
        const double c2 = tables.g2[s](i, j);
        if (std::abs(c1 - game.d1) < margin || std::abs(c2 - game.d2) < margin) return false;
        if (i == li && j == fj) continue;
        const bool safe1 = c1 <= game.d1;
        const bool safe2 = c2 <= game.d2;
        if (safe1 && safe2 && tables.q1[s](i, j) > eq.q1 - margin) return false;
        if (i == li && safe2 && tables.q2[s](i, j) > eq.q2 - margin) return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Random instances for the property suites.

struct RandomGameSpec {
  std::size_t n_states = 4;
  std::size_t n_actions1 = 2;
  std::size_t n_actions2 = 2;
  double gamma = 0.9;
  bool deterministic = false;
  double reward_range = 1.0;  // rewards uniform in [-range, range]
  double cost_range = 1.0;    // nonzero costs uniform in [0, range]
  double cost_density = 1.0;  // probability that a (state, a1, a2) cost is nonzero
  /// Follower reward = c * leader reward + sqrt(1 - c^2) * independent noise.
  double reward_correlation = 0.0;
  /// Thresholds as a fraction of the largest possible discounted cost
  /// cost_range / (1 - gamma); infinity disables the constraint.
  double threshold_fraction = 0.5;
};

inline FiniteConstrainedMarkovGame random_game(const RandomGameSpec& spec, std::mt19937_64& rng) {
  FiniteConstrainedMarkovGame g;
  g.n_states = spec.n_states;
  g.n_actions1 = spec.n_actions1;
  g.n_actions2 = spec.n_actions2;
  g.gamma = spec.gamma;
  const double cap = spec.cost_range / (1.0 - spec.gamma);
  g.d1 = std::isinf(spec.threshold_fraction) ? matgame::kUnconstrained : spec.threshold_fraction * cap;
  g.d2 = g.d1;

  std::uniform_real_distribution<double> reward(-spec.reward_range, spec.reward_range);
  std::uniform_real_distribution<double> cost(0.0, spec.cost_range);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> pick_state(0, spec.n_states - 1);

  const auto a1 = static_cast<Eigen::Index>(spec.n_actions1);
  const auto a2 = static_cast<Eigen::Index>(spec.n_actions2);
  auto fill = [&](auto& dist) {
    Matrix m(a1, a2);
    for (Eigen::Index i = 0; i < a1; ++i)
      for (Eigen::Index j = 0; j < a2; ++j) m(i, j) = dist(rng);
    return m;
  };
  std::bernoulli_distribution has_cost(spec.cost_density);
  auto sparse_cost = [&](std::mt19937_64& r) { return has_cost(r) ? cost(r) : 0.0; };
  const double c = spec.reward_correlation;
  const double residual = std::sqrt(std::max(0.0, 1.0 - c * c));
  for (std::size_t s = 0; s < spec.n_states; ++s) {
    Matrix leader = fill(reward);
    Matrix follower = c * leader + residual * fill(reward);
    g.rewards1.push_back(std::move(leader));
    g.rewards2.push_back(std::move(follower));
    g.costs1.push_back(fill(sparse_cost));
    g.costs2.push_back(fill(sparse_cost));
    Matrix p = Matrix::Zero(a1 * a2, static_cast<Eigen::Index>(spec.n_states));
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      if (spec.deterministic) {
        p(r, static_cast<Eigen::Index>(pick_state(rng))) = 1.0;
      } else {
        for (Eigen::Index c = 0; c < p.cols(); ++c) p(r, c) = unit(rng) + 1e-3;
        p.row(r) /= p.row(r).sum();
      }
    }
    g.transition.push_back(std::move(p));
  }
  return g;
}

/// Tables with entries uniform in [-scale, scale] (rewards) and [0, scale]
/// (costs), shaped for `game`.
inline JointQTables random_tables(const FiniteConstrainedMarkovGame& game, double scale,
                                  std::mt19937_64& rng) {
  std::uniform_real_distribution<double> signed_entry(-scale, scale);
  std::uniform_real_distribution<double> cost_entry(0.0, scale);
  JointQTables t = JointQTables::zeros(game);
  for (std::size_t s = 0; s < game.n_states; ++s) {
    for (auto* m : {&t.q1[s], &t.q2[s]})
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = signed_entry(rng);
    for (auto* m : {&t.g1[s], &t.g2[s]})
      for (Eigen::Index k = 0; k < m->size(); ++k) m->data()[k] = cost_entry(rng);
  }
  return t;
}

}  // namespace safemarl::tabular
