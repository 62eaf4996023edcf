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

// One-shot constrained leader/follower games over pure strategies.
//
// The leader commits to a row, the follower best-responds with a column
// subject to its own cost threshold, and the leader optimizes over rows whose
// (row, best response) cell satisfies the leader's cost threshold.

#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <istream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <string>

namespace safemarl::matgame {

using Matrix = Eigen::MatrixXd;

inline constexpr double kUnconstrained = std::numeric_limits<double>::infinity();

struct ConstrainedBimatrixGame {
  Matrix q1;  // leader payoff
  Matrix q2;  // follower payoff
  Matrix g1;  // leader cost
  Matrix g2;  // follower cost
  double d1 = kUnconstrained;
  double d2 = kUnconstrained;

  [[nodiscard]] std::size_t leader_actions() const { return static_cast<std::size_t>(q1.rows()); }
  [[nodiscard]] std::size_t follower_actions() const { return static_cast<std::size_t>(q1.cols()); }

  /// Throws std::invalid_argument when shapes disagree, a dimension is zero,
  /// an entry is non-finite, or a threshold is NaN.
  void validate() const {
    if (q1.rows() < 1 || q1.cols() < 1) {
      throw std::invalid_argument("game needs at least one action per player");
    }
    for (const Matrix* m : {&q2, &g1, &g2}) {
      if (m->rows() != q1.rows() || m->cols() != q1.cols()) {
        throw std::invalid_argument("payoff and cost matrices must share dimensions");
      }
    }
    for (const Matrix* m : {&q1, &q2, &g1, &g2}) {
      if (!m->allFinite()) {
        throw std::invalid_argument("game entries must be finite");
      }
    }
    if (std::isnan(d1) || std::isnan(d2)) {
      throw std::invalid_argument("thresholds must not be NaN");
    }
  }

  /// Game with all costs zero and no thresholds.
  static ConstrainedBimatrixGame unconstrained(Matrix leader, Matrix follower) {
    ConstrainedBimatrixGame g;
    g.g1 = Matrix::Zero(leader.rows(), leader.cols());
    g.g2 = Matrix::Zero(leader.rows(), leader.cols());
    g.q1 = std::move(leader);
    g.q2 = std::move(follower);
    return g;
  }
};

struct StackelbergSolution {
  std::size_t leader_action = 0;
  std::size_t follower_action = 0;
  double leader_value = 0.0;
  double follower_value = 0.0;
  bool feasible = false;
};

/// Follower's constrained best response to `leader_action`. Ties go to the
/// lowest index. With no feasible column, returns the column of least cost.
inline std::size_t follower_best_response(const ConstrainedBimatrixGame& game,
                                          std::size_t leader_action) {
  if (leader_action >= game.leader_actions()) {
    throw std::out_of_range("leader action out of range");
  }
  const auto row = static_cast<Eigen::Index>(leader_action);
  std::size_t best = 0;
  bool found = false;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a2 = 0; a2 < game.q2.cols(); ++a2) {
    if (game.g2(row, a2) > game.d2) continue;
    const double v = game.q2(row, a2);
    if (!found || v > best_value) {
      best = static_cast<std::size_t>(a2);
      best_value = v;
      found = true;
    }
  }
  if (found) return best;

  Eigen::Index cheapest = 0;
  game.g2.row(row).minCoeff(&cheapest);
  return static_cast<std::size_t>(cheapest);
}

/// Leader rows are scored at the follower's constrained best response; a row
/// is admissible when that pair meets both thresholds. With no admissible
/// row, returns the row whose reply has least leader cost, flagged infeasible.
inline StackelbergSolution solve_constrained_stackelberg(const ConstrainedBimatrixGame& game) {
  StackelbergSolution best;
  bool found = false;
  double best_value = -std::numeric_limits<double>::infinity();

  std::size_t fallback_leader = 0;
  std::size_t fallback_follower = 0;
  double fallback_cost = std::numeric_limits<double>::infinity();

  for (std::size_t a1 = 0; a1 < game.leader_actions(); ++a1) {
    const std::size_t a2 = follower_best_response(game, a1);
    const auto r = static_cast<Eigen::Index>(a1);
    const auto c = static_cast<Eigen::Index>(a2);
    const double cost = game.g1(r, c);
    // A row counts only when the follower has a feasible reply in it.
    if (cost <= game.d1 && game.g2(r, c) <= game.d2) {
      const double v = game.q1(r, c);
      if (!found || v > best_value) {
        best.leader_action = a1;
        best.follower_action = a2;
        best_value = v;
        found = true;
      }
    } else if (cost < fallback_cost) {
      fallback_cost = cost;
      fallback_leader = a1;
      fallback_follower = a2;
    }
  }

  if (!found) {
    best.leader_action = fallback_leader;
    best.follower_action = fallback_follower;
  }
  const auto r = static_cast<Eigen::Index>(best.leader_action);
  const auto c = static_cast<Eigen::Index>(best.follower_action);
  best.leader_value = game.q1(r, c);
  best.follower_value = game.q2(r, c);
  best.feasible = game.g1(r, c) <= game.d1 && game.g2(r, c) <= game.d2;
  return best;
}

/// Checks the equilibrium conditions literally: the follower cannot improve
/// with a feasible deviation, and no feasible leader row paired with a
/// follower best response pays the leader more. Returns false for pairs that
/// violate a constraint.
inline bool verify_solution(const ConstrainedBimatrixGame& game, const StackelbergSolution& sol) {
  const std::size_t n1 = game.leader_actions();
  const std::size_t n2 = game.follower_actions();
  if (sol.leader_action >= n1 || sol.follower_action >= n2) return false;

  const auto r = static_cast<Eigen::Index>(sol.leader_action);
  const auto c = static_cast<Eigen::Index>(sol.follower_action);
  if (!(game.g1(r, c) <= game.d1 && game.g2(r, c) <= game.d2)) return false;
  if (sol.leader_value != game.q1(r, c) || sol.follower_value != game.q2(r, c)) return false;

  // Follower optimality at the committed row.
  for (std::size_t a2 = 0; a2 < n2; ++a2) {
    const auto j = static_cast<Eigen::Index>(a2);
    if (game.g2(r, j) <= game.d2 && game.q2(r, j) > game.q2(r, c)) return false;
  }

  // Leader optimality: every row with a feasible follower reply is scored at
  // the value the follower would actually give it (its maximal feasible
  // payoff), and the leader cost is checked at that reply.
  for (std::size_t a1 = 0; a1 < n1; ++a1) {
    const auto i = static_cast<Eigen::Index>(a1);
    double reply_value = -std::numeric_limits<double>::infinity();
    bool any = false;
    for (std::size_t a2 = 0; a2 < n2; ++a2) {
      const auto j = static_cast<Eigen::Index>(a2);
      if (game.g2(i, j) <= game.d2) {
        reply_value = any ? std::max(reply_value, game.q2(i, j)) : game.q2(i, j);
        any = true;
      }
    }
    if (!any) continue;
    // Among follower-optimal replies, the first one is the committed one.
    for (std::size_t a2 = 0; a2 < n2; ++a2) {
      const auto j = static_cast<Eigen::Index>(a2);
      if (game.g2(i, j) <= game.d2 && game.q2(i, j) == reply_value) {
        if (game.g1(i, j) <= game.d1 && game.q1(i, j) > game.q1(r, c)) return false;
        break;
      }
    }
  }
  return true;
}

/// Plain leader/follower enumeration ignoring costs and thresholds.
inline StackelbergSolution solve_unconstrained_stackelberg(const Matrix& q1, const Matrix& q2) {
  StackelbergSolution best;
  double best_value = -std::numeric_limits<double>::infinity();
  for (Eigen::Index a1 = 0; a1 < q1.rows(); ++a1) {
    Eigen::Index reply = 0;
    q2.row(a1).maxCoeff(&reply);
    if (a1 == 0 || q1(a1, reply) > best_value) {
      best_value = q1(a1, reply);
      best.leader_action = static_cast<std::size_t>(a1);
      best.follower_action = static_cast<std::size_t>(reply);
    }
  }
  best.leader_value = q1(static_cast<Eigen::Index>(best.leader_action),
                         static_cast<Eigen::Index>(best.follower_action));
  best.follower_value = q2(static_cast<Eigen::Index>(best.leader_action),
                           static_cast<Eigen::Index>(best.follower_action));
  best.feasible = true;
  return best;
}

namespace detail {

inline double parse_threshold(const std::string& token) {
  if (token == "inf" || token == "+inf" || token == "infinity") return kUnconstrained;
  std::size_t used = 0;
  const double v = std::stod(token, &used);
  if (used != token.size()) throw std::invalid_argument("bad threshold: " + token);
  return v;
}

}  // namespace detail

/// Reads the whitespace-separated text form: `n1 n2 d1 d2` followed by q1, q2,
/// g1 and g2 in row-major order. Thresholds accept `inf`.
inline ConstrainedBimatrixGame read_game(std::istream& in) {
  long n1 = 0;
  long n2 = 0;
  std::string d1;
  std::string d2;
  if (!(in >> n1 >> n2 >> d1 >> d2) || n1 < 1 || n2 < 1) {
    throw std::invalid_argument("game header must be `n1 n2 d1 d2` with positive sizes");
  }
  ConstrainedBimatrixGame game;
  game.d1 = detail::parse_threshold(d1);
  game.d2 = detail::parse_threshold(d2);
  for (Matrix* m : {&game.q1, &game.q2, &game.g1, &game.g2}) {
    m->resize(n1, n2);
    for (long i = 0; i < n1; ++i) {
      for (long j = 0; j < n2; ++j) {
        if (!(in >> (*m)(i, j))) throw std::invalid_argument("game file truncated");
      }
    }
  }
  game.validate();
  return game;
}

inline void write_game(std::ostream& out, const ConstrainedBimatrixGame& game) {
  auto threshold = [](double d) { return std::isinf(d) ? std::string("inf") : std::to_string(d); };
  out << game.q1.rows() << ' ' << game.q1.cols() << ' ' << threshold(game.d1) << ' '
      << threshold(game.d2) << '\n';
  out.precision(17);
  for (const Matrix* m : {&game.q1, &game.q2, &game.g1, &game.g2}) {
    for (Eigen::Index i = 0; i < m->rows(); ++i) {
      for (Eigen::Index j = 0; j < m->cols(); ++j) {
        out << (j ? " " : "") << (*m)(i, j);
      }
      out << '\n';
    }
  }
}

}  // namespace safemarl::matgame
