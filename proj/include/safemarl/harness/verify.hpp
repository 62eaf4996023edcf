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


// Property suites over random finite games: solver oracle, contraction,
// fixed point and sample-based convergence. Fixed-point and learning trials
// draw games until one satisfies the hypotheses the property relies on; the
// rejected draws are counted in the report.

#pragma once

#include "safemarl/matgame.hpp"
#include "safemarl/tabular.hpp"

#include <algorithm>
#include <cstdint>
#include <iomanip>
#include <limits>
#include <ostream>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace safemarl::harness {

struct VerifyOptions {
  std::size_t trials = 200;
  std::uint64_t seed = 0;
  double gamma = 0.8;
  std::size_t n_states = 4;
  std::size_t n_actions = 2;
  double reward_correlation = 0.8;
  double cost_density = 0.25;
  double threshold_fraction = 0.5;
  double contraction_slack = 1e-9;
  double tol = 1e-10;
  std::size_t max_iter = 5000;
  double margin = 0.1;
  double omega = 0.7;
  std::uint64_t short_samples = 1000;
  std::uint64_t long_samples = 100000;
  double learn_gap = 0.15;
  std::size_t max_draws = 1000;  // per trial, before the trial counts as failed
  std::size_t solver_max_dim = 6;

  [[nodiscard]] tabular::RandomGameSpec game_spec(bool deterministic) const {
    tabular::RandomGameSpec s;
    s.n_states = n_states;
    s.n_actions1 = n_actions;
    s.n_actions2 = n_actions;
    s.gamma = gamma;
    s.deterministic = deterministic;
    s.reward_correlation = reward_correlation;
    s.cost_density = cost_density;
    s.threshold_fraction = threshold_fraction;
    return s;
  }
};

struct PropertyResult {
  std::string name;
  std::size_t trials = 0;
  std::size_t passed = 0;
  std::size_t rejected = 0;  // draws discarded for violating the hypotheses
  double worst = 0.0;        // property-specific worst statistic

  [[nodiscard]] bool ok() const { return trials > 0 && passed == trials; }
};

/// Random games of size up to max_dim x max_dim; every feasible solve must be
/// accepted by verify_solution, and infeasible ones must really have no
/// feasible leader row.
inline PropertyResult check_solver_oracle(std::size_t trials, std::size_t max_dim, std::mt19937_64& rng) {
  PropertyResult r{"solver-oracle", trials};
  std::uniform_int_distribution<std::size_t> dim(1, max_dim);
  std::uniform_real_distribution<double> payoff(-1.0, 1.0);
  std::uniform_real_distribution<double> cost(0.0, 1.0);
  std::uniform_real_distribution<double> threshold(0.0, 1.0);
  std::size_t feasible = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto n1 = static_cast<Eigen::Index>(dim(rng));
    const auto n2 = static_cast<Eigen::Index>(dim(rng));
    matgame::ConstrainedBimatrixGame g;
    auto fill = [&](auto& dist) {
      matgame::Matrix m(n1, n2);
      for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] = dist(rng);
      return m;
    };
    g.q1 = fill(payoff);
    g.q2 = fill(payoff);
    g.g1 = fill(cost);
    g.g2 = fill(cost);
    g.d1 = threshold(rng);
    g.d2 = threshold(rng);
    const auto sol = matgame::solve_constrained_stackelberg(g);
    bool good = false;
    if (sol.feasible) {
      ++feasible;
      good = matgame::verify_solution(g, sol);
    } else {
      good = true;
      for (std::size_t a1 = 0; a1 < g.leader_actions(); ++a1) {
        const std::size_t b = matgame::follower_best_response(g, a1);
        const auto i = static_cast<Eigen::Index>(a1);
        const auto j = static_cast<Eigen::Index>(b);
        if (g.g1(i, j) <= g.d1 && g.g2(i, j) <= g.d2) good = false;
      }
    }
    if (good) ++r.passed;
  }
  r.worst = static_cast<double>(feasible);
  return r;
}

/// ||P A - P B|| on reward tables against gamma ||A - B|| over all tables, on
/// independent random table pairs.
inline PropertyResult check_contraction(const VerifyOptions& o, std::mt19937_64& rng) {
  PropertyResult r{"contraction", o.trials};
  const double scale = 1.0 / (1.0 - std::min(o.gamma, 0.99));
  r.worst = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < o.trials; ++t) {
    const auto game = tabular::random_game(o.game_spec(false), rng);
    const auto a = tabular::random_tables(game, scale, rng);
    const auto b = tabular::random_tables(game, scale, rng);
    const auto gap = tabular::contraction_gap(game, a, b);
    r.worst = std::max(r.worst, gap.backed_up - gap.bound);
    if (gap.backed_up <= gap.bound + o.contraction_slack) ++r.passed;
  }
  return r;
}

/// Deterministic-transition games whose value iteration converges: one extra
/// backup of the converged tables moves them by less than 10 tol.
inline PropertyResult check_fixed_point(const VerifyOptions& o, std::mt19937_64& rng) {
  PropertyResult r{"fixed-point", o.trials};
  for (std::size_t t = 0; t < o.trials; ++t) {
    for (std::size_t draw = 0; draw < o.max_draws; ++draw) {
      const auto game = tabular::random_game(o.game_spec(true), rng);
      try {
        const auto fp = tabular::fixed_point(game, o.tol, o.max_iter);
        const double moved = tabular::sup_distance(tabular::bellman_backup(game, fp.tables), fp.tables);
        r.worst = std::max(r.worst, moved);
        if (moved < 10.0 * o.tol) ++r.passed;
        break;
      } catch (const tabular::NonConvergence&) {
        ++r.rejected;
      }
    }
  }
  return r;
}

struct LearningTrial {
  double short_gap = 0.0;
  double long_gap = 0.0;
};

/// Stochastic games inside the convergence hypotheses: sampled learning gets
/// within learn_gap of the fixed point at long_samples, and closer than at
/// short_samples.
inline PropertyResult check_learning(const VerifyOptions& o, std::mt19937_64& rng,
                                     std::vector<LearningTrial>* detail = nullptr) {
  PropertyResult r{"stochastic-convergence", o.trials};
  const tabular::LearningRate schedule{o.omega};
  for (std::size_t t = 0; t < o.trials; ++t) {
    for (std::size_t draw = 0; draw < o.max_draws; ++draw) {
      const auto game = tabular::random_game(o.game_spec(false), rng);
      tabular::JointQTables star;
      try {
        star = tabular::fixed_point(game, o.tol, o.max_iter).tables;
      } catch (const tabular::NonConvergence&) {
        ++r.rejected;
        continue;
      }
      if (!tabular::convergence_assumptions_hold(game, star, o.margin)) {
        ++r.rejected;
        continue;
      }
      const std::uint64_t learn_seed = rng();
      LearningTrial lt;
      lt.short_gap = tabular::sup_distance(tabular::csq_tabular_learn(game, schedule, o.short_samples, learn_seed), star);
      lt.long_gap = tabular::sup_distance(tabular::csq_tabular_learn(game, schedule, o.long_samples, learn_seed), star);
      r.worst = std::max(r.worst, lt.long_gap);
      // Exact agreement at both budgets (e.g. gamma = 0) also counts as progress.
      const bool improved = lt.long_gap < lt.short_gap || lt.long_gap < 1e-12;
      if (lt.long_gap < o.learn_gap && improved) ++r.passed;
      if (detail != nullptr) detail->push_back(lt);
      break;
    }
  }
  return r;
}

struct VerifyReport {
  std::vector<PropertyResult> properties;

  [[nodiscard]] bool all_passed() const {
    return std::all_of(properties.begin(), properties.end(), [](const PropertyResult& p) { return p.ok(); });
  }
};

/// Runs every suite with one generator seeded from `o.seed`.
inline VerifyReport verify_properties(const VerifyOptions& o) {
  if (o.trials == 0) throw std::invalid_argument("trials must be at least 1");
  std::mt19937_64 rng(o.seed);
  VerifyReport rep;
  rep.properties.push_back(check_solver_oracle(o.trials, o.solver_max_dim, rng));
  rep.properties.push_back(check_contraction(o, rng));
  rep.properties.push_back(check_fixed_point(o, rng));
  rep.properties.push_back(check_learning(o, rng));
  return rep;
}

inline void print_report(std::ostream& out, const VerifyReport& rep) {
  out << std::left << std::setw(24) << "property" << std::setw(10) << "passed" << std::setw(10) << "trials"
      << std::setw(10) << "rejected" << "worst\n";
  for (const auto& p : rep.properties) {
    out << std::setw(24) << p.name << std::setw(10) << p.passed << std::setw(10) << p.trials << std::setw(10)
        << p.rejected << std::setprecision(6) << p.worst << (p.ok() ? "" : "  FAIL") << "\n";
  }
  out << (rep.all_passed() ? "all properties passed" : "some properties FAILED") << "\n";
}

}  // namespace safemarl::harness
