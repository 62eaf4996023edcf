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


// Acceptance runner. `acceptance` runs every criterion; `acceptance N` runs
// criterion N only. Prints one PASS/FAIL line per criterion and exits 1 when
// any of them fails.

#include "safemarl/agents/maddpg.hpp"
#include "safemarl/driving/scenario.hpp"
#include "safemarl/harness/config.hpp"
#include "safemarl/harness/training.hpp"
#include "safemarl/harness/verify.hpp"
#include "support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <string>

#ifndef SAFEMARL_CONFIG_DIR
#define SAFEMARL_CONFIG_DIR "configs"
#endif

namespace {

namespace hs = safemarl::harness;
namespace dr = safemarl::driving;
namespace ag = safemarl::agents;
namespace tb = safemarl::tabular;
using safemarl::nn::Mlp;
using safemarl::nn::Vector;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double elapsed(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// 1. Solver against the brute-force oracle.
Outcome solver_oracle() {
  std::mt19937_64 rng(1);
  const auto r = hs::check_solver_oracle(1000, 6, rng);
  return {r.ok(), fmt("%zu/%zu games accepted by the oracle", r.passed, r.trials)};
}

// 2. Contraction inequality on independent table pairs.
Outcome contraction() {
  hs::VerifyOptions o;
  o.trials = 500;
  o.contraction_slack = 1e-9;
  std::mt19937_64 rng(2);
  const auto r = hs::check_contraction(o, rng);
  return {r.ok(), fmt("%zu/%zu pairs within 1e-9, worst excess %.3g", r.passed, r.trials, r.worst)};
}

// 3. One extra backup leaves converged deterministic games in place.
Outcome fixed_point() {
  hs::VerifyOptions o;
  o.trials = 50;
  std::mt19937_64 rng(3);
  const auto r = hs::check_fixed_point(o, rng);
  return {r.ok(), fmt("%zu/%zu games, worst move %.3g (limit %.3g), %zu non-convergent draws skipped", r.passed,
                      r.trials, r.worst, 10 * o.tol, r.rejected)};
}

// 4. Sampled learning approaches the fixed point.
Outcome stochastic_convergence() {
  hs::VerifyOptions o;
  o.trials = 20;
  o.n_states = 4;
  std::mt19937_64 rng(4);
  std::vector<hs::LearningTrial> trials;
  const auto r = hs::check_learning(o, rng, &trials);
  bool strict = trials.size() == o.trials;
  double worst_long = 0.0;
  for (const auto& t : trials) {
    strict = strict && t.long_gap < t.short_gap;
    worst_long = std::max(worst_long, t.long_gap);
  }
  return {r.ok() && strict, fmt("%zu/%zu games, worst gap at 1e5 samples %.4f, gap shrank on %s seed", r.passed,
                                r.trials, worst_long, strict ? "every" : "NOT every")};
}

// 5. Backpropagation against finite differences.
Outcome gradients() {
  std::mt19937_64 rng(5);
  std::uniform_int_distribution<std::size_t> width(1, 8);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_net = 0.0;
  for (int k = 0; k < 100; ++k) {
    std::vector<std::size_t> sizes{width(rng)};
    const std::size_t hidden = depth(rng);
    for (std::size_t l = 0; l <= hidden; ++l) sizes.push_back(width(rng));
    auto net = Mlp::random(sizes, k % 2 ? safemarl::nn::Activation::Tanh : safemarl::nn::Activation::Identity, rng);
    const Vector x = Vector::NullaryExpr(static_cast<Eigen::Index>(sizes.front()), [&] { return u(rng); });
    const Vector w = Vector::NullaryExpr(static_cast<Eigen::Index>(sizes.back()), [&] { return u(rng); });
    const auto g = oracle::check_network(net, x, w);
    worst_net = std::max({worst_net, g.worst_param, g.worst_input});
  }
  double worst_leader = 0.0;
  for (int k = 0; k < 10; ++k) {
    ag::MaddpgConfig cfg;
    cfg.actor_hidden = {6};
    cfg.critic_hidden = {8};
    cfg.d1 = 0.3;
    cfg.d2 = 0.3;
    auto p = ag::CsMaddpgPair::create(5, 4, 4, 2, cfg, rng);
    p.lambda1 = 0.5 + 0.1 * k;
    const auto data = oracle::random_transitions(16, 5, 4, 2, rng);
    worst_leader = std::max(worst_leader, oracle::check_leader_gradient(p, oracle::as_batch(data)));
  }
  return {worst_net < 1e-4 && worst_leader < 1e-3,
          fmt("network rel err %.3g (limit 1e-4), leader two-path rel err %.3g (limit 1e-3)", worst_net, worst_leader)};
}

// 6. Multiplier dynamics under a violation that stops.
Outcome lagrange() {
  std::mt19937_64 rng(6);
  ag::MaddpgConfig cfg;
  cfg.actor_hidden = {6};
  cfg.critic_hidden = {8};
  cfg.d1 = 1.0;
  cfg.d2 = 1.0;
  auto p = ag::CsMaddpgPair::create(4, 3, 3, 1, cfg, rng);
  const auto data = oracle::random_transitions(32, 4, 3, 1, rng);
  const auto batch = oracle::as_batch(data);
  auto cost_level = [&](double g) {
    for (std::size_t k : {ag::kG1, ag::kG2}) {
      Mlp& net = p.critics[k];
      net.weight(net.layers() - 1).setZero();
      net.bias(net.layers() - 1).setConstant(g);
    }
  };
  bool nonnegative = true;
  cost_level(1.5);
  double previous = 0.0;
  bool grew = true;
  for (int k = 0; k < 500; ++k) {
    ag::update_lagrange(p, batch);
    grew = grew && p.lambda1 > previous;
    previous = p.lambda1;
    nonnegative = nonnegative && p.lambda1 >= 0.0 && p.lambda2 >= 0.0;
  }
  const double peak = p.lambda1;
  cost_level(0.5);
  int recovered = -1;
  for (int k = 1; k <= 2000; ++k) {
    ag::update_lagrange(p, batch);
    nonnegative = nonnegative && p.lambda1 >= 0.0 && p.lambda2 >= 0.0;
    if (recovered < 0 && std::max(p.lambda1, p.lambda2) < 0.05) recovered = k;
  }
  return {nonnegative && grew && recovered > 0,
          fmt("peak lambda %.3f after 500 violating steps, below 0.05 after %d safe steps, nonnegative %s", peak,
              recovered, nonnegative ? "yes" : "no")};
}

hs::RunConfig load(const std::string& name, std::uint64_t seed) {
  hs::RunConfig c = hs::load_run_config(std::string(SAFEMARL_CONFIG_DIR) + "/" + name);
  c.seed = seed;
  c.out_dir.clear();
  return c;
}

// 7. CSQ keeps the merge safe.
Outcome csq_merge() {
  double worst = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const auto cfg = load("csq_merge.json", seed);
    const auto t0 = std::chrono::steady_clock::now();
    const auto result = hs::run_training(cfg);
    const double rate = result.rows.back().collision_rate;
    worst = std::max(worst, rate);
    per_seed += fmt(" seed%llu=%.3f(%.0fs)", static_cast<unsigned long long>(seed), rate, elapsed(t0));
  }
  const auto scenario = load("csq_merge.json", 0).scenario;
  const double idle = hs::evaluate_policy(scenario, hs::idle_policy(), 100, hs::evaluation_stream(0), 0.95).collision_rate;
  const double random = hs::evaluate_policy(scenario, hs::random_policy(true, 7), 100, 7, 0.95).collision_rate;
  return {worst <= 0.05 && idle >= 0.5, fmt("CSQ collision%s; no intervention %.3f, random %.3f", per_seed.c_str(), idle,
                                            random)};
}

// 8. Dropping the constraints makes the intersection less safe.
Outcome maddpg_intersection() {
  double constrained = 0.0;
  double unconstrained = 0.0;
  std::string per_seed;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    const double a = hs::run_training(load("maddpg_intersection.json", seed)).rows.back().collision_rate;
    const double b =
        hs::run_training(load("maddpg_intersection_unconstrained.json", seed)).rows.back().collision_rate;
    constrained += a / 3;
    unconstrained += b / 3;
    per_seed += fmt(" seed%llu=%.3f/%.3f", static_cast<unsigned long long>(seed), a, b);
  }
  return {unconstrained > constrained,
          fmt("mean collision finite d %.3f, d=inf %.3f (per seed finite/inf:%s)", constrained, unconstrained,
              per_seed.c_str())};
}

// Independent polygon test: two convex quads intersect when an edge pair
// crosses or a corner of one lies inside the other.
bool quads_meet(const std::array<dr::Vec2, 4>& a, const std::array<dr::Vec2, 4>& b) {
  auto cross = [](dr::Vec2 o, dr::Vec2 p, dr::Vec2 q) { return (p.x - o.x) * (q.y - o.y) - (p.y - o.y) * (q.x - o.x); };
  auto inside = [&](const std::array<dr::Vec2, 4>& poly, dr::Vec2 p) {
    bool pos = false;
    bool neg = false;
    for (int i = 0; i < 4; ++i) {
      const double c = cross(poly[i], poly[(i + 1) % 4], p);
      pos = pos || c > 0;
      neg = neg || c < 0;
    }
    return !(pos && neg);
  };
  auto segments = [&](dr::Vec2 p1, dr::Vec2 p2, dr::Vec2 q1, dr::Vec2 q2) {
    const double d1 = cross(q1, q2, p1), d2 = cross(q1, q2, p2);
    const double d3 = cross(p1, p2, q1), d4 = cross(p1, p2, q2);
    return ((d1 > 0) != (d2 > 0)) && ((d3 > 0) != (d4 > 0));
  };
  for (int i = 0; i < 4; ++i) {
    if (inside(a, b[i]) || inside(b, a[i])) return true;
    for (int j = 0; j < 4; ++j) {
      if (segments(a[i], a[(i + 1) % 4], b[j], b[(j + 1) % 4])) return true;
    }
  }
  return false;
}

// 9. Simulator invariants.
Outcome simulator() {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(-1, 1);
  double worst_disp = 0.0;
  for (int k = 0; k < 10000; ++k) {
    dr::VehicleState v;
    v.x = 100 * u(rng);
    v.y = 100 * u(rng);
    v.heading = std::numbers::pi * u(rng);
    v.speed = 10 + 10 * u(rng);
    const auto n = dr::bicycle_step(v, 0.0, 0.0, 0.1);
    const double ex = v.x + v.speed * 0.1 * std::cos(v.heading);
    const double ey = v.y + v.speed * 0.1 * std::sin(v.heading);
    worst_disp = std::max({worst_disp, std::abs(n.x - ex), std::abs(n.y - ey), std::abs(n.heading - v.heading)});
  }
  std::size_t mismatches = 0;
  std::size_t collisions = 0;
  bool deterministic = true;
  for (dr::ScenarioKind kind : {dr::ScenarioKind::Merge, dr::ScenarioKind::Roundabout, dr::ScenarioKind::Intersection,
                                dr::ScenarioKind::Racetrack}) {
    const bool discrete = dr::is_discrete(kind);
    std::uniform_int_distribution<int> pick(0, static_cast<int>(dr::kMetaActions) - 1);
    std::uint64_t episode = 0;
    dr::ScenarioState a = dr::reset(kind, episode);
    dr::ScenarioState b = dr::reset(kind, episode);
    for (int step = 0; step < 10000; ++step) {
      dr::StepOutcome oa;
      dr::StepOutcome ob;
      if (discrete) {
        const auto m1 = static_cast<dr::MetaAction>(pick(rng));
        const auto m2 = static_cast<dr::MetaAction>(pick(rng));
        oa = dr::step_discrete(a, m1, m2);
        ob = dr::step_discrete(b, m1, m2);
      } else {
        const double u1 = u(rng), u2 = u(rng);
        oa = dr::step_continuous(a, u1, u2);
        ob = dr::step_continuous(b, u1, u2);
      }
      deterministic = deterministic && oa.obs1 == ob.obs1 && oa.obs2 == ob.obs2 && oa.r1 == ob.r1 && oa.r2 == ob.r2 &&
                      oa.c1 == ob.c1 && oa.c2 == ob.c2 && oa.done == ob.done;
      for (std::size_t i = 0; i < 2; ++i) {
        bool hit = quads_meet(a.vehicles[0].footprint().corners(), a.vehicles[1].footprint().corners());
        for (const auto& obstacle : a.layout->obstacles) {
          hit = hit || quads_meet(a.vehicles[i].footprint().corners(), obstacle.corners());
        }
        const double c = i == 0 ? oa.c1 : oa.c2;
        const bool flag = i == 0 ? oa.collision1 : oa.collision2;
        if ((c > 0) != hit || flag != hit) ++mismatches;
        if (hit) ++collisions;
      }
      if (oa.done) {
        ++episode;
        a = dr::reset(kind, episode);
        b = dr::reset(kind, episode);
      }
    }
  }
  return {worst_disp < 1e-12 && mismatches == 0 && deterministic,
          fmt("straight-line error %.3g, cost/collision mismatches %zu over %zu collisions, deterministic %s",
              worst_disp, mismatches, collisions, deterministic ? "yes" : "no")};
}

struct Criterion {
  const char* name;
  double budget_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> criteria = {
      {"solver oracle", 5, solver_oracle},
      {"contraction", 30, contraction},
      {"fixed point", 60, fixed_point},
      {"stochastic convergence", 300, stochastic_convergence},
      {"gradient exactness", 120, gradients},
      {"lagrange multipliers", 10, lagrange},
      {"csq merge safety", 3 * 900, csq_merge},
      {"cs-maddpg constraint effect", 6 * 1200, maddpg_intersection},
      {"simulator checks", 30, simulator},
  };
  std::size_t first = 1;
  std::size_t last = criteria.size();
  if (argc > 1) {
    first = last = std::stoul(argv[1]);
    if (first < 1 || first > criteria.size()) {
      std::cerr << "usage: acceptance [1-" << criteria.size() << "]\n";
      return 2;
    }
  }
  bool all = true;
  for (std::size_t k = first; k <= last; ++k) {
    const auto& c = criteria[k - 1];
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("threw: ") + e.what()};
    }
    const double t = elapsed(t0);
    const bool pass = o.pass && t < c.budget_s;
    all = all && pass;
    std::cout << (pass ? "PASS" : "FAIL") << "  criterion " << k << " (" << c.name << "): " << o.detail
              << fmt("  [%.1fs, budget %.0fs]", t, c.budget_s) << std::endl;
  }
  return all ? 0 : 1;
}
