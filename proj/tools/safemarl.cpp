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


// safemarl command-line entry point.
//
//   safemarl train  --config FILE [--seed N] [--out DIR]
//   safemarl eval   --ckpt FILE --episodes N [--seed N] [--replay FILE]
//   safemarl plot   METRICS... --out DIR
//   safemarl verify [--trials N] [--seed N] [--gamma G] [--game FILE]
//
// Exit codes: 0 ok, 1 usage, 2 runtime failure, 3 verification failure.

#include "safemarl/harness/plot.hpp"
#include "safemarl/harness/training.hpp"
#include "safemarl/matgame.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

enum Exit : int { kOk = 0, kUsage = 1, kRuntime = 2, kVerifyFailed = 3 };

using namespace safemarl;

int run_train(const std::string& config_path, std::optional<std::uint64_t> seed, std::optional<std::string> out) {
  harness::RunConfig cfg;
  try {
    cfg = harness::load_run_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out) cfg.out_dir = *out;
    cfg.validate();
  } catch (const std::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  }
  const harness::TrainingResult result = harness::run_training(cfg, &std::cerr);
  if (result.verify && !result.verify->all_passed()) return kVerifyFailed;
  if (!cfg.out_dir.empty() && cfg.algorithm != harness::Algorithm::TabularVerify) {
    std::cerr << "wrote " << (std::filesystem::path(cfg.out_dir) / "metrics.csv").string() << " and checkpoint.ckpt\n";
  }
  return kOk;
}

int run_eval(const std::string& ckpt_path, std::size_t episodes, std::uint64_t seed, const std::string& replay_path) {
  if (episodes == 0) {
    std::cerr << "--episodes must be at least 1\n";
    return kUsage;
  }
  const nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_path);
  driving::EpisodeRecorder recorder;
  const harness::MetricsRow row =
      harness::evaluate(ckpt, episodes, seed, replay_path.empty() ? nullptr : &recorder);
  harness::write_metrics_preamble(std::cout);
  harness::write_metrics_row(std::cout, row);
  if (!replay_path.empty()) {
    std::ofstream out(replay_path, std::ios::trunc);
    recorder.write_csv(out);
    if (!out) throw std::runtime_error("cannot write " + replay_path);
  }
  return kOk;
}

int run_plot(const std::vector<std::string>& files, const std::string& out_dir) {
  std::vector<std::filesystem::path> paths(files.begin(), files.end());
  try {
    const harness::PlotOutcome outcome = harness::emit_plots(paths, out_dir);
    for (const auto& w : outcome.warnings) std::cerr << "warning: " << w << "\n";
    for (const auto& p : outcome.written) std::cout << p.string() << "\n";
  } catch (const harness::PlotInputError& e) {
    std::cerr << "plot: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}

int run_verify_game(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    std::cerr << "cannot read " << path << "\n";
    return kUsage;
  }
  const matgame::ConstrainedBimatrixGame game = matgame::read_game(in);
  const matgame::StackelbergSolution sol = matgame::solve_constrained_stackelberg(game);
  const bool ok = !sol.feasible || matgame::verify_solution(game, sol);
  std::cout << "leader " << sol.leader_action << " follower " << sol.follower_action
            << (sol.feasible ? " feasible" : " infeasible") << (ok ? "  verified\n" : "  FAILED verification\n");
  return ok ? kOk : kVerifyFailed;
}

int run_verify(std::size_t trials, std::uint64_t seed, double gamma) {
  if (trials == 0) {
    std::cerr << "--trials must be at least 1\n";
    return kUsage;
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    std::cerr << "--gamma must lie in [0, 1)\n";
    return kUsage;
  }
  harness::VerifyOptions o;
  o.trials = trials;
  o.seed = seed;
  o.gamma = gamma;
  const harness::VerifyReport rep = harness::verify_properties(o);
  harness::print_report(std::cout, rep);
  return rep.all_passed() ? kOk : kVerifyFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Constrained Stackelberg multi-agent RL for autonomous driving"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> train_seed;
  std::optional<std::string> train_out;
  auto* train = app.add_subcommand("train", "Train from a run config");
  train->add_option("--config", config_path, "JSON run config")->required()->check(CLI::ExistingFile);
  train->add_option("--seed", train_seed, "Override the config seed");
  train->add_option("--out", train_out, "Override the output directory");

  std::string ckpt_path;
  std::size_t episodes = 0;
  std::uint64_t eval_seed = 0;
  std::string replay_path;
  auto* eval = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
  eval->add_option("--ckpt", ckpt_path, "Checkpoint file")->required()->check(CLI::ExistingFile);
  eval->add_option("--episodes", episodes, "Evaluation episodes")->required();
  eval->add_option("--seed", eval_seed, "Evaluation seed");
  eval->add_option("--replay", replay_path, "Write per-step trajectories as CSV");

  std::vector<std::string> metrics_files;
  std::string plot_out;
  auto* plot = app.add_subcommand("plot", "Render metrics CSV files as SVG charts");
  plot->add_option("metrics", metrics_files, "Metrics CSV files")->required();
  plot->add_option("--out", plot_out, "Output directory")->required();

  std::size_t trials = 200;
  std::uint64_t verify_seed = 0;
  double gamma = 0.8;
  std::string game_path;
  auto* verify = app.add_subcommand("verify", "Run the tabular property suites");
  verify->add_option("--trials", trials, "Trials per property");
  verify->add_option("--seed", verify_seed, "Generator seed");
  verify->add_option("--gamma", gamma, "Discount of the random games");
  verify->add_option("--game", game_path, "Solve and check a single game file instead")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*train) return run_train(config_path, train_seed, train_out);
    if (*eval) return run_eval(ckpt_path, episodes, eval_seed, replay_path);
    if (*plot) return run_plot(metrics_files, plot_out);
    if (*verify) return game_path.empty() ? run_verify(trials, verify_seed, gamma) : run_verify_game(game_path);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}
