// s2q: training runs, Q-table and heatmap dumps, theorem verification.

#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "s2q/errors.hpp"
#include "s2q/oracle.hpp"
#include "s2q/run_config.hpp"
#include "s2q/runner.hpp"

namespace {

void emit(const std::string& text, const std::string& out_path) {
  if (out_path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(out_path, std::ios::binary);
  if (!out) throw s2q::ConfigError("--out: cannot write " + out_path);
  out << text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"S2Q laboratory: successive sub-value Q-learning on small cooperative games"};
  app.require_subcommand(1);

  auto* run_cmd = app.add_subcommand("run", "Train according to a JSON config");
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir;
  bool quiet = false;
  run_cmd->add_option("--config", config_path, "Run configuration (JSON)")->required();
  run_cmd->add_option("--seed", seed, "Override the config seed");
  run_cmd->add_option("--out", out_dir, "Override the output directory");
  run_cmd->add_flag("--quiet", quiet, "Do not print progress");

  auto* dump_cmd = app.add_subcommand("dump-qtable", "Joint Q tables of a checkpoint as CSV");
  std::string ckpt;
  std::string out_path;
  dump_cmd->add_option("--ckpt", ckpt, "checkpoint.json of a run")->required();
  dump_cmd->add_option("--out", out_path, "Write to file instead of stdout");

  auto* heat_cmd = app.add_subcommand("heatmap", "Exact joint-action distribution of the behavior policy");
  double temperature = 0.1;
  double epsilon = 0.0;
  double baseline_epsilon = 0.05;
  std::optional<int> state;
  heat_cmd->add_option("--ckpt", ckpt, "checkpoint.json of a run")->required();
  heat_cmd->add_option("--temperature", temperature, "Softmax temperature T")->required();
  heat_cmd->add_option("--epsilon", epsilon, "Per-agent exploration inside each sub-policy")->required();
  heat_cmd->add_option("--baseline-epsilon", baseline_epsilon,
                       "Exploration of the epsilon-greedy comparison table")
      ->capture_default_str();
  heat_cmd->add_option("--state", state, "Only this state (default: all)");
  heat_cmd->add_option("--out", out_path, "Write to file instead of stdout");

  auto* thm_cmd = app.add_subcommand("verify-theorem", "Check the successive-argmax fixed point on random payoffs");
  s2q::oracle::TheoremSweepConfig thm;
  std::optional<double> alpha;
  thm_cmd->add_option("--instances", thm.instances, "Number of random payoffs")->capture_default_str();
  thm_cmd->add_option("--agents", thm.agents, "Agents per payoff")->capture_default_str();
  thm_cmd->add_option("--actions", thm.actions, "Actions per agent")->capture_default_str();
  thm_cmd->add_option("--k", thm.K, "Number of suppressed sub-values K")->capture_default_str();
  thm_cmd->add_option("--alpha", alpha, "Fixed alpha (default: per-instance bound + 0.01)");
  thm_cmd->add_option("--c", thm.floor_c, "Floor constant C")->capture_default_str();
  thm_cmd->add_option("--seed", thm.seed, "Base seed")->capture_default_str();
  thm_cmd->add_option("--out", out_path, "Write to file instead of stdout");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*run_cmd) {
      auto cfg = s2q::cli::load_run_config(config_path);
      if (seed) cfg.seed = *seed;
      if (!out_dir.empty()) cfg.out_dir = out_dir;
      const auto sum = s2q::cli::run(cfg, cfg.out_dir, quiet ? nullptr : &std::cerr);
      if (!quiet) std::cout << s2q::cli::summary_to_json(cfg, sum);
      return sum.incidents > 0 ? 2 : 0;
    }
    if (*dump_cmd) {
      auto exp = s2q::cli::load_checkpoint(ckpt);
      emit(s2q::cli::qtable_csv(exp), out_path);
      return 0;
    }
    if (*heat_cmd) {
      auto exp = s2q::cli::load_checkpoint(ckpt);
      std::vector<s2q::cli::Heatmap> maps;
      if (state) {
        if (*state < 0 || *state >= exp.env.n_states()) throw s2q::UsageError("--state: out of range");
        maps.push_back(s2q::cli::behavior_heatmap(exp, *state, temperature, epsilon, baseline_epsilon));
      } else {
        for (int s = 0; s < exp.env.n_states(); ++s) {
          maps.push_back(s2q::cli::behavior_heatmap(exp, s, temperature, epsilon, baseline_epsilon));
        }
      }
      emit(s2q::cli::heatmap_csv(exp, maps), out_path);
      return 0;
    }
    if (*thm_cmd) {
      thm.alpha = alpha;
      const auto sweep = s2q::oracle::verify_theorem_sweep(thm);
      emit(s2q::oracle::theorem_sweep_json(thm, sweep), out_path);
      return 0;
    }
  } catch (const s2q::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
