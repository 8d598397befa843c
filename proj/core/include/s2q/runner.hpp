#pragma once

// Seeded training runs and the diagnostics built on a trained learner:
// metrics CSV, summary, checkpoint, joint Q tables and behavior heatmaps.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "s2q/envs.hpp"
#include "s2q/learner.hpp"
#include "s2q/run_config.hpp"

namespace s2q::cli {

inline constexpr const char* kMetricsVersion = "#s2q-metrics/1";

// Environment, network shape and learner built from a config.
struct Experiment {
  RunConfig cfg;
  env::Environment env;
  nets::NetShape shape;
  std::unique_ptr<learn::LearnerBase> learner;

  std::vector<double> state_features(int s) const;
};

Experiment make_experiment(const RunConfig& cfg);

// Inputs the learner sees at the first step of an episode that starts in
// `state` (zero history before the start).
struct Probe {
  int state = 0;
  std::vector<double> features;
  std::vector<std::vector<double>> windows;

  learn::StepContext context() const { return {state, features, &windows}; }
};

Probe make_probe(const Experiment& exp, int state);

struct RunSummary {
  std::vector<int> final_tracked;      // flat a*_k at the probe state, end of run
  std::vector<int> pre_shift_tracked;  // same, when the shift happens (empty if none)
  int final_greedy = -1;
  int pre_shift_optimum = -1;  // matrix game only
  int post_shift_optimum = -1;
  std::optional<std::int64_t> adaptation_step;  // post-shift steps, censored -> empty
  double eval_return = 0.0;
  std::optional<double> holdout_ce_gap;  // mean CE(P, P-hat) - H(P)
  std::optional<double> holdout_agreement;
  std::int64_t env_steps = 0;
  std::int64_t episodes = 0;
  std::int64_t train_steps = 0;
  int incidents = 0;
  double runtime_seconds = 0.0;
};

// Trains according to cfg and writes config.json, metrics.csv, summary.json
// and checkpoint.json into out_dir. Progress and incidents go to `log` if set.
RunSummary run(const RunConfig& cfg, const std::filesystem::path& out_dir,
               std::ostream* log = nullptr);

std::string summary_to_json(const RunConfig& cfg, const RunSummary& s);

void save_checkpoint(const std::filesystem::path& path, const Experiment& exp);
Experiment load_checkpoint(const std::filesystem::path& path);

// One row per (function, state, joint action); functions are q_star and
// q_sub_0..q_sub_K.
std::string qtable_csv(Experiment& exp);

struct Heatmap {
  int state = 0;
  std::vector<std::vector<int>> tracked;
  std::vector<double> p;
  std::vector<double> s2q;       // mixture over tracked actions
  std::vector<double> baseline;  // per-agent epsilon-greedy around a*_0
};

Heatmap behavior_heatmap(Experiment& exp, int state, double temperature, double epsilon,
                         double baseline_epsilon);
std::string heatmap_csv(const Experiment& exp, const std::vector<Heatmap>& maps);

}  // namespace s2q::cli
