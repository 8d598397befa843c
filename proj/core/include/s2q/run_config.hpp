#pragma once

// Experiment configuration. Parsed from JSON; every field has a default and
// the resolved config (all defaults materialized) is written next to the run
// outputs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "s2q/behavior.hpp"
#include "s2q/learner.hpp"
#include "s2q/valuenets.hpp"

namespace s2q::cli {

inline constexpr const char* kMatrixFig1 = "matrix_fig1";

struct RunConfig {
  // Environment.
  std::string env = kMatrixFig1;  // "matrix_fig1" or a spec file path
  std::string preset = "easy";    // matrix_fig1 only: easy | hard
  std::optional<double> off_diagonal;
  std::int64_t steps_pre_shift = 20000;
  std::int64_t steps_post_shift = 50000;

  // Algorithm.
  std::string algorithm = "s2q";
  std::string variant = "full";
  int K = 2;
  double temperature = 0.1;
  double alpha = 1.0;
  double w_c = 0.9;
  bool use_floor = false;
  double floor_c = 0.1;

  // Behavior.
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_anneal_steps = 10000;
  double fix_prob = 0.5;

  // Learning.
  double learning_rate = 1e-3;
  double grad_clip_norm = 10.0;
  int batch_size = 128;
  int buffer_size = 5000;
  int target_update_interval = 200;
  int train_every = 1;       // episodes between train steps
  int history_window = 0;    // 0: 1 for matrix_fig1, 4 otherwise
  int latent_dim = 8;
  int coder_hidden = 32;
  std::string state_target = "raw";  // raw | centered
  int utility_hidden = 32;
  std::vector<int> critic_hidden = {64};
  int mixer_embed = 8;
  int hyper_hidden = 32;
  std::string mixer = "monotonic";  // monotonic | sum
  bool tabular = false;
  double tabular_lr = 0.1;

  // Bookkeeping.
  std::uint64_t seed = 0;
  int log_interval = 100;
  int adaptation_window = 500;
  int eval_episodes = 20;
  int holdout_episodes = 50;
  std::string out_dir = "runs/default";

  bool is_matrix_game() const { return env == kMatrixFig1; }
  std::int64_t total_steps() const { return steps_pre_shift + steps_post_shift; }
  int resolved_history_window() const;

  // Throws ConfigError with the offending field path.
  void validate() const;

  learn::LearnerConfig learner_config(double gamma) const;
  behavior::BehaviorConfig behavior_config() const;
  nets::NetworkConfig network_config() const;
};

// Unknown keys are rejected. `base_dir` resolves a relative env path that
// does not exist relative to the working directory.
RunConfig parse_run_config(std::string_view json_text, const std::string& origin = "<string>",
                           const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

}  // namespace s2q::cli
