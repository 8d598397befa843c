#pragma once

// Tabular Dec-POMDPs and the payoff-shift matrix game.
//
// Joint actions are flattened with agent 0 least significant:
//   flat = sum_i a_i * n_actions^i
// Every module (files, CSVs, checkpoints) uses this index.

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "s2q/rng.hpp"

namespace s2q::env {

int flat_joint_action(std::span<const int> actions, int n_actions);
std::vector<int> unflatten_joint_action(int flat, int n_agents, int n_actions);
int num_joint_actions(int n_agents, int n_actions);

struct DecPomdpSpec {
  int n_states = 0;
  int n_agents = 0;
  int n_actions = 0;
  double gamma = 0.0;
  int episode_limit = 1;
  std::vector<double> initial_state_dist;
  // [s][flat joint action][s']
  std::vector<std::vector<std::vector<double>>> transition;
  // [s][flat joint action]
  std::vector<std::vector<double>> reward;
  // [s][agent] -> observation vector of fixed length
  std::vector<std::vector<std::vector<double>>> observation;

  int n_joint_actions() const { return num_joint_actions(n_agents, n_actions); }
  int obs_dim() const;
  // Throws LoadError naming the offending field path.
  void validate() const;
};

// Parses and validates the JSON schema documented in the README.
DecPomdpSpec parse_spec(std::string_view json_text, const std::string& origin = "<string>");
DecPomdpSpec load_spec(const std::filesystem::path& path);
std::string spec_to_json(const DecPomdpSpec& spec);

struct Transition {
  int state = 0;
  std::vector<std::vector<double>> observations;  // per agent
  int joint_action = 0;
  double reward = 0.0;
  int next_state = 0;
  std::vector<std::vector<double>> next_observations;
  bool terminal = false;  // episode ended (time limit reached)
};

// One stochastic transition from `state`. Does not know about episode limits;
// Environment::step sets `terminal`.
Transition step(const DecPomdpSpec& spec, int state, std::span<const int> joint_action,
                Rng& rng);

int sample_initial_state(const DecPomdpSpec& spec, Rng& rng);

struct MatrixGameSpec {
  int n_actions = 3;
  std::vector<std::vector<double>> payoff_pre;   // [a0][a1]
  std::vector<std::vector<double>> payoff_post;  // [a0][a1]
  std::int64_t shift_at_step = 0;

  void validate() const;
};

enum class Fig1Preset { kEasy, kHard };

double fig1_off_diagonal(Fig1Preset preset);
// Two agents, actions {A, B, C}. Diagonal (8, 7, 6) before the shift and
// (6, 7, 8) after; every off-diagonal entry equals `off_diagonal`.
MatrixGameSpec matrix_game_fig1(double off_diagonal, std::int64_t shift_at_step = 0);
MatrixGameSpec matrix_game_fig1(Fig1Preset preset = Fig1Preset::kEasy,
                                std::int64_t shift_at_step = 0);

// Single-state, single-step Dec-POMDP with the given payoff. gamma = 0 so that
// one-step bootstrapping is exact. Observation = [1, agent one-hot].
DecPomdpSpec matrix_game_as_spec(const std::vector<std::vector<double>>& payoff);

// Payoff tensor (flattened over joint actions) for any number of agents.
DecPomdpSpec single_state_game(int n_agents, int n_actions, std::span<const double> payoff);

// Uniform episode interface over either a tabular spec or the shifting matrix
// game. Counts environment steps across episodes; a matrix game episode uses
// payoff_post iff its first step index is >= shift_at_step.
class Environment {
 public:
  static Environment from_spec(DecPomdpSpec spec);
  static Environment from_matrix_game(MatrixGameSpec game);

  // Starts an episode and returns the initial state index.
  int reset(Rng& rng);
  Transition step(std::span<const int> joint_action, Rng& rng);

  const DecPomdpSpec& active_spec() const;
  bool is_matrix_game() const { return is_matrix_; }
  bool post_shift() const { return post_shift_; }
  std::int64_t total_steps() const { return total_steps_; }
  std::int64_t shift_at_step() const { return shift_at_step_; }
  int state() const { return state_; }
  int episode_step() const { return t_; }

  int n_agents() const { return pre_.n_agents; }
  int n_actions() const { return pre_.n_actions; }
  int n_states() const { return pre_.n_states; }
  int obs_dim() const { return pre_.obs_dim(); }
  int state_dim() const { return pre_.n_states; }
  // One-hot encoding of the state index.
  std::vector<double> state_features(int s) const;
  const std::vector<double>& observation(int s, int agent) const;

 private:
  DecPomdpSpec pre_;
  DecPomdpSpec post_;
  bool is_matrix_ = false;
  bool post_shift_ = false;
  std::int64_t shift_at_step_ = 0;
  std::int64_t total_steps_ = 0;
  int state_ = 0;
  int t_ = 0;
  bool in_episode_ = false;
};

}  // namespace s2q::env
