#pragma once

// Tabular mode: Q* and every Q_k^sub are exact tables over (state, joint
// action), trained with the same targets and weights as the network learner.
// There are no per-agent utilities, so a*_k is the joint argmax of the k-th
// table (lowest flat index on ties). Used to check convergence to the
// value-iteration and suppression fixed points.

#include <vector>

#include "s2q/learner.hpp"

namespace s2q::learn {

class TabularLearner : public LearnerBase {
 public:
  TabularLearner(LearnerConfig cfg, int n_states, int n_agents, int n_actions);

  const LearnerConfig& config() const override { return cfg_; }
  int n_states() const { return n_states_; }
  int n_joint_actions() const { return n_joint_; }

  // [s][flat joint action]
  std::vector<std::vector<double>> q_star_table;
  std::vector<std::vector<double>> q_star_target;
  // [k][s][flat joint action]
  std::vector<std::vector<std::vector<double>>> sub_tables;
  std::vector<std::vector<std::vector<double>>> sub_targets;

  int greedy_flat(int k, int state) const;

  std::vector<std::vector<int>> tracked_actions(const StepContext& ctx) override;
  std::vector<double> prioritization_values(const StepContext& ctx,
                                            const std::vector<std::vector<int>>& joints) override;
  std::optional<behavior::SoftmaxDistribution> estimate_p(const StepContext&) override {
    return std::nullopt;
  }
  double q_star(const StepContext& ctx, std::span<const int> joint) override;
  double q_sub(int k, const StepContext& ctx, std::span<const int> joint) override;

  TrainMetrics train_step(const ReplayBuffer& buffer, Rng& rng) override;
  std::int64_t train_steps() const override { return train_steps_; }

  // One pass of per-sample table updates over `batch`; returns the mean
  // squared TD errors seen before each update.
  TrainMetrics update(std::span<const SampleRef> batch);
  void refresh_targets();

 private:
  double role(int s, int a, bool use_target) const;

  LearnerConfig cfg_;
  int n_states_;
  int n_agents_;
  int n_actions_;
  int n_joint_;
  std::int64_t train_steps_ = 0;
};

}  // namespace s2q::learn
