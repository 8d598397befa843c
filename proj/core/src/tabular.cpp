#include "s2q/tabular.hpp"

#include <algorithm>
#include <numeric>

#include "s2q/envs.hpp"
#include "s2q/errors.hpp"

namespace s2q::learn {

TabularLearner::TabularLearner(LearnerConfig cfg, int n_states, int n_agents, int n_actions)
    : cfg_(std::move(cfg)), n_states_(n_states), n_agents_(n_agents), n_actions_(n_actions) {
  cfg_.validate();
  if (cfg_.comm_utilities()) throw ConfigError("tabular: s2q_comm has no tabular form");
  if (n_states <= 0 || n_agents <= 0 || n_actions <= 0) {
    throw ConfigError("tabular: sizes must be positive");
  }
  n_joint_ = env::num_joint_actions(n_agents, n_actions);
  const std::vector<std::vector<double>> zero(static_cast<std::size_t>(n_states),
                                              std::vector<double>(static_cast<std::size_t>(n_joint_), 0.0));
  q_star_table = zero;
  q_star_target = zero;
  sub_tables.assign(static_cast<std::size_t>(cfg_.effective_K() + 1), zero);
  sub_targets = sub_tables;
}

int TabularLearner::greedy_flat(int k, int state) const {
  const auto& row = sub_tables.at(static_cast<std::size_t>(k)).at(static_cast<std::size_t>(state));
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

std::vector<std::vector<int>> TabularLearner::tracked_actions(const StepContext& ctx) {
  std::vector<std::vector<int>> out;
  for (int k = 0; k <= cfg_.effective_K(); ++k) {
    out.push_back(env::unflatten_joint_action(greedy_flat(k, ctx.state), n_agents_, n_actions_));
  }
  return out;
}

double TabularLearner::role(int s, int a, bool use_target) const {
  const auto su = static_cast<std::size_t>(s);
  const auto au = static_cast<std::size_t>(a);
  if (cfg_.uses_critic()) return (use_target ? q_star_target : q_star_table)[su][au];
  return (use_target ? sub_targets : sub_tables)[0][su][au];
}

std::vector<double> TabularLearner::prioritization_values(
    const StepContext& ctx, const std::vector<std::vector<int>>& joints) {
  std::vector<double> v;
  for (const auto& j : joints) v.push_back(role(ctx.state, env::flat_joint_action(j, n_actions_), false));
  return v;
}

double TabularLearner::q_star(const StepContext& ctx, std::span<const int> joint) {
  return role(ctx.state, env::flat_joint_action(joint, n_actions_), false);
}

double TabularLearner::q_sub(int k, const StepContext& ctx, std::span<const int> joint) {
  return sub_tables.at(static_cast<std::size_t>(k))[static_cast<std::size_t>(ctx.state)]
                   [static_cast<std::size_t>(env::flat_joint_action(joint, n_actions_))];
}

void TabularLearner::refresh_targets() {
  q_star_target = q_star_table;
  sub_targets = sub_tables;
}

TrainMetrics TabularLearner::update(std::span<const SampleRef> batch) {
  if (batch.empty()) throw UsageError("TabularLearner::update: empty batch");
  const int K = cfg_.effective_K();
  const bool critic_on = cfg_.uses_critic();
  const double lr = cfg_.tabular_lr;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  TrainMetrics m;
  m.per_k_loss.assign(static_cast<std::size_t>(K + 1), 0.0);
  std::vector<int> tracked(static_cast<std::size_t>(K + 1));

  for (const auto& ref : batch) {
    const auto& ep = *ref.episode;
    const auto t = static_cast<std::size_t>(ref.t);
    const int s = ep.states[t];
    const auto su = static_cast<std::size_t>(s);
    const int a = ep.joint_actions[t];
    const auto au = static_cast<std::size_t>(a);

    double y = ep.rewards[t];
    if (cfg_.gamma != 0.0) {
      const int s1 = ep.states[t + 1];
      y += cfg_.gamma * role(s1, greedy_flat(0, s1), true);
    }
    const double q_targ_a = role(s, a, true);
    for (int k = 0; k <= K; ++k) tracked[static_cast<std::size_t>(k)] = greedy_flat(k, s);
    double max_role = role(s, tracked[0], false);
    for (int ta : tracked) max_role = std::max(max_role, role(s, ta, false));
    const double q_star_a = role(s, a, false);

    if (critic_on) {
      const double d = q_star_table[su][au] - y;
      m.critic_loss += d * d * inv_b;
      q_star_table[su][au] -= lr * d;
    }
    for (int k = 0; k <= K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      double& q = sub_tables[ku][su][au];
      const std::span<const int> prefix(tracked.data(), ku);
      double target = y;
      double w = 1.0;
      switch (cfg_.algorithm) {
        case Algorithm::kQmix:
          break;
        case Algorithm::kWqmix:
          w = wqmix_weight(q, y, cfg_.weighting);
          break;
        case Algorithm::kS2Q:
        case Algorithm::kS2QComm: {
          target = suppressed_target(y, a, prefix, q_targ_a, cfg_.suppression);
          WeightInputs wi;
          wi.k = k;
          wi.q_star_at_a = q_star_a;
          wi.max_tracked_q_star = max_role;
          wi.q_sub_at_a = q;
          wi.comparator = suppression_comparator(y, a, prefix, q_targ_a, cfg_.suppression.alpha);
          w = weight_wk(wi, cfg_.weighting);
          break;
        }
      }
      const double d = q - target;
      m.per_k_loss[ku] += w * d * d * inv_b;
      q -= lr * w * d;
    }
  }
  m.successive_loss = std::accumulate(m.per_k_loss.begin(), m.per_k_loss.end(), 0.0);
  return m;
}

TrainMetrics TabularLearner::train_step(const ReplayBuffer& buffer, Rng& rng) {
  if (buffer.empty()) throw UsageError("train_step: replay buffer is empty");
  const auto batch = expand(buffer.sample(rng));
  auto m = update(batch);
  ++train_steps_;
  if (train_steps_ % cfg_.target_update_interval == 0) refresh_targets();
  m.step = train_steps_;
  return m;
}

}  // namespace s2q::learn
