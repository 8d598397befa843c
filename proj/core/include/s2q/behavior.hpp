#pragma once

// Action selection during training: the Softmax distribution over sub-value
// indices, coordinated k-selection with episode-level fixing, per-agent
// epsilon-greedy within the chosen sub-policy, and the ablation modes.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "s2q/rng.hpp"

namespace s2q::behavior {

enum class Source { kExact, kEstimated };

struct SoftmaxDistribution {
  std::vector<double> probs;
  Source source = Source::kExact;
};

// probs[k] proportional to exp(q[k] / T), computed with max subtraction.
// Throws UsageError for T <= 0 and NumericalError for non-finite inputs.
SoftmaxDistribution softmax_p(std::span<const double> q_star_values, double temperature,
                              Source source = Source::kExact);

double entropy(std::span<const double> probs);

enum class Variant { kFull, kOracle, kIndependent, kNoWtd, kNoSoft, kRandom };

Variant parse_variant(const std::string& name);
std::string variant_name(Variant v);

struct BehaviorConfig {
  double temperature = 0.1;
  double epsilon_start = 1.0;
  double epsilon_end = 0.05;
  std::int64_t epsilon_anneal_steps = 10000;
  double fix_prob = 0.5;

  void validate() const;
};

// Linear anneal from epsilon_start to epsilon_end, constant afterwards.
double epsilon_at(std::int64_t step, const BehaviorConfig& cfg);

struct EpisodeSelection {
  bool fixed_to_zero = false;
};

// Draws the per-episode fixing decision. Only kFull and kOracle fix.
EpisodeSelection begin_episode(Variant variant, const BehaviorConfig& cfg, Rng& rng);

// Returns one k per agent. Every variant except kIndependent returns identical
// entries. `estimate` feeds kFull / kIndependent, `exact` feeds kOracle; both
// have K + 1 entries.
std::vector<int> select_k(const SoftmaxDistribution& estimate, const SoftmaxDistribution& exact,
                          Variant variant, const EpisodeSelection& episode, int n_agents,
                          Rng& rng);

// Uniform random action with probability epsilon, else argmax (lowest index).
int epsilon_greedy(std::span<const double> values, double epsilon, Rng& rng);

// per_k_utilities[k][i] = Q_k^i(tau^i, .). Agent i acts epsilon-greedily on
// Q_{ks[i]}^i.
std::vector<int> act(const std::vector<std::vector<std::vector<double>>>& per_k_utilities,
                     std::span<const int> ks, double epsilon, Rng& rng);

// Same draw as act(), expressed through the tracked joint actions: argmax of
// Q_k^i is a*_{k,i}.
std::vector<int> act_tracked(const std::vector<std::vector<int>>& tracked, std::span<const int> ks,
                             int n_actions, double epsilon, Rng& rng);

// Probability that per-agent epsilon-greedy around `greedy` picks `joint`.
double epsilon_greedy_joint_prob(std::span<const int> joint, std::span<const int> greedy,
                                 int n_actions, double epsilon);

// Exact joint-action distribution of the coordinated behavior policy:
//   sum_k P[k] * prod_i epsilon_greedy(a_i | a*_{k,i}).
// Indexed by flat joint action.
std::vector<double> behavior_joint_distribution(std::span<const double> p,
                                                const std::vector<std::vector<int>>& tracked,
                                                int n_actions, double epsilon);

// Per-agent epsilon-greedy around a single greedy joint action.
std::vector<double> epsilon_greedy_joint_distribution(std::span<const int> greedy, int n_actions,
                                                      double epsilon);

}  // namespace s2q::behavior
