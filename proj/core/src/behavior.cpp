#include "s2q/behavior.hpp"

#include <algorithm>
#include <cmath>

#include "s2q/envs.hpp"
#include "s2q/errors.hpp"
#include "s2q/valuenets.hpp"

namespace s2q::behavior {

SoftmaxDistribution softmax_p(std::span<const double> q_star_values, double temperature,
                              Source source) {
  if (!(temperature > 0.0)) throw UsageError("softmax_p: temperature must be positive");
  if (q_star_values.empty()) throw UsageError("softmax_p: empty input");
  double max_v = q_star_values[0];
  for (double v : q_star_values) {
    if (!std::isfinite(v)) throw NumericalError("softmax_p: non-finite input");
    max_v = std::max(max_v, v);
  }
  SoftmaxDistribution dist;
  dist.source = source;
  dist.probs.resize(q_star_values.size());
  double total = 0.0;
  for (std::size_t k = 0; k < q_star_values.size(); ++k) {
    dist.probs[k] = std::exp((q_star_values[k] - max_v) / temperature);
    total += dist.probs[k];
  }
  for (double& p : dist.probs) p /= total;
  return dist;
}

double entropy(std::span<const double> probs) {
  double h = 0.0;
  for (double p : probs) {
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Variant parse_variant(const std::string& name) {
  if (name == "full") return Variant::kFull;
  if (name == "oracle") return Variant::kOracle;
  if (name == "independent") return Variant::kIndependent;
  if (name == "no_wTD") return Variant::kNoWtd;
  if (name == "no_soft") return Variant::kNoSoft;
  if (name == "random") return Variant::kRandom;
  throw ConfigError("variant: unknown value '" + name +
                    "' (expected full|oracle|independent|no_wTD|no_soft|random)");
}

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::kFull: return "full";
    case Variant::kOracle: return "oracle";
    case Variant::kIndependent: return "independent";
    case Variant::kNoWtd: return "no_wTD";
    case Variant::kNoSoft: return "no_soft";
    case Variant::kRandom: return "random";
  }
  return "full";
}

void BehaviorConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("temperature: must be positive");
  if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0)) {
    throw ConfigError("epsilon_start: must be in [0, 1]");
  }
  if (!(epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
    throw ConfigError("epsilon_end: must be in [0, 1]");
  }
  if (epsilon_start < epsilon_end) throw ConfigError("epsilon_start: must be >= epsilon_end");
  if (epsilon_anneal_steps <= 0) throw ConfigError("epsilon_anneal_steps: must be positive");
  if (!(fix_prob >= 0.0 && fix_prob <= 1.0)) throw ConfigError("fix_prob: must be in [0, 1]");
}

double epsilon_at(std::int64_t step, const BehaviorConfig& cfg) {
  if (step < 0) throw UsageError("epsilon_at: step must be nonnegative");
  if (step >= cfg.epsilon_anneal_steps) return cfg.epsilon_end;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.epsilon_anneal_steps);
  return cfg.epsilon_start + frac * (cfg.epsilon_end - cfg.epsilon_start);
}

EpisodeSelection begin_episode(Variant variant, const BehaviorConfig& cfg, Rng& rng) {
  EpisodeSelection sel;
  if (variant == Variant::kFull || variant == Variant::kOracle) {
    sel.fixed_to_zero = rng.bernoulli(cfg.fix_prob);
  }
  return sel;
}

std::vector<int> select_k(const SoftmaxDistribution& estimate, const SoftmaxDistribution& exact,
                          Variant variant, const EpisodeSelection& episode, int n_agents,
                          Rng& rng) {
  const auto N = static_cast<std::size_t>(n_agents);
  const int K1 = static_cast<int>(exact.probs.size());
  switch (variant) {
    case Variant::kNoSoft:
      return std::vector<int>(N, 0);
    case Variant::kRandom:
      return std::vector<int>(N, rng.uniform_int(K1));
    case Variant::kIndependent: {
      std::vector<int> ks(N);
      for (auto& k : ks) k = static_cast<int>(rng.categorical(estimate.probs));
      return ks;
    }
    case Variant::kOracle:
      if (episode.fixed_to_zero) return std::vector<int>(N, 0);
      return std::vector<int>(N, static_cast<int>(rng.categorical(exact.probs)));
    case Variant::kFull:
    case Variant::kNoWtd:
      if (episode.fixed_to_zero) return std::vector<int>(N, 0);
      return std::vector<int>(N, static_cast<int>(rng.categorical(estimate.probs)));
  }
  return std::vector<int>(N, 0);
}

int epsilon_greedy(std::span<const double> values, double epsilon, Rng& rng) {
  if (epsilon > 0.0 && rng.uniform() < epsilon) {
    return rng.uniform_int(static_cast<int>(values.size()));
  }
  return nets::argmax(values);
}

std::vector<int> act(const std::vector<std::vector<std::vector<double>>>& per_k_utilities,
                     std::span<const int> ks, double epsilon, Rng& rng) {
  std::vector<int> joint(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const auto& u = per_k_utilities.at(static_cast<std::size_t>(ks[i])).at(i);
    joint[i] = epsilon_greedy(u, epsilon, rng);
  }
  return joint;
}

std::vector<int> act_tracked(const std::vector<std::vector<int>>& tracked, std::span<const int> ks,
                             int n_actions, double epsilon, Rng& rng) {
  std::vector<int> joint(ks.size());
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
      joint[i] = rng.uniform_int(n_actions);
    } else {
      joint[i] = tracked.at(static_cast<std::size_t>(ks[i])).at(i);
    }
  }
  return joint;
}

double epsilon_greedy_joint_prob(std::span<const int> joint, std::span<const int> greedy,
                                 int n_actions, double epsilon) {
  double p = 1.0;
  const double explore = epsilon / static_cast<double>(n_actions);
  for (std::size_t i = 0; i < joint.size(); ++i) {
    p *= explore + (joint[i] == greedy[i] ? 1.0 - epsilon : 0.0);
  }
  return p;
}

std::vector<double> behavior_joint_distribution(std::span<const double> p,
                                                const std::vector<std::vector<int>>& tracked,
                                                int n_actions, double epsilon) {
  if (p.size() != tracked.size()) {
    throw UsageError("behavior_joint_distribution: P and tracked set sizes differ");
  }
  const int n_agents = static_cast<int>(tracked.front().size());
  const int J = env::num_joint_actions(n_agents, n_actions);
  std::vector<double> dist(static_cast<std::size_t>(J), 0.0);
  for (int ja = 0; ja < J; ++ja) {
    const auto joint = env::unflatten_joint_action(ja, n_agents, n_actions);
    double total = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      total += p[k] * epsilon_greedy_joint_prob(joint, tracked[k], n_actions, epsilon);
    }
    dist[static_cast<std::size_t>(ja)] = total;
  }
  return dist;
}

std::vector<double> epsilon_greedy_joint_distribution(std::span<const int> greedy, int n_actions,
                                                      double epsilon) {
  const double one[1] = {1.0};
  return behavior_joint_distribution(one, {std::vector<int>(greedy.begin(), greedy.end())},
                                     n_actions, epsilon);
}

}  // namespace s2q::behavior
