#include <algorithm>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "episodes.hpp"
#include "s2q/errors.hpp"
#include "s2q/oracle.hpp"
#include "s2q/tabular.hpp"

using namespace s2q;

namespace {

const char* kTwoStateTwoAgents = R"({
  "n_states": 2, "n_agents": 2, "n_actions": 2, "gamma": 0.5, "episode_limit": 5,
  "initial_state_dist": [0.5, 0.5],
  "transition": [
    [[0.8, 0.2], [0.3, 0.7], [0.5, 0.5], [0.1, 0.9]],
    [[0.6, 0.4], [0.2, 0.8], [0.9, 0.1], [0.4, 0.6]]],
  "reward": [[1.0, 0.0, 0.2, 0.6], [0.0, 0.9, 0.3, 0.5]],
  "observation": [[[1, 0], [1, 0]], [[0, 1], [0, 1]]]
})";

cli::Experiment experiment_for(const env::DecPomdpSpec& spec) {
  cli::Experiment exp;
  exp.env = env::Environment::from_spec(spec);
  exp.shape.n_agents = spec.n_agents;
  exp.shape.n_actions = spec.n_actions;
  exp.shape.state_dim = spec.n_states;
  exp.shape.history = {spec.obs_dim(), spec.n_actions, 1};
  return exp;
}

learn::LearnerConfig tabular_config(double gamma) {
  learn::LearnerConfig cfg;
  cfg.gamma = gamma;
  cfg.K = 2;
  cfg.tabular_lr = 0.02;
  return cfg;
}

// One single-step episode per joint action.
std::vector<learn::EpisodeRecord> every_joint_action(const env::DecPomdpSpec& spec) {
  std::vector<learn::EpisodeRecord> out;
  const int J = env::num_joint_actions(spec.n_agents, spec.n_actions);
  for (int a = 0; a < J; ++a) {
    learn::EpisodeRecord rec;
    rec.states = {0, 0};
    rec.state_features = {{1.0}, {1.0}};
    rec.windows = {{}, {}};
    rec.actions = {env::unflatten_joint_action(a, spec.n_agents, spec.n_actions)};
    rec.joint_actions = {a};
    rec.rewards = {spec.reward[0][static_cast<std::size_t>(a)]};
    rec.terminal = {1};
    out.push_back(std::move(rec));
  }
  return out;
}

}  // namespace

TEST_CASE("tabular Q* converges to value iteration on a stochastic two-state game") {
  const auto spec = env::parse_spec(kTwoStateTwoAgents);
  auto exp = experiment_for(spec);
  learn::TabularLearner L(tabular_config(spec.gamma), spec.n_states, spec.n_agents, spec.n_actions);
  Rng rng(17);
  const auto eps = testing::random_episodes(exp, 4000, rng);
  const auto batch = testing::all_samples(eps);
  for (int sweep = 0; sweep < 150; ++sweep) {
    L.update(batch);
    L.refresh_targets();
  }
  const auto vi = oracle::value_iteration(spec);
  double worst = 0.0;
  for (int s = 0; s < spec.n_states; ++s) {
    for (int a = 0; a < L.n_joint_actions(); ++a) {
      worst = std::max(worst, std::abs(L.q_star_table[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)] -
                                       vi.q[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)]));
    }
  }
  INFO("sup-norm error " << worst);
  CHECK(worst <= 0.05);
}

TEST_CASE("tabular sub-values reach the suppression fixed point") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto payoff = oracle::random_payoff(2, 4, seed);
    const auto spec = env::single_state_game(2, 4, payoff);
    const std::vector<std::vector<double>> q{payoff};
    const double alpha = oracle::alpha_bound(q, 2, 0.1).overall + 0.01;

    auto cfg = tabular_config(0.0);
    cfg.suppression.alpha = alpha;
    cfg.suppression.use_floor = true;
    cfg.tabular_lr = 0.2;
    learn::TabularLearner L(cfg, 1, 2, 4);
    const auto eps = every_joint_action(spec);
    const auto batch = testing::all_samples(eps);
    for (int sweep = 0; sweep < 400; ++sweep) {
      L.update(batch);
      L.refresh_targets();
    }

    // Ranking by a full sort of the payoff.
    std::vector<int> order(payoff.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return payoff[static_cast<std::size_t>(a)] > payoff[static_cast<std::size_t>(b)]; });
    for (int k = 0; k <= 2; ++k) {
      INFO("seed " << seed << " k " << k);
      CHECK(L.greedy_flat(k, 0) == order[static_cast<std::size_t>(k)]);
      for (std::size_t a = 0; a < payoff.size(); ++a) {
        const bool suppressed = std::find(order.begin(), order.begin() + k, static_cast<int>(a)) != order.begin() + k;
        const double want = suppressed ? payoff[a] - alpha * std::max(payoff[a], 0.1) : payoff[a];
        CHECK(L.sub_tables[static_cast<std::size_t>(k)][0][a] == doctest::Approx(want).epsilon(1e-6));
      }
    }
  }
}

TEST_CASE("tabular learner rejects latent utilities and empty input") {
  learn::LearnerConfig cfg;
  cfg.algorithm = learn::Algorithm::kS2QComm;
  CHECK_THROWS_AS(learn::TabularLearner(cfg, 2, 2, 2), ConfigError);
  learn::TabularLearner L(learn::LearnerConfig{}, 1, 2, 2);
  CHECK_THROWS_AS(L.update({}), UsageError);
  Rng rng(1);
  learn::ReplayBuffer empty(2, 2);
  CHECK_THROWS_AS(L.train_step(empty, rng), UsageError);
  CHECK(L.estimate_p(learn::StepContext{}) == std::nullopt);
}
