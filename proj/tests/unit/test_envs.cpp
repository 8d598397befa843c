#include <string>
#include <vector>

#include "doctest.h"
#include "s2q/envs.hpp"
#include "s2q/errors.hpp"
#include "s2q/oracle.hpp"

using namespace s2q;

namespace {

const std::string kTwoState = R"({
  "n_states": 2, "n_agents": 1, "n_actions": 2, "gamma": 0.5, "episode_limit": 3,
  "initial_state_dist": [1, 0],
  "transition": [[[0.3, 0.7], [0, 1]], [[1, 0], [0.5, 0.5]]],
  "reward": [[0, 1], [2, 3]],
  "observation": [[[1, 0]], [[0, 1]]]
})";

std::string replace(std::string s, const std::string& from, const std::string& to) {
  const auto pos = s.find(from);
  REQUIRE(pos != std::string::npos);
  return s.replace(pos, from.size(), to);
}

}  // namespace

TEST_CASE("flat joint action has agent 0 least significant") {
  const std::vector<int> a{2, 1, 0};
  CHECK(env::flat_joint_action(a, 3) == 2 + 1 * 3);
  CHECK(env::unflatten_joint_action(5, 3, 3) == a);
  for (int f = 0; f < 27; ++f) {
    CHECK(env::flat_joint_action(env::unflatten_joint_action(f, 3, 3), 3) == f);
  }
  const std::vector<int> bad{3, 0};
  CHECK_THROWS_AS(env::flat_joint_action(bad, 3), UsageError);
}

TEST_CASE("fig1 payoffs") {
  const auto g = env::matrix_game_fig1();
  CHECK(g.payoff_pre[0][0] == 8.0);
  CHECK(g.payoff_pre[1][1] == 7.0);
  CHECK(g.payoff_pre[2][2] == 6.0);
  CHECK(g.payoff_post[2][2] == 8.0);
  CHECK(g.payoff_post[1][1] == 7.0);
  CHECK(g.payoff_post[0][0] == 6.0);
  CHECK(g.payoff_pre[0][1] == 0.0);
  const auto hard = env::matrix_game_fig1(env::Fig1Preset::kHard);
  CHECK(hard.payoff_pre[2][0] == -12.0);
  CHECK(hard.payoff_post[0][2] == -12.0);
}

TEST_CASE("matrix game episodes are single payoff draws and the shift happens once") {
  auto env = env::Environment::from_matrix_game(env::matrix_game_fig1(env::Fig1Preset::kEasy, 5));
  Rng rng(1);
  const std::vector<int> aa{0, 0}, cc{2, 2}, ab{0, 1};
  for (int e = 0; e < 10; ++e) {
    env.reset(rng);
    CHECK(env.post_shift() == (e >= 5));
    const auto tr = env.step(e % 2 ? aa : cc, rng);
    CHECK(tr.terminal);
    if (e < 5) CHECK(tr.reward == (e % 2 ? 8.0 : 6.0));
    else CHECK(tr.reward == (e % 2 ? 6.0 : 8.0));
  }
  env.reset(rng);
  CHECK(env.step(ab, rng).reward == 0.0);
  CHECK_THROWS_AS(env.step(ab, rng), UsageError);
}

TEST_CASE("deterministic transitions") {
  auto spec = env::parse_spec(kTwoState);
  Rng rng(2);
  const std::vector<int> a1{1};
  for (int i = 0; i < 100; ++i) CHECK(env::step(spec, 0, a1, rng).next_state == 1);
  const auto tr = env::step(spec, 1, a1, rng);
  CHECK(tr.reward == 3.0);
  CHECK(tr.observations[0] == std::vector<double>{0, 1});
  const std::vector<int> bad{2};
  CHECK_THROWS_AS(env::step(spec, 0, bad, rng), UsageError);
}

TEST_CASE("empirical next-state frequencies match the transition row") {
  auto spec = env::parse_spec(kTwoState);
  Rng rng(3);
  const std::vector<int> a0{0};
  int ones = 0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) ones += env::step(spec, 0, a0, rng).next_state;
  CHECK(std::abs(ones / double(n) - 0.7) < 0.01);
}

TEST_CASE("episode limit sets terminal") {
  auto env = env::Environment::from_spec(env::parse_spec(kTwoState));
  Rng rng(4);
  env.reset(rng);
  const std::vector<int> a{0};
  CHECK_FALSE(env.step(a, rng).terminal);
  CHECK_FALSE(env.step(a, rng).terminal);
  CHECK(env.step(a, rng).terminal);
  CHECK(env.total_steps() == 3);
}

TEST_CASE("load errors name the field") {
  auto expect_error = [](const std::string& text, const std::string& needle) {
    try {
      env::parse_spec(text);
      FAIL("expected LoadError");
    } catch (const LoadError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
    }
  };
  expect_error(replace(kTwoState, "[[0.3, 0.7]", "[[0.3, 0.6]"), "transition[0][0]");
  expect_error(replace(kTwoState, "\"reward\": [[0, 1], [2, 3]]", "\"reward\": [[0, 1], [2]]"), "reward[1]");
  expect_error(replace(kTwoState, "\"gamma\": 0.5,", ""), "gamma");
  expect_error(replace(kTwoState, "[[1, 0]], [[0, 1]]", "[[1, 0]], [[0, 1, 0]]"), "observation[1][0]");
  expect_error("", "invalid JSON");
  CHECK_THROWS_AS(env::load_spec("/nonexistent/spec.json"), LoadError);
}

TEST_CASE("spec json round trip") {
  const auto spec = env::parse_spec(kTwoState);
  const auto again = env::parse_spec(env::spec_to_json(spec));
  CHECK(again.transition == spec.transition);
  CHECK(again.reward == spec.reward);
  CHECK(again.observation == spec.observation);
  CHECK(again.gamma == spec.gamma);
}

TEST_CASE("bundled coord-reach spec") {
  const auto spec = env::load_spec(std::string(S2Q_DATA_DIR) + "/coord_reach.json");
  CHECK(spec.n_states == 4);
  CHECK(spec.n_agents == 2);
  CHECK(spec.n_actions == 3);
  CHECK(spec.obs_dim() == 6);
  // The runner (agent 0) cannot tell the goal apart; the scout can.
  CHECK(spec.observation[0][0] == spec.observation[1][0]);
  CHECK(spec.observation[2][0] == spec.observation[3][0]);
  CHECK(spec.observation[0][1] != spec.observation[1][1]);
  // Value iteration converges on it.
  const auto vi = oracle::value_iteration(spec);
  CHECK(vi.residual <= 1e-10);
}
