#pragma once

// Episodes collected with a uniformly random joint policy, in the layout the
// learner replays.

#include <string>
#include <vector>

#include "s2q/envs.hpp"
#include "s2q/learner.hpp"
#include "s2q/rng.hpp"
#include "s2q/runner.hpp"

namespace s2q::testing {

inline learn::EpisodeRecord random_episode(cli::Experiment& exp, Rng& rng) {
  auto& E = exp.env;
  const auto& layout = exp.shape.history;
  const int N = E.n_agents();
  const int A = E.n_actions();
  int s = E.reset(rng);
  std::vector<std::vector<std::vector<double>>> obs(1);
  for (int i = 0; i < N; ++i) obs[0].push_back(E.observation(s, i));
  std::vector<std::vector<int>> acts;
  std::vector<double> rews;
  auto windows = [&](int t) {
    std::vector<std::vector<double>> w;
    for (int i = 0; i < N; ++i) w.push_back(nets::history_window(layout, obs, acts, rews, t, i));
    return w;
  };

  learn::EpisodeRecord rec;
  for (int t = 0;; ++t) {
    std::vector<int> joint(static_cast<std::size_t>(N));
    for (int& a : joint) a = rng.uniform_int(A);
    rec.states.push_back(s);
    rec.state_features.push_back(exp.state_features(s));
    rec.windows.push_back(windows(t));
    const auto tr = E.step(joint, rng);
    rec.actions.push_back(joint);
    rec.joint_actions.push_back(tr.joint_action);
    rec.rewards.push_back(tr.reward);
    rec.terminal.push_back(tr.terminal ? 1 : 0);
    rec.chosen_k.push_back(0);
    acts.push_back(joint);
    rews.push_back(tr.reward);
    obs.push_back(tr.next_observations);
    s = tr.next_state;
    if (tr.terminal) {
      rec.states.push_back(s);
      rec.state_features.push_back(exp.state_features(s));
      rec.windows.push_back(windows(t + 1));
      break;
    }
  }
  return rec;
}

inline std::vector<learn::EpisodeRecord> random_episodes(cli::Experiment& exp, int n, Rng& rng) {
  std::vector<learn::EpisodeRecord> out;
  for (int i = 0; i < n; ++i) out.push_back(random_episode(exp, rng));
  return out;
}

inline std::vector<learn::SampleRef> all_samples(const std::vector<learn::EpisodeRecord>& eps) {
  std::vector<const learn::EpisodeRecord*> ptrs;
  for (const auto& e : eps) ptrs.push_back(&e);
  return learn::expand(ptrs);
}

inline cli::RunConfig coord_config(const std::string& algorithm = "s2q") {
  cli::RunConfig c;
  c.env = std::string(S2Q_DATA_DIR) + "/coord_reach.json";
  c.algorithm = algorithm;
  c.utility_hidden = 8;
  c.critic_hidden = {8};
  c.hyper_hidden = 6;
  c.mixer_embed = 4;
  c.coder_hidden = 6;
  c.latent_dim = 3;
  c.history_window = 2;
  c.seed = 3;
  return c;
}

}  // namespace s2q::testing
