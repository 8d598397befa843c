#pragma once

// Agent utilities Q_k^i, mixers producing Q_k^sub, the unrestricted joint
// critic Q*, and greedy joint-action extraction.
//
// Agents within one sub-value function share a utility network; the agent id
// is part of every observation vector. Recurrence is replaced by a fixed
// window of the last H steps, each step contributing
//   [observation, one-hot previous own action, previous reward].

#include <cstddef>
#include <span>
#include <vector>

#include "s2q/diffcore.hpp"
#include "s2q/rng.hpp"

namespace s2q::nets {

struct HistoryLayout {
  int obs_dim = 0;
  int n_actions = 0;
  int window = 1;

  int slot_width() const { return obs_dim + n_actions + 1; }
  int width() const { return window * slot_width(); }
};

// Builds agent `agent`'s window at time t from per-episode arrays:
// obs[t][agent], actions[t][agent], rewards[t]. Slot j holds time t - j;
// slots before the episode start are zero.
std::vector<double> history_window(const HistoryLayout& layout,
                                   const std::vector<std::vector<std::vector<double>>>& obs,
                                   const std::vector<std::vector<int>>& actions,
                                   const std::vector<double>& rewards, int t, int agent);

enum class MixerKind { kSum, kMonotonic };

struct NetworkConfig {
  int utility_hidden = 32;
  std::vector<int> critic_hidden = {64};
  int mixer_embed = 8;
  int hyper_hidden = 32;
  MixerKind mixer = MixerKind::kMonotonic;
};

struct NetShape {
  int n_agents = 0;
  int n_actions = 0;
  int state_dim = 0;
  HistoryLayout history;
  int latent_dim = 0;  // > 0 when utilities see the communication latent
  NetworkConfig net;

  int utility_input_width() const { return history.width() + latent_dim; }
};

// Hypernetwork outputs for one state, before the absolute-value transform:
// W1 [n_agents * embed] (agent-major), b1 [embed], w2 [embed], V.
struct MixerWeights {
  std::vector<double> w1, b1, w2;
  double v = 0.0;

  void resize(int n_agents, int embed);
  void zero();
  bool is_zero() const;
};

// QMIX-style mixer. For kMonotonic, state-conditioned hypernetworks produce
//   Q = elu(q . |W1(s)| + b1(s)) . |w2(s)| + V(s)
// which is nondecreasing in every utility q_i. kSum returns sum_i q_i and has
// no parameters.
//
// forward()/backward() handle one sample. The split form (hyper, mix_with,
// mix_with_backward, hyper_backward) lets a caller evaluate the
// hypernetworks once per distinct state and accumulate their gradients.
class Mixer {
 public:
  Mixer() = default;
  Mixer(MixerKind kind, int n_agents, int state_dim, int embed, int hyper_hidden);

  MixerKind kind() const { return kind_; }
  int n_agents() const { return n_agents_; }
  int embed() const { return embed_; }
  std::size_t param_count() const { return param_count_; }
  void init(std::span<double> params, Rng& rng) const;

  double forward(std::span<const double> params, std::span<const double> utilities,
                 std::span<const double> state);
  // Reverse pass of the latest forward(); adds into grad_params, overwrites
  // grad_utilities (length n_agents).
  void backward(std::span<const double> params, double upstream, std::span<double> grad_params,
                std::span<double> grad_utilities);

  void hyper(std::span<const double> params, std::span<const double> state, MixerWeights& out);
  double mix_with(const MixerWeights& w, std::span<const double> utilities) const;
  // Adds d(upstream * Q)/d(weights) into grad_w; overwrites grad_utilities.
  void mix_with_backward(const MixerWeights& w, std::span<const double> utilities, double upstream,
                         MixerWeights& grad_w, std::span<double> grad_utilities) const;
  // Backprop of grad_w through the hypernetworks evaluated at `state`.
  void hyper_backward(std::span<const double> params, std::span<const double> state,
                      const MixerWeights& grad_w, std::span<double> grad_params);

 private:
  MixerKind kind_ = MixerKind::kSum;
  int n_agents_ = 0;
  int embed_ = 0;
  std::size_t param_count_ = 0;
  diff::Mlp hyper_w1_, hyper_b1_, hyper_w2_, hyper_v_;
  std::size_t off_w1_ = 0, off_b1_ = 0, off_w2_ = 0, off_v_ = 0;
  // Latest forward() inputs.
  std::vector<double> q_, state_;
  MixerWeights weights_, grad_w_;
};

// One Q_k^sub: a shared agent utility network plus its mixer. Parameters are
// stored as [utility | mixer] in a single ParamStore.
class SubValueNet {
 public:
  SubValueNet() = default;
  SubValueNet(const NetShape& shape, int k);

  int index() const { return k_; }
  const diff::ApproximatorSpec& utility_spec() const { return utility_spec_; }
  std::size_t utility_param_count() const { return utility_param_count_; }
  std::size_t param_count() const { return utility_param_count_ + mixer_.param_count(); }
  void init(Rng& rng);

  diff::ParamStore params;
  diff::ParamStore target;  // snapshot, refreshed by the learner

  // Utility values over actions for one agent. The workspace of `agent` keeps
  // the activations for backward().
  std::span<const double> utility_values(std::span<const double> input, int agent,
                                         bool use_target = false);
  // Mixes the chosen-action utilities (one per agent).
  double mix(std::span<const double> chosen_utilities, std::span<const double> state,
             bool use_target = false);
  // Backprop of upstream * Q_k^sub through the latest mix() and utility_values()
  // calls (online parameters) into grad (length param_count()).
  void backward(double upstream, std::span<const int> actions, std::span<double> grad);

  Mixer& mixer() { return mixer_; }
  std::span<const double> mixer_params(bool use_target = false) const;
  // Re-evaluates the online utility network at `input` and adds the reverse
  // pass of upstream . Q^i(input, .) into grad[0, utility_param_count()).
  void utility_backward(std::span<const double> input, std::span<const double> upstream,
                        std::span<double> grad);

 private:
  int k_ = 0;
  int n_agents_ = 0;
  int n_actions_ = 0;
  diff::ApproximatorSpec utility_spec_;
  std::size_t utility_param_count_ = 0;
  std::vector<diff::Mlp> utility_ws_;  // one per agent
  Mixer mixer_;
  std::vector<double> grad_utils_;
  std::vector<double> upstream_;
};

// Unrestricted Q*(s, a): feedforward over [state features, per-agent one-hot
// actions].
class JointCritic {
 public:
  JointCritic() = default;
  explicit JointCritic(const NetShape& shape);

  const diff::ApproximatorSpec& spec() const { return spec_; }
  std::size_t param_count() const { return mlp_.param_count(); }
  void init(Rng& rng);
  void refresh_target() { target = params; }

  diff::ParamStore params;
  diff::ParamStore target;

  double value(std::span<const double> state, std::span<const int> actions, bool use_target);
  // Backprop of upstream * Q* through the latest value() call made with
  // use_target = false.
  void backward(double upstream, std::span<double> grad);

  // Same on an already encoded input; backward_encoded re-evaluates first.
  double value_encoded(std::span<const double> input, bool use_target);
  void backward_encoded(std::span<const double> input, double upstream, std::span<double> grad);

  // Input encoding; distinct joint actions give distinct inputs.
  void encode(std::span<const double> state, std::span<const int> actions,
              std::vector<double>& out) const;

 private:
  int n_agents_ = 0;
  int n_actions_ = 0;
  diff::ApproximatorSpec spec_;
  diff::Mlp mlp_;
  std::vector<double> input_;
};

// Per-agent argmax with lowest-index tie-break.
int argmax(std::span<const double> values);
std::vector<int> greedy_joint_action(const std::vector<std::vector<double>>& utilities);

// Q_0^sub .. Q_K^sub plus the joint critic.
class ValueEnsemble {
 public:
  ValueEnsemble() = default;
  ValueEnsemble(const NetShape& shape, int K, Rng& rng);

  const NetShape& shape() const { return shape_; }
  int K() const { return static_cast<int>(subs_.size()) - 1; }
  SubValueNet& sub(int k) { return subs_.at(static_cast<std::size_t>(k)); }
  const SubValueNet& sub(int k) const { return subs_.at(static_cast<std::size_t>(k)); }
  JointCritic& critic() { return critic_; }
  const JointCritic& critic() const { return critic_; }

  // Utilities for every agent under Q_k^sub; inputs[i] is agent i's window
  // (already latent-augmented when the shape says so).
  std::vector<std::vector<double>> utilities(int k,
                                             const std::vector<std::vector<double>>& inputs,
                                             bool use_target = false);
  std::vector<int> greedy_joint_action(int k, const std::vector<std::vector<double>>& inputs);
  // a*_{0..K}: the tracked set A_{K,t} for the given histories.
  std::vector<std::vector<int>> tracked_actions(const std::vector<std::vector<double>>& inputs);
  double mix(int k, const std::vector<std::vector<double>>& inputs,
             std::span<const double> state, std::span<const int> actions, bool use_target = false);
  double critic_value(std::span<const double> state, std::span<const int> actions,
                      bool use_target = false) {
    return critic_.value(state, actions, use_target);
  }

  void refresh_targets();

 private:
  NetShape shape_;
  std::vector<SubValueNet> subs_;
  JointCritic critic_;
};

}  // namespace s2q::nets
