#include "s2q/valuenets.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "s2q/errors.hpp"

namespace s2q::nets {

namespace {

double sign(double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); }

diff::ApproximatorSpec dense(int in, int hidden, int out) {
  diff::ApproximatorSpec spec;
  spec.activation = diff::Activation::kRelu;
  if (hidden > 0) {
    spec.layer_widths = {in, hidden, out};
  } else {
    spec.layer_widths = {in, out};
  }
  return spec;
}

}  // namespace

std::vector<double> history_window(const HistoryLayout& layout,
                                   const std::vector<std::vector<std::vector<double>>>& obs,
                                   const std::vector<std::vector<int>>& actions,
                                   const std::vector<double>& rewards, int t, int agent) {
  if (t < 0 || static_cast<std::size_t>(t) >= obs.size()) {
    throw UsageError("history_window: time index out of range");
  }
  const auto slot = static_cast<std::size_t>(layout.slot_width());
  std::vector<double> window(static_cast<std::size_t>(layout.width()), 0.0);
  const auto i = static_cast<std::size_t>(agent);
  for (int j = 0; j < layout.window; ++j) {
    const int tj = t - j;
    if (tj < 0) break;
    double* dst = window.data() + static_cast<std::size_t>(j) * slot;
    const auto& o = obs[static_cast<std::size_t>(tj)].at(i);
    if (o.size() != static_cast<std::size_t>(layout.obs_dim)) {
      throw UsageError("history_window: observation length mismatch");
    }
    std::copy(o.begin(), o.end(), dst);
    if (tj >= 1) {
      const int prev = actions[static_cast<std::size_t>(tj - 1)].at(i);
      dst[layout.obs_dim + prev] = 1.0;
      dst[layout.obs_dim + layout.n_actions] = rewards[static_cast<std::size_t>(tj - 1)];
    }
  }
  return window;
}

// ---------------------------------------------------------------------------
// Mixer

void MixerWeights::resize(int n_agents, int embed) {
  const auto E = static_cast<std::size_t>(embed);
  w1.assign(static_cast<std::size_t>(n_agents) * E, 0.0);
  b1.assign(E, 0.0);
  w2.assign(E, 0.0);
  v = 0.0;
}

void MixerWeights::zero() {
  std::fill(w1.begin(), w1.end(), 0.0);
  std::fill(b1.begin(), b1.end(), 0.0);
  std::fill(w2.begin(), w2.end(), 0.0);
  v = 0.0;
}

bool MixerWeights::is_zero() const {
  auto zero = [](const std::vector<double>& x) {
    return std::all_of(x.begin(), x.end(), [](double d) { return d == 0.0; });
  };
  return v == 0.0 && zero(w1) && zero(b1) && zero(w2);
}

Mixer::Mixer(MixerKind kind, int n_agents, int state_dim, int embed, int hyper_hidden)
    : kind_(kind), n_agents_(n_agents), embed_(embed) {
  q_.resize(static_cast<std::size_t>(n_agents));
  if (kind_ == MixerKind::kSum) return;
  if (embed <= 0) throw ConfigError("mixer_embed must be positive");
  hyper_w1_ = diff::Mlp(dense(state_dim, hyper_hidden, n_agents * embed));
  hyper_b1_ = diff::Mlp(dense(state_dim, 0, embed));
  hyper_w2_ = diff::Mlp(dense(state_dim, hyper_hidden, embed));
  hyper_v_ = diff::Mlp(dense(state_dim, hyper_hidden, 1));
  off_w1_ = 0;
  off_b1_ = off_w1_ + hyper_w1_.param_count();
  off_w2_ = off_b1_ + hyper_b1_.param_count();
  off_v_ = off_w2_ + hyper_w2_.param_count();
  param_count_ = off_v_ + hyper_v_.param_count();
  weights_.resize(n_agents, embed);
  grad_w_.resize(n_agents, embed);
}

void Mixer::init(std::span<double> params, Rng& rng) const {
  if (kind_ == MixerKind::kSum) return;
  diff::init_params(hyper_w1_.spec(), params.subspan(off_w1_), rng);
  diff::init_params(hyper_b1_.spec(), params.subspan(off_b1_), rng);
  diff::init_params(hyper_w2_.spec(), params.subspan(off_w2_), rng);
  diff::init_params(hyper_v_.spec(), params.subspan(off_v_), rng);
}

void Mixer::hyper(std::span<const double> params, std::span<const double> state,
                  MixerWeights& out) {
  if (kind_ == MixerKind::kSum) return;
  out.resize(n_agents_, embed_);
  auto w1 = hyper_w1_.forward(params.subspan(off_w1_), state);
  std::copy(w1.begin(), w1.end(), out.w1.begin());
  auto b1 = hyper_b1_.forward(params.subspan(off_b1_), state);
  std::copy(b1.begin(), b1.end(), out.b1.begin());
  auto w2 = hyper_w2_.forward(params.subspan(off_w2_), state);
  std::copy(w2.begin(), w2.end(), out.w2.begin());
  out.v = hyper_v_.forward(params.subspan(off_v_), state)[0];
}

double Mixer::mix_with(const MixerWeights& w, std::span<const double> utilities) const {
  if (utilities.size() != static_cast<std::size_t>(n_agents_)) {
    throw UsageError("Mixer: expected one utility per agent");
  }
  if (kind_ == MixerKind::kSum) {
    double s = 0.0;
    for (double q : utilities) s += q;
    return s;
  }
  const auto E = static_cast<std::size_t>(embed_);
  double out = w.v;
  for (std::size_t e = 0; e < E; ++e) {
    double pre = w.b1[e];
    for (std::size_t i = 0; i < utilities.size(); ++i) pre += utilities[i] * std::abs(w.w1[i * E + e]);
    out += diff::apply_activation(diff::Activation::kElu, pre) * std::abs(w.w2[e]);
  }
  return out;
}

void Mixer::mix_with_backward(const MixerWeights& w, std::span<const double> utilities,
                              double upstream, MixerWeights& grad_w,
                              std::span<double> grad_utilities) const {
  if (grad_utilities.size() != static_cast<std::size_t>(n_agents_)) {
    throw UsageError("Mixer::backward: grad_utilities has wrong length");
  }
  if (kind_ == MixerKind::kSum) {
    std::fill(grad_utilities.begin(), grad_utilities.end(), upstream);
    return;
  }
  const auto E = static_cast<std::size_t>(embed_);
  std::fill(grad_utilities.begin(), grad_utilities.end(), 0.0);
  grad_w.v += upstream;
  for (std::size_t e = 0; e < E; ++e) {
    double pre = w.b1[e];
    for (std::size_t i = 0; i < utilities.size(); ++i) pre += utilities[i] * std::abs(w.w1[i * E + e]);
    const double h = diff::apply_activation(diff::Activation::kElu, pre);
    grad_w.w2[e] += upstream * h * sign(w.w2[e]);
    const double d_pre =
        upstream * std::abs(w.w2[e]) * diff::activation_derivative(diff::Activation::kElu, pre);
    grad_w.b1[e] += d_pre;
    for (std::size_t i = 0; i < utilities.size(); ++i) {
      const double wi = w.w1[i * E + e];
      grad_w.w1[i * E + e] += d_pre * utilities[i] * sign(wi);
      grad_utilities[i] += d_pre * std::abs(wi);
    }
  }
}

void Mixer::hyper_backward(std::span<const double> params, std::span<const double> state,
                           const MixerWeights& grad_w, std::span<double> grad_params) {
  if (kind_ == MixerKind::kSum) return;
  const double g_v[1] = {grad_w.v};
  hyper_v_.forward(params.subspan(off_v_), state);
  hyper_v_.backward(params.subspan(off_v_), g_v, grad_params.subspan(off_v_), {});
  hyper_w2_.forward(params.subspan(off_w2_), state);
  hyper_w2_.backward(params.subspan(off_w2_), grad_w.w2, grad_params.subspan(off_w2_), {});
  hyper_b1_.forward(params.subspan(off_b1_), state);
  hyper_b1_.backward(params.subspan(off_b1_), grad_w.b1, grad_params.subspan(off_b1_), {});
  hyper_w1_.forward(params.subspan(off_w1_), state);
  hyper_w1_.backward(params.subspan(off_w1_), grad_w.w1, grad_params.subspan(off_w1_), {});
}

double Mixer::forward(std::span<const double> params, std::span<const double> utilities,
                      std::span<const double> state) {
  if (utilities.size() != static_cast<std::size_t>(n_agents_)) {
    throw UsageError("Mixer::forward: expected one utility per agent");
  }
  std::copy(utilities.begin(), utilities.end(), q_.begin());
  state_.assign(state.begin(), state.end());
  hyper(params, state, weights_);
  return mix_with(weights_, q_);
}

void Mixer::backward(std::span<const double> params, double upstream,
                     std::span<double> grad_params, std::span<double> grad_utilities) {
  grad_w_.zero();
  mix_with_backward(weights_, q_, upstream, grad_w_, grad_utilities);
  hyper_backward(params, state_, grad_w_, grad_params);
}

// ---------------------------------------------------------------------------
// SubValueNet

SubValueNet::SubValueNet(const NetShape& shape, int k)
    : k_(k), n_agents_(shape.n_agents), n_actions_(shape.n_actions) {
  utility_spec_ = dense(shape.utility_input_width(), shape.net.utility_hidden, shape.n_actions);
  utility_param_count_ = utility_spec_.param_count();
  utility_ws_.assign(static_cast<std::size_t>(shape.n_agents), diff::Mlp(utility_spec_));
  mixer_ = Mixer(shape.net.mixer, shape.n_agents, shape.state_dim, shape.net.mixer_embed,
                 shape.net.hyper_hidden);
  params = diff::ParamStore(param_count());
  target = params;
  grad_utils_.resize(static_cast<std::size_t>(shape.n_agents));
  upstream_.resize(static_cast<std::size_t>(shape.n_actions));
}

void SubValueNet::init(Rng& rng) {
  diff::init_params(utility_spec_, params.values, rng);
  mixer_.init(std::span<double>(params.values).subspan(utility_param_count_), rng);
  params.reset_optimizer();
  target = params;
}

std::span<const double> SubValueNet::utility_values(std::span<const double> input, int agent,
                                                    bool use_target) {
  const auto& p = use_target ? target.values : params.values;
  return utility_ws_.at(static_cast<std::size_t>(agent)).forward(p, input);
}

double SubValueNet::mix(std::span<const double> chosen_utilities, std::span<const double> state,
                        bool use_target) {
  const auto& p = use_target ? target.values : params.values;
  return mixer_.forward(std::span<const double>(p).subspan(utility_param_count_),
                        chosen_utilities, state);
}

void SubValueNet::backward(double upstream, std::span<const int> actions,
                           std::span<double> grad) {
  const std::span<const double> p(params.values);
  mixer_.backward(p.subspan(utility_param_count_), upstream, grad.subspan(utility_param_count_),
                  grad_utils_);
  for (std::size_t i = 0; i < static_cast<std::size_t>(n_agents_); ++i) {
    if (grad_utils_[i] == 0.0) continue;
    std::fill(upstream_.begin(), upstream_.end(), 0.0);
    upstream_[static_cast<std::size_t>(actions[i])] = grad_utils_[i];
    utility_ws_[i].backward(p, upstream_, grad.first(utility_param_count_), {});
  }
}

std::span<const double> SubValueNet::mixer_params(bool use_target) const {
  return std::span<const double>(use_target ? target.values : params.values)
      .subspan(utility_param_count_);
}

void SubValueNet::utility_backward(std::span<const double> input, std::span<const double> upstream,
                                   std::span<double> grad) {
  auto& ws = utility_ws_.front();
  ws.forward(params.values, input);
  ws.backward(params.values, upstream, grad.first(utility_param_count_), {});
}

// ---------------------------------------------------------------------------
// JointCritic

JointCritic::JointCritic(const NetShape& shape)
    : n_agents_(shape.n_agents), n_actions_(shape.n_actions) {
  spec_.activation = diff::Activation::kRelu;
  spec_.layer_widths.push_back(shape.state_dim + shape.n_agents * shape.n_actions);
  for (int h : shape.net.critic_hidden) spec_.layer_widths.push_back(h);
  spec_.layer_widths.push_back(1);
  mlp_ = diff::Mlp(spec_);
  params = diff::ParamStore(mlp_.param_count());
  target = params;
}

void JointCritic::init(Rng& rng) {
  diff::init_params(spec_, params.values, rng);
  params.reset_optimizer();
  target = params;
}

void JointCritic::encode(std::span<const double> state, std::span<const int> actions,
                         std::vector<double>& out) const {
  out.assign(state.begin(), state.end());
  out.resize(state.size() + static_cast<std::size_t>(n_agents_ * n_actions_), 0.0);
  for (std::size_t i = 0; i < actions.size(); ++i) {
    out[state.size() + i * static_cast<std::size_t>(n_actions_) +
        static_cast<std::size_t>(actions[i])] = 1.0;
  }
}

double JointCritic::value(std::span<const double> state, std::span<const int> actions,
                          bool use_target) {
  if (actions.size() != static_cast<std::size_t>(n_agents_)) {
    throw UsageError("JointCritic::value: expected one action per agent");
  }
  encode(state, actions, input_);
  return mlp_.forward(use_target ? target.values : params.values, input_)[0];
}

double JointCritic::value_encoded(std::span<const double> input, bool use_target) {
  return mlp_.forward(use_target ? target.values : params.values, input)[0];
}

void JointCritic::backward_encoded(std::span<const double> input, double upstream,
                                   std::span<double> grad) {
  mlp_.forward(params.values, input);
  backward(upstream, grad);
}

void JointCritic::backward(double upstream, std::span<double> grad) {
  const double up[1] = {upstream};
  mlp_.backward(params.values, up, grad, {});
}

// ---------------------------------------------------------------------------

int argmax(std::span<const double> values) {
  if (values.empty()) throw UsageError("argmax: empty input");
  std::size_t best = 0;
  for (std::size_t a = 1; a < values.size(); ++a) {
    if (values[a] > values[best]) best = a;
  }
  return static_cast<int>(best);
}

std::vector<int> greedy_joint_action(const std::vector<std::vector<double>>& utilities) {
  std::vector<int> joint;
  joint.reserve(utilities.size());
  for (const auto& u : utilities) joint.push_back(argmax(u));
  return joint;
}

ValueEnsemble::ValueEnsemble(const NetShape& shape, int K, Rng& rng) : shape_(shape) {
  if (K < 0) throw ConfigError("K must be >= 0");
  for (int k = 0; k <= K; ++k) {
    subs_.emplace_back(shape, k);
    subs_.back().init(rng);
  }
  critic_ = JointCritic(shape);
  critic_.init(rng);
}

std::vector<std::vector<double>> ValueEnsemble::utilities(
    int k, const std::vector<std::vector<double>>& inputs, bool use_target) {
  if (inputs.size() != static_cast<std::size_t>(shape_.n_agents)) {
    throw UsageError("ValueEnsemble::utilities: expected one window per agent");
  }
  std::vector<std::vector<double>> out;
  out.reserve(inputs.size());
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i].size() != static_cast<std::size_t>(shape_.utility_input_width())) {
      throw UsageError("ValueEnsemble::utilities: window length " +
                       std::to_string(inputs[i].size()) + " != " +
                       std::to_string(shape_.utility_input_width()));
    }
    auto v = sub(k).utility_values(inputs[i], static_cast<int>(i), use_target);
    out.emplace_back(v.begin(), v.end());
  }
  return out;
}

std::vector<int> ValueEnsemble::greedy_joint_action(
    int k, const std::vector<std::vector<double>>& inputs) {
  return nets::greedy_joint_action(utilities(k, inputs));
}

std::vector<std::vector<int>> ValueEnsemble::tracked_actions(
    const std::vector<std::vector<double>>& inputs) {
  std::vector<std::vector<int>> tracked;
  for (int k = 0; k <= K(); ++k) tracked.push_back(greedy_joint_action(k, inputs));
  return tracked;
}

double ValueEnsemble::mix(int k, const std::vector<std::vector<double>>& inputs,
                          std::span<const double> state, std::span<const int> actions,
                          bool use_target) {
  auto u = utilities(k, inputs, use_target);
  std::vector<double> chosen(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) chosen[i] = u[i].at(static_cast<std::size_t>(actions[i]));
  return sub(k).mix(chosen, state, use_target);
}

void ValueEnsemble::refresh_targets() {
  critic_.refresh_target();
  for (auto& s : subs_) s.target = s.params;
}

}  // namespace s2q::nets
