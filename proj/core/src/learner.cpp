#include "s2q/learner.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "s2q/envs.hpp"
#include "s2q/errors.hpp"

namespace s2q::learn {

void SuppressionConfig::validate() const {
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha: must be >= 0");
  if (!(floor_c > 0.0) || !std::isfinite(floor_c)) throw ConfigError("floor_c: must be > 0");
}

void WeightingConfig::validate() const {
  if (!(w_c > 0.0 && w_c <= 1.0)) throw ConfigError("w_c: must be in (0, 1]");
}

Algorithm parse_algorithm(const std::string& name) {
  if (name == "s2q") return Algorithm::kS2Q;
  if (name == "qmix") return Algorithm::kQmix;
  if (name == "wqmix") return Algorithm::kWqmix;
  if (name == "s2q_comm") return Algorithm::kS2QComm;
  throw ConfigError("algorithm: unknown value '" + name + "' (expected s2q|qmix|wqmix|s2q_comm)");
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kS2Q: return "s2q";
    case Algorithm::kQmix: return "qmix";
    case Algorithm::kWqmix: return "wqmix";
    case Algorithm::kS2QComm: return "s2q_comm";
  }
  return "s2q";
}

bool in_tracked_prefix(int action, std::span<const int> tracked_flat, int k) {
  const auto n = std::min<std::size_t>(static_cast<std::size_t>(std::max(k, 0)), tracked_flat.size());
  return std::find(tracked_flat.begin(), tracked_flat.begin() + static_cast<std::ptrdiff_t>(n),
                   action) != tracked_flat.begin() + static_cast<std::ptrdiff_t>(n);
}

double suppressed_target(double y, int action, std::span<const int> tracked_prefix,
                         double q_targ_at_a, const SuppressionConfig& cfg) {
  if (!in_tracked_prefix(action, tracked_prefix, static_cast<int>(tracked_prefix.size()))) return y;
  const double v = cfg.use_floor ? std::max(q_targ_at_a, cfg.floor_c) : q_targ_at_a;
  return y - cfg.alpha * v;
}

double suppression_comparator(double y, int action, std::span<const int> tracked_prefix,
                              double q_targ_at_a, double alpha) {
  if (!in_tracked_prefix(action, tracked_prefix, static_cast<int>(tracked_prefix.size()))) return y;
  return y - alpha * q_targ_at_a;
}

double weight_wk(const WeightInputs& in, const WeightingConfig& cfg) {
  if (in.k == 0) return in.q_star_at_a >= in.max_tracked_q_star ? 1.0 : cfg.w_c;
  return in.q_sub_at_a < in.comparator ? 1.0 : cfg.w_c;
}

double wqmix_weight(double q_tot, double y, const WeightingConfig& cfg) {
  return q_tot < y ? 1.0 : cfg.w_c;
}

double mean_squared_td(std::span<const double> q, std::span<const double> y) {
  if (q.size() != y.size()) throw UsageError("mean_squared_td: length mismatch");
  if (q.empty()) throw UsageError("mean_squared_td: empty batch");
  double sq = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) sq += (q[i] - y[i]) * (q[i] - y[i]);
  return sq / static_cast<double>(q.size());
}

double EpisodeRecord::episode_return() const {
  return std::accumulate(rewards.begin(), rewards.end(), 0.0);
}

ReplayBuffer::ReplayBuffer(std::size_t capacity, std::size_t batch_size)
    : capacity_(capacity), batch_size_(batch_size) {
  if (capacity == 0) throw ConfigError("buffer_size: must be positive");
  if (batch_size == 0) throw ConfigError("batch_size: must be positive");
  episodes_.reserve(std::min<std::size_t>(capacity, 1024));
}

void ReplayBuffer::push(EpisodeRecord episode) {
  if (episode.length() <= 0) throw UsageError("ReplayBuffer::push: empty episode");
  if (episodes_.size() < capacity_) {
    episodes_.push_back(std::move(episode));
  } else {
    episodes_[next_] = std::move(episode);
  }
  next_ = (next_ + 1) % capacity_;
}

std::vector<const EpisodeRecord*> ReplayBuffer::sample(Rng& rng) const {
  if (episodes_.empty()) throw UsageError("ReplayBuffer::sample: buffer is empty");
  const std::size_t n = episodes_.size();
  const std::size_t m = std::min(batch_size_, n);
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<const EpisodeRecord*> out;
  out.reserve(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto j = i + static_cast<std::size_t>(rng.uniform_int(static_cast<int>(n - i)));
    std::swap(idx[i], idx[j]);
    out.push_back(&episodes_[idx[i]]);
  }
  return out;
}

std::vector<SampleRef> expand(const std::vector<const EpisodeRecord*>& episodes) {
  std::vector<SampleRef> out;
  for (const auto* ep : episodes) {
    for (int t = 0; t < ep->length(); ++t) out.push_back({ep, t});
  }
  return out;
}

int LearnerConfig::effective_K() const {
  return (algorithm == Algorithm::kQmix || algorithm == Algorithm::kWqmix) ? 0 : K;
}

bool LearnerConfig::uses_critic() const {
  if (algorithm == Algorithm::kQmix) return false;
  if (algorithm == Algorithm::kWqmix) return true;
  return variant != behavior::Variant::kNoWtd;
}

bool LearnerConfig::uses_coder() const {
  if (algorithm == Algorithm::kS2QComm) return true;
  if (algorithm != Algorithm::kS2Q) return false;
  return variant == behavior::Variant::kFull || variant == behavior::Variant::kIndependent ||
         variant == behavior::Variant::kNoWtd;
}

void LearnerConfig::validate() const {
  if (K < 0) throw ConfigError("K: must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ConfigError("gamma: must be in [0, 1)");
  if (!(temperature > 0.0)) throw ConfigError("temperature: must be positive");
  suppression.validate();
  weighting.validate();
  adam.validate();
  if (target_update_interval <= 0) throw ConfigError("target_update_interval: must be positive");
  if (coder_hidden <= 0) throw ConfigError("coder_hidden: must be positive");
  if (latent_dim <= 0) throw ConfigError("latent_dim: must be positive");
  if (!(tabular_lr > 0.0 && tabular_lr <= 1.0)) throw ConfigError("tabular_lr: must be in (0, 1]");
}

behavior::SoftmaxDistribution LearnerBase::exact_p(const StepContext& ctx,
                                                   const std::vector<std::vector<int>>& tracked) {
  const auto v = prioritization_values(ctx, tracked);
  return behavior::softmax_p(v, config().temperature, behavior::Source::kExact);
}

namespace {

nets::NetShape with_latent(nets::NetShape shape, const LearnerConfig& cfg) {
  shape.latent_dim = cfg.comm_utilities() ? cfg.latent_dim : 0;
  return shape;
}

std::vector<double> chosen(const std::vector<std::vector<double>>& util, std::span<const int> a) {
  std::vector<double> c(util.size());
  for (std::size_t i = 0; i < util.size(); ++i) c[i] = util[i][static_cast<std::size_t>(a[i])];
  return c;
}

bool all_finite(const LossReport& r) {
  if (!std::isfinite(r.critic_loss) || !std::isfinite(r.latent.ce) || !std::isfinite(r.latent.mse)) {
    return false;
  }
  return std::all_of(r.per_k_loss.begin(), r.per_k_loss.end(),
                     [](double v) { return std::isfinite(v); });
}

}  // namespace

Learner::Learner(LearnerConfig cfg, nets::NetShape shape, Rng& init_rng)
    : cfg_(std::move(cfg)) {
  cfg_.validate();
  ensemble_ = nets::ValueEnsemble(with_latent(shape, cfg_), cfg_.effective_K(), init_rng);
  if (cfg_.uses_coder()) {
    coder_.emplace(shape.n_agents * shape.history.width(), cfg_.latent_dim, shape.state_dim,
                   cfg_.effective_K() + 1, cfg_.coder_hidden, init_rng);
  }
  critic_grad_.assign(ensemble_.critic().param_count(), 0.0);
  sub_grad_.clear();
  for (int k = 0; k <= cfg_.effective_K(); ++k) {
    sub_grad_.emplace_back(ensemble_.sub(k).param_count(), 0.0);
  }
  if (coder_) coder_grad_.assign(coder_->params.size(), 0.0);
}

void Learner::enable_comm_utilities(Rng& init_rng) {
  if (train_steps_ > 0) {
    throw ConfigError("algorithm: communication-augmented utilities cannot be enabled mid-run");
  }
  if (cfg_.comm_utilities()) return;
  auto cfg = cfg_;
  cfg.algorithm = Algorithm::kS2QComm;
  auto shape = ensemble_.shape();
  shape.latent_dim = 0;
  *this = Learner(cfg, shape, init_rng);
}

std::vector<std::vector<double>> Learner::utility_inputs(
    const std::vector<std::vector<double>>& windows) {
  if (!cfg_.comm_utilities()) return windows;
  const auto z = coder_->encode(windows);
  std::vector<std::vector<double>> out;
  out.reserve(windows.size());
  for (const auto& w : windows) out.push_back(comm::comm_augment(w, z));
  return out;
}

std::vector<std::vector<int>> Learner::tracked_actions(const StepContext& ctx) {
  return ensemble_.tracked_actions(utility_inputs(*ctx.windows));
}

std::vector<double> Learner::prioritization_values(const StepContext& ctx,
                                                   const std::vector<std::vector<int>>& joints) {
  std::vector<double> v;
  v.reserve(joints.size());
  if (cfg_.uses_critic()) {
    for (const auto& j : joints) v.push_back(ensemble_.critic_value(ctx.state_features, j));
    return v;
  }
  const auto inputs = utility_inputs(*ctx.windows);
  const auto util = ensemble_.utilities(0, inputs);
  for (const auto& j : joints) v.push_back(ensemble_.sub(0).mix(chosen(util, j), ctx.state_features));
  return v;
}

std::optional<behavior::SoftmaxDistribution> Learner::estimate_p(const StepContext& ctx) {
  if (!coder_) return std::nullopt;
  const auto z = coder_->encode(*ctx.windows);
  return coder_->decode(z).p_hat;
}

double Learner::q_star(const StepContext& ctx, std::span<const int> joint) {
  if (cfg_.uses_critic()) return ensemble_.critic_value(ctx.state_features, joint);
  return q_sub(0, ctx, joint);
}

double Learner::q_sub(int k, const StepContext& ctx, std::span<const int> joint) {
  return ensemble_.mix(k, utility_inputs(*ctx.windows), ctx.state_features, joint);
}

namespace {

// Per-batch memo of network evaluations. Samples drawn from a small game
// repeat the same inputs many times; each distinct input is evaluated once
// and its upstream gradient is summed before a single reverse pass.
template <typename Entry>
class Memo {
 public:
  // Index of `key`, calling make(entry) the first time it is seen.
  template <typename Make>
  std::size_t find(const std::vector<double>& key, Make&& make) {
    auto [it, fresh] = index_.try_emplace(key, entries_.size());
    if (fresh) {
      keys_.push_back(&it->first);
      entries_.emplace_back();
      make(entries_.back());
    }
    return it->second;
  }
  Entry& operator[](std::size_t i) { return entries_[i]; }
  const std::vector<double>& key(std::size_t i) const { return *keys_[i]; }
  std::size_t size() const { return entries_.size(); }

 private:
  std::map<std::vector<double>, std::size_t> index_;
  std::vector<const std::vector<double>*> keys_;
  std::vector<Entry> entries_;
};

struct UtilEntry {
  std::vector<double> q;
  std::vector<double> upstream;
};

struct HyperEntry {
  nets::MixerWeights w;
  nets::MixerWeights grad;
};

struct ValueEntry {
  double v = 0.0;
  double upstream = 0.0;
};

struct CoderEntry {
  std::vector<double> joint;
  std::vector<double> state;
  std::vector<double> p;
  int count = 0;
};

// Networks of one sub-value (online or target) behind memos.
struct SubMemo {
  nets::SubValueNet* net = nullptr;
  bool target = false;
  Memo<UtilEntry> util;
  Memo<HyperEntry> hyper;

  std::vector<std::size_t> utilities(const std::vector<std::vector<double>>& inputs) {
    std::vector<std::size_t> idx(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
      idx[i] = util.find(inputs[i], [&](UtilEntry& e) {
        const auto q = net->utility_values(inputs[i], 0, target);
        e.q.assign(q.begin(), q.end());
        e.upstream.assign(q.size(), 0.0);
      });
    }
    return idx;
  }

  std::vector<int> greedy(const std::vector<std::size_t>& u) {
    std::vector<int> a(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) a[i] = nets::argmax(util[u[i]].q);
    return a;
  }

  std::size_t weights(const std::vector<double>& state) {
    return hyper.find(state, [&](HyperEntry& e) {
      net->mixer().hyper(net->mixer_params(target), state, e.w);
      e.grad = e.w;
      e.grad.zero();
    });
  }

  double mix(const std::vector<std::size_t>& u, std::size_t h, std::span<const int> a,
             std::vector<double>& chosen) {
    chosen.resize(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) chosen[i] = util[u[i]].q[static_cast<std::size_t>(a[i])];
    return net->mixer().mix_with(hyper[h].w, chosen);
  }

  void backward(const std::vector<std::size_t>& u, std::size_t h, std::span<const int> a,
                const std::vector<double>& chosen, double upstream, std::vector<double>& g) {
    g.resize(u.size());
    net->mixer().mix_with_backward(hyper[h].w, chosen, upstream, hyper[h].grad, g);
    for (std::size_t i = 0; i < u.size(); ++i) util[u[i]].upstream[static_cast<std::size_t>(a[i])] += g[i];
  }

  void flush(std::span<double> grad) {
    const auto mixer_grad = grad.subspan(net->utility_param_count());
    for (std::size_t h = 0; h < hyper.size(); ++h) {
      if (hyper[h].grad.is_zero()) continue;
      net->mixer().hyper_backward(net->mixer_params(false), hyper.key(h), hyper[h].grad, mixer_grad);
    }
    for (std::size_t i = 0; i < util.size(); ++i) {
      const auto& up = util[i].upstream;
      if (std::all_of(up.begin(), up.end(), [](double d) { return d == 0.0; })) continue;
      net->utility_backward(util.key(i), up, grad);
    }
  }
};

struct CriticMemo {
  nets::JointCritic* net = nullptr;
  bool target = false;
  Memo<ValueEntry> values;
  std::vector<double> scratch;

  std::size_t find(std::span<const double> state, std::span<const int> a) {
    net->encode(state, a, scratch);
    return values.find(scratch, [&](ValueEntry& e) { e.v = net->value_encoded(scratch, target); });
  }
  double value(std::span<const double> state, std::span<const int> a) {
    return values[find(state, a)].v;
  }

  void flush(std::span<double> grad) {
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (values[i].upstream == 0.0) continue;
      net->backward_encoded(values.key(i), values[i].upstream, grad);
    }
  }
};

std::vector<double> concat(const std::vector<std::vector<double>>& parts) {
  std::vector<double> out;
  for (const auto& p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

}  // namespace

LossReport Learner::compute_losses(std::span<const SampleRef> batch, bool accumulate) {
  if (batch.empty()) throw UsageError("compute_losses: empty batch");
  const int K = cfg_.effective_K();
  const auto n_sub = static_cast<std::size_t>(K + 1);
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const bool critic_on = cfg_.uses_critic();
  const bool s2q = cfg_.algorithm == Algorithm::kS2Q || cfg_.algorithm == Algorithm::kS2QComm;
  const int n_actions = shape().n_actions;

  if (accumulate) {
    std::fill(critic_grad_.begin(), critic_grad_.end(), 0.0);
    for (auto& g : sub_grad_) std::fill(g.begin(), g.end(), 0.0);
    std::fill(coder_grad_.begin(), coder_grad_.end(), 0.0);
  }

  std::vector<SubMemo> online(n_sub);
  for (std::size_t k = 0; k < n_sub; ++k) online[k].net = &ensemble_.sub(static_cast<int>(k));
  SubMemo target0;
  target0.net = &ensemble_.sub(0);
  target0.target = true;
  CriticMemo critic{&ensemble_.critic(), false, {}, {}};
  CriticMemo critic_targ{&ensemble_.critic(), true, {}, {}};

  // z is a detached input of the utilities: one encoding per joint history.
  std::map<std::vector<double>, std::vector<std::vector<double>>> inputs_memo;
  auto inputs_of = [&](const std::vector<std::vector<double>>& windows)
      -> const std::vector<std::vector<double>>& {
    if (!cfg_.comm_utilities()) return windows;
    auto [it, fresh] = inputs_memo.try_emplace(concat(windows));
    if (fresh) it->second = utility_inputs(windows);
    return it->second;
  };
  Memo<CoderEntry> coder_memo;

  LossReport rep;
  rep.per_k_loss.assign(n_sub, 0.0);
  std::vector<std::vector<std::size_t>> util(n_sub);
  std::vector<std::size_t> hyper(n_sub);
  std::vector<std::vector<int>> tracked(n_sub);
  std::vector<int> tracked_flat(n_sub);
  std::vector<double> role_tracked(n_sub);
  std::vector<double> chosen_q;
  std::vector<double> grad_q;

  for (const auto& s : batch) {
    const auto& ep = *s.episode;
    const auto t = static_cast<std::size_t>(s.t);
    const auto& in_t = inputs_of(ep.windows[t]);
    const auto& st = ep.state_features[t];
    const auto& a = ep.actions[t];
    const int a_flat = ep.joint_actions[t];

    double y = ep.rewards[t];
    if (cfg_.gamma != 0.0) {
      const auto& in_t1 = inputs_of(ep.windows[t + 1]);
      const auto& st1 = ep.state_features[t + 1];
      const auto a1 = online[0].greedy(online[0].utilities(in_t1));
      double boot = 0.0;
      if (critic_on) {
        boot = critic_targ.value(st1, a1);
      } else {
        boot = target0.mix(target0.utilities(in_t1), target0.weights(st1), a1, chosen_q);
      }
      y += cfg_.gamma * boot;
    }
    double q_targ_a = 0.0;
    if (K > 0) {
      q_targ_a = critic_on ? critic_targ.value(st, a)
                           : target0.mix(target0.utilities(in_t), target0.weights(st), a, chosen_q);
    }

    for (std::size_t k = 0; k < n_sub; ++k) {
      util[k] = online[k].utilities(in_t);
      hyper[k] = online[k].weights(st);
      tracked[k] = online[k].greedy(util[k]);
      tracked_flat[k] = env::flat_joint_action(tracked[k], n_actions);
    }
    for (std::size_t k = 0; k < n_sub; ++k) {
      role_tracked[k] = critic_on ? critic.value(st, tracked[k])
                                  : online[0].mix(util[0], hyper[0], tracked[k], chosen_q);
    }

    double q_star_a = 0.0;
    if (critic_on) {
      const auto idx = critic.find(st, a);
      q_star_a = critic.values[idx].v;
      const double d = q_star_a - y;
      rep.critic_loss += d * d * inv_b;
      critic.values[idx].upstream += 2.0 * d * inv_b;
    }
    const double max_role = *std::max_element(role_tracked.begin(), role_tracked.end());

    for (std::size_t k = 0; k < n_sub; ++k) {
      const double qk = online[k].mix(util[k], hyper[k], a, chosen_q);
      if (!critic_on && k == 0) q_star_a = qk;
      const std::span<const int> prefix(tracked_flat.data(), k);
      double target = y;
      double w = 1.0;
      switch (cfg_.algorithm) {
        case Algorithm::kQmix:
          break;
        case Algorithm::kWqmix:
          w = wqmix_weight(qk, y, cfg_.weighting);
          break;
        case Algorithm::kS2Q:
        case Algorithm::kS2QComm: {
          target = suppressed_target(y, a_flat, prefix, q_targ_a, cfg_.suppression);
          WeightInputs wi;
          wi.k = static_cast<int>(k);
          wi.q_star_at_a = q_star_a;
          wi.max_tracked_q_star = max_role;
          wi.q_sub_at_a = qk;
          wi.comparator = suppression_comparator(y, a_flat, prefix, q_targ_a, cfg_.suppression.alpha);
          w = weight_wk(wi, cfg_.weighting);
          break;
        }
      }
      const double d = qk - target;
      rep.per_k_loss[k] += w * d * d * inv_b;
      if (accumulate) online[k].backward(util[k], hyper[k], a, chosen_q, 2.0 * w * d * inv_b, grad_q);
    }

    if (coder_ && s2q) {
      auto key = concat(ep.windows[t]);
      const std::size_t joint_len = key.size();
      key.insert(key.end(), st.begin(), st.end());
      const auto idx = coder_memo.find(key, [&](CoderEntry& e) {
        e.joint.assign(key.begin(), key.begin() + static_cast<std::ptrdiff_t>(joint_len));
        e.state = st;
        e.p = behavior::softmax_p(role_tracked, cfg_.temperature).probs;
      });
      ++coder_memo[idx].count;
    }
  }

  if (coder_ && s2q) {
    std::vector<double> scratch;
    if (!accumulate) scratch.assign(coder_->params.size(), 0.0);
    for (std::size_t i = 0; i < coder_memo.size(); ++i) {
      const auto& e = coder_memo[i];
      const double share = static_cast<double>(e.count) * inv_b;
      const auto parts =
          coder_->accumulate(e.joint, e.p, e.state, accumulate ? coder_grad_ : scratch, share);
      rep.latent.ce += parts.ce * share;
      rep.latent.mse += parts.mse * share;
    }
  }
  if (accumulate) {
    if (critic_on) critic.flush(critic_grad_);
    for (std::size_t k = 0; k < n_sub; ++k) online[k].flush(sub_grad_[k]);
  }
  rep.successive_loss = std::accumulate(rep.per_k_loss.begin(), rep.per_k_loss.end(), 0.0);
  return rep;
}

int Learner::apply_gradients(TrainMetrics& metrics) {
  int skipped = 0;
  auto guarded = [&](diff::ParamStore& store, std::span<const double> grad, const char* what) {
    try {
      diff::adam_step(store, grad, cfg_.adam);
    } catch (const NumericalError& e) {
      ++skipped;
      metrics.incident_messages.push_back(std::string(what) + ": " + e.what());
    }
  };
  if (cfg_.uses_critic()) guarded(ensemble_.critic().params, critic_grad_, "critic");
  for (int k = 0; k <= cfg_.effective_K(); ++k) {
    guarded(ensemble_.sub(k).params, sub_grad_[static_cast<std::size_t>(k)], "sub-value");
  }
  if (coder_) guarded(coder_->params, coder_grad_, "latent coder");
  metrics.incidents += skipped;
  return skipped;
}

TrainMetrics Learner::train_step(const ReplayBuffer& buffer, Rng& rng) {
  if (buffer.empty()) throw UsageError("train_step: replay buffer is empty");
  const auto episodes = buffer.sample(rng);
  const auto batch = expand(episodes);
  const auto rep = compute_losses(batch, true);

  TrainMetrics m;
  m.critic_loss = rep.critic_loss;
  m.per_k_loss = rep.per_k_loss;
  m.successive_loss = rep.successive_loss;
  m.ce = rep.latent.ce;
  m.mse = rep.latent.mse;
  if (!all_finite(rep)) {
    m.incidents = 1;
    m.incident_messages.push_back("non-finite loss; update skipped");
  } else {
    apply_gradients(m);
  }
  ++train_steps_;
  if (train_steps_ % cfg_.target_update_interval == 0) ensemble_.refresh_targets();
  m.step = train_steps_;
  return m;
}

}  // namespace s2q::learn
