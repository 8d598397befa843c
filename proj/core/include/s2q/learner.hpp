#pragma once

// The learner: episode replay, the critic TD loss, the successive sub-value
// loss with suppression of previously tracked joint actions, the w_k
// weighting, target maintenance, and the ablation switches.

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2q/behavior.hpp"
#include "s2q/comm.hpp"
#include "s2q/diffcore.hpp"
#include "s2q/rng.hpp"
#include "s2q/valuenets.hpp"

namespace s2q::learn {

struct SuppressionConfig {
  double alpha = 1.0;
  double floor_c = 0.1;
  bool use_floor = false;

  void validate() const;
};

struct WeightingConfig {
  double w_c = 0.9;

  void validate() const;
};

enum class Algorithm { kS2Q, kQmix, kWqmix, kS2QComm };

Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm a);

// True iff `action` is one of the first k tracked actions, i.e. in A_{k-1}.
bool in_tracked_prefix(int action, std::span<const int> tracked_flat, int k);

// y - alpha * 1(a in A_{k-1}) * max(q_targ_at_a, C)   (use_floor)
// y - alpha * 1(a in A_{k-1}) * q_targ_at_a           (otherwise)
// tracked_prefix holds exactly A_{k-1} (empty for k = 0).
double suppressed_target(double y, int action, std::span<const int> tracked_prefix,
                         double q_targ_at_a, const SuppressionConfig& cfg);

// Comparator of the k >= 1 weighting rule: y - alpha * 1(a in A_{k-1}) * q_targ_at_a.
double suppression_comparator(double y, int action, std::span<const int> tracked_prefix,
                              double q_targ_at_a, double alpha);

struct WeightInputs {
  int k = 0;
  double q_star_at_a = 0.0;         // k = 0 rule
  double max_tracked_q_star = 0.0;  // max over A_{K,t} of Q*
  double q_sub_at_a = 0.0;          // k >= 1 rule
  double comparator = 0.0;          // suppression_comparator(...)
};

// k = 0: 1 iff Q*(s,a) >= max over A_K of Q*; k >= 1: 1 iff Q_k^sub(s,a) <
// comparator. Otherwise w_c.
double weight_wk(const WeightInputs& in, const WeightingConfig& cfg);

// Weighting of the WQMIX baseline: 1 iff Q_tot < y, else w_c.
double wqmix_weight(double q_tot, double y, const WeightingConfig& cfg);

// Mean of (q - y)^2.
double mean_squared_td(std::span<const double> q, std::span<const double> y);

// A whole stored episode. Vectors indexed by t have T entries, except the
// states, state features and windows which have T + 1 (the final entry
// describes the state reached after the last step).
struct EpisodeRecord {
  std::vector<int> states;
  std::vector<std::vector<double>> state_features;
  std::vector<std::vector<std::vector<double>>> windows;  // [t][agent]
  std::vector<std::vector<int>> actions;                  // [t][agent]
  std::vector<int> joint_actions;
  std::vector<double> rewards;
  std::vector<std::uint8_t> terminal;
  // Diagnostics only; the learner recomputes tracked sets at train time.
  std::vector<int> chosen_k;
  std::vector<std::vector<int>> tracked_flat;

  int length() const { return static_cast<int>(rewards.size()); }
  double episode_return() const;
};

class ReplayBuffer {
 public:
  ReplayBuffer(std::size_t capacity, std::size_t batch_size);

  void push(EpisodeRecord episode);
  std::size_t size() const { return episodes_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t batch_size() const { return batch_size_; }
  bool empty() const { return episodes_.empty(); }
  const EpisodeRecord& at(std::size_t i) const { return episodes_.at(i); }

  // min(batch_size, size()) distinct episodes, uniformly at random.
  std::vector<const EpisodeRecord*> sample(Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t batch_size_;
  std::size_t next_ = 0;
  std::vector<EpisodeRecord> episodes_;
};

struct SampleRef {
  const EpisodeRecord* episode = nullptr;
  int t = 0;
};

// Every timestep of the given episodes.
std::vector<SampleRef> expand(const std::vector<const EpisodeRecord*>& episodes);

struct LearnerConfig {
  Algorithm algorithm = Algorithm::kS2Q;
  behavior::Variant variant = behavior::Variant::kFull;
  int K = 2;
  double gamma = 0.99;
  double temperature = 0.1;
  SuppressionConfig suppression;
  WeightingConfig weighting;
  diff::AdamConfig adam;
  int target_update_interval = 200;
  int coder_hidden = 32;
  int latent_dim = 8;
  // Tabular mode: step size of the table updates.
  double tabular_lr = 0.1;

  // K used by the networks: 0 for the QMIX / WQMIX baselines.
  int effective_K() const;
  bool uses_critic() const;
  bool uses_coder() const;
  bool comm_utilities() const { return algorithm == Algorithm::kS2QComm; }
  void validate() const;
};

struct TrainMetrics {
  std::int64_t step = 0;
  double critic_loss = 0.0;
  double successive_loss = 0.0;
  std::vector<double> per_k_loss;
  double ce = 0.0;
  double mse = 0.0;
  int incidents = 0;  // updates skipped because of non-finite values
  std::vector<std::string> incident_messages;
};

// What the behavior policy sees at one timestep.
struct StepContext {
  int state = 0;
  std::span<const double> state_features;
  const std::vector<std::vector<double>>* windows = nullptr;  // raw, per agent
};

// Shared surface of the network learner and the tabular learner, used by the
// runner and the diagnostics commands.
class LearnerBase {
 public:
  virtual ~LearnerBase() = default;

  virtual const LearnerConfig& config() const = 0;
  int K() const { return config().effective_K(); }

  // a*_{0..K}: greedy joint actions of every sub-value function.
  virtual std::vector<std::vector<int>> tracked_actions(const StepContext& ctx) = 0;
  // Values used for P: Q* (Q_0^sub under no_wTD) at the given joint actions,
  // online parameters.
  virtual std::vector<double> prioritization_values(const StepContext& ctx,
                                                    const std::vector<std::vector<int>>& joints) = 0;
  // P-hat from the encoder-decoder, if this learner has one.
  virtual std::optional<behavior::SoftmaxDistribution> estimate_p(const StepContext& ctx) = 0;
  virtual double q_star(const StepContext& ctx, std::span<const int> joint) = 0;
  virtual double q_sub(int k, const StepContext& ctx, std::span<const int> joint) = 0;

  virtual TrainMetrics train_step(const ReplayBuffer& buffer, Rng& rng) = 0;
  virtual std::int64_t train_steps() const = 0;

  behavior::SoftmaxDistribution exact_p(const StepContext& ctx,
                                        const std::vector<std::vector<int>>& tracked);
};

struct LossReport {
  double critic_loss = 0.0;
  std::vector<double> per_k_loss;
  double successive_loss = 0.0;
  comm::LatentLossParts latent;
};

class Learner : public LearnerBase {
 public:
  Learner(LearnerConfig cfg, nets::NetShape shape, Rng& init_rng);

  const LearnerConfig& config() const override { return cfg_; }
  nets::ValueEnsemble& ensemble() { return ensemble_; }
  const nets::ValueEnsemble& ensemble() const { return ensemble_; }
  comm::LatentCoder* coder() { return coder_ ? &*coder_ : nullptr; }
  const comm::LatentCoder* coder() const { return coder_ ? &*coder_ : nullptr; }
  const nets::NetShape& shape() const { return ensemble_.shape(); }

  // Appends z = E(windows) to each window when utilities are latent-augmented.
  std::vector<std::vector<double>> utility_inputs(const std::vector<std::vector<double>>& windows);

  std::vector<std::vector<int>> tracked_actions(const StepContext& ctx) override;
  std::vector<double> prioritization_values(const StepContext& ctx,
                                            const std::vector<std::vector<int>>& joints) override;
  std::optional<behavior::SoftmaxDistribution> estimate_p(const StepContext& ctx) override;
  double q_star(const StepContext& ctx, std::span<const int> joint) override;
  double q_sub(int k, const StepContext& ctx, std::span<const int> joint) override;

  TrainMetrics train_step(const ReplayBuffer& buffer, Rng& rng) override;
  std::int64_t train_steps() const override { return train_steps_; }

  // Losses of the current parameters on `batch`. When accumulate is true the
  // gradients are left in the internal buffers for apply_gradients().
  LossReport compute_losses(std::span<const SampleRef> batch, bool accumulate = false);
  // One Adam step per parameter group using the buffers filled by
  // compute_losses(..., true). Returns the number of skipped groups.
  int apply_gradients(TrainMetrics& metrics);
  // Gradient buffers of the last compute_losses(..., true).
  std::span<const double> critic_gradient() const { return critic_grad_; }
  std::span<const double> sub_gradient(int k) const { return sub_grad_.at(static_cast<std::size_t>(k)); }
  std::span<const double> coder_gradient() const { return coder_grad_; }

  // Turning latent-augmented utilities on is only possible before training.
  void enable_comm_utilities(Rng& init_rng);

 private:
  LearnerConfig cfg_;
  nets::ValueEnsemble ensemble_;
  std::optional<comm::LatentCoder> coder_;
  std::int64_t train_steps_ = 0;

  std::vector<double> critic_grad_;
  std::vector<std::vector<double>> sub_grad_;
  std::vector<double> coder_grad_;
};

}  // namespace s2q::learn
