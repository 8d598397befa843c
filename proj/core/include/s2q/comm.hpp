#pragma once

// Encoder-decoder used during training to agree on a sub-value index: the
// encoder maps the concatenated agent windows to a latent z, the decoder
// reconstructs the state features and an estimate of the Softmax
// distribution over k. With communication-augmented utilities, z is also
// appended to every agent's utility input.

#include <cstdint>
#include <span>
#include <vector>

#include "s2q/behavior.hpp"
#include "s2q/diffcore.hpp"
#include "s2q/rng.hpp"

namespace s2q::comm {

inline constexpr double kProbabilityFloor = 1e-12;

struct LatentLossParts {
  double ce = 0.0;
  double mse = 0.0;
  double total() const { return ce + mse; }
};

struct Decoded {
  std::vector<double> state;
  behavior::SoftmaxDistribution p_hat;
};

class LatentCoder {
 public:
  LatentCoder() = default;
  // input_width is the length of the concatenated joint history.
  LatentCoder(int input_width, int latent_dim, int state_dim, int num_subvalues, int hidden,
              Rng& rng);

  int input_width() const { return encoder_spec_.input_width(); }
  int latent_dim() const { return encoder_spec_.output_width(); }
  int state_dim() const { return state_dim_; }
  int num_subvalues() const { return num_subvalues_; }
  std::size_t encoder_param_count() const { return encoder_spec_.param_count(); }
  const diff::ApproximatorSpec& encoder_spec() const { return encoder_spec_; }
  const diff::ApproximatorSpec& decoder_spec() const { return decoder_spec_; }

  diff::ParamStore params;  // [encoder | decoder]

  // z = E(concatenated histories).
  std::vector<double> encode(const std::vector<std::vector<double>>& joint_histories);
  std::vector<double> encode_flat(std::span<const double> joint_history);
  Decoded decode(std::span<const double> z);

  std::uint64_t encode_calls() const { return encode_calls_; }

  // Forward + reverse pass for one sample; adds weight times the gradients of
  //   CE(p_exact, p_hat) + MSE(state, s_hat)
  // into grad and returns the two (unweighted) parts.
  LatentLossParts accumulate(std::span<const double> joint_history,
                             std::span<const double> p_exact, std::span<const double> state,
                             std::span<double> grad, double weight = 1.0);

 private:
  diff::ApproximatorSpec encoder_spec_;
  diff::ApproximatorSpec decoder_spec_;
  diff::Mlp encoder_;
  diff::Mlp decoder_;
  int state_dim_ = 0;
  int num_subvalues_ = 0;
  std::uint64_t encode_calls_ = 0;
  std::vector<double> z_;
  std::vector<double> upstream_;
  std::vector<double> grad_z_;
};

// -sum_k p[k] log(max(q[k], floor)).
double cross_entropy(std::span<const double> p, std::span<const double> q);
double mean_squared_error(std::span<const double> a, std::span<const double> b);

struct LatentSample {
  std::vector<double> joint_history;
  std::vector<double> p_exact;
  std::vector<double> state;
};

// Batch-averaged latent loss; grad (length coder.params.size()) receives the
// gradient of the averaged total.
LatentLossParts latent_loss(LatentCoder& coder, std::span<const LatentSample> batch,
                            std::span<double> grad);

// Utility input extended by the latent.
std::vector<double> comm_augment(std::span<const double> utility_input, std::span<const double> z);

std::vector<double> concat_histories(const std::vector<std::vector<double>>& joint_histories);

}  // namespace s2q::comm
