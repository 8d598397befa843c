#include "s2q/comm.hpp"

#include <algorithm>
#include <cmath>

#include "s2q/errors.hpp"

namespace s2q::comm {

LatentCoder::LatentCoder(int input_width, int latent_dim, int state_dim, int num_subvalues,
                         int hidden, Rng& rng)
    : state_dim_(state_dim), num_subvalues_(num_subvalues) {
  if (latent_dim <= 0) throw ConfigError("latent_dim: must be positive");
  if (num_subvalues <= 0) throw ConfigError("LatentCoder: need at least one sub-value");
  encoder_spec_.activation = diff::Activation::kRelu;
  decoder_spec_.activation = diff::Activation::kRelu;
  encoder_spec_.layer_widths = {input_width, hidden, latent_dim};
  decoder_spec_.layer_widths = {latent_dim, hidden, state_dim + num_subvalues};
  encoder_ = diff::Mlp(encoder_spec_);
  decoder_ = diff::Mlp(decoder_spec_);
  params = diff::ParamStore(encoder_.param_count() + decoder_.param_count());
  diff::init_params(encoder_spec_, params.values, rng);
  diff::init_params(decoder_spec_,
                    std::span<double>(params.values).subspan(encoder_.param_count()), rng);
  z_.resize(static_cast<std::size_t>(latent_dim));
  upstream_.resize(static_cast<std::size_t>(state_dim + num_subvalues));
  grad_z_.resize(static_cast<std::size_t>(latent_dim));
}

std::vector<double> concat_histories(const std::vector<std::vector<double>>& joint_histories) {
  std::vector<double> flat;
  for (const auto& h : joint_histories) flat.insert(flat.end(), h.begin(), h.end());
  return flat;
}

std::vector<double> LatentCoder::encode(const std::vector<std::vector<double>>& joint_histories) {
  return encode_flat(concat_histories(joint_histories));
}

std::vector<double> LatentCoder::encode_flat(std::span<const double> joint_history) {
  if (joint_history.size() != static_cast<std::size_t>(input_width())) {
    throw UsageError("LatentCoder::encode: joint history length " +
                     std::to_string(joint_history.size()) + " != " +
                     std::to_string(input_width()));
  }
  ++encode_calls_;
  auto z = encoder_.forward(params.values, joint_history);
  return {z.begin(), z.end()};
}

Decoded LatentCoder::decode(std::span<const double> z) {
  if (z.size() != static_cast<std::size_t>(latent_dim())) {
    throw UsageError("LatentCoder::decode: latent has wrong length");
  }
  auto out = decoder_.forward(std::span<const double>(params.values).subspan(encoder_.param_count()), z);
  Decoded d;
  const auto S = static_cast<std::size_t>(state_dim_);
  d.state.assign(out.begin(), out.begin() + static_cast<std::ptrdiff_t>(S));
  d.p_hat = behavior::softmax_p(out.subspan(S), 1.0, behavior::Source::kEstimated);
  return d;
}

double cross_entropy(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw UsageError("cross_entropy: length mismatch");
  double ce = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] > 0.0) ce -= p[k] * std::log(std::max(q[k], kProbabilityFloor));
  }
  return ce;
}

double mean_squared_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw UsageError("mean_squared_error: length mismatch");
  if (a.empty()) return 0.0;
  double sq = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sq += (a[i] - b[i]) * (a[i] - b[i]);
  return sq / static_cast<double>(a.size());
}

LatentLossParts LatentCoder::accumulate(std::span<const double> joint_history,
                                        std::span<const double> p_exact,
                                        std::span<const double> state, std::span<double> grad,
                                        double weight) {
  if (p_exact.size() != static_cast<std::size_t>(num_subvalues_) ||
      state.size() != static_cast<std::size_t>(state_dim_)) {
    throw UsageError("LatentCoder::accumulate: target has wrong shape");
  }
  const std::size_t enc_n = encoder_.param_count();
  const std::span<const double> enc_p(params.values.data(), enc_n);
  const std::span<const double> dec_p =
      std::span<const double>(params.values).subspan(enc_n);

  auto z = encoder_.forward(enc_p, joint_history);
  std::copy(z.begin(), z.end(), z_.begin());
  auto out = decoder_.forward(dec_p, z_);
  const auto S = static_cast<std::size_t>(state_dim_);
  const auto p_hat = behavior::softmax_p(out.subspan(S), 1.0, behavior::Source::kEstimated);

  LatentLossParts parts;
  parts.ce = cross_entropy(p_exact, p_hat.probs);
  parts.mse = mean_squared_error(state, out.first(S));

  // d CE / d logits = p_hat - p (p sums to one); d MSE / d s_hat = 2 (s_hat - s) / S.
  double p_sum = 0.0;
  for (double p : p_exact) p_sum += p;
  for (std::size_t i = 0; i < S; ++i) {
    upstream_[i] = weight * 2.0 * (out[i] - state[i]) / static_cast<double>(S);
  }
  for (std::size_t k = 0; k < p_hat.probs.size(); ++k) {
    upstream_[S + k] = weight * (p_sum * p_hat.probs[k] - p_exact[k]);
  }
  decoder_.backward(dec_p, upstream_, grad.subspan(enc_n), grad_z_);
  encoder_.backward(enc_p, grad_z_, grad.first(enc_n), {});
  return parts;
}

LatentLossParts latent_loss(LatentCoder& coder, std::span<const LatentSample> batch,
                            std::span<double> grad) {
  if (batch.empty()) throw UsageError("latent_loss: empty batch");
  if (grad.size() != coder.params.size()) throw UsageError("latent_loss: gradient span has wrong length");
  std::vector<double> sample_grad(grad.size());
  LatentLossParts total;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  for (const auto& s : batch) {
    std::fill(sample_grad.begin(), sample_grad.end(), 0.0);
    const auto parts = coder.accumulate(s.joint_history, s.p_exact, s.state, sample_grad);
    total.ce += parts.ce * inv_b;
    total.mse += parts.mse * inv_b;
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += sample_grad[i] * inv_b;
  }
  return total;
}

std::vector<double> comm_augment(std::span<const double> utility_input, std::span<const double> z) {
  std::vector<double> out(utility_input.begin(), utility_input.end());
  out.insert(out.end(), z.begin(), z.end());
  return out;
}

}  // namespace s2q::comm
