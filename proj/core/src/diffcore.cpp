#include "s2q/diffcore.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "s2q/errors.hpp"

namespace s2q::diff {

std::size_t ApproximatorSpec::param_count() const {
  std::size_t n = 0;
  for (std::size_t l = 0; l + 1 < layer_widths.size(); ++l) {
    const auto in = static_cast<std::size_t>(layer_widths[l]);
    const auto out = static_cast<std::size_t>(layer_widths[l + 1]);
    n += out * in + out;
  }
  return n;
}

void ApproximatorSpec::validate() const {
  if (layer_widths.size() < 2) {
    throw ConfigError("ApproximatorSpec: need at least input and output widths");
  }
  for (std::size_t i = 0; i < layer_widths.size(); ++i) {
    if (layer_widths[i] <= 0) {
      throw ConfigError("ApproximatorSpec.layer_widths[" + std::to_string(i) +
                        "] must be positive");
    }
  }
  if (!weight_transform.empty() && weight_transform.size() != num_layers()) {
    throw ConfigError("ApproximatorSpec.weight_transform: expected " +
                      std::to_string(num_layers()) + " entries, got " +
                      std::to_string(weight_transform.size()));
  }
}

void ParamStore::reset_optimizer() {
  std::fill(adam_m.begin(), adam_m.end(), 0.0);
  std::fill(adam_v.begin(), adam_v.end(), 0.0);
  step_count = 0;
}

void AdamConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("adam.learning_rate must be > 0");
  if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("adam.beta1 must be in (0,1)");
  if (!(beta2 > 0.0 && beta2 < 1.0)) throw ConfigError("adam.beta2 must be in (0,1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam.epsilon must be > 0");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("adam.grad_clip_norm must be > 0");
}

void init_params(const ApproximatorSpec& spec, std::span<double> params, Rng& rng) {
  spec.validate();
  if (params.size() < spec.param_count()) {
    throw UsageError("init_params: parameter span too short");
  }
  std::size_t pos = 0;
  for (std::size_t l = 0; l < spec.num_layers(); ++l) {
    const auto in = static_cast<std::size_t>(spec.layer_widths[l]);
    const auto out = static_cast<std::size_t>(spec.layer_widths[l + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < out * in + out; ++i) {
      params[pos++] = rng.uniform(-bound, bound);
    }
  }
}

double apply_activation(Activation act, double x) {
  switch (act) {
    case Activation::kRelu:
      return x > 0.0 ? x : 0.0;
    case Activation::kElu:
      return x > 0.0 ? x : std::expm1(x);
    case Activation::kTanh:
      return std::tanh(x);
    case Activation::kIdentity:
      return x;
  }
  return x;
}

double activation_derivative(Activation act, double x) {
  switch (act) {
    case Activation::kRelu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::kElu:
      return x > 0.0 ? 1.0 : std::exp(x);
    case Activation::kTanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::kIdentity:
      return 1.0;
  }
  return 1.0;
}

Mlp::Mlp(ApproximatorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  param_count_ = spec_.param_count();
  const std::size_t layers = spec_.num_layers();
  layer_offset_.resize(layers);
  pre_.resize(layers);
  post_.resize(layers + 1);
  std::size_t offset = 0;
  std::size_t widest = 0;
  post_[0].resize(static_cast<std::size_t>(spec_.layer_widths[0]));
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(spec_.layer_widths[l]);
    const auto out = static_cast<std::size_t>(spec_.layer_widths[l + 1]);
    layer_offset_[l] = offset;
    offset += out * in + out;
    pre_[l].resize(out);
    post_[l + 1].resize(out);
    widest = std::max({widest, in, out});
  }
  delta_.resize(widest);
  delta_next_.resize(widest);
}

std::span<const double> Mlp::forward(std::span<const double> params,
                                     std::span<const double> input) {
  if (input.size() != static_cast<std::size_t>(spec_.input_width())) {
    throw ConfigError("Mlp::forward: input width " + std::to_string(input.size()) +
                      " != " + std::to_string(spec_.input_width()));
  }
  if (params.size() < param_count_) {
    throw UsageError("Mlp::forward: parameter span too short");
  }
  std::copy(input.begin(), input.end(), post_[0].begin());
  const std::size_t layers = spec_.num_layers();
  for (std::size_t l = 0; l < layers; ++l) {
    const auto in = static_cast<std::size_t>(spec_.layer_widths[l]);
    const auto out = static_cast<std::size_t>(spec_.layer_widths[l + 1]);
    const double* w = params.data() + layer_offset_[l];
    const double* b = w + out * in;
    const double* x = post_[l].data();
    double* z = pre_[l].data();
    const bool absolute = spec_.transform(l) == WeightTransform::kAbsolute;
    for (std::size_t o = 0; o < out; ++o) {
      const double* row = w + o * in;
      double acc = b[o];
      if (absolute) {
        for (std::size_t i = 0; i < in; ++i) acc += std::abs(row[i]) * x[i];
      } else {
        for (std::size_t i = 0; i < in; ++i) acc += row[i] * x[i];
      }
      z[o] = acc;
    }
    double* a = post_[l + 1].data();
    if (l + 1 == layers) {
      std::copy(z, z + out, a);
    } else {
      for (std::size_t o = 0; o < out; ++o) a[o] = apply_activation(spec_.activation, z[o]);
    }
  }
  return post_[layers];
}

void Mlp::backward(std::span<const double> params, std::span<const double> upstream,
                   std::span<double> grad_params, std::span<double> grad_input) {
  const std::size_t layers = spec_.num_layers();
  if (upstream.size() != static_cast<std::size_t>(spec_.output_width())) {
    throw UsageError("Mlp::backward: upstream gradient has wrong length");
  }
  if (grad_params.size() < param_count_) {
    throw UsageError("Mlp::backward: gradient span too short");
  }
  if (!grad_input.empty() &&
      grad_input.size() != static_cast<std::size_t>(spec_.input_width())) {
    throw UsageError("Mlp::backward: input gradient span has wrong length");
  }
  // delta_ holds dL/d(pre-activation) of the current layer.
  std::copy(upstream.begin(), upstream.end(), delta_.begin());
  for (std::size_t l = layers; l-- > 0;) {
    const auto in = static_cast<std::size_t>(spec_.layer_widths[l]);
    const auto out = static_cast<std::size_t>(spec_.layer_widths[l + 1]);
    const std::size_t off = layer_offset_[l];
    const double* w = params.data() + off;
    double* gw = grad_params.data() + off;
    double* gb = gw + out * in;
    const double* x = post_[l].data();
    const bool absolute = spec_.transform(l) == WeightTransform::kAbsolute;
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta_[o];
      gb[o] += d;
      if (d == 0.0) continue;
      double* grow = gw + o * in;
      const double* row = w + o * in;
      if (absolute) {
        // d|w|/dw = sign(w); zero at w == 0.
        for (std::size_t i = 0; i < in; ++i) {
          const double s = row[i] > 0.0 ? 1.0 : (row[i] < 0.0 ? -1.0 : 0.0);
          grow[i] += d * x[i] * s;
        }
      } else {
        for (std::size_t i = 0; i < in; ++i) grow[i] += d * x[i];
      }
    }
    const bool need_input_grad = l > 0 || !grad_input.empty();
    if (!need_input_grad) break;
    std::fill(delta_next_.begin(), delta_next_.begin() + static_cast<std::ptrdiff_t>(in), 0.0);
    for (std::size_t o = 0; o < out; ++o) {
      const double d = delta_[o];
      if (d == 0.0) continue;
      const double* row = w + o * in;
      if (absolute) {
        for (std::size_t i = 0; i < in; ++i) delta_next_[i] += d * std::abs(row[i]);
      } else {
        for (std::size_t i = 0; i < in; ++i) delta_next_[i] += d * row[i];
      }
    }
    if (l > 0) {
      const double* z = pre_[l - 1].data();
      for (std::size_t i = 0; i < in; ++i) {
        delta_[i] = delta_next_[i] * activation_derivative(spec_.activation, z[i]);
      }
    } else {
      std::copy(delta_next_.begin(), delta_next_.begin() + static_cast<std::ptrdiff_t>(in),
                grad_input.begin());
    }
  }
}

std::vector<double> forward(const ApproximatorSpec& spec, const ParamStore& params,
                            std::span<const double> input) {
  Mlp mlp(spec);
  if (params.size() != mlp.param_count()) {
    throw ConfigError("forward: parameter count mismatch");
  }
  auto out = mlp.forward(params.values, input);
  return {out.begin(), out.end()};
}

std::vector<double> backward(const ApproximatorSpec& spec, const ParamStore& params,
                             std::span<const double> input,
                             std::span<const double> upstream_grad) {
  Mlp mlp(spec);
  if (params.size() != mlp.param_count()) {
    throw ConfigError("backward: parameter count mismatch");
  }
  mlp.forward(params.values, input);
  std::vector<double> grad(params.size(), 0.0);
  mlp.backward(params.values, upstream_grad, grad, {});
  return grad;
}

double global_norm(std::span<const double> grad) {
  double sq = 0.0;
  for (double g : grad) sq += g * g;
  return std::sqrt(sq);
}

double adam_step(ParamStore& params, std::span<const double> grad, const AdamConfig& cfg) {
  if (grad.size() != params.size()) {
    throw UsageError("adam_step: gradient length " + std::to_string(grad.size()) +
                     " != parameter length " + std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (!std::isfinite(grad[i])) {
      throw NumericalError("adam_step: non-finite gradient at index " + std::to_string(i));
    }
  }
  const double norm = global_norm(grad);
  const double scale = norm > cfg.grad_clip_norm ? cfg.grad_clip_norm / norm : 1.0;

  params.step_count += 1;
  const auto t = static_cast<double>(params.step_count);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < grad.size(); ++i) {
    const double g = grad[i] * scale;
    double& m = params.adam_m[i];
    double& v = params.adam_v[i];
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m / bc1;
    const double v_hat = v / bc2;
    params.values[i] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
  return norm;
}

}  // namespace s2q::diff
