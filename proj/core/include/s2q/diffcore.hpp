#pragma once

// Small dense function approximators with a hand-written reverse pass and an
// Adam optimizer. Every network in the library (agent utilities, mixing
// hypernetworks, the joint critic, the latent coder) is built from Mlp.
//
// Parameter layout for layer l (in -> out): weights row-major [out][in], then
// the out biases. Layers are packed back to back in that order.

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "s2q/rng.hpp"

namespace s2q::diff {

enum class Activation { kRelu, kElu, kTanh, kIdentity };
enum class WeightTransform { kNone, kAbsolute };

struct ApproximatorSpec {
  // Includes the input width: {in, hidden..., out}.
  std::vector<int> layer_widths;
  // Applied after every layer except the last.
  Activation activation = Activation::kRelu;
  // One entry per layer, or empty for kNone everywhere. kAbsolute feeds |w|
  // into the layer instead of w.
  std::vector<WeightTransform> weight_transform;

  std::size_t num_layers() const {
    return layer_widths.empty() ? 0 : layer_widths.size() - 1;
  }
  int input_width() const { return layer_widths.front(); }
  int output_width() const { return layer_widths.back(); }
  WeightTransform transform(std::size_t layer) const {
    return weight_transform.empty() ? WeightTransform::kNone
                                    : weight_transform[layer];
  }
  std::size_t param_count() const;
  // Throws ConfigError on empty/nonpositive widths or a transform list of the
  // wrong length.
  void validate() const;
};

struct ParamStore {
  std::vector<double> values;
  std::vector<double> adam_m;
  std::vector<double> adam_v;
  std::uint64_t step_count = 0;

  ParamStore() = default;
  explicit ParamStore(std::size_t n) : values(n, 0.0), adam_m(n, 0.0), adam_v(n, 0.0) {}

  std::size_t size() const { return values.size(); }
  // Zeroes the optimizer moments and the step counter, keeps the values.
  void reset_optimizer();
};

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-5;
  double grad_clip_norm = 10.0;

  void validate() const;
};

// Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases of each
// layer, written into params[offset, offset + spec.param_count()).
void init_params(const ApproximatorSpec& spec, std::span<double> params, Rng& rng);

double apply_activation(Activation act, double x);
// Derivative expressed through the pre-activation x.
double activation_derivative(Activation act, double x);

// Reusable evaluator. forward() keeps the activations so that a subsequent
// backward() can run without recomputation; one Mlp object therefore serves
// one in-flight evaluation at a time.
class Mlp {
 public:
  Mlp() = default;
  explicit Mlp(ApproximatorSpec spec);

  const ApproximatorSpec& spec() const { return spec_; }
  std::size_t param_count() const { return param_count_; }

  std::span<const double> forward(std::span<const double> params,
                                  std::span<const double> input);

  // Reverse pass for the most recent forward(). Adds d(upstream . out)/d(params)
  // into grad_params; overwrites grad_input with d(upstream . out)/d(input)
  // unless grad_input is empty.
  void backward(std::span<const double> params, std::span<const double> upstream,
                std::span<double> grad_params, std::span<double> grad_input);

 private:
  ApproximatorSpec spec_;
  std::size_t param_count_ = 0;
  std::vector<std::size_t> layer_offset_;
  // post_[0] is the input; pre_[l] / post_[l + 1] belong to layer l.
  std::vector<std::vector<double>> pre_;
  std::vector<std::vector<double>> post_;
  std::vector<double> delta_;
  std::vector<double> delta_next_;
};

// Stateless conveniences over Mlp.
std::vector<double> forward(const ApproximatorSpec& spec, const ParamStore& params,
                            std::span<const double> input);
std::vector<double> backward(const ApproximatorSpec& spec, const ParamStore& params,
                             std::span<const double> input,
                             std::span<const double> upstream_grad);

double global_norm(std::span<const double> grad);

// Clips grad to cfg.grad_clip_norm (global L2 norm), then applies one
// bias-corrected Adam update. Throws NumericalError and leaves params untouched
// if grad has a non-finite entry. Returns the pre-clip norm.
double adam_step(ParamStore& params, std::span<const double> grad, const AdamConfig& cfg);

}  // namespace s2q::diff
