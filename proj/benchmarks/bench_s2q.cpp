#include <benchmark/benchmark.h>

#include <vector>

#include "episodes.hpp"
#include "s2q/diffcore.hpp"
#include "s2q/oracle.hpp"
#include "s2q/run_config.hpp"
#include "s2q/runner.hpp"

using namespace s2q;

namespace {

diff::ApproximatorSpec mlp_spec(int width) {
  diff::ApproximatorSpec spec;
  spec.layer_widths = {width, 64, 64, width};
  spec.activation = diff::Activation::kRelu;
  return spec;
}

void BM_MlpForward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  diff::Mlp mlp(mlp_spec(width));
  Rng rng(1);
  std::vector<double> params(mlp.param_count());
  diff::init_params(mlp.spec(), params, rng);
  const std::vector<double> x(static_cast<std::size_t>(width), 0.5);
  for (auto _ : state) benchmark::DoNotOptimize(mlp.forward(params, x).data());
}
BENCHMARK(BM_MlpForward)->Arg(8)->Arg(32);

void BM_MlpForwardBackward(benchmark::State& state) {
  const int width = static_cast<int>(state.range(0));
  diff::Mlp mlp(mlp_spec(width));
  Rng rng(2);
  std::vector<double> params(mlp.param_count()), grad(mlp.param_count(), 0.0);
  diff::init_params(mlp.spec(), params, rng);
  const std::vector<double> x(static_cast<std::size_t>(width), 0.5), up(static_cast<std::size_t>(width), 1.0);
  for (auto _ : state) {
    mlp.forward(params, x);
    mlp.backward(params, up, grad, {});
    benchmark::DoNotOptimize(grad.data());
  }
}
BENCHMARK(BM_MlpForwardBackward)->Arg(8)->Arg(32);

// One learner update on a full batch of matrix-game episodes.
void BM_TrainStep(benchmark::State& state) {
  auto cfg = cli::parse_run_config("{}");
  cfg.algorithm = state.range(0) == 0 ? "s2q" : "qmix";
  auto exp = cli::make_experiment(cfg);
  Rng rng(3);
  learn::ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_size), static_cast<std::size_t>(cfg.batch_size));
  for (int i = 0; i < cfg.batch_size * 4; ++i) buffer.push(testing::random_episode(exp, rng));
  for (auto _ : state) benchmark::DoNotOptimize(exp.learner->train_step(buffer, rng).critic_loss);
  state.SetLabel(cfg.algorithm);
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

void BM_VerifyTheorem(benchmark::State& state) {
  oracle::TheoremSweepConfig cfg;
  cfg.instances = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(oracle::verify_theorem_sweep(cfg).pass_rate);
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_VerifyTheorem)->Arg(1000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
