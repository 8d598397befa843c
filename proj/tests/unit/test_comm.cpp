#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "gradient_families.hpp"
#include "s2q/behavior.hpp"
#include "s2q/comm.hpp"
#include "s2q/errors.hpp"

using namespace s2q;

TEST_CASE("encoder shape and duplicate evaluation") {
  Rng rng(13);
  comm::LatentCoder coder(12, 8, 3, 3, 16, rng);
  const auto h = testing::random_vector(12, rng);
  const auto z = coder.encode_flat(h);
  CHECK(z.size() == 8);
  diff::ParamStore enc(coder.encoder_param_count());
  std::copy_n(coder.params.values.begin(), enc.size(), enc.values.begin());
  CHECK(z == diff::forward(coder.encoder_spec(), enc, h));
  CHECK(coder.encode({std::vector<double>(h.begin(), h.begin() + 6), std::vector<double>(h.begin() + 6, h.end())}) == z);
  CHECK(coder.encode_calls() == 2);
  CHECK_THROWS_AS(coder.encode_flat(std::vector<double>(11, 0.0)), UsageError);
}

TEST_CASE("zero weights give the output bias as latent") {
  Rng rng(2);
  comm::LatentCoder coder(4, 3, 2, 3, 5, rng);
  // Encoder layout: W1 [5x4], b1 [5], W2 [3x5], b2 [3].
  auto& v = coder.params.values;
  std::fill(v.begin(), v.begin() + 20, 0.0);
  std::fill(v.begin() + 25, v.begin() + 40, 0.0);
  const std::vector<double> b2(v.begin() + 40, v.begin() + 43);
  const std::vector<double> h{1, -2, 3, 0.5};
  CHECK(coder.encode_flat(h) == b2);
}

TEST_CASE("decoded estimate is a distribution") {
  Rng rng(3);
  comm::LatentCoder coder(6, 4, 5, 3, 8, rng);
  for (int i = 0; i < 50; ++i) {
    const auto z = testing::random_vector(4, rng, -5.0, 5.0);
    const auto d = coder.decode(z);
    CHECK(d.state.size() == 5);
    CHECK(d.p_hat.source == behavior::Source::kEstimated);
    CHECK(std::abs(std::accumulate(d.p_hat.probs.begin(), d.p_hat.probs.end(), 0.0) - 1.0) <= 1e-12);
  }
}

TEST_CASE("cross-entropy identities") {
  const std::vector<double> one_hot{1, 0, 0}, uniform{1.0 / 3, 1.0 / 3, 1.0 / 3};
  CHECK(comm::cross_entropy(one_hot, uniform) == doctest::Approx(std::log(3.0)).epsilon(1e-12));
  CHECK(std::abs(comm::cross_entropy(one_hot, uniform) - 1.0986) < 1e-4);
  Rng rng(6);
  for (int i = 0; i < 100; ++i) {
    auto p = testing::random_vector(4, rng, 0.0, 1.0);
    auto q = testing::random_vector(4, rng, 0.0, 1.0);
    const double sp = std::accumulate(p.begin(), p.end(), 0.0), sq = std::accumulate(q.begin(), q.end(), 0.0);
    for (double& x : p) x /= sp;
    for (double& x : q) x /= sq;
    CHECK(comm::cross_entropy(p, p) == doctest::Approx(behavior::entropy(p)).epsilon(1e-12));
    CHECK(comm::cross_entropy(p, q) >= behavior::entropy(p) - 1e-12);
  }
  // The probability floor keeps log(0) finite.
  const std::vector<double> zero_q{0, 1, 0};
  CHECK(std::isfinite(comm::cross_entropy(one_hot, zero_q)));
  const std::vector<double> s{1, 2, 3};
  CHECK(comm::mean_squared_error(s, s) == 0.0);
}

TEST_CASE("latent loss averages per-sample parts and gradients") {
  Rng rng(7);
  comm::LatentCoder coder(5, 3, 2, 3, 6, rng);
  std::vector<comm::LatentSample> batch;
  for (int i = 0; i < 4; ++i) {
    batch.push_back({testing::random_vector(5, rng), {0.2, 0.5, 0.3}, testing::random_vector(2, rng)});
  }
  std::vector<double> g(coder.params.size(), 0.0);
  const auto parts = comm::latent_loss(coder, batch, g);

  std::vector<double> g_ref(coder.params.size(), 0.0);
  double ce = 0.0, mse = 0.0;
  for (const auto& s : batch) {
    const auto p = coder.accumulate(s.joint_history, s.p_exact, s.state, g_ref, 0.25);
    ce += p.ce / 4;
    mse += p.mse / 4;
  }
  CHECK(parts.ce == doctest::Approx(ce));
  CHECK(parts.mse == doctest::Approx(mse));
  CHECK(parts.total() == doctest::Approx(ce + mse));
  for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == doctest::Approx(g_ref[i]));
  CHECK_THROWS_AS(comm::latent_loss(coder, {}, g), UsageError);
}

TEST_CASE("coder gradients match finite differences") {
  const auto r = testing::check_coder_family(10, 77);
  CHECK(r.worst <= testing::kFdTolerance);
}

TEST_CASE("constant state target is reconstructed") {
  Rng rng(8);
  comm::LatentCoder coder(3, 4, 1, 3, 8, rng);
  const std::vector<comm::LatentSample> batch{{{1, 1, 0}, {0.6, 0.3, 0.1}, {1.0}}};
  comm::LatentLossParts parts;
  for (int step = 0; step < 3000; ++step) {
    std::vector<double> g(coder.params.size(), 0.0);
    parts = comm::latent_loss(coder, batch, g);
    diff::AdamConfig cfg;
    cfg.learning_rate = 1e-2;
    diff::adam_step(coder.params, g, cfg);
  }
  CHECK(parts.mse < 1e-6);
  CHECK(parts.ce - behavior::entropy(batch[0].p_exact) < 1e-4);
}

TEST_CASE("comm augmentation appends the latent") {
  const std::vector<double> u{1, 2, 3}, z(8, 0.5);
  const auto a = comm::comm_augment(u, z);
  CHECK(a.size() == 11);
  CHECK(a[2] == 3);
  CHECK(a[10] == 0.5);
  CHECK(comm::comm_augment(u, {}).size() == 3);
}
