#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "doctest.h"
#include "episodes.hpp"
#include "fd_check.hpp"
#include "gradient_families.hpp"
#include "s2q/errors.hpp"
#include "s2q/learner.hpp"
#include "s2q/runner.hpp"

using namespace s2q;
using learn::Algorithm;

namespace {

learn::Learner& as_network(cli::Experiment& exp) { return dynamic_cast<learn::Learner&>(*exp.learner); }

// Per-sample losses written directly against the public evaluation API, one
// network call per quantity and no sharing between samples.
learn::LossReport reference_losses(learn::Learner& L, std::span<const learn::SampleRef> batch) {
  auto& ens = L.ensemble();
  const auto& cfg = L.config();
  const int K = cfg.effective_K();
  const int A = L.shape().n_actions;
  const double B = static_cast<double>(batch.size());
  const bool critic_on = cfg.uses_critic();
  learn::LossReport rep;
  rep.per_k_loss.assign(static_cast<std::size_t>(K + 1), 0.0);

  for (const auto& s : batch) {
    const auto& ep = *s.episode;
    const auto t = static_cast<std::size_t>(s.t);
    const auto in = L.utility_inputs(ep.windows[t]);
    const auto& st = ep.state_features[t];
    const auto& a = ep.actions[t];
    const int a_flat = ep.joint_actions[t];

    double y = ep.rewards[t];
    if (cfg.gamma != 0.0) {
      const auto in1 = L.utility_inputs(ep.windows[t + 1]);
      const auto a1 = ens.greedy_joint_action(0, in1);
      y += cfg.gamma * (critic_on ? ens.critic_value(ep.state_features[t + 1], a1, true)
                                  : ens.mix(0, in1, ep.state_features[t + 1], a1, true));
    }
    const double q_targ = critic_on ? ens.critic_value(st, a, true) : ens.mix(0, in, st, a, true);
    const auto tracked = ens.tracked_actions(in);
    std::vector<int> flat;
    double max_role = -1e300;
    for (const auto& j : tracked) {
      flat.push_back(env::flat_joint_action(j, A));
      max_role = std::max(max_role, critic_on ? ens.critic_value(st, j) : ens.mix(0, in, st, j));
    }
    const double q_star = critic_on ? ens.critic_value(st, a) : ens.mix(0, in, st, a);
    if (critic_on) rep.critic_loss += (q_star - y) * (q_star - y) / B;

    for (int k = 0; k <= K; ++k) {
      const double qk = ens.mix(k, in, st, a);
      const std::span<const int> prefix(flat.data(), static_cast<std::size_t>(k));
      double target = y, w = 1.0;
      if (cfg.algorithm == Algorithm::kWqmix) {
        w = learn::wqmix_weight(qk, y, cfg.weighting);
      } else if (cfg.algorithm == Algorithm::kS2Q || cfg.algorithm == Algorithm::kS2QComm) {
        target = learn::suppressed_target(y, a_flat, prefix, q_targ, cfg.suppression);
        learn::WeightInputs wi;
        wi.k = k;
        wi.q_star_at_a = q_star;
        wi.max_tracked_q_star = max_role;
        wi.q_sub_at_a = qk;
        wi.comparator = learn::suppression_comparator(y, a_flat, prefix, q_targ, cfg.suppression.alpha);
        w = learn::weight_wk(wi, cfg.weighting);
      }
      rep.per_k_loss[static_cast<std::size_t>(k)] += w * (qk - target) * (qk - target) / B;
    }
  }
  return rep;
}

// Moves every online network away from its target so that the target terms
// are not trivially equal to the online ones.
void desync_targets(learn::Learner& L, Rng& rng) {
  auto& ens = L.ensemble();
  for (int k = 0; k <= L.K(); ++k) {
    for (double& v : ens.sub(k).params.values) v += rng.uniform(-0.05, 0.05);
  }
  for (double& v : ens.critic().params.values) v += rng.uniform(-0.05, 0.05);
}

// A batch has hundreds of relu units, so a 1e-5 step occasionally straddles
// a kink; such coordinates are re-checked with a smaller step.
double worst_fd(std::vector<double>& params, std::span<const double> analytic,
                const std::function<double()>& loss) {
  const auto coarse = testing::numeric_gradient(params, loss);
  const auto fine = testing::numeric_gradient(params, loss, 1e-7);
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    worst = std::max(worst, std::min(testing::relative_error(analytic[i], coarse[i]),
                                     testing::relative_error(analytic[i], fine[i])));
  }
  return worst;
}

}  // namespace

TEST_CASE("suppressed target") {
  learn::SuppressionConfig cfg;
  const std::vector<int> prefix{0, 4};
  CHECK(learn::suppressed_target(8.0, 8, prefix, 8.0, cfg) == 8.0);
  CHECK(learn::suppressed_target(8.0, 0, prefix, 8.0, cfg) == 0.0);
  CHECK(learn::suppressed_target(8.0, 4, std::span<const int>(prefix).first(1), 7.0, cfg) == 8.0);
  cfg.use_floor = true;
  CHECK(learn::suppressed_target(8.0, 0, prefix, -3.0, cfg) == doctest::Approx(7.9).epsilon(1e-15));
  CHECK(learn::suppressed_target(8.0, 0, prefix, 5.0, cfg) == 3.0);
  // k = 0 has an empty prefix: never suppressed.
  CHECK(learn::suppressed_target(8.0, 0, {}, 8.0, cfg) == 8.0);
  CHECK(learn::suppression_comparator(8.0, 0, prefix, -3.0, 1.0) == 11.0);
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("weighting rule") {
  learn::WeightingConfig cfg;
  learn::WeightInputs in;
  in.k = 0;
  in.q_star_at_a = 9.0;
  in.max_tracked_q_star = 8.0;
  CHECK(learn::weight_wk(in, cfg) == 1.0);
  in.q_star_at_a = 5.0;
  cfg.w_c = 0.75;
  CHECK(learn::weight_wk(in, cfg) == 0.75);
  in.k = 1;
  in.q_sub_at_a = 3.0;
  in.comparator = 4.0;
  CHECK(learn::weight_wk(in, cfg) == 1.0);
  in.q_sub_at_a = 4.0;
  CHECK(learn::weight_wk(in, cfg) == 0.75);

  Rng rng(3);
  for (int i = 0; i < 200; ++i) {
    in.k = rng.uniform_int(3);
    in.q_star_at_a = rng.uniform(-5, 5);
    in.max_tracked_q_star = rng.uniform(-5, 5);
    in.q_sub_at_a = rng.uniform(-5, 5);
    in.comparator = rng.uniform(-5, 5);
    const double w = learn::weight_wk(in, cfg);
    CHECK((w == 1.0 || w == cfg.w_c));
  }
  CHECK(learn::wqmix_weight(1.0, 2.0, cfg) == 1.0);
  CHECK(learn::wqmix_weight(2.0, 2.0, cfg) == 0.75);
  cfg.w_c = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("mean squared TD error") {
  const std::vector<double> q{2.0}, y{5.0};
  CHECK(learn::mean_squared_td(q, y) == 9.0);
  const std::vector<double> same{1.0, -2.0};
  CHECK(learn::mean_squared_td(same, same) == 0.0);
  CHECK_THROWS_AS(learn::mean_squared_td(q, same), UsageError);
}

TEST_CASE("replay buffer") {
  auto exp = cli::make_experiment(testing::coord_config());
  Rng rng(4);
  learn::ReplayBuffer buf(5, 3);
  CHECK_THROWS_AS(buf.sample(rng), UsageError);
  for (int i = 0; i < 12; ++i) {
    buf.push(testing::random_episode(exp, rng));
    CHECK(buf.size() == std::min<std::size_t>(static_cast<std::size_t>(i + 1), 5));
  }
  const auto batch = buf.sample(rng);
  CHECK(batch.size() == 3);
  CHECK(batch[0] != batch[1]);
  CHECK(batch[1] != batch[2]);
  CHECK(batch[0] != batch[2]);
  CHECK_THROWS_AS(buf.push(learn::EpisodeRecord{}), UsageError);
  CHECK_THROWS_AS(learn::ReplayBuffer(0, 1), ConfigError);

  // Uniform over stored episodes.
  learn::ReplayBuffer one(4, 1);
  for (int i = 0; i < 4; ++i) one.push(testing::random_episode(exp, rng));
  std::vector<int> hits(4, 0);
  for (int i = 0; i < 20000; ++i) {
    const auto* p = one.sample(rng)[0];
    for (std::size_t j = 0; j < 4; ++j) hits[j] += (&one.at(j) == p);
  }
  for (int h : hits) CHECK(std::abs(h / 20000.0 - 0.25) < 0.015);

  learn::Learner& L = as_network(exp);
  learn::ReplayBuffer empty(3, 3);
  CHECK_THROWS_AS(L.train_step(empty, rng), UsageError);
}

TEST_CASE("batch losses match a per-sample reference") {
  for (const std::string algo : {"s2q", "qmix", "wqmix", "s2q_comm"}) {
    INFO(algo);
    auto cfg = testing::coord_config(algo);
    auto exp = cli::make_experiment(cfg);
    auto& L = as_network(exp);
    Rng rng(21);
    desync_targets(L, rng);
    const auto eps = testing::random_episodes(exp, 12, rng);
    // Repeat every sample so that the memoised evaluation sees duplicates.
    auto batch = testing::all_samples(eps);
    const auto copy = batch;
    batch.insert(batch.end(), copy.begin(), copy.begin() + 40);

    const auto got = L.compute_losses(batch);
    const auto want = reference_losses(L, batch);
    CHECK(got.critic_loss == doctest::Approx(want.critic_loss).epsilon(1e-12));
    REQUIRE(got.per_k_loss.size() == want.per_k_loss.size());
    for (std::size_t k = 0; k < got.per_k_loss.size(); ++k) {
      CHECK(got.per_k_loss[k] == doctest::Approx(want.per_k_loss[k]).epsilon(1e-12));
    }
  }
}

TEST_CASE("no_wTD scores with the first sub-value") {
  auto cfg = testing::coord_config();
  cfg.variant = "no_wTD";
  auto exp = cli::make_experiment(cfg);
  auto& L = as_network(exp);
  CHECK_FALSE(L.config().uses_critic());
  Rng rng(2);
  desync_targets(L, rng);
  const auto eps = testing::random_episodes(exp, 8, rng);
  const auto batch = testing::all_samples(eps);
  const auto got = L.compute_losses(batch);
  const auto want = reference_losses(L, batch);
  CHECK(got.critic_loss == 0.0);
  for (std::size_t k = 0; k < got.per_k_loss.size(); ++k) {
    CHECK(got.per_k_loss[k] == doctest::Approx(want.per_k_loss[k]).epsilon(1e-12));
  }
  const auto probe = cli::make_probe(exp, 0);
  const std::vector<int> j{1, 2};
  CHECK(L.q_star(probe.context(), j) == L.q_sub(0, probe.context(), j));
}

TEST_CASE("accumulated gradients match finite differences of the batch losses") {
  for (const std::string algo : {"s2q", "wqmix", "s2q_comm"}) {
    INFO(algo);
    auto exp = cli::make_experiment(testing::coord_config(algo));
    auto& L = as_network(exp);
    Rng rng(8);
    desync_targets(L, rng);
    const auto eps = testing::random_episodes(exp, 6, rng);
    auto batch = testing::all_samples(eps);
    const auto copy = batch;
    batch.insert(batch.end(), copy.begin(), copy.begin() + 10);

    L.compute_losses(batch, true);
    auto& ens = L.ensemble();
    for (int k = 0; k <= L.K(); ++k) {
      const std::vector<double> g(L.sub_gradient(k).begin(), L.sub_gradient(k).end());
      const double e = worst_fd(ens.sub(k).params.values, g, [&] {
        return L.compute_losses(batch).per_k_loss[static_cast<std::size_t>(k)];
      });
      INFO("sub-value " << k);
      CHECK(e <= testing::kFdTolerance);
    }
    if (L.config().uses_critic()) {
      const std::vector<double> g(L.critic_gradient().begin(), L.critic_gradient().end());
      CHECK(worst_fd(ens.critic().params.values, g, [&] { return L.compute_losses(batch).critic_loss; }) <=
            testing::kFdTolerance);
    }
    if (L.coder()) {
      const std::vector<double> g(L.coder_gradient().begin(), L.coder_gradient().end());
      CHECK(worst_fd(L.coder()->params.values, g, [&] { return L.compute_losses(batch).latent.total(); }) <=
            testing::kFdTolerance);
    }
  }
}

TEST_CASE("reduction: no suppression, K = 0, w_c = 1 is the plain TD projection") {
  auto cfg = testing::coord_config();
  cfg.K = 0;
  cfg.alpha = 0.0;
  cfg.w_c = 1.0;
  auto exp = cli::make_experiment(cfg);
  auto& L = as_network(exp);
  Rng rng(5);
  desync_targets(L, rng);
  const auto eps = testing::random_episodes(exp, 6, rng);
  const auto batch = testing::all_samples(eps);
  auto& ens = L.ensemble();
  double want = 0.0;
  for (const auto& s : batch) {
    const auto& ep = *s.episode;
    const auto t = static_cast<std::size_t>(s.t);
    const auto a1 = ens.greedy_joint_action(0, ep.windows[t + 1]);
    const double y = ep.rewards[t] + L.config().gamma * ens.critic_value(ep.state_features[t + 1], a1, true);
    const double q = ens.mix(0, ep.windows[t], ep.state_features[t], ep.actions[t]);
    want += (q - y) * (q - y) / static_cast<double>(batch.size());
  }
  CHECK(L.compute_losses(batch).per_k_loss[0] == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("baselines use a single sub-value") {
  for (const char* algo : {"qmix", "wqmix"}) {
    auto exp = cli::make_experiment(testing::coord_config(algo));
    CHECK(exp.learner->K() == 0);
    CHECK(as_network(exp).ensemble().K() == 0);
    CHECK(as_network(exp).coder() == nullptr);
  }
  CHECK_FALSE(cli::make_experiment(testing::coord_config("qmix")).learner->config().uses_critic());
  CHECK(cli::make_experiment(testing::coord_config("wqmix")).learner->config().uses_critic());
}

TEST_CASE("target networks refresh on schedule only") {
  auto cfg = testing::coord_config();
  cfg.target_update_interval = 3;
  auto exp = cli::make_experiment(cfg);
  auto& L = as_network(exp);
  Rng rng(6);
  learn::ReplayBuffer buf(20, 4);
  for (int i = 0; i < 10; ++i) buf.push(testing::random_episode(exp, rng));
  const auto probe = cli::make_probe(exp, 1);
  const std::vector<int> j{2, 0};
  auto& ens = L.ensemble();
  const double t0 = ens.critic_value(probe.features, j, true);
  const double s0 = ens.mix(1, probe.windows, probe.features, j, true);
  L.train_step(buf, rng);
  L.train_step(buf, rng);
  CHECK(ens.critic_value(probe.features, j, true) == t0);
  CHECK(ens.mix(1, probe.windows, probe.features, j, true) == s0);
  CHECK(ens.critic_value(probe.features, j) != t0);
  L.train_step(buf, rng);
  CHECK(ens.critic_value(probe.features, j, true) == ens.critic_value(probe.features, j));
  CHECK(ens.mix(1, probe.windows, probe.features, j, true) == ens.mix(1, probe.windows, probe.features, j));
}

TEST_CASE("training is deterministic and reduces the critic loss") {
  auto run = [](std::uint64_t seed) {
    auto exp = cli::make_experiment(testing::coord_config());
    auto& L = as_network(exp);
    Rng rng(seed);
    learn::ReplayBuffer buf(64, 16);
    for (int i = 0; i < 64; ++i) buf.push(testing::random_episode(exp, rng));
    std::vector<double> losses;
    for (int i = 0; i < 300; ++i) losses.push_back(L.train_step(buf, rng).critic_loss);
    return std::make_pair(losses, L.ensemble().sub(2).params.values);
  };
  const auto a = run(7);
  const auto b = run(7);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  for (double v : a.first) CHECK(std::isfinite(v));
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 30; ++i) {
    head += a.first[static_cast<std::size_t>(i)];
    tail += a.first[a.first.size() - 1 - static_cast<std::size_t>(i)];
  }
  CHECK(tail < head);
}

TEST_CASE("only latent-augmented utilities call the encoder outside the coder loss") {
  auto exp = cli::make_experiment(testing::coord_config("s2q"));
  auto& L = as_network(exp);
  REQUIRE(L.coder() != nullptr);
  const auto probe = cli::make_probe(exp, 2);
  const std::vector<int> j{0, 1};
  L.tracked_actions(probe.context());
  L.q_star(probe.context(), j);
  L.q_sub(1, probe.context(), j);
  CHECK(L.coder()->encode_calls() == 0);
  L.estimate_p(probe.context());
  CHECK(L.coder()->encode_calls() == 1);

  auto comm = cli::make_experiment(testing::coord_config("s2q_comm"));
  auto& C = as_network(comm);
  C.tracked_actions(probe.context());
  CHECK(C.coder()->encode_calls() == 1);
}

TEST_CASE("latent utilities can only be switched on before training") {
  auto exp = cli::make_experiment(testing::coord_config("s2q"));
  auto& L = as_network(exp);
  Rng rng(9);
  L.enable_comm_utilities(rng);
  CHECK(L.config().comm_utilities());
  CHECK(L.shape().latent_dim == L.config().latent_dim);

  auto other = cli::make_experiment(testing::coord_config("s2q"));
  auto& M = as_network(other);
  learn::ReplayBuffer buf(4, 2);
  for (int i = 0; i < 4; ++i) buf.push(testing::random_episode(other, rng));
  M.train_step(buf, rng);
  CHECK_THROWS_AS(M.enable_comm_utilities(rng), ConfigError);
}
