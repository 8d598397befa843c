#include <cmath>
#include <numeric>
#include <vector>

#include "doctest.h"
#include "s2q/behavior.hpp"
#include "s2q/envs.hpp"
#include "s2q/errors.hpp"

using namespace s2q;
using behavior::Variant;

namespace {

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

behavior::SoftmaxDistribution dist(std::vector<double> p) { return {std::move(p), behavior::Source::kExact}; }

}  // namespace

TEST_CASE("softmax: equal values are uniform") {
  const std::vector<double> q{4, 4, 4};
  for (double p : behavior::softmax_p(q, 0.3).probs) CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-14));
}

TEST_CASE("softmax: closed form at T = 1") {
  const std::vector<double> q{8, 7, 6};
  const auto p = behavior::softmax_p(q, 1.0).probs;
  const double z = 1.0 + std::exp(-1.0) + std::exp(-2.0);
  CHECK(p[0] == doctest::Approx(1.0 / z).epsilon(1e-12));
  CHECK(p[1] == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-12));
  CHECK(p[2] == doctest::Approx(std::exp(-2.0) / z).epsilon(1e-12));
  CHECK(std::abs(p[0] - 0.6652) < 1e-4);
  CHECK(std::abs(p[1] - 0.2447) < 1e-4);
  CHECK(std::abs(p[2] - 0.0900) < 1e-4);
}

TEST_CASE("softmax: zero-temperature limit") {
  const std::vector<double> q{8, 7, 6};
  CHECK(behavior::softmax_p(q, 1e-6).probs[0] >= 0.999);
}

TEST_CASE("softmax: invariants") {
  Rng rng(9);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> q(4);
    for (double& v : q) v = rng.uniform(-10.0, 10.0);
    const double T = rng.uniform(0.05, 3.0);
    const auto p = behavior::softmax_p(q, T).probs;
    CHECK(std::abs(sum(p) - 1.0) <= 1e-12);
    auto shifted = q;
    for (double& v : shifted) v += 123.25;
    const auto ps = behavior::softmax_p(shifted, T).probs;
    for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(ps[k] - p[k]) <= 1e-12);
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 4; ++j) {
        if (q[i] > q[j]) CHECK(p[i] > p[j]);
      }
    }
  }
}

TEST_CASE("softmax: errors") {
  const std::vector<double> q{1, 2};
  CHECK_THROWS_AS(behavior::softmax_p(q, 0.0), UsageError);
  const std::vector<double> bad{1, std::nan("")};
  CHECK_THROWS_AS(behavior::softmax_p(bad, 1.0), NumericalError);
}

TEST_CASE("epsilon schedule") {
  behavior::BehaviorConfig cfg;
  CHECK(behavior::epsilon_at(0, cfg) == 1.0);
  CHECK(behavior::epsilon_at(cfg.epsilon_anneal_steps, cfg) == 0.05);
  CHECK(behavior::epsilon_at(10 * cfg.epsilon_anneal_steps, cfg) == 0.05);
  CHECK(behavior::epsilon_at(cfg.epsilon_anneal_steps / 2, cfg) == doctest::Approx(0.525));
}

TEST_CASE("k selection per variant") {
  Rng rng(4);
  const auto p = dist({0.2, 0.3, 0.5});
  behavior::BehaviorConfig cfg;
  const behavior::EpisodeSelection free_sel{false};

  SUBCASE("no_soft always picks 0") {
    for (int i = 0; i < 100; ++i) CHECK(behavior::select_k(p, p, Variant::kNoSoft, free_sel, 2, rng) == std::vector<int>{0, 0});
  }
  SUBCASE("random is uniform") {
    std::vector<int> counts(3, 0);
    const int n = 30000;
    for (int i = 0; i < n; ++i) {
      const auto ks = behavior::select_k(p, p, Variant::kRandom, free_sel, 2, rng);
      CHECK(ks[0] == ks[1]);
      ++counts[static_cast<std::size_t>(ks[0])];
    }
    for (int c : counts) CHECK(std::abs(c / double(n) - 1.0 / 3.0) < 0.01);
  }
  SUBCASE("fixed episodes act on k = 0") {
    const behavior::EpisodeSelection fixed{true};
    for (auto v : {Variant::kFull, Variant::kOracle}) {
      for (int i = 0; i < 50; ++i) CHECK(behavior::select_k(p, p, v, fixed, 3, rng) == std::vector<int>{0, 0, 0});
    }
  }
  SUBCASE("only full and oracle fix episodes") {
    cfg.fix_prob = 1.0;
    CHECK(behavior::begin_episode(Variant::kFull, cfg, rng).fixed_to_zero);
    CHECK(behavior::begin_episode(Variant::kOracle, cfg, rng).fixed_to_zero);
    for (auto v : {Variant::kIndependent, Variant::kNoWtd, Variant::kNoSoft, Variant::kRandom}) {
      CHECK_FALSE(behavior::begin_episode(v, cfg, rng).fixed_to_zero);
    }
  }
  SUBCASE("oracle samples the exact distribution, full the estimate") {
    const auto one_hot_exact = dist({0, 0, 1});
    const auto one_hot_est = dist({0, 1, 0});
    for (int i = 0; i < 20; ++i) {
      CHECK(behavior::select_k(one_hot_est, one_hot_exact, Variant::kOracle, free_sel, 2, rng)[0] == 2);
      CHECK(behavior::select_k(one_hot_est, one_hot_exact, Variant::kFull, free_sel, 2, rng)[0] == 1);
    }
  }
  SUBCASE("coordinated variants share k, independent does not have to") {
    const auto even = dist({1.0 / 3, 1.0 / 3, 1.0 / 3});
    bool differ = false;
    for (int i = 0; i < 200; ++i) {
      for (auto v : {Variant::kFull, Variant::kOracle, Variant::kNoWtd, Variant::kRandom}) {
        const auto ks = behavior::select_k(even, even, v, free_sel, 3, rng);
        CHECK((ks[0] == ks[1] && ks[1] == ks[2]));
      }
      const auto ks = behavior::select_k(even, even, Variant::kIndependent, free_sel, 3, rng);
      differ = differ || ks[0] != ks[1] || ks[1] != ks[2];
    }
    CHECK(differ);
  }
}

TEST_CASE("epsilon-greedy action selection") {
  Rng rng(8);
  const std::vector<std::vector<std::vector<double>>> util{{{1, 5, 2}, {0, 0, 9}}, {{7, 0, 0}, {0, 3, 0}}};
  const std::vector<int> k0{0, 0}, mixed{1, 0};
  CHECK(behavior::act(util, k0, 0.0, rng) == std::vector<int>{1, 2});
  CHECK(behavior::act(util, mixed, 0.0, rng) == std::vector<int>{0, 2});

  // epsilon = 1: uniform over the 9 joint actions, chi-square with 8 dof.
  std::vector<int> counts(9, 0);
  const int n = 100000;
  for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(env::flat_joint_action(behavior::act(util, k0, 1.0, rng), 3))];
  double chi2 = 0.0;
  for (int c : counts) chi2 += (c - n / 9.0) * (c - n / 9.0) / (n / 9.0);
  CHECK(chi2 < 26.12);  // 0.999 quantile

  const std::vector<std::vector<int>> tracked{{1, 2}, {0, 1}};
  CHECK(behavior::act_tracked(tracked, mixed, 3, 0.0, rng) == std::vector<int>{0, 2});
}

TEST_CASE("exact behavior distribution") {
  const std::vector<std::vector<int>> tracked{{0, 0}, {1, 1}, {2, 2}};
  const std::vector<double> q{8, 7, 6};
  const auto p = behavior::softmax_p(q, 1.0).probs;
  const auto d = behavior::behavior_joint_distribution(p, tracked, 3, 0.0);
  CHECK(std::abs(sum(d) - 1.0) <= 1e-12);
  CHECK(d[0] == doctest::Approx(p[0]));
  CHECK(d[4] == doctest::Approx(p[1]));
  CHECK(d[8] == doctest::Approx(p[2]));

  const std::vector<int> aa{0, 0};
  const auto base = behavior::epsilon_greedy_joint_distribution(aa, 3, 0.05);
  CHECK(std::abs(sum(base) - 1.0) <= 1e-12);
  CHECK(base[0] == doctest::Approx((0.95 + 0.05 / 3) * (0.95 + 0.05 / 3)));
  CHECK(behavior::entropy(d) > behavior::entropy(base));
  CHECK(std::max_element(d.begin(), d.end()) - d.begin() == 0);

  // epsilon = 0 and T -> 0: everything on a*_0.
  const auto cold = behavior::behavior_joint_distribution(behavior::softmax_p(q, 1e-6).probs, tracked, 3, 0.0);
  CHECK(cold[0] == doctest::Approx(1.0));
}

TEST_CASE("variant names round trip") {
  for (auto v : {Variant::kFull, Variant::kOracle, Variant::kIndependent, Variant::kNoWtd, Variant::kNoSoft, Variant::kRandom}) {
    CHECK(behavior::parse_variant(behavior::variant_name(v)) == v);
  }
  CHECK_THROWS_AS(behavior::parse_variant("greedy"), ConfigError);
}
