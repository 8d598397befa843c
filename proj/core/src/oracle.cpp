#include "s2q/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "s2q/errors.hpp"
#include "s2q/rng.hpp"

namespace s2q::oracle {

ValueIterationResult value_iteration(const env::DecPomdpSpec& spec, double tol, int max_iters) {
  spec.validate();
  const auto S = static_cast<std::size_t>(spec.n_states);
  const auto J = static_cast<std::size_t>(spec.n_joint_actions());
  ValueIterationResult res;
  res.q.assign(S, std::vector<double>(J, 0.0));
  std::vector<double> v(S, 0.0);
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t s = 0; s < S; ++s) v[s] = *std::max_element(res.q[s].begin(), res.q[s].end());
    double residual = 0.0;
    for (std::size_t s = 0; s < S; ++s) {
      for (std::size_t a = 0; a < J; ++a) {
        double next = 0.0;
        const auto& row = spec.transition[s][a];
        for (std::size_t s1 = 0; s1 < S; ++s1) next += row[s1] * v[s1];
        const double q = spec.reward[s][a] + spec.gamma * next;
        residual = std::max(residual, std::abs(q - res.q[s][a]));
        res.q[s][a] = q;
      }
    }
    res.iterations = it;
    res.residual = residual;
    if (residual <= tol) return res;
  }
  throw NumericalError("value_iteration: no convergence within " + std::to_string(max_iters) +
                       " iterations (residual " + std::to_string(res.residual) + ")");
}

std::vector<RankedAction> top_k_actions(std::span<const double> row, int K) {
  if (K < 0 || static_cast<std::size_t>(K) + 1 > row.size()) {
    throw UsageError("top_k_actions: K + 1 = " + std::to_string(K + 1) + " exceeds " +
                     std::to_string(row.size()) + " joint actions");
  }
  std::vector<int> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  const auto mid = idx.begin() + K + 1;
  std::partial_sort(idx.begin(), mid, idx.end(), [&](int a, int b) {
    const double va = row[static_cast<std::size_t>(a)];
    const double vb = row[static_cast<std::size_t>(b)];
    return va != vb ? va > vb : a < b;
  });
  std::vector<RankedAction> out;
  for (auto it = idx.begin(); it != mid; ++it) out.push_back({*it, row[static_cast<std::size_t>(*it)]});
  return out;
}

AlphaBound alpha_bound(const std::vector<std::vector<double>>& q_star, int K, double floor_c) {
  AlphaBound b;
  for (const auto& row : q_star) {
    const auto ranked = top_k_actions(row, K);
    std::vector<double> per_k(static_cast<std::size_t>(K + 1), 0.0);
    for (int k = 1; k <= K; ++k) {
      double best = 0.0;
      for (int j = 0; j < k; ++j) {
        const double qj = ranked[static_cast<std::size_t>(j)].value;
        const double qk = ranked[static_cast<std::size_t>(k)].value;
        best = std::max(best, (qj - qk) / std::max(qj, floor_c));
      }
      per_k[static_cast<std::size_t>(k)] = best;
      b.overall = std::max(b.overall, best);
    }
    b.per_state_k.push_back(std::move(per_k));
  }
  return b;
}

namespace {

int argmax_lowest(std::span<const double> row) {
  return static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
}

}  // namespace

std::vector<std::vector<double>> fixed_point_subvalues(std::span<const double> q_row, int K,
                                                       double alpha, double floor_c) {
  std::vector<std::vector<double>> subs;
  std::vector<int> tracked;
  for (int k = 0; k <= K; ++k) {
    std::vector<double> qk(q_row.begin(), q_row.end());
    for (int a : tracked) {
      const auto au = static_cast<std::size_t>(a);
      qk[au] = q_row[au] - alpha * std::max(q_row[au], floor_c);
    }
    tracked.push_back(argmax_lowest(qk));
    subs.push_back(std::move(qk));
  }
  return subs;
}

TheoremReport verify_theorem(const std::vector<std::vector<double>>& q_star, int K, double alpha,
                             double floor_c) {
  if (!(alpha >= 0.0)) throw UsageError("verify_theorem: alpha must be >= 0");
  TheoremReport rep;
  rep.per_k_pass.assign(static_cast<std::size_t>(K + 1), true);
  rep.margin = std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < q_star.size(); ++s) {
    const auto& row = q_star[s];
    const auto ranked = top_k_actions(row, K);
    const auto subs = fixed_point_subvalues(row, K, alpha, floor_c);
    for (int k = 0; k <= K; ++k) {
      const auto ku = static_cast<std::size_t>(k);
      const auto& qk = subs[ku];
      const int got = argmax_lowest(qk);
      const int expected = ranked[ku].joint;
      double competitor = -std::numeric_limits<double>::infinity();
      for (std::size_t a = 0; a < qk.size(); ++a) {
        if (static_cast<int>(a) != expected) competitor = std::max(competitor, qk[a]);
      }
      rep.margin = std::min(rep.margin, qk[static_cast<std::size_t>(expected)] - competitor);
      const bool ok = got == expected || row[static_cast<std::size_t>(got)] == ranked[ku].value;
      if (!ok) {
        rep.per_k_pass[ku] = false;
        if (rep.pass) {
          rep.witness_state = static_cast<int>(s);
          rep.witness_k = k;
          rep.witness_argmax = got;
          rep.witness_expected = expected;
        }
        rep.pass = false;
      }
    }
  }
  return rep;
}

std::vector<double> random_payoff(int n_agents, int n_actions, std::uint64_t seed) {
  const auto J = static_cast<std::size_t>(env::num_joint_actions(n_agents, n_actions));
  Rng rng(seed);
  std::vector<double> row(J);
  for (;;) {
    for (auto& v : row) v = rng.uniform(-10.0, 10.0);
    auto sorted = row;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end()) return row;
  }
}

void TheoremSweepConfig::validate() const {
  if (instances <= 0) throw ConfigError("instances: must be positive");
  if (agents <= 0) throw ConfigError("agents: must be positive");
  if (actions <= 0) throw ConfigError("actions: must be positive");
  if (K < 0) throw ConfigError("k: must be >= 0");
  if (K + 1 > env::num_joint_actions(agents, actions)) {
    throw ConfigError("k: K + 1 exceeds the number of joint actions");
  }
  if (!(floor_c > 0.0)) throw ConfigError("c: must be positive");
  if (alpha && !(*alpha >= 0.0)) throw ConfigError("alpha: must be >= 0");
}

TheoremSweep verify_theorem_sweep(const TheoremSweepConfig& cfg) {
  cfg.validate();
  TheoremSweep sweep;
  int passed = 0;
  sweep.worst_margin = std::numeric_limits<double>::infinity();
  for (int i = 0; i < cfg.instances; ++i) {
    TheoremInstance inst;
    inst.seed = mix_seed(cfg.seed, static_cast<std::uint64_t>(i));
    const std::vector<std::vector<double>> q = {random_payoff(cfg.agents, cfg.actions, inst.seed)};
    inst.bound = alpha_bound(q, cfg.K, cfg.floor_c).overall;
    inst.alpha = cfg.alpha ? *cfg.alpha : inst.bound + cfg.alpha_slack;
    inst.report = verify_theorem(q, cfg.K, inst.alpha, cfg.floor_c);
    if (inst.report.pass) ++passed;
    sweep.worst_margin = std::min(sweep.worst_margin, inst.report.margin);
    sweep.instances.push_back(std::move(inst));
  }
  sweep.pass_rate = static_cast<double>(passed) / static_cast<double>(cfg.instances);
  return sweep;
}

std::string theorem_sweep_json(const TheoremSweepConfig& cfg, const TheoremSweep& sweep) {
  using nlohmann::ordered_json;
  ordered_json doc;
  doc["format"] = "s2q-theorem-report/1";
  doc["instances"] = cfg.instances;
  doc["agents"] = cfg.agents;
  doc["actions"] = cfg.actions;
  doc["k"] = cfg.K;
  doc["c"] = cfg.floor_c;
  doc["seed"] = cfg.seed;
  doc["alpha"] = cfg.alpha ? ordered_json(*cfg.alpha) : ordered_json("bound+" + std::to_string(cfg.alpha_slack));
  doc["pass_rate"] = sweep.pass_rate;
  doc["worst_margin"] = sweep.worst_margin;
  auto& arr = doc["results"] = ordered_json::array();
  for (const auto& inst : sweep.instances) {
    ordered_json r;
    r["seed"] = inst.seed;
    r["bound"] = inst.bound;
    r["alpha"] = inst.alpha;
    r["pass"] = inst.report.pass;
    r["per_k_pass"] = inst.report.per_k_pass;
    r["margin"] = inst.report.margin;
    if (inst.report.witness_k) {
      r["witness"] = {{"state", *inst.report.witness_state},
                      {"k", *inst.report.witness_k},
                      {"argmax", *inst.report.witness_argmax},
                      {"expected", *inst.report.witness_expected}};
    } else {
      r["witness"] = nullptr;
    }
    arr.push_back(std::move(r));
  }
  return doc.dump(2) + "\n";
}

}  // namespace s2q::oracle
