#pragma once

// Ground truth by enumeration: joint value iteration, top-(K+1) joint-action
// ranking, the lower bound on the suppression factor, and a checker for the
// successive-argmax property of the closed-form suppression fixed point.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "s2q/envs.hpp"

namespace s2q::oracle {

struct ValueIterationResult {
  std::vector<std::vector<double>> q;  // [s][flat joint action]
  int iterations = 0;
  double residual = 0.0;
};

// Q(s,a) = r(s,a) + gamma * sum_s' P(s'|s,a) max_a' Q(s',a'), iterated until
// the sup-norm Bellman residual is <= tol. Throws NumericalError if the cap is
// hit first.
ValueIterationResult value_iteration(const env::DecPomdpSpec& spec, double tol = 1e-10,
                                     int max_iters = 100000);

struct RankedAction {
  int joint = 0;
  double value = 0.0;
};

// First K+1 entries of the row sorted by value descending, ties by flat index
// ascending. Throws UsageError if K + 1 exceeds the row length.
std::vector<RankedAction> top_k_actions(std::span<const double> row, int K);

struct AlphaBound {
  std::vector<std::vector<double>> per_state_k;  // [s][k], k = 0 entry is 0
  double overall = 0.0;
};

// For each state and k >= 1, with a*_0..a*_K the ranking of the row:
//   max over j < k of (Q(a*_j) - Q(a*_k)) / max(Q(a*_j), C), clamped at 0.
AlphaBound alpha_bound(const std::vector<std::vector<double>>& q_star, int K, double floor_c);

struct TheoremReport {
  bool pass = true;
  std::vector<bool> per_k_pass;
  // First failing (state, k): the argmax found vs the expected ranked action.
  std::optional<int> witness_state;
  std::optional<int> witness_k;
  std::optional<int> witness_argmax;
  std::optional<int> witness_expected;
  // Smallest gap between the k-th ranked action's fixed-point value and the
  // best competing action, over all (state, k). Negative on failure.
  double margin = 0.0;
};

// Fixed point of the suppression recursion:
//   Q_k(a) = Q*(a) - alpha * max(Q*(a), C)  if a in A_{k-1}, else Q*(a)
// where A_{k-1} holds the argmaxes of Q_0..Q_{k-1} (lowest index on ties).
std::vector<std::vector<double>> fixed_point_subvalues(std::span<const double> q_row, int K,
                                                       double alpha, double floor_c);

// Compares argmax Q_k with the k-th ranked action of Q* for every state and k.
// With ties in the ranking any action attaining the k-th ranked value is
// accepted.
TheoremReport verify_theorem(const std::vector<std::vector<double>>& q_star, int K, double alpha,
                             double floor_c);

// Single-state payoff with i.i.d. uniform [-10, 10] entries over all joint
// actions, redrawn until all entries are distinct.
std::vector<double> random_payoff(int n_agents, int n_actions, std::uint64_t seed);

struct TheoremSweepConfig {
  int instances = 100;
  int agents = 2;
  int actions = 4;
  int K = 2;
  double floor_c = 0.1;
  std::uint64_t seed = 0;
  std::optional<double> alpha;  // default: per-instance bound + 0.01
  double alpha_slack = 0.01;

  void validate() const;
};

struct TheoremInstance {
  std::uint64_t seed = 0;
  double bound = 0.0;
  double alpha = 0.0;
  TheoremReport report;
};

struct TheoremSweep {
  std::vector<TheoremInstance> instances;
  double pass_rate = 0.0;
  double worst_margin = 0.0;
};

TheoremSweep verify_theorem_sweep(const TheoremSweepConfig& cfg);
// Structured report (JSON text).
std::string theorem_sweep_json(const TheoremSweepConfig& cfg, const TheoremSweep& sweep);

}  // namespace s2q::oracle
