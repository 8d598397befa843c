#include "s2q/runner.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <ostream>
#include <sstream>

#include "json.hpp"
#include "s2q/comm.hpp"
#include "s2q/errors.hpp"
#include "s2q/tabular.hpp"

namespace s2q::cli {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

env::MatrixGameSpec fig1_game(const RunConfig& c) {
  const double off = c.off_diagonal
                         ? *c.off_diagonal
                         : env::fig1_off_diagonal(c.preset == "hard" ? env::Fig1Preset::kHard
                                                                     : env::Fig1Preset::kEasy);
  return env::matrix_game_fig1(off, c.steps_pre_shift);
}

// Fixed-format number for CSV output.
std::string num(double v) {
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

int payoff_argmax(const std::vector<std::vector<double>>& payoff) {
  const int A = static_cast<int>(payoff.size());
  int best = 0;
  double best_v = payoff[0][0];
  for (int ja = 0; ja < A * A; ++ja) {
    const double v = payoff[static_cast<std::size_t>(ja % A)][static_cast<std::size_t>(ja / A)];
    if (v > best_v) {
      best_v = v;
      best = ja;
    }
  }
  return best;
}

std::vector<int> flatten_all(const std::vector<std::vector<int>>& joints, int n_actions) {
  std::vector<int> out;
  out.reserve(joints.size());
  for (const auto& j : joints) out.push_back(env::flat_joint_action(j, n_actions));
  return out;
}

// The estimate's argmax is one of the maximisers of the exact P.
bool argmax_agrees(const std::vector<double>& est, const std::vector<double>& exact) {
  const double top = *std::max_element(exact.begin(), exact.end());
  return exact[static_cast<std::size_t>(nets::argmax(est))] >= top - 1e-12;
}

int probe_state(const Experiment& exp) {
  const auto& d = exp.env.active_spec().initial_state_dist;
  return static_cast<int>(std::max_element(d.begin(), d.end()) - d.begin());
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("out_dir: cannot write " + p.string());
  out << text;
}

// Per-agent observation history of the running episode.
struct EpisodeHistory {
  std::vector<std::vector<std::vector<double>>> obs;
  std::vector<std::vector<int>> actions;
  std::vector<double> rewards;

  void start(const env::Environment& e, int s) {
    obs.assign(1, {});
    for (int i = 0; i < e.n_agents(); ++i) obs[0].push_back(e.observation(s, i));
    actions.clear();
    rewards.clear();
  }
  std::vector<std::vector<double>> windows(const nets::HistoryLayout& layout, int t) const {
    std::vector<std::vector<double>> w;
    for (std::size_t i = 0; i < obs[0].size(); ++i) {
      w.push_back(nets::history_window(layout, obs, actions, rewards, t, static_cast<int>(i)));
    }
    return w;
  }
};

}  // namespace

std::vector<double> Experiment::state_features(int s) const {
  auto f = env.state_features(s);
  if (cfg.state_target == "centered") {
    const double c = 1.0 / static_cast<double>(f.size());
    for (double& x : f) x -= c;
  }
  return f;
}

Experiment make_experiment(const RunConfig& cfg) {
  cfg.validate();
  Experiment e;
  e.cfg = cfg;
  e.env = cfg.is_matrix_game() ? env::Environment::from_matrix_game(fig1_game(cfg))
                               : env::Environment::from_spec(env::load_spec(cfg.env));
  e.shape.n_agents = e.env.n_agents();
  e.shape.n_actions = e.env.n_actions();
  e.shape.state_dim = e.env.state_dim();
  e.shape.history = {e.env.obs_dim(), e.env.n_actions(), cfg.resolved_history_window()};
  e.shape.net = cfg.network_config();
  const auto lcfg = cfg.learner_config(e.env.active_spec().gamma);
  Rng init(mix_seed(cfg.seed, 1));
  if (cfg.tabular) {
    e.learner = std::make_unique<learn::TabularLearner>(lcfg, e.env.n_states(), e.env.n_agents(),
                                                        e.env.n_actions());
  } else {
    e.learner = std::make_unique<learn::Learner>(lcfg, e.shape, init);
  }
  return e;
}

Probe make_probe(const Experiment& exp, int state) {
  Probe p;
  p.state = state;
  p.features = exp.state_features(state);
  EpisodeHistory h;
  h.start(exp.env, state);
  p.windows = h.windows(exp.shape.history, 0);
  return p;
}

RunSummary run(const RunConfig& cfg_in, const std::filesystem::path& out_dir, std::ostream* log) {
  const auto t0 = std::chrono::steady_clock::now();
  auto exp = make_experiment(cfg_in);
  exp.cfg.out_dir = out_dir.string();
  const RunConfig& cfg = exp.cfg;
  std::filesystem::create_directories(out_dir);
  write_file(out_dir / "config.json", run_config_to_json(cfg));

  auto& L = *exp.learner;
  auto& E = exp.env;
  const int N = E.n_agents();
  const int A = E.n_actions();
  const int K = L.K();
  const auto K1 = static_cast<std::size_t>(K + 1);
  const auto& layout = exp.shape.history;
  const auto variant = behavior::parse_variant(cfg.variant);
  const auto bcfg = cfg.behavior_config();
  const std::int64_t total = cfg.total_steps();

  Rng env_rng(mix_seed(cfg.seed, 2));
  Rng act_rng(mix_seed(cfg.seed, 3));
  Rng train_rng(mix_seed(cfg.seed, 4));
  learn::ReplayBuffer buffer(static_cast<std::size_t>(cfg.buffer_size),
                             static_cast<std::size_t>(cfg.batch_size));

  RunSummary sum;
  if (E.is_matrix_game()) {
    const auto game = fig1_game(cfg);
    sum.pre_shift_optimum = payoff_argmax(game.payoff_pre);
    sum.post_shift_optimum = payoff_argmax(game.payoff_post);
  }
  const Probe probe = make_probe(exp, probe_state(exp));

  std::ostringstream csv;
  csv << kMetricsVersion << "\n";
  csv << "step,episode,phase,episode_return,epsilon,critic_loss,successive_loss";
  for (int k = 0; k <= K; ++k) csv << ",greedy_k" << k;
  for (int k = 0; k <= K; ++k) csv << ",qstar_k" << k;
  for (int k = 0; k <= K; ++k) csv << ",kcount_" << k;
  csv << ",ce,mse,agreement\n";

  learn::TrainMetrics last_train;
  bool trained = false;
  double last_return = std::nan("");
  std::vector<std::int64_t> kcount(K1, 0);
  std::int64_t agree_hits = 0;
  std::int64_t agree_total = 0;
  std::int64_t step = 0;
  std::int64_t episode = 0;
  std::int64_t next_log = cfg.log_interval;
  std::int64_t streak_start = -1;
  bool shift_seen = !E.is_matrix_game() || cfg.steps_pre_shift == 0;
  EpisodeHistory hist;

  auto write_rows = [&]() {
    while (next_log <= step) {
      const auto ctx = probe.context();
      const auto tracked = L.tracked_actions(ctx);
      const auto role = L.prioritization_values(ctx, tracked);
      const char* phase = !E.is_matrix_game() ? "train" : (next_log <= cfg.steps_pre_shift ? "pre" : "post");
      csv << next_log << ',' << episode << ',' << phase << ',' << num(last_return) << ','
          << num(behavior::epsilon_at(next_log, bcfg)) << ','
          << num(trained ? last_train.critic_loss : std::nan("")) << ','
          << num(trained ? last_train.successive_loss : std::nan(""));
      for (const auto& j : tracked) csv << ',' << env::flat_joint_action(j, A);
      for (double v : role) csv << ',' << num(v);
      for (auto c : kcount) csv << ',' << c;
      const bool coder = L.estimate_p(ctx).has_value();
      csv << ',' << num(trained && coder ? last_train.ce : std::nan("")) << ','
          << num(trained && coder ? last_train.mse : std::nan("")) << ','
          << num(agree_total > 0 ? static_cast<double>(agree_hits) / static_cast<double>(agree_total)
                                 : std::nan(""))
          << '\n';
      agree_hits = 0;
      agree_total = 0;
      next_log += cfg.log_interval;
    }
  };

  while (step < total) {
    if (!shift_seen && step >= cfg.steps_pre_shift) {
      sum.pre_shift_tracked = flatten_all(L.tracked_actions(probe.context()), A);
      shift_seen = true;
    }
    int s = E.reset(env_rng);
    const auto sel = behavior::begin_episode(variant, bcfg, act_rng);
    hist.start(E, s);
    learn::EpisodeRecord rec;
    std::vector<std::int64_t> ep_k(K1, 0);

    for (int t = 0;; ++t) {
      auto windows = hist.windows(layout, t);
      auto feats = exp.state_features(s);
      const learn::StepContext ctx{s, feats, &windows};
      const auto tracked = L.tracked_actions(ctx);
      const double eps = behavior::epsilon_at(step, bcfg);
      std::vector<int> ks(static_cast<std::size_t>(N), 0);
      if (K > 0) {
        const auto exact = L.exact_p(ctx, tracked);
        const auto est = L.estimate_p(ctx);
        if (est) {
          ++agree_total;
          if (argmax_agrees(est->probs, exact.probs)) ++agree_hits;
        }
        ks = behavior::select_k(est ? *est : exact, exact, variant, sel, N, act_rng);
      }
      const auto joint = behavior::act_tracked(tracked, ks, A, eps, act_rng);
      for (int k : ks) ++ep_k[static_cast<std::size_t>(k)];

      if (E.is_matrix_game() && E.post_shift()) {
        if (env::flat_joint_action(tracked[0], A) == sum.post_shift_optimum) {
          if (streak_start < 0) streak_start = step;
          if (!sum.adaptation_step && step - streak_start + 1 >= cfg.adaptation_window) {
            sum.adaptation_step = streak_start - cfg.steps_pre_shift;
          }
        } else {
          streak_start = -1;
        }
      }

      const auto tr = E.step(joint, env_rng);
      rec.states.push_back(s);
      rec.state_features.push_back(std::move(feats));
      rec.windows.push_back(std::move(windows));
      rec.actions.push_back(joint);
      rec.joint_actions.push_back(tr.joint_action);
      rec.rewards.push_back(tr.reward);
      rec.terminal.push_back(tr.terminal ? 1 : 0);
      rec.chosen_k.push_back(ks[0]);
      rec.tracked_flat.push_back(flatten_all(tracked, A));

      hist.actions.push_back(joint);
      hist.rewards.push_back(tr.reward);
      hist.obs.push_back(tr.next_observations);
      ++step;
      s = tr.next_state;
      if (tr.terminal || step >= total) {
        rec.states.push_back(s);
        rec.state_features.push_back(exp.state_features(s));
        rec.windows.push_back(hist.windows(layout, t + 1));
        break;
      }
    }
    ++episode;
    last_return = rec.episode_return();
    kcount = ep_k;
    buffer.push(std::move(rec));
    if (buffer.size() >= std::min<std::size_t>(buffer.batch_size(), buffer.capacity()) &&
        episode % cfg.train_every == 0) {
      last_train = L.train_step(buffer, train_rng);
      trained = true;
      sum.incidents += last_train.incidents;
      if (log) {
        for (const auto& msg : last_train.incident_messages) {
          *log << "incident at train step " << last_train.step << ": " << msg << "\n";
        }
      }
    }
    write_rows();
  }
  write_file(out_dir / "metrics.csv", csv.str());

  sum.env_steps = step;
  sum.episodes = episode;
  sum.train_steps = L.train_steps();
  sum.final_tracked = flatten_all(L.tracked_actions(probe.context()), A);
  sum.final_greedy = sum.final_tracked.at(0);

  // Greedy evaluation: k = 0, no exploration, no P.
  if (cfg.eval_episodes > 0) {
    auto ev = E;
    Rng ev_rng(mix_seed(cfg.seed, 6));
    double total_return = 0.0;
    for (int e = 0; e < cfg.eval_episodes; ++e) {
      int s = ev.reset(ev_rng);
      hist.start(ev, s);
      for (int t = 0;; ++t) {
        const auto windows = hist.windows(layout, t);
        const auto feats = exp.state_features(s);
        const auto tracked = L.tracked_actions({s, feats, &windows});
        const auto tr = ev.step(tracked[0], ev_rng);
        total_return += tr.reward;
        hist.actions.push_back(tracked[0]);
        hist.rewards.push_back(tr.reward);
        hist.obs.push_back(tr.next_observations);
        s = tr.next_state;
        if (tr.terminal) break;
      }
    }
    sum.eval_return = total_return / cfg.eval_episodes;
  }

  // Held-out rollouts of the behavior policy: P-hat against exact P.
  if (K > 0 && cfg.holdout_episodes > 0 && L.estimate_p(probe.context())) {
    auto ho = E;
    Rng ho_env(mix_seed(cfg.seed, 7));
    Rng ho_act(mix_seed(cfg.seed, 8));
    double gap = 0.0;
    std::int64_t hits = 0;
    std::int64_t n = 0;
    for (int e = 0; e < cfg.holdout_episodes; ++e) {
      int s = ho.reset(ho_env);
      const auto sel = behavior::begin_episode(variant, bcfg, ho_act);
      hist.start(ho, s);
      for (int t = 0;; ++t) {
        const auto windows = hist.windows(layout, t);
        const auto feats = exp.state_features(s);
        const learn::StepContext ctx{s, feats, &windows};
        const auto tracked = L.tracked_actions(ctx);
        const auto exact = L.exact_p(ctx, tracked);
        const auto est = *L.estimate_p(ctx);
        gap += comm::cross_entropy(exact.probs, est.probs) - behavior::entropy(exact.probs);
        if (argmax_agrees(est.probs, exact.probs)) ++hits;
        ++n;
        const auto ks = behavior::select_k(est, exact, variant, sel, N, ho_act);
        const auto joint = behavior::act_tracked(tracked, ks, A, bcfg.epsilon_end, ho_act);
        const auto tr = ho.step(joint, ho_env);
        hist.actions.push_back(joint);
        hist.rewards.push_back(tr.reward);
        hist.obs.push_back(tr.next_observations);
        s = tr.next_state;
        if (tr.terminal) break;
      }
    }
    sum.holdout_ce_gap = gap / static_cast<double>(n);
    sum.holdout_agreement = static_cast<double>(hits) / static_cast<double>(n);
  }

  save_checkpoint(out_dir / "checkpoint.json", exp);
  sum.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_file(out_dir / "summary.json", summary_to_json(cfg, sum));
  if (log) {
    *log << "run finished: " << step << " steps, " << episode << " episodes, "
         << sum.train_steps << " train steps, " << num(sum.runtime_seconds) << " s\n";
  }
  return sum;
}

std::string summary_to_json(const RunConfig& cfg, const RunSummary& s) {
  ordered_json j;
  j["format"] = "s2q-summary/1";
  j["algorithm"] = cfg.algorithm;
  j["variant"] = cfg.variant;
  j["seed"] = cfg.seed;
  j["final_greedy"] = s.final_greedy;
  j["final_tracked"] = s.final_tracked;
  j["pre_shift_tracked"] = s.pre_shift_tracked;
  j["pre_shift_optimum"] = s.pre_shift_optimum >= 0 ? ordered_json(s.pre_shift_optimum) : ordered_json(nullptr);
  j["post_shift_optimum"] = s.post_shift_optimum >= 0 ? ordered_json(s.post_shift_optimum) : ordered_json(nullptr);
  j["adaptation_step"] = s.adaptation_step ? ordered_json(*s.adaptation_step) : ordered_json(nullptr);
  j["eval_return"] = s.eval_return;
  j["holdout_ce_gap"] = s.holdout_ce_gap ? ordered_json(*s.holdout_ce_gap) : ordered_json(nullptr);
  j["holdout_agreement"] = s.holdout_agreement ? ordered_json(*s.holdout_agreement) : ordered_json(nullptr);
  j["env_steps"] = s.env_steps;
  j["episodes"] = s.episodes;
  j["train_steps"] = s.train_steps;
  j["incidents"] = s.incidents;
  j["runtime_seconds"] = s.runtime_seconds;
  return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr const char* kCheckpointFormat = "s2q-checkpoint/1";

void restore(std::vector<double>& dst, const json& src, const std::string& path) {
  if (!src.is_array() || src.size() != dst.size()) {
    throw LoadError(path + ": expected " + std::to_string(dst.size()) + " values");
  }
  for (std::size_t i = 0; i < dst.size(); ++i) {
    if (!src[i].is_number()) throw LoadError(path + "[" + std::to_string(i) + "]: not a number");
    dst[i] = src[i].get<double>();
  }
}

void restore_table(std::vector<std::vector<double>>& dst, const json& src, const std::string& path) {
  if (!src.is_array() || src.size() != dst.size()) throw LoadError(path + ": wrong number of rows");
  for (std::size_t s = 0; s < dst.size(); ++s) restore(dst[s], src[s], path + "[" + std::to_string(s) + "]");
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Experiment& exp) {
  ordered_json j;
  j["format"] = kCheckpointFormat;
  j["config"] = ordered_json::parse(run_config_to_json(exp.cfg));
  ordered_json l;
  if (const auto* net = dynamic_cast<const learn::Learner*>(exp.learner.get())) {
    const auto& ens = net->ensemble();
    l["kind"] = "network";
    l["critic"] = {{"params", ens.critic().params.values}, {"target", ens.critic().target.values}};
    auto subs = ordered_json::array();
    for (int k = 0; k <= ens.K(); ++k) {
      subs.push_back({{"params", ens.sub(k).params.values}, {"target", ens.sub(k).target.values}});
    }
    l["sub_values"] = std::move(subs);
    const auto* coder = net->coder();
    l["coder"] = coder ? ordered_json(coder->params.values) : ordered_json(nullptr);
  } else {
    const auto& tab = dynamic_cast<const learn::TabularLearner&>(*exp.learner);
    l["kind"] = "tabular";
    l["q_star"] = tab.q_star_table;
    l["q_star_target"] = tab.q_star_target;
    l["sub_tables"] = tab.sub_tables;
    l["sub_targets"] = tab.sub_targets;
  }
  j["learner"] = std::move(l);
  write_file(path, j.dump() + "\n");
}

Experiment load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string() + ": cannot open");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw LoadError(path.string() + ": invalid JSON: " + e.what());
  }
  if (!j.is_object() || j.value("format", "") != kCheckpointFormat) {
    throw LoadError(path.string() + ": format: expected " + kCheckpointFormat);
  }
  if (!j.contains("config") || !j.contains("learner")) {
    throw LoadError(path.string() + ": config/learner: missing key");
  }
  auto exp = make_experiment(parse_run_config(j["config"].dump(), path.string()));
  const auto& l = j["learner"];
  if (auto* net = dynamic_cast<learn::Learner*>(exp.learner.get())) {
    if (l.value("kind", "") != "network") throw LoadError("learner.kind: expected network");
    auto& ens = net->ensemble();
    restore(ens.critic().params.values, l.at("critic").at("params"), "learner.critic.params");
    restore(ens.critic().target.values, l.at("critic").at("target"), "learner.critic.target");
    const auto& subs = l.at("sub_values");
    if (!subs.is_array() || subs.size() != static_cast<std::size_t>(ens.K() + 1)) {
      throw LoadError("learner.sub_values: expected " + std::to_string(ens.K() + 1) + " entries");
    }
    for (int k = 0; k <= ens.K(); ++k) {
      const auto p = "learner.sub_values[" + std::to_string(k) + "]";
      restore(ens.sub(k).params.values, subs[static_cast<std::size_t>(k)].at("params"), p + ".params");
      restore(ens.sub(k).target.values, subs[static_cast<std::size_t>(k)].at("target"), p + ".target");
    }
    if (auto* coder = net->coder()) restore(coder->params.values, l.at("coder"), "learner.coder");
  } else {
    auto& tab = dynamic_cast<learn::TabularLearner&>(*exp.learner);
    if (l.value("kind", "") != "tabular") throw LoadError("learner.kind: expected tabular");
    restore_table(tab.q_star_table, l.at("q_star"), "learner.q_star");
    restore_table(tab.q_star_target, l.at("q_star_target"), "learner.q_star_target");
    const auto& subs = l.at("sub_tables");
    const auto& subt = l.at("sub_targets");
    if (subs.size() != tab.sub_tables.size() || subt.size() != tab.sub_targets.size()) {
      throw LoadError("learner.sub_tables: wrong number of tables");
    }
    for (std::size_t k = 0; k < tab.sub_tables.size(); ++k) {
      restore_table(tab.sub_tables[k], subs[k], "learner.sub_tables[" + std::to_string(k) + "]");
      restore_table(tab.sub_targets[k], subt[k], "learner.sub_targets[" + std::to_string(k) + "]");
    }
  }
  return exp;
}

// ---------------------------------------------------------------------------
// Diagnostics

std::string qtable_csv(Experiment& exp) {
  auto& L = *exp.learner;
  const int N = exp.env.n_agents();
  const int A = exp.env.n_actions();
  const int J = env::num_joint_actions(N, A);
  std::ostringstream out;
  out << "function,state,joint_action";
  for (int i = 0; i < N; ++i) out << ",a" << i;
  out << ",value\n";
  for (int s = 0; s < exp.env.n_states(); ++s) {
    const Probe probe = make_probe(exp, s);
    const auto ctx = probe.context();
    for (int f = -1; f <= L.K(); ++f) {
      for (int ja = 0; ja < J; ++ja) {
        const auto joint = env::unflatten_joint_action(ja, N, A);
        const double v = f < 0 ? L.q_star(ctx, joint) : L.q_sub(f, ctx, joint);
        out << (f < 0 ? std::string("q_star") : "q_sub_" + std::to_string(f)) << ',' << s << ',' << ja;
        for (int a : joint) out << ',' << a;
        out << ',' << num(v) << '\n';
      }
    }
  }
  return out.str();
}

Heatmap behavior_heatmap(Experiment& exp, int state, double temperature, double epsilon,
                         double baseline_epsilon) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0) || !(baseline_epsilon >= 0.0 && baseline_epsilon <= 1.0)) {
    throw UsageError("heatmap: epsilon must be in [0, 1]");
  }
  auto& L = *exp.learner;
  const Probe probe = make_probe(exp, state);
  Heatmap h;
  h.state = state;
  h.tracked = L.tracked_actions(probe.context());
  h.p = behavior::softmax_p(L.prioritization_values(probe.context(), h.tracked), temperature).probs;
  h.s2q = behavior::behavior_joint_distribution(h.p, h.tracked, exp.env.n_actions(), epsilon);
  h.baseline = behavior::epsilon_greedy_joint_distribution(h.tracked[0], exp.env.n_actions(),
                                                           baseline_epsilon);
  return h;
}

std::string heatmap_csv(const Experiment& exp, const std::vector<Heatmap>& maps) {
  const int N = exp.env.n_agents();
  const int A = exp.env.n_actions();
  std::ostringstream out;
  out << "state,joint_action";
  for (int i = 0; i < N; ++i) out << ",a" << i;
  out << ",s2q_prob,egreedy_prob\n";
  for (const auto& h : maps) {
    for (std::size_t ja = 0; ja < h.s2q.size(); ++ja) {
      out << h.state << ',' << ja;
      for (int a : env::unflatten_joint_action(static_cast<int>(ja), N, A)) out << ',' << a;
      out << ',' << num(h.s2q[ja]) << ',' << num(h.baseline[ja]) << '\n';
    }
  }
  return out.str();
}

}  // namespace s2q::cli
