#include "s2q/envs.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "s2q/errors.hpp"

namespace s2q::env {

using nlohmann::json;

int num_joint_actions(int n_agents, int n_actions) {
  int n = 1;
  for (int i = 0; i < n_agents; ++i) n *= n_actions;
  return n;
}

int flat_joint_action(std::span<const int> actions, int n_actions) {
  int flat = 0;
  int scale = 1;
  for (int a : actions) {
    if (a < 0 || a >= n_actions) {
      throw UsageError("flat_joint_action: action index " + std::to_string(a) +
                       " out of range [0, " + std::to_string(n_actions) + ")");
    }
    flat += a * scale;
    scale *= n_actions;
  }
  return flat;
}

std::vector<int> unflatten_joint_action(int flat, int n_agents, int n_actions) {
  if (flat < 0 || flat >= num_joint_actions(n_agents, n_actions)) {
    throw UsageError("unflatten_joint_action: index out of range");
  }
  std::vector<int> actions(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) {
    actions[static_cast<std::size_t>(i)] = flat % n_actions;
    flat /= n_actions;
  }
  return actions;
}

int DecPomdpSpec::obs_dim() const {
  if (observation.empty() || observation[0].empty()) return 0;
  return static_cast<int>(observation[0][0].size());
}

namespace {

std::string idx(const std::string& base, std::size_t i) {
  return base + "[" + std::to_string(i) + "]";
}

void require_size(std::size_t got, std::size_t want, const std::string& path) {
  if (got != want) {
    throw LoadError(path + ": expected " + std::to_string(want) + " entries, got " +
                    std::to_string(got));
  }
}

void require_probability_row(const std::vector<double>& row, const std::string& path) {
  double sum = 0.0;
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (!std::isfinite(row[i]) || row[i] < 0.0) {
      throw LoadError(idx(path, i) + ": probability must be finite and nonnegative");
    }
    sum += row[i];
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    std::ostringstream msg;
    msg << path << ": row sums to " << sum << ", expected 1";
    throw LoadError(msg.str());
  }
}

}  // namespace

void DecPomdpSpec::validate() const {
  if (n_states <= 0) throw LoadError("n_states: must be positive");
  if (n_agents <= 0) throw LoadError("n_agents: must be positive");
  if (n_actions <= 0) throw LoadError("n_actions: must be positive");
  if (!(gamma >= 0.0 && gamma < 1.0)) throw LoadError("gamma: must be in [0, 1)");
  if (episode_limit <= 0) throw LoadError("episode_limit: must be positive");
  const auto S = static_cast<std::size_t>(n_states);
  const auto J = static_cast<std::size_t>(n_joint_actions());
  const auto N = static_cast<std::size_t>(n_agents);

  require_size(initial_state_dist.size(), S, "initial_state_dist");
  require_probability_row(initial_state_dist, "initial_state_dist");

  require_size(transition.size(), S, "transition");
  for (std::size_t s = 0; s < S; ++s) {
    require_size(transition[s].size(), J, idx("transition", s));
    for (std::size_t a = 0; a < J; ++a) {
      const std::string path = idx(idx("transition", s), a);
      require_size(transition[s][a].size(), S, path);
      require_probability_row(transition[s][a], path);
    }
  }

  require_size(reward.size(), S, "reward");
  for (std::size_t s = 0; s < S; ++s) {
    require_size(reward[s].size(), J, idx("reward", s));
    for (std::size_t a = 0; a < J; ++a) {
      if (!std::isfinite(reward[s][a])) {
        throw LoadError(idx(idx("reward", s), a) + ": reward must be finite");
      }
    }
  }

  require_size(observation.size(), S, "observation");
  const std::size_t obs_len = observation[0].empty() ? 0 : observation[0][0].size();
  if (obs_len == 0) throw LoadError("observation[0][0]: observation vectors must be nonempty");
  for (std::size_t s = 0; s < S; ++s) {
    require_size(observation[s].size(), N, idx("observation", s));
    for (std::size_t i = 0; i < N; ++i) {
      const std::string path = idx(idx("observation", s), i);
      require_size(observation[s][i].size(), obs_len, path);
      for (double v : observation[s][i]) {
        if (!std::isfinite(v)) throw LoadError(path + ": observation must be finite");
      }
    }
  }
}

namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object()) throw LoadError("<root>: expected a JSON object");
  auto it = j.find(key);
  if (it == j.end()) throw LoadError(std::string(key) + ": missing key");
  return *it;
}

template <typename T>
T scalar(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw LoadError(std::string(key) + ": expected a number");
  if constexpr (std::is_integral_v<T>) {
    if (!v.is_number_integer()) throw LoadError(std::string(key) + ": expected an integer");
  }
  return v.get<T>();
}

std::vector<double> vec1(const json& j, const std::string& path) {
  if (!j.is_array()) throw LoadError(path + ": expected an array");
  std::vector<double> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw LoadError(idx(path, i) + ": expected a number");
    out.push_back(j[i].get<double>());
  }
  return out;
}

std::vector<std::vector<double>> vec2(const json& j, const std::string& path) {
  if (!j.is_array()) throw LoadError(path + ": expected an array");
  std::vector<std::vector<double>> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vec1(j[i], idx(path, i)));
  return out;
}

std::vector<std::vector<std::vector<double>>> vec3(const json& j, const std::string& path) {
  if (!j.is_array()) throw LoadError(path + ": expected an array");
  std::vector<std::vector<std::vector<double>>> out;
  out.reserve(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(vec2(j[i], idx(path, i)));
  return out;
}

}  // namespace

DecPomdpSpec parse_spec(std::string_view json_text, const std::string& origin) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw LoadError(origin + ": invalid JSON (" + e.what() + ")");
  }
  try {
    DecPomdpSpec spec;
    spec.n_states = scalar<int>(j, "n_states");
    spec.n_agents = scalar<int>(j, "n_agents");
    spec.n_actions = scalar<int>(j, "n_actions");
    spec.gamma = scalar<double>(j, "gamma");
    spec.episode_limit = scalar<int>(j, "episode_limit");
    spec.initial_state_dist = vec1(field(j, "initial_state_dist"), "initial_state_dist");
    spec.transition = vec3(field(j, "transition"), "transition");
    spec.reward = vec2(field(j, "reward"), "reward");
    spec.observation = vec3(field(j, "observation"), "observation");
    spec.validate();
    return spec;
  } catch (const LoadError& e) {
    throw LoadError(origin + ": " + e.what());
  }
}

DecPomdpSpec load_spec(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw LoadError(path.string() + ": cannot open file");
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  if (text.find_first_not_of(" \t\r\n") == std::string::npos) {
    throw LoadError(path.string() + ": empty file");
  }
  return parse_spec(text, path.string());
}

std::string spec_to_json(const DecPomdpSpec& spec) {
  json j;
  j["n_states"] = spec.n_states;
  j["n_agents"] = spec.n_agents;
  j["n_actions"] = spec.n_actions;
  j["gamma"] = spec.gamma;
  j["episode_limit"] = spec.episode_limit;
  j["initial_state_dist"] = spec.initial_state_dist;
  j["transition"] = spec.transition;
  j["reward"] = spec.reward;
  j["observation"] = spec.observation;
  return j.dump();
}

Transition step(const DecPomdpSpec& spec, int state, std::span<const int> joint_action,
                Rng& rng) {
  if (state < 0 || state >= spec.n_states) throw UsageError("step: state index out of range");
  if (joint_action.size() != static_cast<std::size_t>(spec.n_agents)) {
    throw UsageError("step: joint action has " + std::to_string(joint_action.size()) +
                     " components, expected " + std::to_string(spec.n_agents));
  }
  const int ja = flat_joint_action(joint_action, spec.n_actions);
  const auto s = static_cast<std::size_t>(state);
  const auto a = static_cast<std::size_t>(ja);
  Transition tr;
  tr.state = state;
  tr.observations = spec.observation[s];
  tr.joint_action = ja;
  tr.reward = spec.reward[s][a];
  tr.next_state = static_cast<int>(rng.categorical(spec.transition[s][a]));
  tr.next_observations = spec.observation[static_cast<std::size_t>(tr.next_state)];
  return tr;
}

int sample_initial_state(const DecPomdpSpec& spec, Rng& rng) {
  return static_cast<int>(rng.categorical(spec.initial_state_dist));
}

void MatrixGameSpec::validate() const {
  if (n_actions <= 0) throw ConfigError("matrix game: n_actions must be positive");
  const auto n = static_cast<std::size_t>(n_actions);
  for (const auto* m : {&payoff_pre, &payoff_post}) {
    if (m->size() != n) throw ConfigError("matrix game: payoff must be n_actions x n_actions");
    for (const auto& row : *m) {
      if (row.size() != n) throw ConfigError("matrix game: payoff must be n_actions x n_actions");
      for (double v : row) {
        if (!std::isfinite(v)) throw ConfigError("matrix game: payoff must be finite");
      }
    }
  }
  if (shift_at_step < 0) throw ConfigError("matrix game: shift_at_step must be >= 0");
}

double fig1_off_diagonal(Fig1Preset preset) {
  return preset == Fig1Preset::kHard ? -12.0 : 0.0;
}

MatrixGameSpec matrix_game_fig1(double off_diagonal, std::int64_t shift_at_step) {
  MatrixGameSpec g;
  g.n_actions = 3;
  g.payoff_pre.assign(3, std::vector<double>(3, off_diagonal));
  g.payoff_post.assign(3, std::vector<double>(3, off_diagonal));
  const double pre[3] = {8.0, 7.0, 6.0};
  const double post[3] = {6.0, 7.0, 8.0};
  for (std::size_t i = 0; i < 3; ++i) {
    g.payoff_pre[i][i] = pre[i];
    g.payoff_post[i][i] = post[i];
  }
  g.shift_at_step = shift_at_step;
  return g;
}

MatrixGameSpec matrix_game_fig1(Fig1Preset preset, std::int64_t shift_at_step) {
  return matrix_game_fig1(fig1_off_diagonal(preset), shift_at_step);
}

DecPomdpSpec single_state_game(int n_agents, int n_actions, std::span<const double> payoff) {
  const int J = num_joint_actions(n_agents, n_actions);
  if (payoff.size() != static_cast<std::size_t>(J)) {
    throw ConfigError("single_state_game: payoff must have one entry per joint action");
  }
  DecPomdpSpec spec;
  spec.n_states = 1;
  spec.n_agents = n_agents;
  spec.n_actions = n_actions;
  spec.gamma = 0.0;
  spec.episode_limit = 1;
  spec.initial_state_dist = {1.0};
  spec.transition.assign(1, std::vector<std::vector<double>>(static_cast<std::size_t>(J),
                                                             std::vector<double>{1.0}));
  spec.reward.assign(1, std::vector<double>(payoff.begin(), payoff.end()));
  spec.observation.assign(1, {});
  for (int i = 0; i < n_agents; ++i) {
    std::vector<double> obs(static_cast<std::size_t>(1 + n_agents), 0.0);
    obs[0] = 1.0;
    obs[static_cast<std::size_t>(1 + i)] = 1.0;
    spec.observation[0].push_back(std::move(obs));
  }
  spec.validate();
  return spec;
}

DecPomdpSpec matrix_game_as_spec(const std::vector<std::vector<double>>& payoff) {
  const int n = static_cast<int>(payoff.size());
  std::vector<double> flat(static_cast<std::size_t>(n * n));
  for (int a0 = 0; a0 < n; ++a0) {
    for (int a1 = 0; a1 < n; ++a1) {
      const int ja = a0 + a1 * n;
      flat[static_cast<std::size_t>(ja)] =
          payoff[static_cast<std::size_t>(a0)][static_cast<std::size_t>(a1)];
    }
  }
  return single_state_game(2, n, flat);
}

Environment Environment::from_spec(DecPomdpSpec spec) {
  spec.validate();
  Environment env;
  env.pre_ = spec;
  env.post_ = std::move(spec);
  env.is_matrix_ = false;
  return env;
}

Environment Environment::from_matrix_game(MatrixGameSpec game) {
  game.validate();
  Environment env;
  env.pre_ = matrix_game_as_spec(game.payoff_pre);
  env.post_ = matrix_game_as_spec(game.payoff_post);
  env.is_matrix_ = true;
  env.shift_at_step_ = game.shift_at_step;
  return env;
}

const DecPomdpSpec& Environment::active_spec() const { return post_shift_ ? post_ : pre_; }

int Environment::reset(Rng& rng) {
  post_shift_ = is_matrix_ && total_steps_ >= shift_at_step_;
  state_ = sample_initial_state(active_spec(), rng);
  t_ = 0;
  in_episode_ = true;
  return state_;
}

Transition Environment::step(std::span<const int> joint_action, Rng& rng) {
  if (!in_episode_) throw UsageError("Environment::step: call reset() first");
  const DecPomdpSpec& spec = active_spec();
  Transition tr = env::step(spec, state_, joint_action, rng);
  ++t_;
  ++total_steps_;
  tr.terminal = t_ >= spec.episode_limit;
  state_ = tr.next_state;
  if (tr.terminal) in_episode_ = false;
  return tr;
}

std::vector<double> Environment::state_features(int s) const {
  std::vector<double> f(static_cast<std::size_t>(pre_.n_states), 0.0);
  f[static_cast<std::size_t>(s)] = 1.0;
  return f;
}

const std::vector<double>& Environment::observation(int s, int agent) const {
  return active_spec().observation[static_cast<std::size_t>(s)][static_cast<std::size_t>(agent)];
}

}  // namespace s2q::env
