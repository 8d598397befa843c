#include "s2q/run_config.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "json.hpp"
#include "s2q/errors.hpp"

namespace s2q::cli {

using nlohmann::json;
using nlohmann::ordered_json;

int RunConfig::resolved_history_window() const {
  if (history_window > 0) return history_window;
  return is_matrix_game() ? 1 : 4;
}

void RunConfig::validate() const {
  if (env.empty()) throw ConfigError("env: must not be empty");
  if (is_matrix_game()) {
    if (preset != "easy" && preset != "hard") throw ConfigError("preset: expected easy|hard");
  } else if (!std::filesystem::exists(env)) {
    throw ConfigError("env: file not found: " + env);
  }
  if (steps_pre_shift < 0) throw ConfigError("steps_pre_shift: must be >= 0");
  if (steps_post_shift < 0) throw ConfigError("steps_post_shift: must be >= 0");
  if (total_steps() <= 0) throw ConfigError("steps_post_shift: total step count must be positive");
  learn::parse_algorithm(algorithm);
  behavior::parse_variant(variant);
  if (K < 0) throw ConfigError("K: must be >= 0");
  if (batch_size <= 0) throw ConfigError("batch_size: must be positive");
  if (buffer_size <= 0) throw ConfigError("buffer_size: must be positive");
  if (train_every <= 0) throw ConfigError("train_every: must be positive");
  if (history_window < 0) throw ConfigError("history_window: must be >= 0");
  if (state_target != "raw" && state_target != "centered") {
    throw ConfigError("state_target: expected raw|centered");
  }
  if (utility_hidden <= 0) throw ConfigError("utility_hidden: must be positive");
  for (std::size_t i = 0; i < critic_hidden.size(); ++i) {
    if (critic_hidden[i] <= 0) throw ConfigError("critic_hidden[" + std::to_string(i) + "]: must be positive");
  }
  if (mixer_embed <= 0) throw ConfigError("mixer_embed: must be positive");
  if (hyper_hidden <= 0) throw ConfigError("hyper_hidden: must be positive");
  if (mixer != "monotonic" && mixer != "sum") throw ConfigError("mixer: expected monotonic|sum");
  if (tabular && algorithm == "s2q_comm") throw ConfigError("tabular: not available for s2q_comm");
  if (log_interval <= 0) throw ConfigError("log_interval: must be positive");
  if (adaptation_window <= 0) throw ConfigError("adaptation_window: must be positive");
  if (eval_episodes < 0) throw ConfigError("eval_episodes: must be >= 0");
  if (holdout_episodes < 0) throw ConfigError("holdout_episodes: must be >= 0");
  behavior_config().validate();
  learner_config(0.0).validate();
}

learn::LearnerConfig RunConfig::learner_config(double gamma) const {
  learn::LearnerConfig c;
  c.algorithm = learn::parse_algorithm(algorithm);
  c.variant = behavior::parse_variant(variant);
  c.K = K;
  c.gamma = gamma;
  c.temperature = temperature;
  c.suppression.alpha = alpha;
  c.suppression.floor_c = floor_c;
  c.suppression.use_floor = use_floor;
  c.weighting.w_c = w_c;
  c.adam.learning_rate = learning_rate;
  c.adam.grad_clip_norm = grad_clip_norm;
  c.target_update_interval = target_update_interval;
  c.coder_hidden = coder_hidden;
  c.latent_dim = latent_dim;
  c.tabular_lr = tabular_lr;
  return c;
}

behavior::BehaviorConfig RunConfig::behavior_config() const {
  behavior::BehaviorConfig b;
  b.temperature = temperature;
  b.epsilon_start = epsilon_start;
  b.epsilon_end = epsilon_end;
  b.epsilon_anneal_steps = epsilon_anneal_steps;
  b.fix_prob = fix_prob;
  return b;
}

nets::NetworkConfig RunConfig::network_config() const {
  nets::NetworkConfig n;
  n.utility_hidden = utility_hidden;
  n.critic_hidden = critic_hidden;
  n.mixer_embed = mixer_embed;
  n.hyper_hidden = hyper_hidden;
  n.mixer = mixer == "sum" ? nets::MixerKind::kSum : nets::MixerKind::kMonotonic;
  return n;
}

namespace {

template <class Int>
void read_int(const json& v, const std::string& key, Int& out) {
  if (!v.is_number_integer()) throw ConfigError(key + ": expected an integer");
  if constexpr (std::is_unsigned_v<Int>) {
    if (v.is_number_unsigned()) {
      out = v.get<Int>();
      return;
    }
    if (v.get<std::int64_t>() < 0) throw ConfigError(key + ": expected a nonnegative integer");
  }
  out = v.get<Int>();
}

void read_real(const json& v, const std::string& key, double& out) {
  if (!v.is_number()) throw ConfigError(key + ": expected a number");
  out = v.get<double>();
}

void read_bool(const json& v, const std::string& key, bool& out) {
  if (!v.is_boolean()) throw ConfigError(key + ": expected true or false");
  out = v.get<bool>();
}

void read_string(const json& v, const std::string& key, std::string& out) {
  if (!v.is_string()) throw ConfigError(key + ": expected a string");
  out = v.get<std::string>();
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text, const std::string& origin,
                           const std::filesystem::path& base_dir) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(origin + ": top level must be an object");

  RunConfig c;
  using Setter = std::function<void(const json&, const std::string&)>;
  const std::map<std::string, Setter> fields = {
      {"env", [&](const json& v, const std::string& k) { read_string(v, k, c.env); }},
      {"preset", [&](const json& v, const std::string& k) { read_string(v, k, c.preset); }},
      {"off_diagonal",
       [&](const json& v, const std::string& k) {
         if (v.is_null()) {
           c.off_diagonal.reset();
           return;
         }
         double d = 0.0;
         read_real(v, k, d);
         c.off_diagonal = d;
       }},
      {"steps_pre_shift", [&](const json& v, const std::string& k) { read_int(v, k, c.steps_pre_shift); }},
      {"steps_post_shift", [&](const json& v, const std::string& k) { read_int(v, k, c.steps_post_shift); }},
      {"algorithm", [&](const json& v, const std::string& k) { read_string(v, k, c.algorithm); }},
      {"variant", [&](const json& v, const std::string& k) { read_string(v, k, c.variant); }},
      {"K", [&](const json& v, const std::string& k) { read_int(v, k, c.K); }},
      {"temperature", [&](const json& v, const std::string& k) { read_real(v, k, c.temperature); }},
      {"alpha", [&](const json& v, const std::string& k) { read_real(v, k, c.alpha); }},
      {"w_c", [&](const json& v, const std::string& k) { read_real(v, k, c.w_c); }},
      {"use_floor", [&](const json& v, const std::string& k) { read_bool(v, k, c.use_floor); }},
      {"floor_c", [&](const json& v, const std::string& k) { read_real(v, k, c.floor_c); }},
      {"epsilon_start", [&](const json& v, const std::string& k) { read_real(v, k, c.epsilon_start); }},
      {"epsilon_end", [&](const json& v, const std::string& k) { read_real(v, k, c.epsilon_end); }},
      {"epsilon_anneal_steps",
       [&](const json& v, const std::string& k) { read_int(v, k, c.epsilon_anneal_steps); }},
      {"fix_prob", [&](const json& v, const std::string& k) { read_real(v, k, c.fix_prob); }},
      {"learning_rate", [&](const json& v, const std::string& k) { read_real(v, k, c.learning_rate); }},
      {"grad_clip_norm", [&](const json& v, const std::string& k) { read_real(v, k, c.grad_clip_norm); }},
      {"batch_size", [&](const json& v, const std::string& k) { read_int(v, k, c.batch_size); }},
      {"buffer_size", [&](const json& v, const std::string& k) { read_int(v, k, c.buffer_size); }},
      {"target_update_interval",
       [&](const json& v, const std::string& k) { read_int(v, k, c.target_update_interval); }},
      {"train_every", [&](const json& v, const std::string& k) { read_int(v, k, c.train_every); }},
      {"history_window", [&](const json& v, const std::string& k) { read_int(v, k, c.history_window); }},
      {"latent_dim", [&](const json& v, const std::string& k) { read_int(v, k, c.latent_dim); }},
      {"coder_hidden", [&](const json& v, const std::string& k) { read_int(v, k, c.coder_hidden); }},
      {"state_target", [&](const json& v, const std::string& k) { read_string(v, k, c.state_target); }},
      {"utility_hidden", [&](const json& v, const std::string& k) { read_int(v, k, c.utility_hidden); }},
      {"critic_hidden",
       [&](const json& v, const std::string& k) {
         if (!v.is_array()) throw ConfigError(k + ": expected an array of integers");
         c.critic_hidden.clear();
         for (std::size_t i = 0; i < v.size(); ++i) {
           int w = 0;
           read_int(v[i], k + "[" + std::to_string(i) + "]", w);
           c.critic_hidden.push_back(w);
         }
       }},
      {"mixer_embed", [&](const json& v, const std::string& k) { read_int(v, k, c.mixer_embed); }},
      {"hyper_hidden", [&](const json& v, const std::string& k) { read_int(v, k, c.hyper_hidden); }},
      {"mixer", [&](const json& v, const std::string& k) { read_string(v, k, c.mixer); }},
      {"tabular", [&](const json& v, const std::string& k) { read_bool(v, k, c.tabular); }},
      {"tabular_lr", [&](const json& v, const std::string& k) { read_real(v, k, c.tabular_lr); }},
      {"seed", [&](const json& v, const std::string& k) { read_int(v, k, c.seed); }},
      {"log_interval", [&](const json& v, const std::string& k) { read_int(v, k, c.log_interval); }},
      {"adaptation_window",
       [&](const json& v, const std::string& k) { read_int(v, k, c.adaptation_window); }},
      {"eval_episodes", [&](const json& v, const std::string& k) { read_int(v, k, c.eval_episodes); }},
      {"holdout_episodes",
       [&](const json& v, const std::string& k) { read_int(v, k, c.holdout_episodes); }},
      {"out_dir", [&](const json& v, const std::string& k) { read_string(v, k, c.out_dir); }},
  };
  for (const auto& [key, value] : doc.items()) {
    const auto it = fields.find(key);
    if (it == fields.end()) throw ConfigError(key + ": unknown key");
    it->second(value, key);
  }
  if (c.env != kMatrixFig1 && !base_dir.empty()) {
    const std::filesystem::path p(c.env);
    if (p.is_relative() && !std::filesystem::exists(p) && std::filesystem::exists(base_dir / p)) {
      c.env = (base_dir / p).string();
    }
  }
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str(), path.string(), path.parent_path());
}

std::string run_config_to_json(const RunConfig& c) {
  ordered_json j;
  j["env"] = c.env;
  j["preset"] = c.preset;
  j["off_diagonal"] = c.off_diagonal ? ordered_json(*c.off_diagonal) : ordered_json(nullptr);
  j["steps_pre_shift"] = c.steps_pre_shift;
  j["steps_post_shift"] = c.steps_post_shift;
  j["algorithm"] = c.algorithm;
  j["variant"] = c.variant;
  j["K"] = c.K;
  j["temperature"] = c.temperature;
  j["alpha"] = c.alpha;
  j["w_c"] = c.w_c;
  j["use_floor"] = c.use_floor;
  j["floor_c"] = c.floor_c;
  j["epsilon_start"] = c.epsilon_start;
  j["epsilon_end"] = c.epsilon_end;
  j["epsilon_anneal_steps"] = c.epsilon_anneal_steps;
  j["fix_prob"] = c.fix_prob;
  j["learning_rate"] = c.learning_rate;
  j["grad_clip_norm"] = c.grad_clip_norm;
  j["batch_size"] = c.batch_size;
  j["buffer_size"] = c.buffer_size;
  j["target_update_interval"] = c.target_update_interval;
  j["train_every"] = c.train_every;
  j["history_window"] = c.resolved_history_window();
  j["latent_dim"] = c.latent_dim;
  j["coder_hidden"] = c.coder_hidden;
  j["state_target"] = c.state_target;
  j["utility_hidden"] = c.utility_hidden;
  j["critic_hidden"] = c.critic_hidden;
  j["mixer_embed"] = c.mixer_embed;
  j["hyper_hidden"] = c.hyper_hidden;
  j["mixer"] = c.mixer;
  j["tabular"] = c.tabular;
  j["tabular_lr"] = c.tabular_lr;
  j["seed"] = c.seed;
  j["log_interval"] = c.log_interval;
  j["adaptation_window"] = c.adaptation_window;
  j["eval_episodes"] = c.eval_episodes;
  j["holdout_episodes"] = c.holdout_episodes;
  j["out_dir"] = c.out_dir;
  return j.dump(2) + "\n";
}

}  // namespace s2q::cli
