#include "dancerl/pipeline/config.hpp"

#include <set>

#include <json.hpp>

#include "dancerl/core/errors.hpp"
#include "dancerl/core/params.hpp"
#include "dancerl/demos/demos.hpp"
#include "dancerl/io/checkpoint.hpp"

namespace dancerl {

using nlohmann::json;

static_assert(std::is_same_v<std::uint64_t, std::size_t>, "seed parsing assumes 64-bit size_t");

namespace {

std::string join(const std::string& path, const char* key) {
  return path.empty() ? std::string(key) : path + "." + key;
}

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: " + (path_.empty() ? "top level" : path_) + " must be an object");
  }

  template <class Fn>
  void block(const char* key, Fn&& fn) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    Reader sub(j_.at(key), join(path_, key));
    fn(sub);
    sub.finish();
  }

  void operator()(const char* key, int& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      const auto x = v->get<long long>();
      if (x < INT32_MIN || x > INT32_MAX) fail(key, "integer out of range");
      out = static_cast<int>(x);
    }
  }
  void operator()(const char* key, std::size_t& out) {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void operator()(const char* key, double& out) {
    if (const json* v = find(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
    }
  }
  void operator()(const char* key, bool& out) {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void operator()(const char* key, std::vector<double>& out) {
    if (const json* v = find(key)) {
      if (!v->is_array()) fail(key, "expected an array of numbers");
      out.clear();
      for (const json& x : *v) {
        if (!x.is_number()) fail(key, "expected an array of numbers");
        out.push_back(x.get<double>());
      }
    }
  }
  void operator()(const char* key, AdvantageMode& out) {
    if (const json* v = find(key)) {
      if (!v->is_string()) fail(key, "expected \"gae\" or \"mc\"");
      try {
        out = parse_advantage_mode(v->get<std::string>());
      } catch (const ConfigError&) {
        fail(key, "expected \"gae\" or \"mc\"");
      }
    }
  }

  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError("config: unknown key '" + join(path_, k.c_str()) + "'");
  }

 private:
  const json* find(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  [[noreturn]] void fail(const char* key, const std::string& msg) const {
    throw ConfigError("config: '" + join(path_, key) + "': " + msg);
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

class Writer {
 public:
  template <class Fn>
  void block(const char* key, Fn&& fn) {
    Writer sub;
    fn(sub);
    j_[key] = std::move(sub.j_);
  }
  template <class T>
  void operator()(const char* key, const T& v) {
    j_[key] = v;
  }
  void operator()(const char* key, const AdvantageMode& v) { j_[key] = to_string(v); }
  json& value() { return j_; }

 private:
  json j_ = json::object();
};

template <class V>
void visit_shape(V& v, EncoderShape& s) {
  v("dim", s.dim);
  v("heads", s.heads);
  v("blocks", s.blocks);
  v("ffn_mult", s.ffn_mult);
  v("window", s.window);
  v("init_std", s.init_std);
}

template <class V>
void visit_env(V& v, EnvConfig& e) {
  v("horizon", e.horizon);
  v("feature_dim", e.feature_dim);
  v("codes_per_half", e.codes_per_half);
  v("styles", e.styles);
  v("beat_period", e.beat_period);
  v("p_hold", e.p_hold);
  v("p_change_on_beat", e.p_change_on_beat);
  v("p_style", e.p_style);
  v("beat_change_bonus", e.beat_change_bonus);
  v("offbeat_change_penalty", e.offbeat_change_penalty);
  v("agreement_bonus", e.agreement_bonus);
  v("style_bonus", e.style_bonus);
}

template <class V>
void visit(V& v, PipelineConfig& c) {
  v("seed", c.seed);
  v.block("env", [&](V& b) { visit_env(b, c.env); });
  v.block("data", [&](V& b) {
    b("train_tracks", c.data.train_tracks);
    b("expert_per_track", c.data.expert_per_track);
    b("test_tracks", c.data.test_tracks);
  });
  v.block("policy", [&](V& b) { visit_shape(b, c.policy); });
  v.block("bc", [&](V& b) {
    b("epochs", c.bc.epochs);
    b("batch_size", c.bc.batch_size);
    b("learning_rate", c.bc.learning_rate);
    b("grad_clip", c.bc.grad_clip);
    b("weight_decay", c.bc.weight_decay);
  });
  v.block("demos", [&](V& b) {
    b("schedule", c.demos.schedule);
    b("per_level", c.demos.per_level);
    b("tracks", c.demos.tracks);
    b("heldout_per_level", c.demos.heldout_per_level);
  });
  v.block("reward", [&](V& b) {
    b.block("shape", [&](V& s) { visit_shape(s, c.reward.shape); });
    b("dropout", c.reward.dropout);
    b("epochs", c.reward.epochs);
    b("batch_size", c.reward.batch_size);
    b("learning_rate", c.reward.learning_rate);
    b("final_lr_fraction", c.reward.final_lr_fraction);
    b("weight_decay", c.reward.weight_decay);
    b("decoupled_decay", c.reward.decoupled_decay);
    b("grad_clip", c.reward.grad_clip);
    b("window", c.reward.window);
    b("train_pairs", c.reward.train_pairs);
    b("heldout_pairs", c.reward.heldout_pairs);
  });
  v.block("rl", [&](V& b) {
    b("gamma", c.rl.gamma);
    b("gae_lambda", c.rl.gae_lambda);
    b("kl_beta", c.rl.kl_beta);
    b("clip_ratio", c.rl.clip_ratio);
    b("value_weight", c.rl.value_weight);
    b("entropy_weight", c.rl.entropy_weight);
    b("train_iters", c.rl.train_iters);
    b("learning_rate", c.rl.learning_rate);
    b("weight_decay", c.rl.weight_decay);
    b("max_grad_norm", c.rl.max_grad_norm);
    b("batch_episodes", c.rl.batch_episodes);
    b("minibatch_episodes", c.rl.minibatch_episodes);
    b("iterations", c.rl.iterations);
    b("advantage", c.rl.advantage);
    b("normalize_advantages", c.rl.normalize_advantages);
    b("normalize_rewards", c.rl.normalize_rewards);
    b("shared_blocks", c.rl.shared_blocks);
    b("value_blocks", c.rl.value_blocks);
    b("kl_ceiling", c.rl.kl_ceiling);
  });
  v.block("hand_reward", [&](V& b) {
    b("enabled", c.hand_reward.enabled);
    b("gamma_c", c.hand_reward.gamma_c);
  });
  v.block("eval", [&](V& b) { b("episodes", c.eval.episodes); });
  v.block("theorem", [&](V& b) {
    b("instances", c.theorem.instances);
    b("states", c.theorem.states);
    b("actions", c.theorem.actions);
    b("features", c.theorem.features);
    b("gamma", c.theorem.gamma);
    b("max_error", c.theorem.max_error);
  });
}

std::uint64_t digest_of(const json& j) { return fnv1a(j.dump()); }

json env_json(const PipelineConfig& c) {
  Writer w;
  EnvConfig e = c.env;
  visit_env(w, e);
  return w.value();
}

json shape_json(const EncoderShape& s) {
  Writer w;
  EncoderShape copy = s;
  visit_shape(w, copy);
  return w.value();
}

}  // namespace

void PipelineConfig::validate() const {
  env.validate();
  policy.validate("policy");
  bc.validate();
  reward.validate();
  rl.validate();
  if (data.train_tracks < 1 || data.expert_per_track < 1 || data.test_tracks < 1)
    throw ConfigError("data: track and trajectory counts must be >= 1");
  NoiseSchedule check(demos.schedule);
  if (check.size() < 2) throw ConfigError("demos.schedule needs at least two noise levels");
  if (demos.per_level < 1 || demos.tracks < 1 || demos.heldout_per_level < 1)
    throw ConfigError("demos: per_level, tracks and heldout_per_level must be >= 1");
  if (reward.window > env.horizon) throw ConfigError("reward.window must not exceed env.horizon");
  if (eval.episodes < 2) throw ConfigError("eval.episodes must be >= 2");
  if (theorem.instances < 0 || theorem.states < 1 || theorem.actions < 1 || theorem.features < 1)
    throw ConfigError("theorem: sizes must be >= 1 and instances >= 0");
  if (!(theorem.gamma >= 0.0 && theorem.gamma < 1.0)) throw ConfigError("theorem.gamma must lie in [0, 1)");
  if (theorem.max_error < 0.0) throw ConfigError("theorem.max_error must be >= 0");
}

PipelineConfig parse_pipeline_config(const std::string& json_text) {
  json j;
  try {
    j = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config: invalid JSON: ") + e.what());
  }
  PipelineConfig cfg;
  Reader r(j, "");
  visit(r, cfg);
  r.finish();
  cfg.validate();
  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  std::string text;
  try {
    text = read_file(path);
  } catch (const IoError& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return parse_pipeline_config(text);
}

std::string pipeline_config_json(const PipelineConfig& cfg) {
  Writer w;
  PipelineConfig copy = cfg;
  visit(w, copy);
  return w.value().dump(2) + "\n";
}

std::uint64_t policy_digest(const PipelineConfig& cfg) {
  return digest_of(json{{"kind", "policy"}, {"env", env_json(cfg)}, {"policy", shape_json(cfg.policy)}});
}

std::uint64_t reward_digest(const PipelineConfig& cfg) {
  return digest_of(json{{"kind", "reward"}, {"env", env_json(cfg)}, {"shape", shape_json(cfg.reward.shape)}});
}

std::uint64_t actor_critic_digest(const PipelineConfig& cfg) {
  return digest_of(json{{"kind", "actor-critic"},
                        {"env", env_json(cfg)},
                        {"policy", shape_json(cfg.policy)},
                        {"shared_blocks", cfg.rl.shared_blocks},
                        {"value_blocks", cfg.rl.value_blocks}});
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& label) {
  return derive_seed(cfg.seed, label);
}

}  // namespace dancerl
