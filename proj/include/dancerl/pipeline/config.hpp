#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dancerl/env/env.hpp"
#include "dancerl/model/encoder.hpp"
#include "dancerl/policy/policy.hpp"
#include "dancerl/reward/reward.hpp"
#include "dancerl/rl/ppo.hpp"

namespace dancerl {

struct DataConfig {
  int train_tracks = 64;      // tracks for expert data, BC and PPO
  int expert_per_track = 4;
  int test_tracks = 32;       // unseen tracks for held-out demos and evaluation
};

struct DemoConfig {
  std::vector<double> schedule{1.0, 0.75, 0.5, 0.25, 0.02};
  int per_level = 1000;       // K
  int tracks = 512;           // tracks the ranked demos are rolled out on
  int heldout_per_level = 40;
};

struct HandRewardConfig {
  bool enabled = true;
  double gamma_c = 0.0;
};

struct EvalConfig {
  int episodes = 100;
};

struct TheoremConfig {
  int instances = 1000;
  int states = 6;
  int actions = 3;
  int features = 4;
  double gamma = 0.9;
  double max_error = 0.1;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  EnvConfig env;
  DataConfig data;
  EncoderShape policy;
  BCConfig bc;
  DemoConfig demos;
  RMConfig reward;
  PPOConfig rl;
  HandRewardConfig hand_reward;
  EvalConfig eval;
  TheoremConfig theorem;

  // Checks every block; throws ConfigError naming the offending key.
  void validate() const;
};

// Strict parse: unknown keys and wrong types are ConfigErrors that name the key path.
// Missing keys keep their defaults. Stage seeds inside blocks are not configurable;
// they are derived from `seed`.
PipelineConfig parse_pipeline_config(const std::string& json_text);
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
// Canonical JSON with every field, in a fixed key order.
std::string pipeline_config_json(const PipelineConfig& cfg);

// Digests of the configuration a checkpoint's tensors depend on.
std::uint64_t policy_digest(const PipelineConfig& cfg);
std::uint64_t reward_digest(const PipelineConfig& cfg);
std::uint64_t actor_critic_digest(const PipelineConfig& cfg);

// Per-stage seeds: derive_seed(cfg.seed, label).
std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& label);

}  // namespace dancerl
