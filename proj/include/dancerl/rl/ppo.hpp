#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dancerl/reward/reward.hpp"

namespace dancerl {

enum class AdvantageMode { MonteCarlo, GAE };
AdvantageMode parse_advantage_mode(const std::string& name);
std::string to_string(AdvantageMode mode);

struct PPOConfig {
  double gamma = 1.0;
  double gae_lambda = 0.95;
  double kl_beta = 5e-3;
  double clip_ratio = 0.2;
  double value_weight = 0.1;
  double entropy_weight = 0.0;
  int train_iters = 1;
  double learning_rate = 3e-4;
  double weight_decay = 0.01;  // decoupled
  double max_grad_norm = 0.5;
  int batch_episodes = 64;    // episodes per outer iteration
  int minibatch_episodes = 16;
  int iterations = 60;
  AdvantageMode advantage = AdvantageMode::GAE;
  bool normalize_advantages = true;
  bool normalize_rewards = true;  // running standardisation of episode model returns
  int shared_blocks = 1;  // policy blocks reused by the value network
  int value_blocks = 1;
  double kl_ceiling = 0.5;  // diagnostic bound on mean per-state KL to the reference
  std::uint64_t seed = 0;

  void validate() const;
};

// Policy plus a value head that shares the embedding and first blocks.
struct ActorCritic {
  PolicyNet policy;
  std::size_t shared_blocks = 1;
  std::vector<TransformerBlock> value_blocks;
  Linear value_head;

  struct Output {
    PolicyNet::Logits logits;
    std::vector<double> values;  // one per decision position
  };

  struct Cache {
    Tensor embedded;
    BlockCaches shared, policy_tail, value;
    Tensor shared_out, policy_hidden, value_hidden;
    Tensor policy_gathered, value_gathered;
    std::vector<std::size_t> positions;
  };

  Output forward(const Parameters& params, const TokenSeq& seq, Cache* cache = nullptr) const;
  void backward(const Parameters& params, const TokenSeq& seq, const Cache& cache,
                const Tensor& d_upper, const Tensor& d_lower, std::span<const double> d_values,
                Gradients& grads) const;
};

// Trainable actor-critic initialised from a BC checkpoint plus the frozen reference.
struct RLInit {
  ActorCritic model;
  Parameters params;
  PolicyNet reference;
  Parameters reference_params;
  std::uint64_t reference_fingerprint = 0;
};

RLInit init_rl_from_bc(const PolicyNet& bc, const Parameters& bc_params, const EnvConfig& env,
                       const PPOConfig& cfg);

struct Episode {
  Trajectory traj;
  std::vector<double> logp;          // behaviour log-prob at sampling time
  std::vector<double> values;        // V(s_t) at sampling time
  std::vector<double> logp_ref;      // log pi_BC(a_t | s_t)
  std::vector<double> kl;            // exact KL(pi || pi_BC) at s_t
  std::vector<double> model_reward;  // reward before the KL penalty
  std::vector<double> reward;        // KL-penalised reward
  std::vector<double> advantage;
  std::vector<double> target;        // return target = advantage + value
};

struct RolloutBuffer {
  std::vector<Episode> episodes;
  std::size_t capacity = 0;  // in records (steps)

  std::size_t records() const;
  void clear() { episodes.clear(); }
};

// Per-step reward for a complete trajectory (length T).
using RewardFn = std::function<std::vector<double>(const Trajectory&)>;

// Samples one stochastic episode per entry of `tracks`; episode i uses derive_seed(seed, i).
RolloutBuffer collect_rollouts(const ActorCritic& model, const Parameters& params,
                               const DanceEnv& env, const std::vector<TrackPtr>& tracks,
                               std::uint64_t seed);

// r_t - beta * (logp_t - logp_ref_t)
std::vector<double> kl_penalized_rewards(std::span<const double> rewards,
                                         std::span<const double> logp,
                                         std::span<const double> logp_ref, double beta);

// Fills logp_ref, kl, model_reward and reward for every episode.
void score_rollouts(RolloutBuffer& buffer, const PolicyNet& reference,
                    const Parameters& reference_params, const ActorCritic& model,
                    const Parameters& params, const RewardFn& reward, double beta);

// Folds every episode's model return into `norm`, then rescales the model
// rewards so each episode returns norm.normalize(return) and recomputes the
// KL-penalised rewards. model_reward itself is left untouched.
void standardize_rewards(RolloutBuffer& buffer, RunningNormalizer& norm, double beta);

std::vector<double> mc_advantages(std::span<const double> rewards, std::span<const double> values,
                                  double gamma);
std::vector<double> gae_advantages(std::span<const double> rewards, std::span<const double> values,
                                   double gamma, double lambda);

// Fills advantage and target for every episode, optionally normalising over the batch.
void compute_advantages(RolloutBuffer& buffer, double gamma, double lambda, AdvantageMode mode,
                        bool normalize);

struct PPODiagnostics {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double approx_kl = 0.0;
  double clip_fraction = 0.0;
  double grad_norm = 0.0;
  double max_ratio_deviation = 0.0;  // max |rho - 1| seen in the first minibatch
};

PPODiagnostics ppo_update(const ActorCritic& model, Parameters& params, AdamState& adam,
                          const RolloutBuffer& buffer, const PPOConfig& cfg, Rng& rng);

struct RLIterationLog {
  int iteration = 0;
  double mean_model_return = 0.0;  // mean episode sum of the reward function
  double mean_true_return = 0.0;
  double mean_kl = 0.0;
  PPODiagnostics diag;
};

struct RLResult {
  std::vector<RLIterationLog> log;
  double max_mean_kl = 0.0;  // largest per-iteration mean KL to the reference
  bool kl_within_ceiling = true;
};

// Runs cfg.iterations rounds of collect -> penalise -> advantages -> update on `init`.
RLResult train_rl(RLInit& init, const DanceEnv& env, const std::vector<TrackPtr>& tracks,
                  const RewardFn& reward, const PPOConfig& cfg);

// Stochastic (eps = 0) rollouts of a plain policy; episode i uses derive_seed(seed, i).
std::vector<Trajectory> sample_policy_episodes(const PolicyNet& net, const Parameters& params,
                                               const DanceEnv& env,
                                               const std::vector<TrackPtr>& tracks,
                                               std::size_t count, std::uint64_t seed);

}  // namespace dancerl
