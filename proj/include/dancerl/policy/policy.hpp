#pragma once

#include <cstdint>
#include <vector>

#include "dancerl/core/adam.hpp"
#include "dancerl/model/encoder.hpp"

namespace dancerl {

// Positions of the decision tokens m_t (music tokens with timestep >= 1).
std::vector<std::size_t> decision_positions(const TokenSeq& seq);

// Auto-regressive policy with two factored heads (upper / lower body code).
struct PolicyNet {
  EncoderShape shape;
  int codes = 0;
  TokenEmbedding embed;
  std::vector<TransformerBlock> blocks;
  Linear head_upper;
  Linear head_lower;

  struct Logits {
    Tensor upper;  // [decisions x codes]
    Tensor lower;
    std::vector<std::size_t> positions;
  };

  struct Cache {
    BlockCaches blocks;
    Tensor hidden;    // [L x dim], trunk output
    Tensor gathered;  // hidden rows at decision positions
    std::vector<std::size_t> positions;
  };

  static PolicyNet create(Parameters& params, const EnvConfig& env, const EncoderShape& shape,
                          Rng& rng);

  Logits forward(const Parameters& params, const TokenSeq& seq, Cache* cache = nullptr) const;
  void backward(const Parameters& params, const TokenSeq& seq, const Cache& cache,
                const Tensor& d_upper, const Tensor& d_lower, Gradients& grads) const;

  // Heads applied to trunk rows; shared by forward() and the actor-critic.
  Logits heads(const Parameters& params, const Tensor& gathered) const;
};

struct ActionLogits {
  std::vector<double> upper;
  std::vector<double> lower;
};

// Next-pose logits for a non-terminal state's tokens {m_init, p_init, ..., m_t}.
ActionLogits policy_forward(const PolicyNet& net, const Parameters& params, const TokenSeq& state);

double joint_log_prob(const ActionLogits& logits, PoseCode action);
// Exact entropy of the factored joint distribution.
double joint_entropy(const ActionLogits& logits);
// KL(p || q) of the factored joint distributions (sum of the per-head KLs).
double joint_kl(const ActionLogits& p, const ActionLogits& q);

// With probability eps a uniformly random joint code, otherwise a sample from
// the factored policy. The eps coin is only drawn when 0 < eps < 1, so eps == 0
// consumes the generator exactly like plain sampling and eps == 1 never looks
// at the logits.
PoseCode sample_action(const ActionLogits& logits, Rng& rng, double eps);
// log of the epsilon-mixture behaviour probability of `action`.
double behavior_log_prob(const ActionLogits& logits, PoseCode action, double eps);

// Feeds tokens one at a time through the policy using key/value caches.
class PolicySession {
 public:
  PolicySession(const PolicyNet& net, const Parameters& params);
  void push_music(const double* features, int timestep);
  void push_pose(PoseCode pose, int timestep);
  // Logits for the most recently pushed music token.
  ActionLogits logits() const;

 private:
  void push(const TokenSeq& one);
  const PolicyNet& net_;
  const Parameters& params_;
  BlockStackKV kv_;
  std::vector<double> last_;
};

struct BCConfig {
  int epochs = 60;
  int batch_size = 16;
  double learning_rate = 3e-3;
  double grad_clip = 0.25;
  double weight_decay = 0.0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct BCResult {
  double initial_loss = 0.0;         // whole-dataset loss before the first update
  std::vector<double> epoch_losses;  // mean training loss per epoch
};

// Mean over decisions of CE(upper) + CE(lower) for one trajectory; fills grads when given.
double bc_trajectory_loss(const PolicyNet& net, const Parameters& params, const Trajectory& traj,
                          Gradients* grads);

BCResult bc_train(const PolicyNet& net, Parameters& params, const std::vector<Trajectory>& experts,
                  const BCConfig& cfg);

struct PoseAccuracy {
  double complete = 0.0;  // both halves correct
  double partial = 0.0;   // at least one half correct
  std::size_t positions = 0;
};

PoseAccuracy bc_eval_accuracy(const PolicyNet& net, const Parameters& params,
                              const std::vector<Trajectory>& trajectories);

}  // namespace dancerl
