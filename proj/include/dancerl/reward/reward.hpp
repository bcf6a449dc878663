#pragma once

#include <cstdint>
#include <vector>

#include "dancerl/demos/demos.hpp"

namespace dancerl {

// Per-step reward r_t = head([x_t^music, x_t^pose]) on top of a causal
// transformer over an interleaved snippet (m_1, p_1, ..., m_W, p_W).
struct RewardNet {
  EncoderShape shape;
  TokenEmbedding embed;
  std::vector<TransformerBlock> blocks;
  Linear head;  // [2*dim -> 1]

  struct Cache {
    BlockCaches blocks;
    Tensor hidden;
    Tensor joint;  // [steps x 2*dim]
  };

  static RewardNet create(Parameters& params, const EnvConfig& env, const EncoderShape& shape,
                          Rng& rng);

  // Per-step rewards. `dropout` is only used during training.
  std::vector<double> forward(const Parameters& params, const TokenSeq& seq, Cache* cache = nullptr,
                              const TransformerBlock::DropoutSet& dropout = {}) const;
  void backward(const Parameters& params, const TokenSeq& seq, const Cache& cache,
                std::span<const double> d_rewards, Gradients& grads) const;
};

struct RewardOutput {
  std::vector<double> rewards;
  double total = 0.0;  // sum of rewards in step order
};

RewardOutput reward_forward(const RewardNet& net, const Parameters& params, const TokenSeq& seq);

// P(first < second) under the Bradley-Terry model: sigmoid(u_second - u_first).
double ranking_prob(double u_first, double u_second);

// Pairwise loss for one pair and its derivatives w.r.t. both returns.
struct PairLoss {
  double loss = 0.0;
  double d_first = 0.0;
  double d_second = 0.0;
};
PairLoss pair_loss(double u_first, double u_second, int label);

// Mean pairwise loss over a batch of predicted returns.
double rm_loss(std::span<const double> u_first, std::span<const double> u_second,
               std::span<const int> labels);

struct RMConfig {
  EncoderShape shape{.dim = 64, .heads = 4, .blocks = 1, .ffn_mult = 2};
  double dropout = 0.1;
  int epochs = 20;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double final_lr_fraction = 0.1;  // linear decay across epochs
  double weight_decay = 2.5e-3;
  bool decoupled_decay = true;  // false: L2 added to the gradient
  double grad_clip = 0.25;
  int window = 20;
  std::size_t train_pairs = 5000;
  std::size_t heldout_pairs = 1000;
  std::uint64_t seed = 0;

  void validate() const;
};

struct RMEpochLog {
  int epoch = 0;
  double train_loss = 0.0;
  double train_accuracy = 0.0;
  double heldout_accuracy = 0.0;
};

struct RMResult {
  std::vector<RMEpochLog> epochs;
};

// Pairwise ranking accuracy; a tie counts as wrong.
double rm_rank_accuracy(const RewardNet& net, const Parameters& params, const RankedDemoSet& set,
                        std::span<const SnippetPair> pairs);

// Trains on pairs sampled from `train`; held-out accuracy is measured on pairs
// sampled from `heldout` (typically demonstrations on unseen tracks).
RMResult rm_train(const RewardNet& net, Parameters& params, const RankedDemoSet& train,
                  const RankedDemoSet& heldout, const RMConfig& cfg);

// Sparse episode reward: zeros except r_{T-1} = u(whole trajectory).
std::vector<double> sparse_reward(const RewardNet& net, const Parameters& params,
                                  const Trajectory& traj);

// Optional running mean/variance normalisation of episode returns.
class RunningNormalizer {
 public:
  void update(double x);
  double normalize(double x) const;
  double mean() const { return mean_; }
  double variance() const { return count_ > 1 ? m2_ / static_cast<double>(count_ - 1) : 1.0; }

 private:
  std::size_t count_ = 0;
  double mean_ = 0.0;
  double m2_ = 0.0;
};

}  // namespace dancerl
