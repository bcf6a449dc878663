#pragma once

#include <span>
#include <string>
#include <vector>

#include "dancerl/core/layers.hpp"
#include "dancerl/env/env.hpp"

namespace dancerl {

// Per-modality input maps plus a learned timestep embedding shared by both
// modalities: music rows go through a linear layer, pose codes through one
// table per body half.
struct TokenEmbedding {
  Linear music;
  ParamId upper_table = 0;  // [codes x dim]
  ParamId lower_table = 0;  // [codes x dim]
  ParamId pose_bias = 0;    // [dim]
  ParamId time_table = 0;   // [max_timestep + 1 x dim]
  std::size_t dim = 0;
  std::size_t codes = 0;
  std::size_t max_timestep = 0;

  static TokenEmbedding create(Parameters& params, const std::string& name,
                               std::size_t feature_dim, std::size_t codes,
                               std::size_t max_timestep, std::size_t dim, Rng& rng,
                               double init_std);

  Tensor forward(const Parameters& params, const TokenSeq& seq) const;
  void backward(const Parameters& params, const TokenSeq& seq, const Tensor& dx,
                Gradients& grads) const;
  void embed_one(const Parameters& params, const TokenSeq& seq, std::size_t i, double* out) const;

  void check(const TokenSeq& seq) const;
};

using BlockCaches = std::vector<TransformerBlock::Cache>;

Tensor forward_blocks(const Parameters& params, std::span<const TransformerBlock> blocks,
                      Tensor x, BlockCaches& caches,
                      const TransformerBlock::DropoutSet& dropout = {});
Tensor backward_blocks(const Parameters& params, std::span<const TransformerBlock> blocks,
                       const BlockCaches& caches, Tensor dy, Gradients& grads);

// Incremental (one position at a time) evaluation of a block stack.
struct BlockStackKV {
  std::vector<CausalSelfAttention::KV> kv;
  explicit BlockStackKV(std::size_t blocks = 0) : kv(blocks) {}
};
std::vector<double> step_blocks(const Parameters& params, std::span<const TransformerBlock> blocks,
                                BlockStackKV& state, std::vector<double> row);

// Shape shared by the policy, value and reward transformers.
struct EncoderShape {
  int dim = 32;
  int heads = 2;
  int blocks = 2;
  int ffn_mult = 4;
  int window = 0;  // attention window in tokens, 0 = full causal context
  double init_std = 0.02;

  void validate(const char* what) const;
};

}  // namespace dancerl
