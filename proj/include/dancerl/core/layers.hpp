#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "dancerl/core/params.hpp"
#include "dancerl/core/tensor.hpp"

// Building blocks with explicit forward/backward passes. Layers only hold
// parameter ids; values live in a Parameters container and gradients are
// accumulated into a caller-owned Gradients, so one parameter set can be
// read concurrently by many forward passes.
namespace dancerl {

// Inverted dropout. Inactive when rate == 0 or no generator is attached.
struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rate > 0.0 && rng != nullptr; }
  // Returns a mask of 0 or 1/(1-rate) with the given shape.
  Tensor sample_mask(std::size_t rows, std::size_t cols) const;
};

struct Linear {
  ParamId weight = 0;  // [in x out]
  ParamId bias = 0;    // [out]
  std::size_t in = 0;
  std::size_t out = 0;
  bool has_bias = true;

  static Linear create(Parameters& params, const std::string& name, std::size_t in,
                       std::size_t out, Rng& rng, double init_std, bool with_bias = true);

  Tensor forward(const Parameters& params, const Tensor& x) const;
  // Accumulates dW, db; returns dx.
  Tensor backward(const Parameters& params, const Tensor& x, const Tensor& dy, Gradients& grads,
                  bool want_dx = true) const;
  void forward_row(const Parameters& params, const double* x, double* y) const;
};

struct LayerNorm {
  ParamId gain = 0;
  ParamId shift = 0;
  std::size_t dim = 0;
  double eps = 1e-5;

  struct Cache {
    Tensor normalized;
    std::vector<double> inv_std;
  };

  static LayerNorm create(Parameters& params, const std::string& name, std::size_t dim);
  Tensor forward(const Parameters& params, const Tensor& x, Cache& cache) const;
  Tensor backward(const Parameters& params, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;
  void forward_row(const Parameters& params, const double* x, double* y) const;
};

// Multi-head self-attention with a causal mask. window > 0 restricts
// position i to keys in [i - window + 1, i].
struct CausalSelfAttention {
  Linear query;
  Linear key;  // no bias: a key bias shifts every logit of a row equally
  Linear value;
  Linear proj;
  std::size_t dim = 0;
  std::size_t heads = 0;
  std::size_t window = 0;

  struct Cache {
    Tensor x, q, k, v;
    Tensor probs;    // [heads*L x L], softmax output
    Tensor dropped;  // probs after dropout (aliases probs when dropout is off)
    Tensor mask;     // empty when dropout is off
    Tensor context;  // [L x dim]
  };

  // Incremental decoding state: keys/values of all previous positions.
  struct KV {
    std::vector<double> keys;
    std::vector<double> values;
    std::size_t length = 0;
  };

  static CausalSelfAttention create(Parameters& params, const std::string& name, std::size_t dim,
                                    std::size_t heads, Rng& rng, double init_std,
                                    std::size_t window = 0);

  Tensor forward(const Parameters& params, const Tensor& x, Cache& cache,
                 const Dropout& attn_dropout = {}) const;
  Tensor backward(const Parameters& params, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;
  // Appends one position and returns its output row.
  void step(const Parameters& params, const double* x, KV& kv, double* y) const;

  std::size_t first_key(std::size_t i) const { return (window == 0 || i + 1 <= window) ? 0 : i + 1 - window; }
};

double gelu(double x);
double gelu_grad(double x);

struct FeedForward {
  Linear fc1;
  Linear fc2;

  struct Cache {
    Tensor x, pre, act;
  };

  static FeedForward create(Parameters& params, const std::string& name, std::size_t dim,
                            std::size_t hidden, Rng& rng, double init_std);
  Tensor forward(const Parameters& params, const Tensor& x, Cache& cache) const;
  Tensor backward(const Parameters& params, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;
  void forward_row(const Parameters& params, const double* x, double* y) const;
};

// Post-norm transformer block:
//   h = LN1(x + drop(attn(x))),  y = LN2(h + drop(ffn(h)))
struct TransformerBlock {
  CausalSelfAttention attn;
  LayerNorm ln1;
  FeedForward ffn;
  LayerNorm ln2;

  struct Cache {
    CausalSelfAttention::Cache attn;
    Tensor attn_mask;
    LayerNorm::Cache ln1;
    FeedForward::Cache ffn;
    Tensor ffn_mask;
    LayerNorm::Cache ln2;
  };

  struct DropoutSet {
    Dropout attention;
    Dropout residual;
  };

  static TransformerBlock create(Parameters& params, const std::string& name, std::size_t dim,
                                 std::size_t heads, std::size_t ffn_hidden, Rng& rng,
                                 double init_std, std::size_t window = 0);

  Tensor forward(const Parameters& params, const Tensor& x, Cache& cache,
                 const DropoutSet& dropout = {}) const;
  Tensor backward(const Parameters& params, const Cache& cache, const Tensor& dy,
                  Gradients& grads) const;
  void step(const Parameters& params, const double* x, CausalSelfAttention::KV& kv,
            double* y) const;
};

}  // namespace dancerl
