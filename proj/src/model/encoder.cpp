#include "dancerl/model/encoder.hpp"

#include "dancerl/core/errors.hpp"

namespace dancerl {

void EncoderShape::validate(const char* what) const {
  const std::string w(what);
  if (dim < 1 || heads < 1 || blocks < 1 || ffn_mult < 1)
    throw ConfigError(w + ": dim, heads, blocks and ffn_mult must be positive");
  if (dim % heads != 0) throw ConfigError(w + ": dim must be divisible by heads");
  if (window < 0) throw ConfigError(w + ": window must be >= 0");
  if (init_std <= 0.0) throw ConfigError(w + ": init_std must be positive");
}

TokenEmbedding TokenEmbedding::create(Parameters& params, const std::string& name,
                                      std::size_t feature_dim, std::size_t codes,
                                      std::size_t max_timestep, std::size_t dim, Rng& rng,
                                      double init_std) {
  TokenEmbedding e;
  e.dim = dim;
  e.codes = codes;
  e.max_timestep = max_timestep;
  e.music = Linear::create(params, name + ".music", feature_dim, dim, rng, init_std);
  Tensor up = Tensor::matrix(codes, dim);
  init_normal(up, rng, init_std);
  e.upper_table = params.add(name + ".upper", std::move(up));
  Tensor lo = Tensor::matrix(codes, dim);
  init_normal(lo, rng, init_std);
  e.lower_table = params.add(name + ".lower", std::move(lo));
  e.pose_bias = params.add(name + ".pose_bias", Tensor::vector(dim));
  Tensor tt = Tensor::matrix(max_timestep + 1, dim);
  init_normal(tt, rng, init_std);
  e.time_table = params.add(name + ".time", std::move(tt));
  return e;
}

void TokenEmbedding::check(const TokenSeq& seq) const {
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int ts = seq.timestep[i];
    if (ts < 0 || static_cast<std::size_t>(ts) > max_timestep)
      throw InputError("token timestep " + std::to_string(ts) + " outside embedding table");
    if (seq.kind[i] == TokenKind::Music) {
      if (seq.music[i] == nullptr) throw InputError("music token without features");
    } else {
      const PoseCode p = seq.pose[i];
      if (p.upper < 0 || p.lower < 0 || static_cast<std::size_t>(p.upper) >= codes ||
          static_cast<std::size_t>(p.lower) >= codes)
        throw InputError("pose token outside codebook");
    }
  }
}

void TokenEmbedding::embed_one(const Parameters& params, const TokenSeq& seq, std::size_t i,
                               double* out) const {
  const Tensor& tt = params[time_table];
  const std::size_t ts = static_cast<std::size_t>(seq.timestep[i]);
  if (seq.kind[i] == TokenKind::Music) {
    music.forward_row(params, seq.music[i], out);
  } else {
    const Tensor& up = params[upper_table];
    const Tensor& lo = params[lower_table];
    const Tensor& pb = params[pose_bias];
    const auto u = static_cast<std::size_t>(seq.pose[i].upper);
    const auto l = static_cast<std::size_t>(seq.pose[i].lower);
    for (std::size_t d = 0; d < dim; ++d) out[d] = up(u, d) + lo(l, d) + pb[d];
  }
  for (std::size_t d = 0; d < dim; ++d) out[d] += tt(ts, d);
}

Tensor TokenEmbedding::forward(const Parameters& params, const TokenSeq& seq) const {
  check(seq);
  Tensor x = Tensor::matrix(seq.size(), dim);
  for (std::size_t i = 0; i < seq.size(); ++i) embed_one(params, seq, i, x.data() + i * dim);
  return x;
}

void TokenEmbedding::backward(const Parameters& params, const TokenSeq& seq, const Tensor& dx,
                              Gradients& grads) const {
  std::size_t n_music = 0;
  for (auto k : seq.kind) n_music += (k == TokenKind::Music);
  Tensor xm = Tensor::matrix(n_music, music.in);
  Tensor dm = Tensor::matrix(n_music, dim);
  Tensor& gu = grads[upper_table];
  Tensor& gl = grads[lower_table];
  Tensor& gb = grads[pose_bias];
  Tensor& gt = grads[time_table];
  std::size_t r = 0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const auto ts = static_cast<std::size_t>(seq.timestep[i]);
    for (std::size_t d = 0; d < dim; ++d) gt(ts, d) += dx(i, d);
    if (seq.kind[i] == TokenKind::Music) {
      for (std::size_t f = 0; f < music.in; ++f) xm(r, f) = seq.music[i][f];
      for (std::size_t d = 0; d < dim; ++d) dm(r, d) = dx(i, d);
      ++r;
    } else {
      const auto u = static_cast<std::size_t>(seq.pose[i].upper);
      const auto l = static_cast<std::size_t>(seq.pose[i].lower);
      for (std::size_t d = 0; d < dim; ++d) {
        gu(u, d) += dx(i, d);
        gl(l, d) += dx(i, d);
        gb[d] += dx(i, d);
      }
    }
  }
  if (n_music > 0) music.backward(params, xm, dm, grads, false);
}

Tensor forward_blocks(const Parameters& params, std::span<const TransformerBlock> blocks,
                      Tensor x, BlockCaches& caches, const TransformerBlock::DropoutSet& dropout) {
  caches.resize(blocks.size());
  for (std::size_t b = 0; b < blocks.size(); ++b)
    x = blocks[b].forward(params, x, caches[b], dropout);
  return x;
}

Tensor backward_blocks(const Parameters& params, std::span<const TransformerBlock> blocks,
                       const BlockCaches& caches, Tensor dy, Gradients& grads) {
  for (std::size_t b = blocks.size(); b-- > 0;) dy = blocks[b].backward(params, caches[b], dy, grads);
  return dy;
}

std::vector<double> step_blocks(const Parameters& params, std::span<const TransformerBlock> blocks,
                                BlockStackKV& state, std::vector<double> row) {
  if (state.kv.size() != blocks.size()) state.kv.resize(blocks.size());
  std::vector<double> next(row.size());
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    blocks[b].step(params, row.data(), state.kv[b], next.data());
    row.swap(next);
  }
  return row;
}

}  // namespace dancerl
