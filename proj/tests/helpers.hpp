#pragma once

#include <random>

#include "dancerl/core/params.hpp"
#include "dancerl/env/env.hpp"
#include "dancerl/model/encoder.hpp"

namespace dancerl::testing {

inline Tensor random_matrix(std::size_t r, std::size_t c, Rng& rng, double scale = 1.0) {
  Tensor t = Tensor::matrix(r, c);
  std::normal_distribution<double> n(0.0, scale);
  for (double& v : t.storage()) v = n(rng);
  return t;
}

inline double weighted_sum(const Tensor& y, const Tensor& w) {
  double s = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) s += y[i] * w[i];
  return s;
}

// Re-randomises every parameter so gradient checks do not run at the tiny init scale.
inline void shake(Parameters& p, Rng& rng, double scale) {
  std::normal_distribution<double> n(0.0, scale);
  for (ParamId i = 0; i < p.count(); ++i)
    for (double& v : p[i].storage()) v += n(rng);
}

inline void shake_seeded(Parameters& p, std::uint64_t seed, double scale) {
  Rng rng(seed);
  shake(p, rng, scale);
}

inline void zero_param(Parameters& p, ParamId id) {
  for (double& v : p[id].storage()) v = 0.0;
}

// A short environment and a small network keep finite-difference checks fast.
inline EnvConfig small_env() {
  EnvConfig cfg;
  cfg.horizon = 6;
  cfg.feature_dim = 8;
  cfg.codes_per_half = 5;
  cfg.styles = 2;
  cfg.beat_period = 3;
  return cfg;
}

inline EncoderShape small_shape() {
  return EncoderShape{.dim = 8, .heads = 2, .blocks = 2, .ffn_mult = 2};
}

}  // namespace dancerl::testing
