#pragma once

#include <cstdint>
#include <vector>

#include "dancerl/core/params.hpp"

namespace dancerl {

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  // true: AdamW (decay applied to the weights directly);
  // false: classic L2 (decay folded into the gradient before the moments).
  bool decoupled = true;
};

struct AdamState {
  AdamConfig config;
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;

  AdamState() = default;
  AdamState(const Parameters& params, AdamConfig cfg);
};

// One bias-corrected Adam update; increments state.step.
void adam_step(Parameters& params, const Gradients& grads, AdamState& state);

}  // namespace dancerl
