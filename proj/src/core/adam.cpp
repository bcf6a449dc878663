#include "dancerl/core/adam.hpp"

#include <cmath>

#include "dancerl/core/errors.hpp"

namespace dancerl {

AdamState::AdamState(const Parameters& params, AdamConfig cfg) : config(cfg) {
  for (ParamId i = 0; i < params.count(); ++i) {
    first_moment.emplace_back(params[i].shape(), 0.0);
    second_moment.emplace_back(params[i].shape(), 0.0);
  }
}

void adam_step(Parameters& params, const Gradients& grads, AdamState& state) {
  if (grads.count() != params.count() || state.first_moment.size() != params.count())
    throw ContractError("adam_step: parameter/gradient/state count mismatch");
  const AdamConfig& c = state.config;
  ++state.step;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(state.step));

  for (ParamId i = 0; i < params.count(); ++i) {
    auto& w = params[i].storage();
    const auto& g = grads[i].storage();
    auto& m = state.first_moment[i].storage();
    auto& v = state.second_moment[i].storage();
    if (g.size() != w.size() || m.size() != w.size())
      throw ContractError("adam_step: shape mismatch for " + params.name(i));
    for (std::size_t j = 0; j < w.size(); ++j) {
      double gj = g[j];
      if (!c.decoupled && c.weight_decay != 0.0) gj += c.weight_decay * w[j];
      m[j] = c.beta1 * m[j] + (1.0 - c.beta1) * gj;
      v[j] = c.beta2 * v[j] + (1.0 - c.beta2) * gj * gj;
      const double mhat = m[j] / bc1;
      const double vhat = v[j] / bc2;
      if (c.decoupled && c.weight_decay != 0.0) w[j] -= c.learning_rate * c.weight_decay * w[j];
      w[j] -= c.learning_rate * mhat / (std::sqrt(vhat) + c.eps);
    }
  }
}

}  // namespace dancerl
