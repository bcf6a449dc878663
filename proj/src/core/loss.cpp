#include "dancerl/core/loss.hpp"

#include <algorithm>
#include <cmath>

#include "dancerl/core/errors.hpp"

namespace dancerl {

std::vector<double> log_softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (double z : logits) sum += std::exp(z - mx);
  const double lse = mx + std::log(sum);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    sum += out[i];
  }
  for (auto& p : out) p /= sum;
  return out;
}

double log_add_exp(double a, double b) {
  const double mx = std::max(a, b);
  if (std::isinf(mx) && mx < 0) return mx;
  return mx + std::log(std::exp(a - mx) + std::exp(b - mx));
}

LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> targets) {
  const std::size_t B = logits.rows();
  const std::size_t C = logits.cols();
  if (targets.size() != B) throw ContractError("softmax_cross_entropy: target count mismatch");
  LossAndGrad out;
  out.grad = Tensor::matrix(B, C);
  if (B == 0) return out;
  const double inv_b = 1.0 / static_cast<double>(B);
  for (std::size_t r = 0; r < B; ++r) {
    const int t = targets[r];
    if (t < 0 || static_cast<std::size_t>(t) >= C)
      throw InputError("softmax_cross_entropy: target " + std::to_string(t) + " outside [0," +
                       std::to_string(C) + ")");
    const auto lp = log_softmax(logits.row(r));
    out.loss -= lp[static_cast<std::size_t>(t)];
    for (std::size_t c = 0; c < C; ++c)
      out.grad(r, c) = (std::exp(lp[c]) - (static_cast<int>(c) == t ? 1.0 : 0.0)) * inv_b;
  }
  out.loss *= inv_b;
  return out;
}

}  // namespace dancerl
