#pragma once

#include <span>
#include <vector>

#include "dancerl/core/tensor.hpp"

namespace dancerl {

struct LossAndGrad {
  double loss = 0.0;
  Tensor grad;
};

// Mean over rows of -log softmax(logits)[target]; grad = (softmax - onehot) / B.
LossAndGrad softmax_cross_entropy(const Tensor& logits, std::span<const int> targets);

// Max-shifted log-softmax of one row.
std::vector<double> log_softmax(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);

// log(exp(a) + exp(b)) without overflow.
double log_add_exp(double a, double b);

}  // namespace dancerl
