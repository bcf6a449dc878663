#pragma once

#include <functional>
#include <string>

#include "dancerl/core/params.hpp"

namespace dancerl {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst;  // "<param name>[index]" or "input[index]"
  std::size_t checked = 0;

  bool passed(double tolerance) const { return max_rel_error < tolerance; }
};

// Scalar objective of (parameters, input).
using ScalarFn = std::function<double(const Parameters&, const Tensor&)>;
// Analytic gradient of the same objective: fills grads (pre-zeroed) and dinput.
using GradientFn = std::function<void(const Parameters&, const Tensor&, Gradients&, Tensor&)>;

// Compares the analytic gradient against central finite differences for every
// parameter scalar and every input scalar:
//   max |analytic - fd| / max(|analytic|, |fd|, 1e-8)
// Pass an empty input tensor to check parameters only.
GradCheckReport gradient_check(Parameters& params, Tensor input, const ScalarFn& objective,
                               const GradientFn& gradient, double step = 1e-5);

}  // namespace dancerl
