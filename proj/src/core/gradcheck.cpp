#include "dancerl/core/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace dancerl {

namespace {
double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}
}  // namespace

GradCheckReport gradient_check(Parameters& params, Tensor input, const ScalarFn& objective,
                               const GradientFn& gradient, double step) {
  Gradients grads(params);
  Tensor dinput(input.shape(), 0.0);
  gradient(params, input, grads, dinput);

  GradCheckReport report;
  auto consider = [&](double analytic, double numeric, const std::string& where) {
    ++report.checked;
    const double err = relative_error(analytic, numeric);
    if (err > report.max_rel_error || report.worst.empty()) {
      report.max_rel_error = err;
      report.worst = where;
    }
  };

  for (ParamId p = 0; p < params.count(); ++p) {
    Tensor& w = params[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      const double orig = w[i];
      w[i] = orig + step;
      const double fp = objective(params, input);
      w[i] = orig - step;
      const double fm = objective(params, input);
      w[i] = orig;
      consider(grads[p][i], (fp - fm) / (2.0 * step),
               params.name(p) + "[" + std::to_string(i) + "]");
    }
  }
  for (std::size_t i = 0; i < input.size(); ++i) {
    const double orig = input[i];
    input[i] = orig + step;
    const double fp = objective(params, input);
    input[i] = orig - step;
    const double fm = objective(params, input);
    input[i] = orig;
    consider(dinput[i], (fp - fm) / (2.0 * step), "input[" + std::to_string(i) + "]");
  }
  return report;
}

}  // namespace dancerl
