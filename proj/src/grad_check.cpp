#include "sensorcomp/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace sc {

GradCheckResult grad_check(const std::function<VarD(TapeD&)>& loss_fn, std::span<const VarD> params, double eps,
                           double floor) {
  for (const auto& p : params) {
    p->requires_grad = true;
    p->zero_grad();
  }
  TapeD tape;
  tape.backward(loss_fn(tape));

  GradCheckResult result;
  for (const auto& p : params) {
    const TensorD analytic = p->gradient();
    auto values = p->value.data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      TapeD probe(false);
      values[i] = saved + eps;
      const double up = loss_fn(probe)->value[0];
      values[i] = saved - eps;
      const double down = loss_fn(probe)->value[0];
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double a = analytic[i];
      const double abs_err = std::abs(a - numeric);
      const double rel_err = abs_err / std::max({std::abs(a), std::abs(numeric), floor});
      result.max_abs_error = std::max(result.max_abs_error, abs_err);
      result.max_rel_error = std::max(result.max_rel_error, rel_err);
      ++result.checked;
    }
    p->zero_grad();
  }
  return result;
}

}  // namespace sc
