#pragma once

#include <functional>
#include <span>

#include "sensorcomp/autodiff.hpp"

namespace sc {

struct GradCheckResult {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;  // number of scalar parameters compared
};

/// Compares backward() against central finite differences on every element of
/// every parameter. `loss_fn` must rebuild the graph from the (mutable)
/// parameter leaves on each call and return a scalar.
///
/// Relative error per element is |a - n| / max(|a|, |n|, floor); the floor
/// keeps near-zero components from turning rounding noise into huge ratios.
GradCheckResult grad_check(const std::function<VarD(TapeD&)>& loss_fn, std::span<const VarD> params,
                           double eps = 1e-3, double floor = 1e-6);

}  // namespace sc
