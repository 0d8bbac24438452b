#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "sensorcomp/autodiff.hpp"

namespace sc {

struct AdamConfig {
  double learning_rate = 1e-3;
  double decay = 0.0;                 // lr_t = lr / (1 + decay * iterations)
  std::optional<double> clip_value;  // elementwise clamp to [-clip, clip]
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Adam with bias correction, optional elementwise gradient clipping and
/// time-based learning-rate decay. Owns one moment pair per parameter; a
/// single training loop drives it.
class Adam {
 public:
  Adam(std::vector<Var> params, AdamConfig config);

  /// Applies one update from the parameters' accumulated gradients, then
  /// clears them. A parameter with no gradient is treated as zero gradient.
  void step();

  /// Learning rate the next step() will use.
  double effective_learning_rate() const;

  std::uint64_t steps() const noexcept { return steps_; }
  const AdamConfig& config() const noexcept { return config_; }
  const std::vector<Tensor>& first_moments() const noexcept { return m_; }
  const std::vector<Tensor>& second_moments() const noexcept { return v_; }

  /// Largest |g| seen after clipping, over all steps so far.
  double max_applied_gradient() const noexcept { return max_applied_grad_; }

 private:
  std::vector<Var> params_;
  AdamConfig config_;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
  std::uint64_t steps_ = 0;
  double max_applied_grad_ = 0.0;
};

}  // namespace sc
