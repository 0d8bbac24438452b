#include "sensorcomp/adam.hpp"

#include <algorithm>
#include <cmath>

namespace sc {

Adam::Adam(std::vector<Var> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate >= 0.0)) throw ContractError("adam: learning rate must be >= 0");
  if (config_.clip_value && !(*config_.clip_value > 0.0)) throw ContractError("adam: clip value must be > 0");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.push_back(Tensor::zeros(p->value.shape()));
    v_.push_back(Tensor::zeros(p->value.shape()));
  }
}

double Adam::effective_learning_rate() const {
  return config_.learning_rate / (1.0 + config_.decay * static_cast<double>(steps_));
}

void Adam::step() {
  const double lr = effective_learning_rate();
  ++steps_;
  const double t = static_cast<double>(steps_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  const float b1 = static_cast<float>(config_.beta1), b2 = static_cast<float>(config_.beta2);
  const float eps = static_cast<float>(config_.epsilon);
  const float clip = config_.clip_value ? static_cast<float>(*config_.clip_value) : 0.0f;

  for (std::size_t k = 0; k < params_.size(); ++k) {
    auto& p = *params_[k];
    const bool has_grad = !p.grad.empty();
    auto& m = m_[k];
    auto& v = v_[k];
    auto w = p.value.data();
    const auto g = p.grad.data();
    for (std::size_t i = 0; i < w.size(); ++i) {
      float gi = has_grad ? g[i] : 0.0f;
      if (config_.clip_value) gi = std::clamp(gi, -clip, clip);
      max_applied_grad_ = std::max(max_applied_grad_, static_cast<double>(std::abs(gi)));
      m[i] = b1 * m[i] + (1.0f - b1) * gi;
      v[i] = b2 * v[i] + (1.0f - b2) * gi * gi;
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] = static_cast<float>(w[i] - lr * mhat / (std::sqrt(vhat) + eps));
    }
    p.zero_grad();
  }
}

}  // namespace sc
