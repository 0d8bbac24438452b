#include <gtest/gtest.h>

#include <cmath>

#include "sensorcomp/adam.hpp"

using namespace sc;

namespace {

Var param(std::vector<float> v) {
  const std::size_t n = v.size();
  return make_leaf(Tensor(Shape{n}, std::move(v)), true);
}

void set_grad(const Var& p, std::vector<float> g) { p->grad = Tensor(p->value.shape(), std::move(g)); }

}  // namespace

TEST(Adam, ZeroGradientLeavesParamsUnchanged) {
  auto p = param({1.5f, -2.0f});
  Adam opt({p}, {});
  set_grad(p, {0, 0});
  opt.step();
  EXPECT_EQ(p->value[0], 1.5f);
  EXPECT_EQ(p->value[1], -2.0f);
}

TEST(Adam, FirstStepMovesByLearningRate) {
  auto p = param({0.0f});
  Adam opt({p}, {.learning_rate = 0.001});
  set_grad(p, {1.0f});
  opt.step();
  // t = 1: mhat = g, vhat = g^2, so the step is lr * g / (|g| + eps).
  EXPECT_NEAR(p->value[0], -0.001 / (1.0 + 1e-8), 1e-8);
}

TEST(Adam, ClipMakesLargeGradientActLikeClipValue) {
  auto clipped = param({0.3f});
  auto reference = param({0.3f});
  Adam a({clipped}, {.learning_rate = 0.01, .clip_value = 0.5});
  Adam b({reference}, {.learning_rate = 0.01});
  for (int i = 0; i < 5; ++i) {
    set_grad(clipped, {2.0f});
    set_grad(reference, {0.5f});
    a.step();
    b.step();
    EXPECT_EQ(clipped->value[0], reference->value[0]);
    EXPECT_EQ(a.first_moments()[0][0], b.first_moments()[0][0]);
  }
  EXPECT_LE(a.max_applied_gradient(), 0.5);
}

TEST(Adam, ClipBoundHoldsForArbitraryGradients) {
  Rng rng(4);
  auto p = make_leaf(Tensor::zeros({64}), true);
  Adam opt({p}, {.clip_value = 0.5});
  for (int i = 0; i < 20; ++i) {
    p->grad = uniform<float>({64}, -1e6f, 1e6f, rng);
    opt.step();
  }
  EXPECT_LE(opt.max_applied_gradient(), 0.5);
}

TEST(Adam, MatchesHandEvaluatedTwoSteps) {
  auto p = param({1.0f});
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  Adam opt({p}, {.learning_rate = lr});
  double w = 1.0, m = 0, v = 0;
  const double grads[] = {0.4, -1.3};
  for (int t = 1; t <= 2; ++t) {
    const double g = grads[t - 1];
    set_grad(p, {static_cast<float>(g)});
    opt.step();
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    w -= lr * (m / (1 - std::pow(b1, t))) / (std::sqrt(v / (1 - std::pow(b2, t))) + eps);
    EXPECT_NEAR(p->value[0], w, 1e-6);
  }
}

TEST(Adam, DecaySchedule) {
  auto p = param({0.0f});
  Adam opt({p}, {.learning_rate = 0.001, .decay = 1e-2});
  double previous = opt.effective_learning_rate();
  EXPECT_DOUBLE_EQ(previous, 0.001);
  for (std::uint64_t k = 1; k <= 50; ++k) {
    set_grad(p, {1.0f});
    opt.step();
    EXPECT_EQ(opt.steps(), k);
    const double lr = opt.effective_learning_rate();
    EXPECT_DOUBLE_EQ(lr, 0.001 / (1.0 + 1e-2 * static_cast<double>(k)));
    EXPECT_LE(lr, previous);
    EXPECT_GT(lr, 0.0);
    previous = lr;
  }
}

TEST(Adam, MomentBuffersMatchParameterShapes) {
  auto a = make_leaf(Tensor::zeros({3, 4}), true);
  auto b = make_leaf(Tensor::zeros({5}), true);
  Adam opt({a, b}, {});
  EXPECT_EQ(opt.first_moments()[0].shape(), a->value.shape());
  EXPECT_EQ(opt.second_moments()[1].shape(), b->value.shape());
}

TEST(Adam, StepClearsGradients) {
  auto p = param({1.0f});
  Adam opt({p}, {});
  set_grad(p, {1.0f});
  opt.step();
  EXPECT_TRUE(p->grad.empty());
}

TEST(Adam, RejectsNonPositiveClip) {
  auto p = param({1.0f});
  EXPECT_THROW(Adam({p}, {.clip_value = 0.0}), ContractError);
}
