#include <gtest/gtest.h>

#include "grad_cases.hpp"
#include "sensorcomp/ops.hpp"

using namespace sc;

class GradientProperty : public ::testing::TestWithParam<std::size_t> {};

TEST_P(GradientProperty, AnalyticMatchesCentralDifferences) {
  const auto cases = sc::testing::gradient_cases();
  const auto& c = cases.at(GetParam());
  const auto s = sc::testing::run_gradient_case(c, 20, 1000 + GetParam());
  EXPECT_LT(s.worst_rel_error, s.tolerance) << c.name;
}

INSTANTIATE_TEST_SUITE_P(AllOps, GradientProperty,
                         ::testing::Range<std::size_t>(0, sc::testing::gradient_cases().size()),
                         [](const auto& info) {
                           std::string n = sc::testing::gradient_cases()[info.param].name;
                           for (auto& ch : n)
                             if (!std::isalnum(static_cast<unsigned char>(ch))) ch = '_';
                           return n;
                         });

TEST(MaxPoolBackward, ConservesGradientMass) {
  Rng rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    auto x = make_leaf(uniform<double>({2, 7, 5, 3}, -1, 1, rng), true);
    TapeD tape;
    auto y = ops::max_pool(tape, x, {1, 2, 3, 1});
    auto target = make_leaf(uniform<double>(y->value.shape(), -1, 1, rng));
    tape.backward(ops::mse(tape, y, target));
    double incoming = 0;
    for (std::size_t i = 0; i < y->value.size(); ++i)
      incoming += 2.0 * (y->value[i] - target->value[i]) / static_cast<double>(y->value.size());
    double routed = 0;
    for (double v : x->gradient().data()) routed += v;
    EXPECT_NEAR(routed, incoming, 1e-12);
  }
}
