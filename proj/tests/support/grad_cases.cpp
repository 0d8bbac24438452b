#include "grad_cases.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sensorcomp/ops.hpp"

namespace sc::testing {
namespace {

constexpr double kEps = 1e-3;

std::size_t dim(Rng& rng, std::size_t lo = 1, std::size_t hi = 6) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

VarD rand_leaf(Shape s, Rng& rng, double scale = 1.0) { return make_leaf(uniform<double>(std::move(s), -scale, scale, rng), true); }

/// Values bounded away from zero so a relu kink is never within eps.
VarD off_kink_leaf(Shape s, Rng& rng) {
  auto t = uniform<double>(std::move(s), -1.0, 1.0, rng);
  for (auto& v : t.data())
    if (std::abs(v) < 0.05) v = v < 0 ? -0.05 - std::abs(v) : 0.05 + v;
  return make_leaf(std::move(t), true);
}

/// Distinct values at least 0.05 apart, so no max-pool argmax flips under eps.
VarD spread_leaf(Shape s, Rng& rng) {
  TensorD t(std::move(s));
  std::vector<std::size_t> order(t.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = 0.05 * static_cast<double>(order[i]) - 0.5;
  return make_leaf(std::move(t), true);
}

/// mse against a fixed random target: a smooth scalar probe of any output.
std::function<VarD(TapeD&, const VarD&)> mse_probe(const Shape& out_shape, Rng& rng) {
  auto target = make_leaf(uniform<double>(out_shape, -1.0, 1.0, rng));
  return [target](TapeD& tape, const VarD& y) { return ops::mse(tape, y, target); };
}

GradCheckResult check(const std::function<VarD(TapeD&)>& f, std::vector<VarD> params) {
  return grad_check(f, params, kEps);
}

Shape output_shape(const std::function<VarD(TapeD&)>& forward) {
  TapeD t(false);
  return forward(t)->value.shape();
}

GradCheckResult probe_all(const std::function<VarD(TapeD&)>& forward, std::vector<VarD> params, Rng& rng) {
  auto probe = mse_probe(output_shape(forward), rng);
  return check([&](TapeD& t) { return probe(t, forward(t)); }, std::move(params));
}

bool min_abs_at_least(const TensorD& t, double bound) {
  return std::all_of(t.data().begin(), t.data().end(), [&](double v) { return std::abs(v) >= bound; });
}

GradCheckResult dense_case(Rng& rng) {
  auto x = rand_leaf({dim(rng), dim(rng)}, rng);
  auto w = rand_leaf({x->value.dim(1), dim(rng)}, rng);
  auto b = rand_leaf({w->value.dim(1)}, rng);
  return probe_all([=](TapeD& t) { return ops::dense(t, x, w, b); }, {x, w, b}, rng);
}

GradCheckResult dense_relu_case(Rng& rng) {
  while (true) {
    auto x = rand_leaf({dim(rng), dim(rng)}, rng);
    auto w = rand_leaf({x->value.dim(1), dim(rng)}, rng);
    auto b = rand_leaf({w->value.dim(1)}, rng);
    TapeD probe(false);
    if (!min_abs_at_least(ops::dense(probe, x, w, b)->value, 0.05)) continue;
    return probe_all([=](TapeD& t) { return ops::activate(t, ops::dense(t, x, w, b), Activation::relu); }, {x, w, b},
                     rng);
  }
}

GradCheckResult conv1d_case(Rng& rng) {
  const std::size_t k = dim(rng, 1, 3);
  const auto pad = std::bernoulli_distribution(0.5)(rng) ? Padding::same : Padding::valid;
  auto x = rand_leaf({dim(rng, 1, 3), dim(rng, k, 6), dim(rng, 1, 4)}, rng);
  auto kern = rand_leaf({k, x->value.dim(2), dim(rng, 1, 4)}, rng);
  auto b = rand_leaf({kern->value.dim(2)}, rng);
  return probe_all([=](TapeD& t) { return ops::conv1d(t, x, kern, b, pad); }, {x, kern, b}, rng);
}

GradCheckResult conv2d_case(Rng& rng) {
  const std::size_t kh = dim(rng, 1, 3), kw = dim(rng, 1, 3);
  const auto pad = std::bernoulli_distribution(0.5)(rng) ? Padding::same : Padding::valid;
  auto x = rand_leaf({dim(rng, 1, 2), dim(rng, kh, 5), dim(rng, kw, 5), dim(rng, 1, 3)}, rng);
  auto kern = rand_leaf({kh, kw, x->value.dim(3), dim(rng, 1, 3)}, rng);
  auto b = rand_leaf({kern->value.dim(3)}, rng);
  return probe_all([=](TapeD& t) { return ops::conv2d(t, x, kern, b, pad); }, {x, kern, b}, rng);
}

GradCheckResult conv2d_sigmoid_case(Rng& rng) {
  auto x = rand_leaf({2, dim(rng, 3, 5), dim(rng, 3, 5), 2}, rng);
  auto kern = rand_leaf({3, 3, 2, 3}, rng);
  auto b = rand_leaf({3}, rng);
  return probe_all(
      [=](TapeD& t) { return ops::activate(t, ops::conv2d(t, x, kern, b, Padding::same), Activation::sigmoid); },
      {x, kern, b}, rng);
}

GradCheckResult max_pool_case(Rng& rng) {
  Shape s{dim(rng, 1, 2), dim(rng, 1, 6), dim(rng, 1, 6), dim(rng, 1, 3)};
  Shape window{1, dim(rng, 1, 3), dim(rng, 1, 3), 1};
  auto x = spread_leaf(s, rng);
  return probe_all([=](TapeD& t) { return ops::max_pool(t, x, window); }, {x}, rng);
}

GradCheckResult upsample_case(Rng& rng) {
  auto x = rand_leaf({dim(rng, 1, 2), dim(rng, 1, 4), dim(rng, 1, 4), dim(rng, 1, 3)}, rng);
  const std::size_t fh = dim(rng, 1, 3), fw = dim(rng, 1, 3);
  return probe_all([=](TapeD& t) { return ops::upsample2d(t, x, fh, fw); }, {x}, rng);
}

GradCheckResult lstm_case(Rng& rng, std::size_t steps) {
  const std::size_t c = dim(rng, 1, 4), u = dim(rng, 1, 4);
  auto x = rand_leaf({dim(rng, 1, 3), steps, c}, rng);
  LstmWeights<double> w{rand_leaf({c, 4 * u}, rng, 0.7), rand_leaf({u, 4 * u}, rng, 0.7), rand_leaf({4 * u}, rng, 0.5)};
  const bool seq = std::bernoulli_distribution(0.5)(rng);
  return probe_all([=](TapeD& t) { return ops::lstm(t, x, w, seq); },
                   {x, w.input_kernel, w.recurrent_kernel, w.bias}, rng);
}

GradCheckResult activation_case(Rng& rng, Activation a) {
  Shape s{dim(rng), dim(rng)};
  auto x = a == Activation::relu ? off_kink_leaf(s, rng) : rand_leaf(s, rng, 2.0);
  return probe_all([=](TapeD& t) { return ops::activate(t, x, a); }, {x}, rng);
}

GradCheckResult mse_case(Rng& rng) {
  Shape s{dim(rng), dim(rng)};
  auto p = rand_leaf(s, rng);
  auto q = rand_leaf(s, rng);
  return check([=](TapeD& t) { return ops::mse(t, p, q); }, {p, q});
}

GradCheckResult cross_entropy_case(Rng& rng) {
  const std::size_t n = dim(rng), k = dim(rng, 2, 6);
  auto logits = rand_leaf({n, k}, rng, 2.0);
  TensorD onehot(Shape{n, k});
  for (std::size_t r = 0; r < n; ++r) onehot.at({r, std::uniform_int_distribution<std::size_t>(0, k - 1)(rng)}) = 1.0;
  auto y = make_leaf(std::move(onehot));
  return check(
      [=](TapeD& t) { return ops::categorical_cross_entropy(t, ops::activate(t, logits, Activation::softmax), y); },
      {logits});
}

}  // namespace

std::vector<GradCase> gradient_cases() {
  return {
      {"dense", 1e-4, dense_case},
      {"dense+relu+mse", 1e-4, dense_relu_case},
      {"conv1d", 1e-4, conv1d_case},
      {"conv2d", 1e-4, conv2d_case},
      {"conv2d+sigmoid+mse", 1e-4, conv2d_sigmoid_case},
      {"max_pool", 1e-4, max_pool_case},
      {"upsample2d", 1e-4, upsample_case},
      {"lstm", 1e-3, [](Rng& r) { return lstm_case(r, dim(r, 1, 5)); }},
      {"lstm(T=3)+mse", 1e-3, [](Rng& r) { return lstm_case(r, 3); }},
      {"activation:relu", 1e-4, [](Rng& r) { return activation_case(r, Activation::relu); }},
      {"activation:sigmoid", 1e-4, [](Rng& r) { return activation_case(r, Activation::sigmoid); }},
      {"activation:tanh", 1e-4, [](Rng& r) { return activation_case(r, Activation::tanh); }},
      {"activation:softmax", 1e-4, [](Rng& r) { return activation_case(r, Activation::softmax); }},
      {"activation:linear", 1e-4, [](Rng& r) { return activation_case(r, Activation::linear); }},
      {"mse", 1e-4, mse_case},
      {"categorical_cross_entropy", 1e-4, cross_entropy_case},
  };
}

GradCaseSummary run_gradient_case(const GradCase& c, std::size_t instances, std::uint64_t seed) {
  Rng rng(seed);
  GradCaseSummary s{c.name, c.tolerance, 0.0, 0};
  for (std::size_t i = 0; i < instances; ++i) {
    s.worst_rel_error = std::max(s.worst_rel_error, c.run_instance(rng).max_rel_error);
    ++s.instances;
  }
  return s;
}

}  // namespace sc::testing
