#include "sensorcomp/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace sc {

std::size_t shape_size(const Shape& shape) {
  if (shape.empty()) return 0;
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

template <typename T>
bool BasicTensor<T>::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template <typename T>
BasicTensor<T> concat_rows(std::span<const BasicTensor<T>> parts) {
  if (parts.empty()) throw DimensionError("concat of zero tensors");
  Shape shape = parts.front().shape();
  std::size_t rows = 0;
  for (const auto& p : parts) {
    if (p.rank() != shape.size() || !std::equal(shape.begin() + 1, shape.end(), p.shape().begin() + 1))
      throw DimensionError("concat shape mismatch: " + shape_str(shape) + " vs " + shape_str(p.shape()));
    rows += p.dim(0);
  }
  shape[0] = rows;
  std::vector<T> data;
  data.reserve(shape_size(shape));
  for (const auto& p : parts) data.insert(data.end(), p.data().begin(), p.data().end());
  return BasicTensor<T>(std::move(shape), std::move(data));
}

template <typename T>
BasicTensor<T> glorot_uniform(Shape shape, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const T limit = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return uniform<T>(std::move(shape), -limit, limit, rng);
}

template <typename T>
BasicTensor<T> uniform(Shape shape, T low, T high, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  std::uniform_real_distribution<double> dist(low, high);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

template <typename T>
BasicTensor<T> normal(Shape shape, T mean, T stddev, Rng& rng) {
  BasicTensor<T> t(std::move(shape));
  std::normal_distribution<double> dist(mean, stddev);
  for (auto& v : t.data()) v = static_cast<T>(dist(rng));
  return t;
}

#define SC_INSTANTIATE(T)                                                                    \
  template class BasicTensor<T>;                                                             \
  template BasicTensor<T> concat_rows<T>(std::span<const BasicTensor<T>>);                   \
  template BasicTensor<T> glorot_uniform<T>(Shape, std::size_t, std::size_t, Rng&);          \
  template BasicTensor<T> uniform<T>(Shape, T, T, Rng&);                                     \
  template BasicTensor<T> normal<T>(Shape, T, T, Rng&);

SC_INSTANTIATE(float)
SC_INSTANTIATE(double)

#undef SC_INSTANTIATE

}  // namespace sc
