#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "sensorcomp/tensor.hpp"

namespace sc {

/// A value on (or feeding) a tape. Leaves are created with make_leaf; every
/// other node is the output of a recorded op.
template <typename T>
struct Node {
  BasicTensor<T> value;
  BasicTensor<T> grad;  // empty until a gradient reaches this node
  bool requires_grad = false;

  /// Gradient buffer, zero-allocated on first use.
  BasicTensor<T>& grad_buffer() {
    if (grad.empty()) grad = BasicTensor<T>::zeros(value.shape());
    return grad;
  }

  /// Accumulated gradient, or zeros if none reached this node.
  BasicTensor<T> gradient() const { return grad.empty() ? BasicTensor<T>::zeros(value.shape()) : grad; }

  void zero_grad() { grad = BasicTensor<T>(); }
};

template <typename T>
using VarT = std::shared_ptr<Node<T>>;

using Var = VarT<float>;
using VarD = VarT<double>;

template <typename T>
VarT<T> make_leaf(BasicTensor<T> value, bool requires_grad = false) {
  auto n = std::make_shared<Node<T>>();
  n->value = std::move(value);
  n->requires_grad = requires_grad;
  return n;
}

/// Ordered record of executed ops. Each entry owns its output node and a
/// closure that pushes the output gradient into the op's inputs.
///
/// A non-recording tape runs ops without keeping any backward state, which
/// is the inference path.
template <typename T>
class BasicTape {
 public:
  using BackwardFn = std::function<void(const BasicTensor<T>& grad_out)>;

  explicit BasicTape(bool recording = true) : recording_(recording) {}

  bool recording() const noexcept { return recording_; }
  std::size_t size() const noexcept { return entries_.size(); }

  /// Wraps `out` in a node. When recording and any input tracks gradients,
  /// the op is appended with `backward`; otherwise nothing is kept.
  VarT<T> record(BasicTensor<T> out, std::initializer_list<VarT<T>> inputs, BackwardFn backward) {
    auto node = std::make_shared<Node<T>>();
    node->value = std::move(out);
    if (recording_) {
      for (const auto& in : inputs) {
        if (in && in->requires_grad) {
          node->requires_grad = true;
          break;
        }
      }
    }
    if (node->requires_grad) entries_.push_back({node, std::move(backward)});
    return node;
  }

  bool tracks(std::initializer_list<VarT<T>> inputs) const {
    if (!recording_) return false;
    for (const auto& in : inputs)
      if (in && in->requires_grad) return true;
    return false;
  }

  /// Reverse sweep from a scalar loss; seeds d(loss)/d(loss) = 1.
  void backward(const VarT<T>& loss);

  /// Number of entries visited by the most recent backward().
  std::size_t last_visited() const noexcept { return last_visited_; }

  void clear() { entries_.clear(); }

 private:
  struct Entry {
    VarT<T> output;
    BackwardFn backward;
  };
  std::vector<Entry> entries_;
  bool recording_;
  std::size_t last_visited_ = 0;
};

using Tape = BasicTape<float>;
using TapeD = BasicTape<double>;

}  // namespace sc
