#pragma once

#include <cstddef>
#include <string_view>

#include "sensorcomp/autodiff.hpp"

namespace sc {

enum class Padding { valid, same };

enum class Activation { linear, relu, sigmoid, tanh, softmax };

std::string_view to_string(Activation a);
Activation activation_from_string(std::string_view s);

template <typename T>
struct LstmWeights {
  VarT<T> input_kernel;      // [C, 4U], gate blocks ordered i, f, g, o
  VarT<T> recurrent_kernel;  // [U, 4U]
  VarT<T> bias;              // [4U]
};

namespace ops {

/// out[..., o] = sum_i x[..., i] * w[i, o] + b[o]. Leading axes of x are
/// treated as batch, so a time-distributed dense is just a dense on a
/// higher-rank input.
template <typename T>
VarT<T> dense(BasicTape<T>& tape, const VarT<T>& x, const VarT<T>& w, const VarT<T>& b);

/// Stride-1 convolution along the second-to-last axis.
/// x: [..., T, C], kernels: [K, C, F], bias: [F] -> [..., T', F].
/// Any leading axes are batch, which makes a time-distributed conv1d free.
template <typename T>
VarT<T> conv1d(BasicTape<T>& tape, const VarT<T>& x, const VarT<T>& kernels, const VarT<T>& bias,
               Padding padding);

/// x: [N, H, W, C], kernels: [Kh, Kw, C, F], bias: [F] -> [N, H', W', F].
template <typename T>
VarT<T> conv2d(BasicTape<T>& tape, const VarT<T>& x, const VarT<T>& kernels, const VarT<T>& bias,
               Padding padding);

/// Non-overlapping max pooling. `window` has one entry per axis (1 leaves the
/// axis alone). Trailing partial windows are padded with -inf, so the output
/// extent is ceil(d / p). Ties route the gradient to the first maximum.
template <typename T>
VarT<T> max_pool(BasicTape<T>& tape, const VarT<T>& x, const Shape& window);

/// Nearest-neighbour upsampling of a [N, H, W, C] tensor.
template <typename T>
VarT<T> upsample2d(BasicTape<T>& tape, const VarT<T>& x, std::size_t fh, std::size_t fw);

/// Standard LSTM cell unrolled over x: [N, T, C]; zero initial state.
///   z = x_t Wx + h Wh + b; i, f, o = sigmoid; g = act(z_g)
///   c = f * c + i * g;     h = o * act(c)
/// `cell_activation` replaces tanh in the two `act` positions.
/// Returns [N, T, U] with return_sequences, otherwise the final h as [N, U].
/// Throws NumericError if the state becomes non-finite.
template <typename T>
VarT<T> lstm(BasicTape<T>& tape, const VarT<T>& x, const LstmWeights<T>& weights, bool return_sequences,
             Activation cell_activation = Activation::tanh);

/// Elementwise activation; softmax normalizes over the last axis.
template <typename T>
VarT<T> activate(BasicTape<T>& tape, const VarT<T>& x, Activation kind);

/// Inverted dropout: survivors are scaled by 1 / (1 - rate). Identity when
/// not training or rate == 0.
template <typename T>
VarT<T> dropout(BasicTape<T>& tape, const VarT<T>& x, double rate, bool training, Rng& rng);

/// Mean of squared differences over all elements.
template <typename T>
VarT<T> mse(BasicTape<T>& tape, const VarT<T>& pred, const VarT<T>& target);

/// -mean_n sum_k onehot * log(clamp(probs, 1e-7, 1 - 1e-7)). Rows of probs
/// must sum to 1 within 1e-5.
template <typename T>
VarT<T> categorical_cross_entropy(BasicTape<T>& tape, const VarT<T>& probs, const VarT<T>& onehot);

template <typename T>
VarT<T> reshape(BasicTape<T>& tape, const VarT<T>& x, Shape shape);

/// [N, D] -> [N, n, D].
template <typename T>
VarT<T> repeat_vector(BasicTape<T>& tape, const VarT<T>& x, std::size_t n);

/// Scalar sum of all elements.
template <typename T>
VarT<T> sum(BasicTape<T>& tape, const VarT<T>& x);

}  // namespace ops
}  // namespace sc
