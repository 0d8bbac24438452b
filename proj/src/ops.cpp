#include "sensorcomp/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

namespace sc {

std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::linear: return "linear";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
    case Activation::tanh: return "tanh";
    case Activation::softmax: return "softmax";
  }
  return "?";
}

Activation activation_from_string(std::string_view s) {
  for (auto a : {Activation::linear, Activation::relu, Activation::sigmoid, Activation::tanh, Activation::softmax})
    if (to_string(a) == s) return a;
  throw ContractError("unknown activation: " + std::string(s));
}

template <typename T>
void BasicTape<T>::backward(const VarT<T>& loss) {
  if (!loss || loss->value.size() != 1)
    throw ContractError("backward() needs a scalar loss, got shape " + (loss ? shape_str(loss->value.shape()) : "null"));
  if (!loss->requires_grad) throw ContractError("loss is not on the tape");
  loss->grad = BasicTensor<T>::full(loss->value.shape(), T(1));
  last_visited_ = 0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) {
    ++last_visited_;
    if (!it->output->grad.empty()) it->backward(it->output->grad);
  }
}

template class BasicTape<float>;
template class BasicTape<double>;

namespace ops {
namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using Map = Eigen::Map<RowMat<T>>;
template <typename T>
using CMap = Eigen::Map<const RowMat<T>>;

template <typename T>
Map<T> as_matrix(BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return Map<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
CMap<T> as_matrix(const BasicTensor<T>& t, std::size_t rows, std::size_t cols) {
  return CMap<T>(t.data().data(), static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
}
template <typename T>
Eigen::Map<const RowVec<T>> as_row(const BasicTensor<T>& t) {
  return Eigen::Map<const RowVec<T>>(t.data().data(), static_cast<Eigen::Index>(t.size()));
}

void require(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

// dst[c] += sum_r g[r, c], summed in row order. Eigen's colwise().sum() picks
// its order from pointer alignment, which made training runs differ.
template <typename T>
void add_column_sums(BasicTensor<T>& dst, const T* g, std::size_t rows, std::size_t cols) {
  T* d = dst.data().data();
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) d[c] += g[r * cols + c];
}

// Row-major odometer step; false once every index has wrapped.
bool advance(std::vector<std::size_t>& idx, const Shape& extent) {
  for (std::size_t a = idx.size(); a-- > 0;) {
    if (++idx[a] < extent[a]) return true;
    idx[a] = 0;
  }
  return false;
}

template <typename T>
T sigmoid(T v) {
  if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
  const T e = std::exp(v);
  return e / (T(1) + e);
}

template <typename T>
T apply_cell(Activation a, T v) {
  return a == Activation::relu ? std::max(v, T(0)) : std::tanh(v);
}

// Derivative of the cell activation expressed through its output y = act(v).
template <typename T>
T cell_derivative(Activation a, T y) {
  return a == Activation::relu ? (y > T(0) ? T(1) : T(0)) : T(1) - y * y;
}

}  // namespace

template <typename T>
VarT<T> dense(BasicTape<T>& tape, const VarT<T>& x, const VarT<T>& w, const VarT<T>& b) {
  const auto& xs = x->value.shape();
  require(w->value.rank() == 2 && b->value.rank() == 1, "dense: weight must be rank 2 and bias rank 1");
  const std::size_t in = w->value.dim(0);
  const std::size_t out = w->value.dim(1);
  require(xs.back() == in, "dense: input width " + std::to_string(xs.back()) + " != weight rows " + std::to_string(in));
  require(b->value.dim(0) == out, "dense: bias length mismatch");
  const std::size_t rows = x->value.size() / in;

  Shape os = xs;
  os.back() = out;
  BasicTensor<T> y(os);
  auto Y = as_matrix(y, rows, out);
  Y.noalias() = as_matrix(x->value, rows, in) * as_matrix(w->value, in, out);
  Y.rowwise() += as_row(b->value);

  return tape.record(std::move(y), {x, w, b}, [x, w, b, rows, in, out](const BasicTensor<T>& g) {
    const auto G = as_matrix(g, rows, out);
    if (x->requires_grad)
      as_matrix(x->grad_buffer(), rows, in).noalias() += G * as_matrix(w->value, in, out).transpose();
    if (w->requires_grad)
      as_matrix(w->grad_buffer(), in, out).noalias() += as_matrix(x->value, rows, in).transpose() * G;
    if (b->requires_grad) add_column_sums(b->grad_buffer(), g.data().data(), rows, out);
  });
}

template <typename T>
VarT<T> conv1d(BasicTape<T>& tape, const VarT<T>& x, const VarT<T>& kernels, const VarT<T>& bias,
               Padding padding) {
  const auto& xs = x->value.shape();
  require(xs.size() >= 3, "conv1d: input must be [..., T, C]");
  require(kernels->value.rank() == 3, "conv1d: kernels must be [K, C, F]");
  const std::size_t steps = xs[xs.size() - 2];
  const std::size_t ch = xs.back();
  const std::size_t kw = kernels->value.dim(0);
  const std::size_t filters = kernels->value.dim(2);
  require(kernels->value.dim(1) == ch, "conv1d: kernel channels " + std::to_string(kernels->value.dim(1)) +
                                           " != input channels " + std::to_string(ch));
  require(bias->value.rank() == 1 && bias->value.dim(0) == filters, "conv1d: bias length mismatch");
  const bool same = padding == Padding::same;
  const std::size_t padded = same ? steps + kw - 1 : steps;
  require(kw <= padded, "conv1d: kernel width " + std::to_string(kw) + " exceeds padded length " + std::to_string(padded));
  const std::size_t out_steps = same ? steps : steps - kw + 1;
  const std::ptrdiff_t pad_left = same ? static_cast<std::ptrdiff_t>((kw - 1) / 2) : 0;
  const std::size_t batch = x->value.size() / (steps * ch);
  const std::size_t rows = batch * out_steps;
  const std::size_t patch = kw * ch;

  auto col = std::make_shared<RowMat<T>>(RowMat<T>::Zero(rows, patch));
  const T* src = x->value.data().data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t t = 0; t < out_steps; ++t) {
      T* dst = col->data() + (b * out_steps + t) * patch;
      for (std::size_t k = 0; k < kw; ++k) {
        const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - pad_left;
        if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
        std::copy_n(src + (b * steps + s) * ch, ch, dst + k * ch);
      }
    }

  Shape os = xs;
  os[os.size() - 2] = out_steps;
  os.back() = filters;
  BasicTensor<T> y(os);
  auto Y = as_matrix(y, rows, filters);
  Y.noalias() = *col * as_matrix(kernels->value, patch, filters);
  Y.rowwise() += as_row(bias->value);

  return tape.record(std::move(y), {x, kernels, bias},
                     [=](const BasicTensor<T>& g) {
                       const auto G = as_matrix(g, rows, filters);
                       if (kernels->requires_grad)
                         as_matrix(kernels->grad_buffer(), patch, filters).noalias() += col->transpose() * G;
                       if (bias->requires_grad) add_column_sums(bias->grad_buffer(), g.data().data(), rows, filters);
                       if (!x->requires_grad) return;
                       RowMat<T> dcol = G * as_matrix(kernels->value, patch, filters).transpose();
                       T* dx = x->grad_buffer().data().data();
                       for (std::size_t b = 0; b < batch; ++b)
                         for (std::size_t t = 0; t < out_steps; ++t) {
                           const T* d = dcol.data() + (b * out_steps + t) * patch;
                           for (std::size_t k = 0; k < kw; ++k) {
                             const std::ptrdiff_t s = static_cast<std::ptrdiff_t>(t + k) - pad_left;
                             if (s < 0 || s >= static_cast<std::ptrdiff_t>(steps)) continue;
                             T* o = dx + (b * steps + s) * ch;
                             for (std::size_t c = 0; c < ch; ++c) o[c] += d[k * ch + c];
                           }
                         }
                     });
}

template <typename T>
VarT<T> conv2d(BasicTape<T>& tape, const VarT<T>& x, const VarT<T>& kernels, const VarT<T>& bias,
               Padding padding) {
  require(x->value.rank() == 4, "conv2d: input must be [N, H, W, C]");
  require(kernels->value.rank() == 4, "conv2d: kernels must be [Kh, Kw, C, F]");
  const auto& xs = x->value.shape();
  const std::size_t n = xs[0], h = xs[1], w = xs[2], ch = xs[3];
  const std::size_t kh = kernels->value.dim(0), kw = kernels->value.dim(1), filters = kernels->value.dim(3);
  require(kernels->value.dim(2) == ch, "conv2d: kernel channels mismatch");
  require(bias->value.rank() == 1 && bias->value.dim(0) == filters, "conv2d: bias length mismatch");
  const bool same = padding == Padding::same;
  const std::size_t ph = same ? h + kh - 1 : h;
  const std::size_t pw = same ? w + kw - 1 : w;
  require(kh <= ph && kw <= pw, "conv2d: kernel exceeds padded input");
  const std::size_t oh = same ? h : h - kh + 1;
  const std::size_t ow = same ? w : w - kw + 1;
  const std::ptrdiff_t top = same ? static_cast<std::ptrdiff_t>((kh - 1) / 2) : 0;
  const std::ptrdiff_t left = same ? static_cast<std::ptrdiff_t>((kw - 1) / 2) : 0;
  const std::size_t rows = n * oh * ow;
  const std::size_t patch = kh * kw * ch;

  // Calls f(row, patch_offset, input_offset) for every in-bounds tap.
  auto for_each_tap = [=](auto&& f) {
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          const std::size_t row = (b * oh + i) * ow + j;
          for (std::size_t a = 0; a < kh; ++a) {
            const std::ptrdiff_t si = static_cast<std::ptrdiff_t>(i + a) - top;
            if (si < 0 || si >= static_cast<std::ptrdiff_t>(h)) continue;
            for (std::size_t c = 0; c < kw; ++c) {
              const std::ptrdiff_t sj = static_cast<std::ptrdiff_t>(j + c) - left;
              if (sj < 0 || sj >= static_cast<std::ptrdiff_t>(w)) continue;
              f(row, (a * kw + c) * ch, ((b * h + si) * w + sj) * ch);
            }
          }
        }
  };

  auto col = std::make_shared<RowMat<T>>(RowMat<T>::Zero(rows, patch));
  const T* src = x->value.data().data();
  for_each_tap([&](std::size_t row, std::size_t po, std::size_t io) {
    std::copy_n(src + io, ch, col->data() + row * patch + po);
  });

  BasicTensor<T> y(Shape{n, oh, ow, filters});
  auto Y = as_matrix(y, rows, filters);
  Y.noalias() = *col * as_matrix(kernels->value, patch, filters);
  Y.rowwise() += as_row(bias->value);

  return tape.record(std::move(y), {x, kernels, bias}, [=](const BasicTensor<T>& g) {
    const auto G = as_matrix(g, rows, filters);
    if (kernels->requires_grad)
      as_matrix(kernels->grad_buffer(), patch, filters).noalias() += col->transpose() * G;
    if (bias->requires_grad) add_column_sums(bias->grad_buffer(), g.data().data(), rows, filters);
    if (!x->requires_grad) return;
    RowMat<T> dcol = G * as_matrix(kernels->value, patch, filters).transpose();
    T* dx = x->grad_buffer().data().data();
    for_each_tap([&](std::size_t row, std::size_t po, std::size_t io) {
      const T* d = dcol.data() + row * patch + po;
      for (std::size_t c = 0; c < ch; ++c) dx[io + c] += d[c];
    });
  });
}

template <typename T>
VarT<T> max_pool(BasicTape<T>& tape, const VarT<T>& x, const Shape& window) {
  const auto& xs = x->value.shape();
  const std::size_t r = xs.size();
  require(window.size() == r, "max_pool: window rank " + std::to_string(window.size()) + " != input rank " +
                                  std::to_string(r));
  Shape os(r);
  for (std::size_t a = 0; a < r; ++a) {
    require(window[a] >= 1, "max_pool: window entries must be >= 1");
    os[a] = (xs[a] + window[a] - 1) / window[a];
  }
  std::vector<std::size_t> stride(r, 1);
  for (std::size_t a = r - 1; a > 0; --a) stride[a - 1] = stride[a] * xs[a];

  BasicTensor<T> y(os);
  auto argmax = std::make_shared<std::vector<std::size_t>>(y.size());
  const T* in = x->value.data().data();
  std::vector<std::size_t> oidx(r, 0), base(r), widx(r);
  for (std::size_t o = 0; o < y.size(); ++o, advance(oidx, os)) {
    for (std::size_t a = 0; a < r; ++a) base[a] = oidx[a] * window[a];
    std::fill(widx.begin(), widx.end(), 0);
    T best = -std::numeric_limits<T>::infinity();
    std::size_t best_at = 0;
    bool found = false;
    do {
      std::size_t off = 0;
      bool inside = true;
      for (std::size_t a = 0; a < r && inside; ++a) {
        const std::size_t p = base[a] + widx[a];
        inside = p < xs[a];
        off += p * stride[a];
      }
      if (inside && (!found || in[off] > best)) {
        best = in[off];
        best_at = off;
        found = true;
      }
    } while (advance(widx, window));
    y[o] = best;
    (*argmax)[o] = best_at;
  }

  return tape.record(std::move(y), {x}, [x, argmax](const BasicTensor<T>& g) {
    auto& dx = x->grad_buffer();
    for (std::size_t o = 0; o < g.size(); ++o) dx[(*argmax)[o]] += g[o];
  });
}

template <typename T>
VarT<T> upsample2d(BasicTape<T>& tape, const VarT<T>& x, std::size_t fh, std::size_t fw) {
  require(x->value.rank() == 4, "upsample2d: input must be [N, H, W, C]");
  require(fh >= 1 && fw >= 1, "upsample2d: factors must be >= 1");
  const auto& xs = x->value.shape();
  const std::size_t n = xs[0], h = xs[1], w = xs[2], ch = xs[3];
  BasicTensor<T> y(Shape{n, h * fh, w * fw, ch});
  const T* in = x->value.data().data();
  T* out = y.data().data();
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t i = 0; i < h * fh; ++i)
      for (std::size_t j = 0; j < w * fw; ++j)
        std::copy_n(in + ((b * h + i / fh) * w + j / fw) * ch, ch, out + ((b * h * fh + i) * w * fw + j) * ch);

  return tape.record(std::move(y), {x}, [x, n, h, w, ch, fh, fw](const BasicTensor<T>& g) {
    T* dx = x->grad_buffer().data().data();
    const T* dy = g.data().data();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t i = 0; i < h * fh; ++i)
        for (std::size_t j = 0; j < w * fw; ++j) {
          T* d = dx + ((b * h + i / fh) * w + j / fw) * ch;
          const T* s = dy + ((b * h * fh + i) * w * fw + j) * ch;
          for (std::size_t c = 0; c < ch; ++c) d[c] += s[c];
        }
  });
}

template <typename T>
VarT<T> lstm(BasicTape<T>& tape, const VarT<T>& x, const LstmWeights<T>& weights, bool return_sequences,
             Activation cell_activation) {
  require(x->value.rank() == 3, "lstm: input must be [N, T, C]");
  require(cell_activation == Activation::tanh || cell_activation == Activation::relu,
          "lstm: cell activation must be tanh or relu");
  const auto& wx = weights.input_kernel;
  const auto& wh = weights.recurrent_kernel;
  const auto& wb = weights.bias;
  const std::size_t n = x->value.dim(0), steps = x->value.dim(1), ch = x->value.dim(2);
  require(wh->value.rank() == 2, "lstm: recurrent kernel must be [U, 4U]");
  const std::size_t units = wh->value.dim(0);
  const std::size_t g4 = 4 * units;
  require(wh->value.dim(1) == g4, "lstm: recurrent kernel must be [U, 4U]");
  require(wx->value.rank() == 2 && wx->value.dim(0) == ch && wx->value.dim(1) == g4,
          "lstm: input kernel must be [C, 4U] with C=" + std::to_string(ch));
  require(wb->value.rank() == 1 && wb->value.dim(0) == g4, "lstm: bias must be [4U]");

  // Per-step caches: activated gates, cell state, act(cell), hidden state.
  struct Cache {
    std::vector<T> gates;  // [T][N][4U]
    std::vector<T> cell;   // [T+1][N][U], slot 0 is the zero initial state
    std::vector<T> acell;  // [T][N][U]
    std::vector<T> hidden; // [T+1][N][U]
  };
  auto cache = std::make_shared<Cache>();
  cache->gates.resize(steps * n * g4);
  cache->cell.assign((steps + 1) * n * units, T(0));
  cache->acell.resize(steps * n * units);
  cache->hidden.assign((steps + 1) * n * units, T(0));

  RowMat<T> xw = as_matrix(x->value, n * steps, ch) * as_matrix(wx->value, ch, g4);
  const auto Wh = as_matrix(wh->value, units, g4);
  const auto B = as_row(wb->value);
  using Strided = Eigen::Map<const RowMat<T>, 0, Eigen::OuterStride<>>;
  RowMat<T> z(n, g4);
  for (std::size_t t = 0; t < steps; ++t) {
    Strided xwt(xw.data() + t * g4, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(g4),
                Eigen::OuterStride<>(static_cast<Eigen::Index>(steps * g4)));
    CMap<T> hprev(cache->hidden.data() + t * n * units, static_cast<Eigen::Index>(n),
                  static_cast<Eigen::Index>(units));
    z.noalias() = hprev * Wh;
    z += xwt;
    z.rowwise() += B;

    T* gates = cache->gates.data() + t * n * g4;
    const T* cprev = cache->cell.data() + t * n * units;
    T* cnow = cache->cell.data() + (t + 1) * n * units;
    T* acell = cache->acell.data() + t * n * units;
    T* hnow = cache->hidden.data() + (t + 1) * n * units;
    bool finite = true;
    for (std::size_t b = 0; b < n; ++b) {
      const T* zr = z.data() + b * g4;
      T* gr = gates + b * g4;
      for (std::size_t u = 0; u < units; ++u) {
        const T ig = sigmoid(zr[u]);
        const T fg = sigmoid(zr[units + u]);
        const T cg = apply_cell(cell_activation, zr[2 * units + u]);
        const T og = sigmoid(zr[3 * units + u]);
        gr[u] = ig;
        gr[units + u] = fg;
        gr[2 * units + u] = cg;
        gr[3 * units + u] = og;
        const std::size_t k = b * units + u;
        cnow[k] = fg * cprev[k] + ig * cg;
        acell[k] = apply_cell(cell_activation, cnow[k]);
        hnow[k] = og * acell[k];
        finite = finite && std::isfinite(hnow[k]) && std::isfinite(cnow[k]);
      }
    }
    if (!finite) throw NumericError("lstm: non-finite state at timestep " + std::to_string(t));
  }

  BasicTensor<T> y(return_sequences ? Shape{n, steps, units} : Shape{n, units});
  if (return_sequences) {
    for (std::size_t t = 0; t < steps; ++t)
      for (std::size_t b = 0; b < n; ++b)
        std::copy_n(cache->hidden.data() + ((t + 1) * n + b) * units, units, y.data().data() + (b * steps + t) * units);
  } else {
    std::copy_n(cache->hidden.data() + steps * n * units, n * units, y.data().data());
  }

  return tape.record(std::move(y), {x, wx, wh, wb}, [=](const BasicTensor<T>& g) {
    RowMat<T> dz_all(n * steps, g4);
    RowMat<T> dh_next = RowMat<T>::Zero(n, units);
    std::vector<T> dc_next(n * units, T(0));
    RowMat<T> dz(n, g4);
    const T* gy = g.data().data();
    const bool need_wh = wh->requires_grad;
    RowMat<T> dwh = RowMat<T>::Zero(units, g4);
    for (std::size_t t = steps; t-- > 0;) {
      const T* gates = cache->gates.data() + t * n * g4;
      const T* cprev = cache->cell.data() + t * n * units;
      const T* acell = cache->acell.data() + t * n * units;
      for (std::size_t b = 0; b < n; ++b) {
        const T* gr = gates + b * g4;
        T* dzr = dz.data() + b * g4;
        for (std::size_t u = 0; u < units; ++u) {
          const std::size_t k = b * units + u;
          T dh = dh_next(b, u);
          if (return_sequences)
            dh += gy[(b * steps + t) * units + u];
          else if (t + 1 == steps)
            dh += gy[b * units + u];
          const T ig = gr[u], fg = gr[units + u], cg = gr[2 * units + u], og = gr[3 * units + u];
          const T dog = dh * acell[k];
          const T dc = dh * og * cell_derivative(cell_activation, acell[k]) + dc_next[k];
          dc_next[k] = dc * fg;
          dzr[u] = dc * cg * ig * (T(1) - ig);
          dzr[units + u] = dc * cprev[k] * fg * (T(1) - fg);
          dzr[2 * units + u] = dc * ig * cell_derivative(cell_activation, cg);
          dzr[3 * units + u] = dog * og * (T(1) - og);
        }
      }
      for (std::size_t b = 0; b < n; ++b) dz_all.row(static_cast<Eigen::Index>(b * steps + t)) = dz.row(static_cast<Eigen::Index>(b));
      CMap<T> hprev(cache->hidden.data() + t * n * units, static_cast<Eigen::Index>(n),
                    static_cast<Eigen::Index>(units));
      if (need_wh) dwh.noalias() += hprev.transpose() * dz;
      dh_next.noalias() = dz * as_matrix(wh->value, units, g4).transpose();
    }
    if (need_wh) as_matrix(wh->grad_buffer(), units, g4) += dwh;
    if (wb->requires_grad) add_column_sums(wb->grad_buffer(), dz_all.data(), n * steps, g4);
    if (wx->requires_grad)
      as_matrix(wx->grad_buffer(), ch, g4).noalias() += as_matrix(x->value, n * steps, ch).transpose() * dz_all;
    if (x->requires_grad)
      as_matrix(x->grad_buffer(), n * steps, ch).noalias() += dz_all * as_matrix(wx->value, ch, g4).transpose();
  });
}

template <typename T>
VarT<T> activate(BasicTape<T>& tape, const VarT<T>& x, Activation kind) {
  if (kind == Activation::linear) return x;
  BasicTensor<T> y(x->value.shape());
  const auto in = x->value.data();
  auto out = y.data();
  switch (kind) {
    case Activation::relu:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::max(in[i], T(0));
      break;
    case Activation::sigmoid:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = sigmoid(in[i]);
      break;
    case Activation::tanh:
      for (std::size_t i = 0; i < in.size(); ++i) out[i] = std::tanh(in[i]);
      break;
    case Activation::softmax: {
      const std::size_t k = x->value.shape().back();
      for (std::size_t r = 0; r < in.size() / k; ++r) {
        const T* a = in.data() + r * k;
        T* o = out.data() + r * k;
        const T mx = *std::max_element(a, a + k);
        T total = 0;
        for (std::size_t j = 0; j < k; ++j) total += (o[j] = std::exp(a[j] - mx));
        for (std::size_t j = 0; j < k; ++j) o[j] /= total;
      }
      break;
    }
    case Activation::linear: break;
  }
  if (!tape.tracks({x})) return tape.record(std::move(y), {x}, {});
  // The backward rules below are written in terms of the output.
  auto yv = std::make_shared<BasicTensor<T>>(y);
  return tape.record(std::move(y), {x}, [x, kind, yv](const BasicTensor<T>& g) {
    auto& dx = x->grad_buffer();
    const auto& o = *yv;
    switch (kind) {
      case Activation::relu:
        for (std::size_t i = 0; i < g.size(); ++i)
          if (o[i] > T(0)) dx[i] += g[i];
        break;
      case Activation::sigmoid:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * o[i] * (T(1) - o[i]);
        break;
      case Activation::tanh:
        for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (T(1) - o[i] * o[i]);
        break;
      case Activation::softmax: {
        const std::size_t k = o.shape().back();
        for (std::size_t r = 0; r < g.size() / k; ++r) {
          T dot = 0;
          for (std::size_t j = 0; j < k; ++j) dot += g[r * k + j] * o[r * k + j];
          for (std::size_t j = 0; j < k; ++j) dx[r * k + j] += o[r * k + j] * (g[r * k + j] - dot);
        }
        break;
      }
      case Activation::linear: break;
    }
  });
}

template <typename T>
VarT<T> dropout(BasicTape<T>& tape, const VarT<T>& x, double rate, bool training, Rng& rng) {
  if (!(rate >= 0.0 && rate < 1.0)) throw ContractError("dropout: rate must be in [0, 1)");
  if (!training || rate == 0.0) return x;
  const T scale = static_cast<T>(1.0 / (1.0 - rate));
  auto mask = std::make_shared<BasicTensor<T>>(x->value.shape());
  std::bernoulli_distribution keep(1.0 - rate);
  for (auto& m : mask->data()) m = keep(rng) ? scale : T(0);
  BasicTensor<T> y(x->value.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = x->value[i] * (*mask)[i];
  return tape.record(std::move(y), {x}, [x, mask](const BasicTensor<T>& g) {
    auto& dx = x->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i] * (*mask)[i];
  });
}

template <typename T>
VarT<T> mse(BasicTape<T>& tape, const VarT<T>& pred, const VarT<T>& target) {
  if (pred->value.shape() != target->value.shape())
    throw DimensionError("mse: shape mismatch " + shape_str(pred->value.shape()) + " vs " +
                         shape_str(target->value.shape()));
  const std::size_t count = pred->value.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < count; ++i) {
    const double d = static_cast<double>(pred->value[i]) - static_cast<double>(target->value[i]);
    acc += d * d;
  }
  auto loss = BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
  return tape.record(std::move(loss), {pred, target}, [pred, target, count](const BasicTensor<T>& g) {
    const T k = T(2) * g[0] / static_cast<T>(count);
    if (pred->requires_grad) {
      auto& d = pred->grad_buffer();
      for (std::size_t i = 0; i < count; ++i) d[i] += k * (pred->value[i] - target->value[i]);
    }
    if (target->requires_grad) {
      auto& d = target->grad_buffer();
      for (std::size_t i = 0; i < count; ++i) d[i] -= k * (pred->value[i] - target->value[i]);
    }
  });
}

template <typename T>
VarT<T> categorical_cross_entropy(BasicTape<T>& tape, const VarT<T>& probs, const VarT<T>& onehot) {
  if (probs->value.rank() != 2 || probs->value.shape() != onehot->value.shape())
    throw DimensionError("categorical_cross_entropy: expected matching [N, K] tensors");
  const std::size_t n = probs->value.dim(0), k = probs->value.dim(1);
  constexpr double lo = 1e-7, hi = 1.0 - 1e-7;
  double acc = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double row = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = probs->value[r * k + j];
      row += p;
      acc -= static_cast<double>(onehot->value[r * k + j]) * std::log(std::clamp(p, lo, hi));
    }
    if (std::abs(row - 1.0) > 1e-5)
      throw ContractError("categorical_cross_entropy: probability row " + std::to_string(r) + " sums to " +
                          std::to_string(row));
  }
  auto loss = BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(n)));
  return tape.record(std::move(loss), {probs, onehot}, [probs, onehot, n](const BasicTensor<T>& g) {
    const T scale = g[0] / static_cast<T>(n);
    const T lo_t = static_cast<T>(lo), hi_t = static_cast<T>(hi);
    if (probs->requires_grad) {
      auto& d = probs->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) {
        const T p = probs->value[i];
        if (p > lo_t && p < hi_t) d[i] -= scale * onehot->value[i] / p;
      }
    }
    if (onehot->requires_grad) {
      auto& d = onehot->grad_buffer();
      for (std::size_t i = 0; i < d.size(); ++i) d[i] -= scale * std::log(std::clamp(probs->value[i], lo_t, hi_t));
    }
  });
}

template <typename T>
VarT<T> reshape(BasicTape<T>& tape, const VarT<T>& x, Shape shape) {
  auto y = x->value.reshaped(std::move(shape));
  return tape.record(std::move(y), {x}, [x](const BasicTensor<T>& g) {
    auto& dx = x->grad_buffer();
    for (std::size_t i = 0; i < g.size(); ++i) dx[i] += g[i];
  });
}

template <typename T>
VarT<T> repeat_vector(BasicTape<T>& tape, const VarT<T>& x, std::size_t times) {
  require(x->value.rank() == 2, "repeat_vector: input must be [N, D]");
  require(times >= 1, "repeat_vector: count must be >= 1");
  const std::size_t n = x->value.dim(0), d = x->value.dim(1);
  BasicTensor<T> y(Shape{n, times, d});
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t r = 0; r < times; ++r)
      std::copy_n(x->value.data().data() + b * d, d, y.data().data() + (b * times + r) * d);
  return tape.record(std::move(y), {x}, [x, n, d, times](const BasicTensor<T>& g) {
    auto& dx = x->grad_buffer();
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t r = 0; r < times; ++r)
        for (std::size_t j = 0; j < d; ++j) dx[b * d + j] += g[(b * times + r) * d + j];
  });
}

template <typename T>
VarT<T> sum(BasicTape<T>& tape, const VarT<T>& x) {
  double acc = 0.0;
  for (T v : x->value.data()) acc += v;
  return tape.record(BasicTensor<T>::scalar(static_cast<T>(acc)), {x}, [x](const BasicTensor<T>& g) {
    auto& dx = x->grad_buffer();
    for (auto& v : dx.data()) v += g[0];
  });
}

#define SC_INSTANTIATE_OPS(T)                                                                                  \
  template VarT<T> dense<T>(BasicTape<T>&, const VarT<T>&, const VarT<T>&, const VarT<T>&);                    \
  template VarT<T> conv1d<T>(BasicTape<T>&, const VarT<T>&, const VarT<T>&, const VarT<T>&, Padding);          \
  template VarT<T> conv2d<T>(BasicTape<T>&, const VarT<T>&, const VarT<T>&, const VarT<T>&, Padding);          \
  template VarT<T> max_pool<T>(BasicTape<T>&, const VarT<T>&, const Shape&);                                    \
  template VarT<T> upsample2d<T>(BasicTape<T>&, const VarT<T>&, std::size_t, std::size_t);                      \
  template VarT<T> lstm<T>(BasicTape<T>&, const VarT<T>&, const LstmWeights<T>&, bool, Activation);             \
  template VarT<T> activate<T>(BasicTape<T>&, const VarT<T>&, Activation);                                      \
  template VarT<T> dropout<T>(BasicTape<T>&, const VarT<T>&, double, bool, Rng&);                               \
  template VarT<T> mse<T>(BasicTape<T>&, const VarT<T>&, const VarT<T>&);                                       \
  template VarT<T> categorical_cross_entropy<T>(BasicTape<T>&, const VarT<T>&, const VarT<T>&);                 \
  template VarT<T> reshape<T>(BasicTape<T>&, const VarT<T>&, Shape);                                            \
  template VarT<T> repeat_vector<T>(BasicTape<T>&, const VarT<T>&, std::size_t);                                \
  template VarT<T> sum<T>(BasicTape<T>&, const VarT<T>&);

SC_INSTANTIATE_OPS(float)
SC_INSTANTIATE_OPS(double)

#undef SC_INSTANTIATE_OPS

}  // namespace ops
}  // namespace sc
