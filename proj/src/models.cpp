#include "sensorcomp/models.hpp"

#include <Eigen/Dense>
#include <numeric>
#include <sstream>

#include "sensorcomp/binary_io.hpp"

namespace sc::models {
namespace {

template <class... Fs>
struct overloaded : Fs... {
  using Fs::operator()...;
};

std::string join_dims(const Shape& s, char sep = 'x') {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += sep;
    out += std::to_string(s[i]);
  }
  return out;
}

std::string padding_str(Padding p) { return p == Padding::same ? "same" : "valid"; }

std::size_t conv_out(std::size_t in, std::size_t k, Padding p, const std::string& where) {
  if (p == Padding::same) return in;
  if (in < k) throw DimensionError(where + ": kernel " + std::to_string(k) + " longer than input " + std::to_string(in));
  return in - k + 1;
}

// Per-sample output shape of one layer, or DimensionError.
Shape infer_shape(const LayerSpec& spec, const Shape& in, std::size_t index) {
  const std::string where = "layer " + std::to_string(index) + " (" + spec.describe() + ")";
  auto need = [&](bool ok, const std::string& what) {
    if (!ok) throw DimensionError(where + ": " + what + ", got input " + shape_str(in));
  };
  // Time-distributed layers see one subsequence at a time.
  const std::size_t lead = spec.time_distributed ? 1 : 0;
  if (spec.time_distributed) need(in.size() >= 2, "time-distributed layer needs a subsequence axis");
  const std::size_t inner = in.size() - lead;

  return std::visit(
      overloaded{
          [&](const DenseLayer& l) {
            need(l.units > 0, "units must be positive");
            Shape out = in;
            out.back() = l.units;
            return out;
          },
          [&](const Conv1dLayer& l) {
            need(inner == 2, "conv1d needs [steps, channels]");
            need(l.filters > 0 && l.kernel > 0, "filters and kernel must be positive");
            Shape out = in;
            out[in.size() - 2] = conv_out(in[in.size() - 2], l.kernel, l.padding, where);
            out.back() = l.filters;
            return out;
          },
          [&](const Conv2dLayer& l) {
            need(!spec.time_distributed && in.size() == 3, "conv2d needs [H, W, C]");
            need(l.filters > 0 && l.kernel_h > 0 && l.kernel_w > 0, "filters and kernel must be positive");
            return Shape{conv_out(in[0], l.kernel_h, l.padding, where), conv_out(in[1], l.kernel_w, l.padding, where),
                         l.filters};
          },
          [&](const MaxPoolLayer& l) {
            need(!l.window.empty() && l.window.size() + 1 <= inner, "pool window rank too large");
            Shape out = in;
            const std::size_t first = in.size() - 1 - l.window.size();
            for (std::size_t a = 0; a < l.window.size(); ++a) {
              need(l.window[a] >= 1, "pool window entries must be >= 1");
              out[first + a] = (in[first + a] + l.window[a] - 1) / l.window[a];
            }
            return out;
          },
          [&](const UpsampleLayer& l) {
            need(!spec.time_distributed && in.size() == 3, "upsample needs [H, W, C]");
            need(l.factor_h >= 1 && l.factor_w >= 1, "upsample factors must be >= 1");
            return Shape{in[0] * l.factor_h, in[1] * l.factor_w, in[2]};
          },
          [&](const LstmLayer& l) {
            need(!spec.time_distributed && in.size() == 2, "lstm needs [steps, features]");
            need(l.units > 0, "units must be positive");
            return l.return_sequences ? Shape{in[0], l.units} : Shape{l.units};
          },
          [&](const DropoutLayer& l) {
            need(l.rate >= 0.0 && l.rate < 1.0, "dropout rate must be in [0, 1)");
            return in;
          },
          [&](const FlattenLayer&) {
            Shape out(in.begin(), in.begin() + static_cast<std::ptrdiff_t>(lead));
            out.push_back(std::accumulate(in.begin() + static_cast<std::ptrdiff_t>(lead), in.end(), std::size_t{1},
                                          std::multiplies<>()));
            return out;
          },
          [&](const ReshapeLayer& l) {
            need(!spec.time_distributed, "reshape is not time-distributed");
            need(!l.shape.empty() && shape_size(l.shape) == shape_size(in), "element count must match");
            return l.shape;
          },
          [&](const RepeatLayer& l) {
            need(!spec.time_distributed && in.size() == 1, "repeat needs a flat vector");
            need(l.n >= 1, "repeat count must be >= 1");
            return Shape{l.n, in[0]};
          },
      },
      spec.kind);
}

// Orthogonal init for a [rows, cols] kernel via QR of a Gaussian matrix.
Tensor orthogonal(std::size_t rows, std::size_t cols, Rng& rng) {
  const auto big = static_cast<Eigen::Index>(std::max(rows, cols));
  const auto small = static_cast<Eigen::Index>(std::min(rows, cols));
  std::normal_distribution<double> dist(0.0, 1.0);
  Eigen::MatrixXd a(big, small);
  for (Eigen::Index i = 0; i < big; ++i)
    for (Eigen::Index j = 0; j < small; ++j) a(i, j) = dist(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (Eigen::Index j = 0; j < small; ++j)
    if (r(j, j) < 0) q.col(j) *= -1.0;
  if (rows < cols) q.transposeInPlace();
  Tensor out(Shape{rows, cols});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j)
      out[i * cols + j] = static_cast<float>(q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
  return out;
}

std::vector<Var> init_params(const LayerSpec& spec, const Shape& in, Rng& rng) {
  auto leaf = [](Tensor t) { return make_leaf(std::move(t), true); };
  return std::visit(
      overloaded{
          [&](const DenseLayer& l) {
            const std::size_t fan_in = in.back();
            return std::vector<Var>{leaf(glorot_uniform<float>({fan_in, l.units}, fan_in, l.units, rng)),
                                    leaf(Tensor::zeros({l.units}))};
          },
          [&](const Conv1dLayer& l) {
            const std::size_t c = in.back();
            return std::vector<Var>{
                leaf(glorot_uniform<float>({l.kernel, c, l.filters}, l.kernel * c, l.kernel * l.filters, rng)),
                leaf(Tensor::zeros({l.filters}))};
          },
          [&](const Conv2dLayer& l) {
            const std::size_t c = in.back(), area = l.kernel_h * l.kernel_w;
            return std::vector<Var>{
                leaf(glorot_uniform<float>({l.kernel_h, l.kernel_w, c, l.filters}, area * c, area * l.filters, rng)),
                leaf(Tensor::zeros({l.filters}))};
          },
          [&](const LstmLayer& l) {
            const std::size_t c = in.back(), u = l.units;
            auto wx = glorot_uniform<float>({c, 4 * u}, c, 4 * u, rng);
            auto wh = orthogonal(u, 4 * u, rng);
            Tensor b = Tensor::zeros({4 * u});
            for (std::size_t j = u; j < 2 * u; ++j) b[j] = 1.0f;  // forget gate
            return std::vector<Var>{leaf(std::move(wx)), leaf(std::move(wh)), leaf(std::move(b))};
          },
          [&](const auto&) { return std::vector<Var>{}; },
      },
      spec.kind);
}

Shape with_batch(std::size_t n, const Shape& s) {
  Shape out{n};
  out.insert(out.end(), s.begin(), s.end());
  return out;
}

}  // namespace

std::string LayerSpec::describe() const {
  std::string body = std::visit(
      overloaded{
          [](const DenseLayer& l) {
            return "dense(" + std::to_string(l.units) + "," + std::string(to_string(l.activation)) + ")";
          },
          [](const Conv1dLayer& l) {
            return "conv1d(" + std::to_string(l.filters) + ",k" + std::to_string(l.kernel) + "," +
                   padding_str(l.padding) + "," + std::string(to_string(l.activation)) + ")";
          },
          [](const Conv2dLayer& l) {
            return "conv2d(" + std::to_string(l.filters) + ",k" + std::to_string(l.kernel_h) + "x" +
                   std::to_string(l.kernel_w) + "," + padding_str(l.padding) + "," +
                   std::string(to_string(l.activation)) + ")";
          },
          [](const MaxPoolLayer& l) { return "maxpool(" + join_dims(l.window) + ")"; },
          [](const UpsampleLayer& l) {
            return "upsample(" + std::to_string(l.factor_h) + "x" + std::to_string(l.factor_w) + ")";
          },
          [](const LstmLayer& l) {
            return "lstm(" + std::to_string(l.units) + "," + (l.return_sequences ? "seq" : "last") +
                   ",cell=" + std::string(to_string(l.cell)) + ",out=" + std::string(to_string(l.output)) + ")";
          },
          [](const DropoutLayer& l) {
            std::ostringstream s;
            s << "dropout(" << l.rate << ")";
            return s.str();
          },
          [](const FlattenLayer&) { return std::string("flatten"); },
          [](const ReshapeLayer& l) { return "reshape(" + join_dims(l.shape) + ")"; },
          [](const RepeatLayer& l) { return "repeat(" + std::to_string(l.n) + ")"; },
      },
      kind);
  return time_distributed ? "td:" + body : body;
}

ModelGraph::ModelGraph(std::string name, Shape input_shape, std::vector<LayerSpec> layers,
                       std::optional<std::size_t> boundary, std::uint64_t seed)
    : name_(std::move(name)), layers_(std::move(layers)), boundary_(boundary) {
  if (layers_.empty()) throw ContractError("model " + name_ + " has no layers");
  if (input_shape.empty() || shape_size(input_shape) == 0)
    throw DimensionError("model " + name_ + ": invalid input shape " + shape_str(input_shape));
  if (boundary_ && (*boundary_ == 0 || *boundary_ >= layers_.size()))
    throw ContractError("model " + name_ + ": encoder boundary must split the layer list");
  Rng rng(seed);
  shapes_.push_back(std::move(input_shape));
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    shapes_.push_back(infer_shape(layers_[i], shapes_.back(), i));
    params_.push_back(init_params(layers_[i], shapes_[i], rng));
  }
  if (boundary_ && shapes_.back() != shapes_.front())
    throw DimensionError("autoencoder " + name_ + " maps " + shape_str(shapes_.front()) + " to " +
                         shape_str(shapes_.back()));
}

const Shape& ModelGraph::latent_shape() const {
  if (!boundary_) throw ContractError(name_ + " is not an autoencoder");
  return shapes_.at(*boundary_);
}

std::vector<Var> ModelGraph::parameters() const {
  std::vector<Var> out;
  for (const auto& layer : params_) out.insert(out.end(), layer.begin(), layer.end());
  return out;
}

std::size_t ModelGraph::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : parameters()) n += p->value.size();
  return n;
}

std::string ModelGraph::describe() const {
  std::string s = "input(" + join_dims(shapes_.front()) + ")";
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    s += (boundary_ && *boundary_ == i) ? " | " : " -> ";
    s += layers_[i].describe();
  }
  return s;
}

std::uint64_t ModelGraph::fingerprint() const { return io::fnv1a64(describe()); }

Var ModelGraph::forward(Tape& tape, const Var& x, std::size_t begin, std::size_t end, bool training,
                        Rng& rng) const {
  if (begin > end || end > layers_.size()) throw ContractError("forward: bad layer range");
  const Shape& expect = shapes_[begin];
  const Shape& got = x->value.shape();
  if (got.size() != expect.size() + 1 || !std::equal(expect.begin(), expect.end(), got.begin() + 1))
    throw DimensionError(name_ + ": expected input [N, " + join_dims(expect, ',') + "] at layer " +
                         std::to_string(begin) + ", got " + shape_str(got));
  const std::size_t n = got[0];
  Var h = x;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& p = params_[i];
    const LayerSpec& spec = layers_[i];
    h = std::visit(
        overloaded{
            [&](const DenseLayer& l) { return ops::activate(tape, ops::dense(tape, h, p[0], p[1]), l.activation); },
            [&](const Conv1dLayer& l) {
              return ops::activate(tape, ops::conv1d(tape, h, p[0], p[1], l.padding), l.activation);
            },
            [&](const Conv2dLayer& l) {
              return ops::activate(tape, ops::conv2d(tape, h, p[0], p[1], l.padding), l.activation);
            },
            [&](const MaxPoolLayer& l) {
              Shape window(h->value.rank(), 1);
              std::copy(l.window.begin(), l.window.end(), window.end() - 1 - static_cast<std::ptrdiff_t>(l.window.size()));
              return ops::max_pool(tape, h, window);
            },
            [&](const UpsampleLayer& l) { return ops::upsample2d(tape, h, l.factor_h, l.factor_w); },
            [&](const LstmLayer& l) {
              LstmWeights<float> w{p[0], p[1], p[2]};
              return ops::activate(tape, ops::lstm(tape, h, w, l.return_sequences, l.cell), l.output);
            },
            [&](const DropoutLayer& l) { return ops::dropout(tape, h, l.rate, training, rng); },
            [&](const FlattenLayer&) { return ops::reshape(tape, h, with_batch(n, shapes_[i + 1])); },
            [&](const ReshapeLayer&) { return ops::reshape(tape, h, with_batch(n, shapes_[i + 1])); },
            [&](const RepeatLayer& l) { return ops::repeat_vector(tape, h, l.n); },
        },
        spec.kind);
  }
  return h;
}

ModelGraph build_mlp_ae(std::uint64_t seed) {
  const auto relu = Activation::relu;
  std::vector<LayerSpec> layers;
  for (std::size_t u : {512, 256, 128, 64, 32}) layers.push_back({DenseLayer{u, relu}});
  for (std::size_t u : {64, 128, 256, 512}) layers.push_back({DenseLayer{u, relu}});
  layers.push_back({DenseLayer{1152, Activation::sigmoid}});
  return ModelGraph("mlp_ae", {1152}, std::move(layers), 5, seed);
}

ModelGraph build_conv_ae(std::uint64_t seed) {
  const auto relu = Activation::relu;
  std::vector<LayerSpec> layers{
      {Conv2dLayer{16, 3, 3, relu}}, {MaxPoolLayer{{2, 1}}},        {Conv2dLayer{32, 3, 3, relu}},
      {MaxPoolLayer{{2, 1}}},        {Conv2dLayer{64, 3, 3, relu}},  // latent [32, 9, 64]
      {Conv2dLayer{64, 3, 3, relu}}, {UpsampleLayer{2, 1}},         {Conv2dLayer{32, 3, 3, relu}},
      {UpsampleLayer{2, 1}},         {Conv2dLayer{16, 3, 3, relu}}, {Conv2dLayer{1, 3, 3, Activation::linear}},
  };
  return ModelGraph("conv_ae", {128, 9, 1}, std::move(layers), 5, seed);
}

ModelGraph build_lstm_ae(std::uint64_t seed) {
  std::vector<LayerSpec> layers{
      {LstmLayer{64, true, Activation::relu}},
      {LstmLayer{64, true, Activation::relu}},
      td(DenseLayer{9, Activation::linear}),
  };
  return ModelGraph("lstm_ae", {128, 9}, std::move(layers), 1, seed);
}

ModelGraph build_convlstm_ae(std::uint64_t seed) {
  const auto relu = Activation::relu, linear = Activation::linear;
  std::vector<LayerSpec> layers{
      td(Conv1dLayer{64, 3, relu}),
      td(Conv1dLayer{64, 3, relu}),
      td(MaxPoolLayer{{2}}),
      td(FlattenLayer{}),
      {LstmLayer{100, false, relu}},  // latent [100]
      {RepeatLayer{4}},
      {LstmLayer{100, false, relu}},
      {RepeatLayer{4}},
      {ReshapeLayer{{4, 100, 1}}},
      td(Conv1dLayer{64, 3, relu}),
      td(Conv1dLayer{64, 3, relu}),
      td(Conv1dLayer{1, 3, linear}),
      td(FlattenLayer{}),
      // 100 steps cannot map onto 32 one-to-one, so the per-subsequence head
      // emits all 32 x 9 values at once.
      td(DenseLayer{32 * 9, linear}),
      {ReshapeLayer{{4, 32, 9}}},
  };
  return ModelGraph("convlstm_ae", {4, 32, 9}, std::move(layers), 5, seed);
}

ModelGraph build_classifier(std::uint64_t seed) {
  const auto relu = Activation::relu;
  std::vector<LayerSpec> layers{
      td(Conv1dLayer{64, 3, relu}),
      td(Conv1dLayer{64, 3, relu}),
      {DropoutLayer{0.5}},
      td(MaxPoolLayer{{2}}),
      td(FlattenLayer{}),
      {LstmLayer{100, false, Activation::tanh}},
      {DropoutLayer{0.6}},
      {DenseLayer{100, relu}},
      {DenseLayer{6, Activation::softmax}},
  };
  return ModelGraph("classifier", {4, 32, 9}, std::move(layers), std::nullopt, seed);
}

namespace {

Tensor run_chunked(const ModelGraph& model, const Tensor& x, std::size_t begin, std::size_t end) {
  if (x.rank() == 0) throw DimensionError(model.name() + ": empty input");
  Rng unused(0);
  std::vector<Tensor> parts;
  for (std::size_t r = 0; r < x.dim(0); r += kInferenceChunk) {
    Tape tape(false);
    auto in = make_leaf(x.slice_rows(r, std::min(x.dim(0), r + kInferenceChunk)));
    parts.push_back(model.forward(tape, in, begin, end, false, unused)->value);
  }
  if (parts.size() == 1) return std::move(parts.front());
  return concat_rows<float>(parts);
}

}  // namespace

Tensor predict(const ModelGraph& model, const Tensor& x) { return run_chunked(model, x, 0, model.layers().size()); }

Tensor encode(const ModelGraph& model, const Tensor& x) {
  if (!model.boundary()) throw ContractError(model.name() + " has no encoder");
  return run_chunked(model, x, 0, *model.boundary());
}

Tensor decode(const ModelGraph& model, const Tensor& z) {
  if (!model.boundary()) throw ContractError(model.name() + " has no decoder");
  return run_chunked(model, z, *model.boundary(), model.layers().size());
}

std::vector<std::size_t> argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("argmax_rows: expected [N, K], got " + shape_str(scores.shape()));
  const std::size_t n = scores.dim(0), k = scores.dim(1);
  std::vector<std::size_t> out(n);
  for (std::size_t r = 0; r < n; ++r) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < k; ++j)
      if (scores[r * k + j] > scores[r * k + best]) best = j;
    out[r] = best;
  }
  return out;
}

double accuracy_from_scores(const Tensor& scores, std::span<const int> labels) {
  const auto pred = argmax_rows(scores);
  if (pred.size() != labels.size())
    throw DimensionError("accuracy: " + std::to_string(pred.size()) + " predictions for " +
                         std::to_string(labels.size()) + " labels");
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    if (static_cast<int>(pred[i]) + 1 == labels[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double evaluate_accuracy(const ModelGraph& classifier, const Tensor& inputs, std::span<const int> labels) {
  return accuracy_from_scores(predict(classifier, inputs), labels);
}

}  // namespace sc::models
