#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "sensorcomp/adam.hpp"
#include "sensorcomp/ops.hpp"

namespace sc::models {

struct DenseLayer {
  std::size_t units;
  Activation activation = Activation::linear;
};

/// Width-k convolution along the second-to-last axis.
struct Conv1dLayer {
  std::size_t filters;
  std::size_t kernel = 3;
  Activation activation = Activation::linear;
  Padding padding = Padding::same;
};

struct Conv2dLayer {
  std::size_t filters;
  std::size_t kernel_h = 3;
  std::size_t kernel_w = 3;
  Activation activation = Activation::linear;
  Padding padding = Padding::same;
};

/// Pools the axes directly in front of the channel axis.
struct MaxPoolLayer {
  Shape window;
};

struct UpsampleLayer {
  std::size_t factor_h;
  std::size_t factor_w;
};

/// `output` is applied to the LSTM's hidden output; the cell itself keeps
/// sigmoid gates and `cell` in the candidate and state positions.
struct LstmLayer {
  std::size_t units;
  bool return_sequences = false;
  Activation output = Activation::linear;
  Activation cell = Activation::tanh;
};

struct DropoutLayer {
  double rate;
};

struct FlattenLayer {};

/// Per-sample target shape.
struct ReshapeLayer {
  Shape shape;
};

/// [N, D] -> [N, n, D].
struct RepeatLayer {
  std::size_t n;
};

using LayerKind = std::variant<DenseLayer, Conv1dLayer, Conv2dLayer, MaxPoolLayer, UpsampleLayer, LstmLayer,
                               DropoutLayer, FlattenLayer, ReshapeLayer, RepeatLayer>;

/// One layer. With `time_distributed` the layer runs independently on every
/// entry of the first per-sample axis (a subsequence); for flatten that means
/// the subsequence axis is kept.
struct LayerSpec {
  LayerKind kind;
  bool time_distributed = false;

  std::string describe() const;
};

inline LayerSpec td(LayerKind k) { return {std::move(k), true}; }

/// Ordered layers plus their weights. Autoencoders carry a boundary: layers
/// [0, boundary) are the encoder and the rest the decoder.
///
/// Training mutates weights in place from a single thread. Inference never
/// writes to the graph, so a trained model may be shared across threads.
class ModelGraph {
 public:
  ModelGraph(std::string name, Shape input_shape, std::vector<LayerSpec> layers,
             std::optional<std::size_t> boundary, std::uint64_t seed);

  const std::string& name() const noexcept { return name_; }
  const std::vector<LayerSpec>& layers() const noexcept { return layers_; }
  std::optional<std::size_t> boundary() const noexcept { return boundary_; }
  bool is_autoencoder() const noexcept { return boundary_.has_value(); }

  /// Per-sample shapes (no batch axis).
  const Shape& input_shape() const { return shapes_.front(); }
  const Shape& output_shape() const { return shapes_.back(); }
  const Shape& shape_after(std::size_t layer_count) const { return shapes_.at(layer_count); }
  const Shape& latent_shape() const;

  /// Weights of every layer in order.
  std::vector<Var> parameters() const;
  const std::vector<Var>& layer_parameters(std::size_t i) const { return params_.at(i); }
  std::size_t parameter_count() const;

  /// Canonical text of the architecture; hashed into fingerprint().
  std::string describe() const;
  std::uint64_t fingerprint() const;

  /// Runs layers [begin, end) on a batched input. `rng` drives dropout and is
  /// touched only when training.
  Var forward(Tape& tape, const Var& x, std::size_t begin, std::size_t end, bool training, Rng& rng) const;

 private:
  std::string name_;
  std::vector<LayerSpec> layers_;
  std::optional<std::size_t> boundary_;
  std::vector<Shape> shapes_;
  std::vector<std::vector<Var>> params_;
};

ModelGraph build_mlp_ae(std::uint64_t seed = 0);
ModelGraph build_conv_ae(std::uint64_t seed = 0);
ModelGraph build_lstm_ae(std::uint64_t seed = 0);
ModelGraph build_convlstm_ae(std::uint64_t seed = 0);
ModelGraph build_classifier(std::uint64_t seed = 0);

/// Rows per inference chunk. encode, decode and predict share it, which keeps
/// decode(encode(x)) bit-identical to predict(x).
inline constexpr std::size_t kInferenceChunk = 256;

/// Full forward pass in inference mode.
Tensor predict(const ModelGraph& model, const Tensor& x);
Tensor encode(const ModelGraph& model, const Tensor& x);
Tensor decode(const ModelGraph& model, const Tensor& z);

enum class LossKind { mse, categorical_cross_entropy };
enum class ValidationPolicy { none, fixed_holdout, split };

struct TrainConfig {
  AdamConfig optimizer;
  std::size_t batch_size = 32;
  std::size_t epochs = 1;
  LossKind loss = LossKind::mse;
  ValidationPolicy validation = ValidationPolicy::none;
  double train_fraction = 0.8;  // split policy only
  std::uint64_t seed = 0;
};

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  std::optional<double> val_loss;
  std::optional<double> train_accuracy;  // running, over training-mode batches
  std::optional<double> val_accuracy;
  double max_applied_gradient = 0.0;
  double seconds = 0.0;
};

struct TrainingHistory {
  std::vector<EpochStats> epochs;
  std::size_t train_rows = 0;
  std::size_t val_rows = 0;
};

/// Non-finite loss or state during training.
class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& detail);
  std::size_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::size_t epoch_;
  std::size_t batch_;
};

struct Holdout {
  Tensor inputs;
  Tensor targets;
};

using EpochCallback = std::function<void(const EpochStats&)>;

/// Mini-batch Adam. Rows are reshuffled each epoch from `config.seed`.
/// fixed_holdout requires `holdout`; split carves a seeded validation subset
/// out of the training rows.
TrainingHistory fit(ModelGraph& model, const Tensor& inputs, const Tensor& targets, const TrainConfig& config,
                    const std::optional<Holdout>& holdout = std::nullopt, const EpochCallback& on_epoch = {});

/// Mean loss over all rows in inference mode.
double evaluate_loss(const ModelGraph& model, const Tensor& inputs, const Tensor& targets, LossKind loss);

/// Index of the largest entry of each row; ties go to the lowest index.
std::vector<std::size_t> argmax_rows(const Tensor& scores);

/// Fraction of rows whose argmax equals label - 1 (labels are 1-based).
double accuracy_from_scores(const Tensor& scores, std::span<const int> labels);
double evaluate_accuracy(const ModelGraph& classifier, const Tensor& inputs, std::span<const int> labels);

/// `SCWT` weight file; see docs/encf-format.md.
void save_weights(const ModelGraph& model, const std::filesystem::path& path);

/// Loads into an already built model. The file's architecture fingerprint
/// must match the model's.
void load_weights(ModelGraph& model, const std::filesystem::path& path);

}  // namespace sc::models
