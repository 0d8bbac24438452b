#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "sensorcomp/models.hpp"

namespace sc::models {

TrainingDiverged::TrainingDiverged(std::size_t epoch, std::size_t batch, const std::string& detail)
    : NumericError("training diverged at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch) + ": " +
                   detail),
      epoch_(epoch),
      batch_(batch) {}

namespace {

Var loss_of(Tape& tape, const Var& out, const Var& target, LossKind kind) {
  return kind == LossKind::mse ? ops::mse(tape, out, target) : ops::categorical_cross_entropy(tape, out, target);
}

void check_pair(const ModelGraph& model, const Tensor& x, const Tensor& y, const std::string& what) {
  if (x.rank() == 0 || y.rank() == 0) throw DimensionError(what + ": empty tensor");
  if (x.dim(0) != y.dim(0))
    throw DimensionError(what + ": " + std::to_string(x.dim(0)) + " inputs vs " + std::to_string(y.dim(0)) +
                         " targets");
  const Shape& out = model.output_shape();
  if (y.rank() != out.size() + 1 || !std::equal(out.begin(), out.end(), y.shape().begin() + 1))
    throw DimensionError(what + ": targets " + shape_str(y.shape()) + " do not match model output [N, " +
                         shape_str(out) + "]");
}

std::size_t hits(const Tensor& scores, const Tensor& onehot) {
  const auto pred = argmax_rows(scores);
  const auto truth = argmax_rows(onehot);
  std::size_t n = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) n += pred[i] == truth[i];
  return n;
}

double loss_value(const Var& v) { return static_cast<double>(v->value[0]); }

}  // namespace

double evaluate_loss(const ModelGraph& model, const Tensor& inputs, const Tensor& targets, LossKind loss) {
  check_pair(model, inputs, targets, "evaluate_loss");
  const Tensor out = predict(model, inputs);
  Tape tape(false);
  return loss_value(loss_of(tape, make_leaf(out), make_leaf(targets), loss));
}

TrainingHistory fit(ModelGraph& model, const Tensor& inputs, const Tensor& targets, const TrainConfig& config,
                    const std::optional<Holdout>& holdout, const EpochCallback& on_epoch) {
  if (config.batch_size < 1) throw ContractError("fit: batch size must be >= 1");
  if (config.epochs < 1) throw ContractError("fit: epochs must be >= 1");
  check_pair(model, inputs, targets, "fit");

  Rng rng(config.seed);
  std::vector<std::size_t> train_rows(inputs.dim(0));
  std::iota(train_rows.begin(), train_rows.end(), 0);

  Tensor val_x, val_y;
  switch (config.validation) {
    case ValidationPolicy::none:
      break;
    case ValidationPolicy::fixed_holdout:
      if (!holdout) throw ContractError("fit: fixed_holdout validation needs holdout data");
      check_pair(model, holdout->inputs, holdout->targets, "fit holdout");
      val_x = holdout->inputs;
      val_y = holdout->targets;
      break;
    case ValidationPolicy::split: {
      if (!(config.train_fraction > 0.0 && config.train_fraction < 1.0))
        throw ContractError("fit: train fraction must be in (0, 1)");
      std::shuffle(train_rows.begin(), train_rows.end(), rng);
      const auto keep = static_cast<std::size_t>(std::floor(static_cast<double>(train_rows.size()) * config.train_fraction));
      if (keep == 0 || keep == train_rows.size()) throw ContractError("fit: split leaves an empty partition");
      std::vector<std::size_t> val_rows(train_rows.begin() + static_cast<std::ptrdiff_t>(keep), train_rows.end());
      train_rows.resize(keep);
      std::sort(train_rows.begin(), train_rows.end());
      std::sort(val_rows.begin(), val_rows.end());
      val_x = inputs.gather_rows(val_rows);
      val_y = targets.gather_rows(val_rows);
      break;
    }
  }

  const bool classify = config.loss == LossKind::categorical_cross_entropy;
  const std::size_t layer_count = model.layers().size();
  Adam adam(model.parameters(), config.optimizer);
  TrainingHistory history;
  history.train_rows = train_rows.size();
  history.val_rows = val_x.empty() ? 0 : val_x.dim(0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    std::shuffle(train_rows.begin(), train_rows.end(), rng);
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_index = 0;
    for (std::size_t start = 0; start < train_rows.size(); start += config.batch_size, ++batch_index) {
      const std::size_t stop = std::min(train_rows.size(), start + config.batch_size);
      const std::span<const std::size_t> rows(train_rows.data() + start, stop - start);
      Tape tape;
      auto x = make_leaf(inputs.gather_rows(rows));
      auto y = make_leaf(targets.gather_rows(rows));
      Var out, loss;
      try {
        out = model.forward(tape, x, 0, layer_count, true, rng);
        loss = loss_of(tape, out, y, config.loss);
      } catch (const NumericError& e) {
        throw TrainingDiverged(epoch, batch_index, e.what());
      }
      const double value = loss_value(loss);
      if (!std::isfinite(value)) throw TrainingDiverged(epoch, batch_index, "loss is " + std::to_string(value));
      tape.backward(loss);
      adam.step();
      loss_sum += value * static_cast<double>(rows.size());
      if (classify) correct += hits(out->value, y->value);
    }

    EpochStats stats;
    stats.epoch = epoch;
    stats.train_loss = loss_sum / static_cast<double>(train_rows.size());
    if (classify) stats.train_accuracy = static_cast<double>(correct) / static_cast<double>(train_rows.size());
    if (!val_x.empty()) {
      const Tensor out = predict(model, val_x);
      Tape tape(false);
      stats.val_loss = loss_value(loss_of(tape, make_leaf(out), make_leaf(val_y), config.loss));
      if (!std::isfinite(*stats.val_loss)) throw TrainingDiverged(epoch, batch_index, "validation loss is not finite");
      if (classify)
        stats.val_accuracy = static_cast<double>(hits(out, val_y)) / static_cast<double>(val_y.dim(0));
    }
    stats.max_applied_gradient = adam.max_applied_gradient();
    stats.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    history.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
  }
  return history;
}

}  // namespace sc::models
