#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sensorcomp/codec_store.hpp"
#include "sensorcomp/har_dataset.hpp"
#include "sensorcomp/models.hpp"

namespace sc::pipeline {

/// Failure inside a named pipeline stage; what() reads "[stage] detail".
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& detail);
  const std::string& stage() const noexcept { return stage_; }

 private:
  std::string stage_;
};

using Logger = std::function<void(std::string_view)>;

/// Architecture, input layout and training settings of one experiment.
struct ExperimentSpec {
  int id;
  std::string name;
  models::ModelGraph (*build)(std::uint64_t);
  har::ModelLayout layout;
  models::TrainConfig train;
};

/// Defaults for experiments 1..4; ContractError for any other id.
ExperimentSpec experiment_spec(int id);

struct ExperimentConfig {
  int experiment = 1;
  std::filesystem::path dataset_root;
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::optional<std::size_t> epochs;
  std::optional<std::size_t> batch_size;
  std::optional<std::size_t> subsample;  // windows kept from each split
  bool disable_clip = false;
  codec::DType storage = codec::DType::f32;
  /// Loaded if it exists, otherwise trained on demand and written there.
  /// Defaults to <output_dir>/classifier.scwt.
  std::optional<std::filesystem::path> classifier_weights;
  std::optional<std::size_t> classifier_epochs;
  Logger log;
};

struct ExperimentResult {
  int experiment = 0;
  std::string name;
  double reconstruction_loss = 0.0;  // validation MSE
  double accuracy_percent = 0.0;     // classifier on reconstructed test windows
  codec::StorageReport storage;
  double seconds = 0.0;
  std::uint64_t seed = 0;
  std::size_t epochs = 0;
  std::size_t train_rows = 0;
  std::size_t test_rows = 0;
  Shape latent_shape;

  std::string to_json() const;
  static ExperimentResult from_json(std::string_view text);
};

/// Train autoencoder, encode both splits, store latents, reload, decode,
/// classify the reconstructed test windows. Artifacts land in output_dir:
/// result.json, report.md, report.csv, audit.log, history.csv,
/// autoencoder.scwt, normalization.json and the .encf files.
ExperimentResult run_experiment(const ExperimentConfig& config);

struct ClassifierConfig {
  std::filesystem::path dataset_root;
  std::filesystem::path weights_path;
  std::uint64_t seed = 0;
  std::size_t epochs = 150;
  std::size_t batch_size = 16;
  double learning_rate = 1e-5;
  std::optional<std::size_t> subsample;
  Logger log;
};

struct ClassifierOutcome {
  models::TrainingHistory history;
  double train_accuracy = 0.0;  // inference mode, after training
  double test_accuracy = 0.0;
};

/// Trains the convolutional-LSTM classifier on normalized training windows
/// and saves its weights.
ClassifierOutcome train_baseline_classifier(const ClassifierConfig& config);

enum class ReportFormat { markdown, csv };

ReportFormat report_format_from_string(std::string_view s);

/// Fixed-point text with `decimals` digits, rounding the shortest decimal
/// form of `value` half away from zero.
std::string format_fixed(double value, int decimals);

/// One row per experiment ordered by id.
std::string render_report(std::vector<ExperimentResult> results, ReportFormat format);
void emit_report(const std::vector<ExperimentResult>& results, ReportFormat format,
                 const std::filesystem::path& path);

/// result.json files found in each directory or its immediate children.
std::vector<ExperimentResult> collect_results(const std::vector<std::filesystem::path>& dirs);

/// Normalized train and test windows. Normalization is fitted on the
/// (subsampled) training split only.
struct PreparedData {
  har::WindowBatch train;
  har::WindowBatch test;
  har::NormalizationParams normalization;
};

PreparedData prepare_data(const std::filesystem::path& root, std::optional<std::size_t> subsample,
                          std::uint64_t seed);

}  // namespace sc::pipeline
