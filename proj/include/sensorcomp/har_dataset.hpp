#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "sensorcomp/tensor.hpp"

namespace sc::har {

inline constexpr std::size_t kWindowLength = 128;
inline constexpr std::size_t kChannels = 9;
inline constexpr std::size_t kClasses = 6;
inline constexpr std::size_t kWindowValues = kWindowLength * kChannels;  // 1152

/// Canonical channel order, as stored along the last axis of a window.
inline constexpr std::array<std::string_view, kChannels> kChannelNames = {
    "body_acc_x", "body_acc_y", "body_acc_z", "body_gyro_x", "body_gyro_y",
    "body_gyro_z", "total_acc_x", "total_acc_y", "total_acc_z"};

enum class Split { train, test };

std::string_view to_string(Split s);

/// Malformed or missing dataset files. The message carries the path and,
/// where relevant, the 1-based line number.
class DatasetError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Reads a whitespace-separated signal file into a [rows, 128] tensor.
Tensor parse_signal_file(const std::filesystem::path& path);

/// Reads a label file (one integer per line, each in 1..6).
std::vector<int> parse_label_file(const std::filesystem::path& path);

struct RawSignalSet {
  std::array<Tensor, kChannels> channels;  // each [rows, 128], canonical order
  std::vector<int> labels;                 // 1..6
  Split split = Split::train;

  std::size_t rows() const { return labels.size(); }
};

/// Loads `<root>/<split>/Inertial Signals/<channel>_<split>.txt` for all nine
/// channels plus `<root>/<split>/y_<split>.txt`.
RawSignalSet load_split(const std::filesystem::path& root, Split split);

/// N windows x 128 timesteps x 9 channels with activity labels.
struct WindowBatch {
  Tensor data;              // [N, 128, 9]
  std::vector<int> labels;  // 1..6
  Split split = Split::train;

  std::size_t size() const { return labels.size(); }
};

WindowBatch to_windows(const RawSignalSet& raw);

inline WindowBatch load_windows(const std::filesystem::path& root, Split split) {
  return to_windows(load_split(root, split));
}

/// Per-channel min/max fitted on the training split.
struct NormalizationParams {
  std::array<float, kChannels> min{};
  std::array<float, kChannels> max{};

  std::string to_json() const;
  static NormalizationParams from_json(std::string_view text);
};

NormalizationParams normalize_fit(const WindowBatch& train);

/// x' = (x - min) / (max - min), clamped to [0, 1].
WindowBatch normalize_apply(const WindowBatch& batch, const NormalizationParams& params);

enum class ModelLayout {
  flat1152,    // [N, 1152]
  seq128x9,    // [N, 128, 9]
  img128x9x1,  // [N, 128, 9, 1]
  sub4x32x9,   // [N, 4, 32, 9]: timestep t goes to [t / 32, t % 32]
};

/// Pure reshape of [N, 128, 9] windows into a model's input layout.
Tensor reshape_for_model(const Tensor& windows, ModelLayout layout);

/// Inverse of reshape_for_model: any layout back to [N, 128, 9].
Tensor from_model_layout(const Tensor& t, ModelLayout layout);

/// [N, 6] one-hot rows; label k maps to column k - 1.
Tensor one_hot(std::span<const int> labels);

/// `count` windows drawn without replacement by `seed`, kept in dataset order.
WindowBatch subsample(const WindowBatch& batch, std::size_t count, std::uint64_t seed);

}  // namespace sc::har
