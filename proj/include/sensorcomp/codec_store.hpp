#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <variant>

#include "sensorcomp/tensor.hpp"

namespace sc::codec {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

inline constexpr std::string_view kMagic = "ENCF";
inline constexpr std::uint16_t kFormatVersion = 1;

std::size_t dtype_width(DType d);
std::string_view to_string(DType d);

/// Header bytes for a tensor of the given rank: magic, version, dtype, rank,
/// dims, fingerprint.
constexpr std::size_t header_bytes(std::size_t rank) { return 4 + 2 + 1 + 1 + 4 * rank + 8; }

struct FeatureFile {
  DType dtype = DType::f32;
  std::uint64_t fingerprint = 0;
  std::variant<Tensor, TensorD> data;

  const Shape& shape() const;
  /// Values as float32; exact for f32 files, rounded for f64.
  Tensor to_float() const;
};

/// In-memory container. Float tensors may be widened to f64 storage;
/// double tensors are always stored as f64.
std::string encode_features(const Tensor& t, std::uint64_t fingerprint, DType storage = DType::f32);
std::string encode_features(const TensorD& t, std::uint64_t fingerprint);
FeatureFile decode_features(std::string_view bytes, const std::string& context = "<memory>");

/// Writes atomically and returns the file size in bytes (header included).
std::size_t serialize_features(const Tensor& t, std::uint64_t fingerprint, const std::filesystem::path& path,
                               DType storage = DType::f32);
std::size_t serialize_features(const TensorD& t, std::uint64_t fingerprint, const std::filesystem::path& path);
FeatureFile deserialize_features(const std::filesystem::path& path);

/// File size in decimal megabytes (bytes / 1e6).
double measure_size_mb(const std::filesystem::path& path);

/// 100 * (1 - encoded / original). Any consistent unit works.
double compute_reduction(double original, double encoded);

struct StorageReport {
  std::uint64_t original_bytes = 0;
  std::uint64_t encoded_bytes = 0;
  double original_mb = 0.0;
  double encoded_mb = 0.0;
  double reduction_percent = 0.0;
};

StorageReport make_storage_report(std::uint64_t original_bytes, std::uint64_t encoded_bytes);
StorageReport make_storage_report(const std::filesystem::path& original, const std::filesystem::path& encoded);

/// Published storage figures for the four UCI HAR experiments. Sizes are MB
/// and share a 67.75 MB baseline.
struct PublishedRow {
  int experiment;
  std::string_view name;
  double reconstruction_loss;
  double accuracy_percent;
  double reduction_percent;
  double stored_mb;
};

inline constexpr double kPublishedBaselineMb = 67.75;

inline constexpr std::array<PublishedRow, 4> kPublishedRows{{
    {1, "MLP deep autoencoder", 0.0038, 24.0, 90.18, 1.84},
    {2, "Convolutional deep autoencoder", 0.0024, 95.28, 11.18, 60.228},
    {3, "LSTM autoencoder", 0.0221, 52.01, 49.99, 33.88},
    {4, "Convolutional LSTM autoencoder", 0.0593, 46.12, 72.35, 18.738},
}};

struct ReductionCheck {
  int experiment;
  double printed_percent;
  double computed_percent;  // from the published sizes
  bool consistent;          // within `tolerance` percentage points
};

/// Recomputes each published reduction from its published size.
std::array<ReductionCheck, 4> check_published_reductions(double tolerance = 0.02);

}  // namespace sc::codec
