#include "sensorcomp/codec_store.hpp"

#include <cmath>
#include <limits>

#include "sensorcomp/binary_io.hpp"

namespace sc::codec {
namespace {

void write_header(io::ByteWriter& w, DType dtype, const Shape& shape, std::uint64_t fingerprint) {
  if (shape.empty()) throw DimensionError("encode_features: tensor has no dimensions");
  if (shape.size() > std::numeric_limits<std::uint8_t>::max())
    throw DimensionError("encode_features: rank " + std::to_string(shape.size()) + " exceeds 255");
  w.put_bytes(kMagic);
  w.put_u16(kFormatVersion);
  w.put_u8(static_cast<std::uint8_t>(dtype));
  w.put_u8(static_cast<std::uint8_t>(shape.size()));
  for (std::size_t d : shape) {
    if (d > std::numeric_limits<std::uint32_t>::max())
      throw DimensionError("encode_features: dimension " + std::to_string(d) + " exceeds u32");
    w.put_u32(static_cast<std::uint32_t>(d));
  }
  w.put_u64(fingerprint);
}

template <typename T>
std::string encode_as(const BasicTensor<T>& t, std::uint64_t fingerprint, DType storage) {
  if (t.empty()) throw DimensionError("encode_features: empty tensor");
  io::ByteWriter w;
  w.reserve(header_bytes(t.rank()) + t.size() * dtype_width(storage));
  write_header(w, storage, t.shape(), fingerprint);
  if (storage == DType::f32)
    for (T v : t.data()) w.put_f32(static_cast<float>(v));
  else
    for (T v : t.data()) w.put_f64(static_cast<double>(v));
  return w.take();
}

}  // namespace

std::size_t dtype_width(DType d) {
  switch (d) {
    case DType::f32: return 4;
    case DType::f64: return 8;
  }
  throw ContractError("unknown dtype");
}

std::string_view to_string(DType d) { return d == DType::f32 ? "f32" : "f64"; }

const Shape& FeatureFile::shape() const {
  return std::visit([](const auto& t) -> const Shape& { return t.shape(); }, data);
}

Tensor FeatureFile::to_float() const {
  if (const auto* f = std::get_if<Tensor>(&data)) return *f;
  return std::get<TensorD>(data).cast<float>();
}

std::string encode_features(const Tensor& t, std::uint64_t fingerprint, DType storage) {
  return encode_as(t, fingerprint, storage);
}

std::string encode_features(const TensorD& t, std::uint64_t fingerprint) {
  return encode_as(t, fingerprint, DType::f64);
}

FeatureFile decode_features(std::string_view bytes, const std::string& context) {
  io::ByteReader r(bytes, context);
  if (r.remaining() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic)
    throw io::FormatError(context + ": not an ENCF file (bad magic)");
  const auto version = r.get_u16();
  if (version == 0 || version > kFormatVersion)
    throw io::FormatError(context + ": ENCF version " + std::to_string(version) + " is not supported (max " +
                          std::to_string(kFormatVersion) + ")");
  const auto code = r.get_u8();
  if (code > static_cast<std::uint8_t>(DType::f64))
    throw io::FormatError(context + ": unknown dtype code " + std::to_string(code));
  const auto dtype = static_cast<DType>(code);
  const auto rank = r.get_u8();
  if (rank == 0) throw io::FormatError(context + ": rank 0");
  Shape shape(rank);
  for (auto& d : shape) {
    d = r.get_u32();
    if (d == 0) throw io::FormatError(context + ": zero dimension");
  }
  FeatureFile out;
  out.dtype = dtype;
  out.fingerprint = r.get_u64();

  // Checked in long double so a hostile header cannot overflow the product.
  long double expected = static_cast<long double>(dtype_width(dtype));
  for (std::size_t d : shape) expected *= static_cast<long double>(d);
  if (expected != static_cast<long double>(r.remaining()))
    throw io::FormatError(context + ": payload is " + std::to_string(r.remaining()) + " bytes, header implies " +
                          std::to_string(static_cast<unsigned long long>(expected)));
  const std::size_t n = shape_size(shape);
  if (dtype == DType::f32) {
    std::vector<float> v(n);
    for (auto& x : v) x = r.get_f32();
    out.data = Tensor(std::move(shape), std::move(v));
  } else {
    std::vector<double> v(n);
    for (auto& x : v) x = r.get_f64();
    out.data = TensorD(std::move(shape), std::move(v));
  }
  return out;
}

std::size_t serialize_features(const Tensor& t, std::uint64_t fingerprint, const std::filesystem::path& path,
                               DType storage) {
  const auto bytes = encode_features(t, fingerprint, storage);
  io::write_file_atomic(path, bytes);
  return bytes.size();
}

std::size_t serialize_features(const TensorD& t, std::uint64_t fingerprint, const std::filesystem::path& path) {
  const auto bytes = encode_features(t, fingerprint);
  io::write_file_atomic(path, bytes);
  return bytes.size();
}

FeatureFile deserialize_features(const std::filesystem::path& path) {
  return decode_features(io::read_file(path), path.string());
}

double measure_size_mb(const std::filesystem::path& path) {
  return static_cast<double>(std::filesystem::file_size(path)) / 1e6;
}

double compute_reduction(double original, double encoded) {
  if (!(original > 0.0)) throw ContractError("compute_reduction: original size must be positive");
  if (!(encoded >= 0.0)) throw ContractError("compute_reduction: encoded size must be non-negative");
  return 100.0 * (1.0 - encoded / original);
}

StorageReport make_storage_report(std::uint64_t original_bytes, std::uint64_t encoded_bytes) {
  StorageReport r;
  r.original_bytes = original_bytes;
  r.encoded_bytes = encoded_bytes;
  r.original_mb = static_cast<double>(original_bytes) / 1e6;
  r.encoded_mb = static_cast<double>(encoded_bytes) / 1e6;
  r.reduction_percent = compute_reduction(static_cast<double>(original_bytes), static_cast<double>(encoded_bytes));
  return r;
}

StorageReport make_storage_report(const std::filesystem::path& original, const std::filesystem::path& encoded) {
  return make_storage_report(std::filesystem::file_size(original), std::filesystem::file_size(encoded));
}

std::array<ReductionCheck, 4> check_published_reductions(double tolerance) {
  std::array<ReductionCheck, 4> out{};
  for (std::size_t i = 0; i < kPublishedRows.size(); ++i) {
    const auto& row = kPublishedRows[i];
    const double computed = compute_reduction(kPublishedBaselineMb, row.stored_mb);
    out[i] = {row.experiment, row.reduction_percent, computed,
              std::abs(computed - row.reduction_percent) <= tolerance};
  }
  return out;
}

}  // namespace sc::codec
