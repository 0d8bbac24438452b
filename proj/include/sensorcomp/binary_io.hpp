#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sc::io {

/// Malformed binary file: bad magic, truncation, unsupported version.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Appends little-endian scalars to an in-memory buffer.
class ByteWriter {
 public:
  void put_bytes(std::string_view s) { buf_.append(s); }
  void put_u8(std::uint8_t v) { buf_.push_back(static_cast<char>(v)); }
  void put_u16(std::uint16_t v) { put_le(v, 2); }
  void put_u32(std::uint32_t v) { put_le(v, 4); }
  void put_u64(std::uint64_t v) { put_le(v, 8); }
  void put_f32(float v);
  void put_f64(double v);
  void reserve(std::size_t n) { buf_.reserve(n); }

  const std::string& bytes() const noexcept { return buf_; }
  std::string take() { return std::move(buf_); }

 private:
  void put_le(std::uint64_t v, int width) {
    for (int i = 0; i < width; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
  }
  std::string buf_;
};

/// Reads little-endian scalars; every read past the end throws FormatError
/// naming `context`.
class ByteReader {
 public:
  ByteReader(std::string_view data, std::string context) : data_(data), context_(std::move(context)) {}

  std::string_view get_bytes(std::size_t n);
  std::uint8_t get_u8() { return static_cast<std::uint8_t>(get_le(1)); }
  std::uint16_t get_u16() { return static_cast<std::uint16_t>(get_le(2)); }
  std::uint32_t get_u32() { return static_cast<std::uint32_t>(get_le(4)); }
  std::uint64_t get_u64() { return get_le(8); }
  float get_f32();
  double get_f64();

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return data_.size() - pos_; }
  const std::string& context() const noexcept { return context_; }

 private:
  std::uint64_t get_le(std::size_t width);
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string context_;
};

/// Writes to `<path>.tmp.<pid>` and renames over `path`, so readers never see
/// a partial file. Throws std::runtime_error on I/O failure.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view s);

}  // namespace sc::io
