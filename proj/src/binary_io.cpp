#include "sensorcomp/binary_io.hpp"

#include <bit>
#include <fstream>
#include <sstream>

#include <unistd.h>

namespace sc::io {

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }
void ByteWriter::put_f64(double v) { put_u64(std::bit_cast<std::uint64_t>(v)); }

std::string_view ByteReader::get_bytes(std::size_t n) {
  if (remaining() < n)
    throw FormatError(context_ + ": truncated at byte " + std::to_string(pos_) + " (need " + std::to_string(n) +
                      ", have " + std::to_string(remaining()) + ")");
  auto s = data_.substr(pos_, n);
  pos_ += n;
  return s;
}

std::uint64_t ByteReader::get_le(std::size_t width) {
  const auto s = get_bytes(width);
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < width; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
  return v;
}

float ByteReader::get_f32() { return std::bit_cast<float>(get_u32()); }
double ByteReader::get_f64() { return std::bit_cast<double>(get_u64()); }

void write_file_atomic(const std::filesystem::path& path, std::string_view bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    out.flush();
    if (!out) {
      std::error_code ec;
      std::filesystem::remove(tmp, ec);
      throw std::runtime_error("write failed: " + tmp.string());
    }
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw std::runtime_error("cannot rename into " + path.string());
  }
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace sc::io
