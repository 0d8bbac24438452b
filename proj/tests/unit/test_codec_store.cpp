#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "sensorcomp/binary_io.hpp"
#include "sensorcomp/codec_store.hpp"
#include "temp_dir.hpp"

using namespace sc;
using namespace sc::codec;
using sc::testing::TempDir;
namespace fs = std::filesystem;

namespace {

template <typename T>
bool same_bits(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  return a.shape() == b.shape() && std::memcmp(a.data().data(), b.data().data(), a.size() * sizeof(T)) == 0;
}

std::string patched(std::string bytes, std::size_t offset, char value) {
  bytes[offset] = value;
  return bytes;
}

}  // namespace

TEST(Encf, HeaderLayoutIsLittleEndian) {
  Tensor t(Shape{2}, std::vector<float>{1.0f, -2.0f});
  const std::string b = encode_features(t, 0x0102030405060708ull);
  const unsigned char expected[] = {
      'E', 'N', 'C', 'F',                              // magic
      1,   0,                                          // version
      0,                                               // dtype f32
      1,                                               // rank
      2,   0,   0,   0,                                // dims
      8,   7,   6,   5,   4, 3, 2, 1,                  // fingerprint
      0,   0,   0x80, 0x3f, 0, 0, 0, 0xc0,             // 1.0f, -2.0f
  };
  ASSERT_EQ(b.size(), sizeof expected);
  EXPECT_EQ(std::memcmp(b.data(), expected, sizeof expected), 0);
  EXPECT_EQ(header_bytes(1), 20u);
  EXPECT_EQ(header_bytes(2), 24u);
}

TEST(Encf, LatentFileSizes) {
  TempDir dir;
  Rng rng(1);
  auto z = uniform<float>({7352, 32}, 0.0f, 1.0f, rng);
  EXPECT_EQ(serialize_features(z, 9, dir / "z32.encf"), 941'056u + 24u);
  EXPECT_EQ(fs::file_size(dir / "z32.encf"), 941'056u + 24u);
  EXPECT_EQ(serialize_features(z, 9, dir / "z64.encf", DType::f64), 1'882'112u + 24u);
  EXPECT_NEAR(measure_size_mb(dir / "z64.encf"), 1.88, 0.01);
}

TEST(Encf, BaselineArithmetic) {
  EXPECT_EQ(7352u * 1152u * 8u, 67'756'032u);
  EXPECT_NEAR(67'756'032 / 1e6, 67.75, 67.75 * 1e-3);
  EXPECT_NEAR(7352.0 * 1152 * 4 / 1e6, 33.88, 33.88 * 1e-3);
}

TEST(Encf, EmptyTensorIsRejected) {
  TempDir dir;
  EXPECT_THROW(serialize_features(Tensor(), 0, dir / "e.encf"), DimensionError);
  EXPECT_FALSE(fs::exists(dir / "e.encf"));
}

TEST(Encf, RoundTripIsBitExact) {
  Rng rng(5);
  std::uniform_int_distribution<std::size_t> rank_of(1, 4), dim_of(1, 6);
  for (int i = 0; i < 200; ++i) {
    Shape s(rank_of(rng));
    for (auto& d : s) d = dim_of(rng);
    const std::uint64_t fp = rng();
    auto f = normal<float>(s, 0.0f, 100.0f, rng);
    auto d = normal<double>(s, 0.0, 1e-30, rng);
    f[0] = (i % 3 == 0) ? std::numeric_limits<float>::quiet_NaN() : -0.0f;
    d[0] = (i % 2 == 0) ? -std::numeric_limits<double>::infinity() : std::numeric_limits<double>::denorm_min();

    auto ff = decode_features(encode_features(f, fp));
    EXPECT_EQ(ff.dtype, DType::f32);
    EXPECT_EQ(ff.fingerprint, fp);
    ASSERT_TRUE(same_bits(std::get<Tensor>(ff.data), f));

    auto fd = decode_features(encode_features(d, fp));
    EXPECT_EQ(fd.dtype, DType::f64);
    ASSERT_TRUE(same_bits(std::get<TensorD>(fd.data), d));

    // Widening to f64 storage is exact and comes back as the same floats.
    auto fw = decode_features(encode_features(f, fp, DType::f64));
    EXPECT_EQ(fw.dtype, DType::f64);
    ASSERT_TRUE(same_bits(fw.to_float(), f));
  }
}

TEST(Encf, FileRoundTrip) {
  TempDir dir;
  Rng rng(2);
  auto t = uniform<float>({3, 4, 5}, -1.0f, 1.0f, rng);
  serialize_features(t, 77, dir / "t.encf");
  auto back = deserialize_features(dir / "t.encf");
  EXPECT_EQ(back.fingerprint, 77u);
  EXPECT_TRUE(same_bits(back.to_float(), t));
  for (const auto& e : fs::directory_iterator(dir.path())) EXPECT_EQ(e.path().extension(), ".encf");
}

TEST(Encf, OverwriteReplacesFile) {
  TempDir dir;
  serialize_features(Tensor::full({100}, 1.0f), 1, dir / "t.encf");
  serialize_features(Tensor::full({2}, 3.0f), 2, dir / "t.encf");
  auto back = deserialize_features(dir / "t.encf");
  EXPECT_EQ(back.shape(), (Shape{2}));
  EXPECT_EQ(back.fingerprint, 2u);
}

TEST(Encf, UnwritablePathIsError) {
  TempDir dir;
  std::ofstream(dir / "file") << "x";
  EXPECT_ANY_THROW(serialize_features(Tensor::full({2}, 1.0f), 0, dir / "file" / "t.encf"));
}

TEST(Encf, CorruptFilesAreRejected) {
  const std::string good = encode_features(Tensor::full({2, 3}, 0.5f), 1);
  EXPECT_THROW(decode_features(patched(good, 0, 'X')), io::FormatError);
  EXPECT_THROW(decode_features(good.substr(0, good.size() - 1)), io::FormatError);
  EXPECT_THROW(decode_features(good.substr(0, 10)), io::FormatError);
  EXPECT_THROW(decode_features(good + "z"), io::FormatError);
  EXPECT_THROW(decode_features(""), io::FormatError);
  EXPECT_THROW(decode_features(patched(good, 6, 7)), io::FormatError);  // dtype code
  EXPECT_THROW(decode_features(patched(good, 4, 2)), io::FormatError);  // future version
  EXPECT_THROW(decode_features(patched(good, 4, 0)), io::FormatError);
  EXPECT_THROW(decode_features(patched(good, 8, 0)), io::FormatError);  // zero dim
}

TEST(Encf, HugeDimsDoNotOverflow) {
  std::string b = encode_features(Tensor::full({1, 1, 1, 1}, 0.5f), 1);
  for (std::size_t i = 8; i < 24; ++i) b[i] = '\xff';
  EXPECT_THROW(decode_features(b), io::FormatError);
}

TEST(Storage, MegabytesAreDecimal) {
  TempDir dir;
  {
    std::ofstream out(dir / "m.bin", std::ios::binary);
    std::string block(1'000'000, '\0');
    out.write(block.data(), static_cast<std::streamsize>(block.size()));
  }
  EXPECT_EQ(measure_size_mb(dir / "m.bin"), 1.0);
  auto r = make_storage_report(3'000'000, 1'500'000);
  EXPECT_EQ(r.original_mb, 3.0);
  EXPECT_EQ(r.encoded_mb, 1.5);
  EXPECT_EQ(r.reduction_percent, 50.0);
}

TEST(Storage, ReductionArithmetic) {
  EXPECT_NEAR(compute_reduction(67.75, 33.88), 49.99, 0.005);
  EXPECT_NEAR(compute_reduction(67.75, 18.738), 72.34, 0.005);
  EXPECT_NEAR(compute_reduction(67.75, 1.84), 97.28, 0.005);
  EXPECT_EQ(compute_reduction(10.0, 10.0), 0.0);
  EXPECT_EQ(compute_reduction(10.0, 0.0), 100.0);
  EXPECT_LT(compute_reduction(10.0, 20.0), 0.0);
  EXPECT_THROW(compute_reduction(0.0, 1.0), ContractError);
}

TEST(Storage, ReportMatchesFilesOnDisk) {
  TempDir dir;
  Rng rng(3);
  const auto orig = serialize_features(uniform<float>({50, 1152}, 0, 1, rng), 0, dir / "orig.encf");
  const auto enc = serialize_features(uniform<float>({50, 32}, 0, 1, rng), 0, dir / "z.encf");
  auto r = make_storage_report(dir / "orig.encf", dir / "z.encf");
  EXPECT_EQ(r.original_bytes, orig);
  EXPECT_EQ(r.encoded_bytes, enc);
  EXPECT_DOUBLE_EQ(r.reduction_percent, 100.0 * (1.0 - static_cast<double>(enc) / static_cast<double>(orig)));
}

TEST(Storage, PublishedReductionsRecomputed) {
  const auto checks = check_published_reductions();
  EXPECT_FALSE(checks[0].consistent);
  EXPECT_NEAR(checks[0].computed_percent, 97.28, 0.005);
  EXPECT_NEAR(checks[1].computed_percent, 11.10, 0.005);
  EXPECT_TRUE(checks[2].consistent);
  EXPECT_TRUE(checks[3].consistent);
}
