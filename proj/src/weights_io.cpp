#include "sensorcomp/binary_io.hpp"
#include "sensorcomp/models.hpp"

namespace sc::models {
namespace {

constexpr std::string_view kMagic = "SCWT";
constexpr std::uint16_t kVersion = 1;

}  // namespace

void save_weights(const ModelGraph& model, const std::filesystem::path& path) {
  const auto params = model.parameters();
  io::ByteWriter w;
  w.reserve(64 + model.parameter_count() * 4);
  w.put_bytes(kMagic);
  w.put_u16(kVersion);
  w.put_u64(model.fingerprint());
  w.put_u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& p : params) {
    const Shape& s = p->value.shape();
    w.put_u8(static_cast<std::uint8_t>(s.size()));
    for (std::size_t d : s) w.put_u32(static_cast<std::uint32_t>(d));
    for (float v : p->value.data()) w.put_f32(v);
  }
  io::write_file_atomic(path, w.bytes());
}

void load_weights(ModelGraph& model, const std::filesystem::path& path) {
  const std::string bytes = io::read_file(path);
  io::ByteReader r(bytes, path.string());
  if (r.remaining() < kMagic.size() || r.get_bytes(kMagic.size()) != kMagic)
    throw io::FormatError(path.string() + ": not a weight file (bad magic)");
  const auto version = r.get_u16();
  if (version != kVersion)
    throw io::FormatError(path.string() + ": unsupported weight file version " + std::to_string(version));
  const auto fp = r.get_u64();
  if (fp != model.fingerprint())
    throw ContractError(path.string() + ": architecture fingerprint does not match model " + model.name());

  auto params = model.parameters();
  const auto count = r.get_u32();
  if (count != params.size())
    throw io::FormatError(path.string() + ": " + std::to_string(count) + " parameters, model has " +
                          std::to_string(params.size()));
  // Decode everything before touching the model so a bad file leaves it intact.
  std::vector<Tensor> loaded;
  loaded.reserve(count);
  for (const auto& p : params) {
    Shape s(r.get_u8());
    for (auto& d : s) d = r.get_u32();
    if (s != p->value.shape())
      throw io::FormatError(path.string() + ": parameter shape " + shape_str(s) + " where model has " +
                            shape_str(p->value.shape()));
    std::vector<float> values(p->value.size());
    for (auto& v : values) v = r.get_f32();
    loaded.emplace_back(std::move(s), std::move(values));
  }
  if (r.remaining() != 0) throw io::FormatError(path.string() + ": trailing bytes after weights");
  for (std::size_t i = 0; i < params.size(); ++i) {
    params[i]->value = std::move(loaded[i]);
    params[i]->zero_grad();
  }
}

}  // namespace sc::models
