#include "sensorcomp/har_dataset.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <numeric>
#include <sstream>

#include <json.hpp>

namespace sc::har {
namespace fs = std::filesystem;

std::string_view to_string(Split s) { return s == Split::train ? "train" : "test"; }

namespace {

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\v' || c == '\f'; }

// Splits `text` into lines and calls f(line_number, line) for each non-blank one.
template <typename F>
void for_each_line(std::string_view text, F&& f) {
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto nl = text.find('\n');
    std::string_view line = text.substr(0, nl);
    text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
    ++line_no;
    if (std::all_of(line.begin(), line.end(), is_space)) continue;
    f(line_no, line);
  }
}

std::string where(const fs::path& path, std::size_t line) { return path.string() + ":" + std::to_string(line); }

}  // namespace

Tensor parse_signal_file(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<float> values;
  std::size_t rows = 0;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    std::size_t cols = 0;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (true) {
      while (p < end && is_space(*p)) ++p;
      if (p == end) break;
      float v = 0.0f;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc() || (next < end && !is_space(*next))) {
        const char* tok_end = p;
        while (tok_end < end && !is_space(*tok_end)) ++tok_end;
        throw DatasetError(where(path, line_no) + ": non-numeric token '" + std::string(p, tok_end) + "'");
      }
      values.push_back(v);
      ++cols;
      p = next;
    }
    if (cols != kWindowLength)
      throw DatasetError(where(path, line_no) + ": expected " + std::to_string(kWindowLength) + " values, found " +
                         std::to_string(cols));
    ++rows;
  });
  if (rows == 0) throw DatasetError(path.string() + ": empty signal file");
  return Tensor(Shape{rows, kWindowLength}, std::move(values));
}

std::vector<int> parse_label_file(const fs::path& path) {
  const std::string text = read_file(path);
  std::vector<int> labels;
  for_each_line(text, [&](std::size_t line_no, std::string_view line) {
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end && is_space(*p)) ++p;
    int v = 0;
    auto [next, ec] = std::from_chars(p, end, v);
    while (next < end && is_space(*next)) ++next;
    if (ec != std::errc() || next != end)
      throw DatasetError(where(path, line_no) + ": label is not an integer: '" + std::string(line) + "'");
    if (v < 1 || v > static_cast<int>(kClasses))
      throw DatasetError(where(path, line_no) + ": label " + std::to_string(v) + " outside 1..6");
    labels.push_back(v);
  });
  if (labels.empty()) throw DatasetError(path.string() + ": empty label file");
  return labels;
}

RawSignalSet load_split(const fs::path& root, Split split) {
  const std::string tag(to_string(split));
  const fs::path dir = root / tag;
  RawSignalSet raw;
  raw.split = split;
  for (std::size_t c = 0; c < kChannels; ++c) {
    const fs::path file = dir / "Inertial Signals" / (std::string(kChannelNames[c]) + "_" + tag + ".txt");
    if (!fs::exists(file)) throw DatasetError("missing signal file " + file.string());
    raw.channels[c] = parse_signal_file(file);
  }
  const fs::path label_file = dir / ("y_" + tag + ".txt");
  if (!fs::exists(label_file)) throw DatasetError("missing label file " + label_file.string());
  raw.labels = parse_label_file(label_file);

  const std::size_t rows = raw.channels[0].dim(0);
  for (std::size_t c = 1; c < kChannels; ++c)
    if (raw.channels[c].dim(0) != rows)
      throw DatasetError(tag + ": channel " + std::string(kChannelNames[c]) + " has " +
                         std::to_string(raw.channels[c].dim(0)) + " rows, expected " + std::to_string(rows));
  if (raw.labels.size() != rows)
    throw DatasetError(tag + ": " + std::to_string(raw.labels.size()) + " labels for " + std::to_string(rows) +
                       " windows");
  return raw;
}

WindowBatch to_windows(const RawSignalSet& raw) {
  const std::size_t n = raw.rows();
  Tensor data(Shape{n, kWindowLength, kChannels});
  for (std::size_t c = 0; c < kChannels; ++c) {
    const auto src = raw.channels[c].data();
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t t = 0; t < kWindowLength; ++t)
        data[(i * kWindowLength + t) * kChannels + c] = src[i * kWindowLength + t];
  }
  return {std::move(data), raw.labels, raw.split};
}

std::string NormalizationParams::to_json() const {
  nlohmann::json j;
  j["channels"] = std::vector<std::string>(kChannelNames.begin(), kChannelNames.end());
  j["min"] = min;
  j["max"] = max;
  return j.dump(2);
}

NormalizationParams NormalizationParams::from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  NormalizationParams p;
  p.min = j.at("min").get<std::array<float, kChannels>>();
  p.max = j.at("max").get<std::array<float, kChannels>>();
  return p;
}

NormalizationParams normalize_fit(const WindowBatch& train) {
  NormalizationParams p;
  p.min.fill(std::numeric_limits<float>::infinity());
  p.max.fill(-std::numeric_limits<float>::infinity());
  const auto d = train.data.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t c = i % kChannels;
    p.min[c] = std::min(p.min[c], d[i]);
    p.max[c] = std::max(p.max[c], d[i]);
  }
  for (std::size_t c = 0; c < kChannels; ++c)
    if (!(p.max[c] > p.min[c]))
      throw DatasetError("channel " + std::string(kChannelNames[c]) + " is constant; cannot normalize");
  return p;
}

WindowBatch normalize_apply(const WindowBatch& batch, const NormalizationParams& params) {
  WindowBatch out = batch;
  auto d = out.data.data();
  for (std::size_t i = 0; i < d.size(); ++i) {
    const std::size_t c = i % kChannels;
    const float v = (d[i] - params.min[c]) / (params.max[c] - params.min[c]);
    d[i] = std::clamp(v, 0.0f, 1.0f);
  }
  return out;
}

namespace {

Shape layout_shape(std::size_t n, ModelLayout layout) {
  switch (layout) {
    case ModelLayout::flat1152: return {n, kWindowValues};
    case ModelLayout::seq128x9: return {n, kWindowLength, kChannels};
    case ModelLayout::img128x9x1: return {n, kWindowLength, kChannels, 1};
    case ModelLayout::sub4x32x9: return {n, 4, kWindowLength / 4, kChannels};
  }
  throw ContractError("unknown layout");
}

}  // namespace

// Every layout keeps row-major (t, c) order within a window, so each one is a
// pure reinterpretation of the same buffer.
Tensor reshape_for_model(const Tensor& windows, ModelLayout layout) {
  if (windows.rank() != 3 || windows.dim(1) != kWindowLength || windows.dim(2) != kChannels)
    throw DimensionError("expected [N, 128, 9] windows, got " + shape_str(windows.shape()));
  return windows.reshaped(layout_shape(windows.dim(0), layout));
}

Tensor from_model_layout(const Tensor& t, ModelLayout layout) {
  if (t.rank() == 0 || t.shape() != layout_shape(t.dim(0), layout))
    throw DimensionError("tensor " + shape_str(t.shape()) + " does not match the requested layout");
  return t.reshaped({t.dim(0), kWindowLength, kChannels});
}

Tensor one_hot(std::span<const int> labels) {
  if (labels.empty()) throw DimensionError("one_hot of zero labels");
  Tensor out(Shape{labels.size(), kClasses});
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] < 1 || labels[i] > static_cast<int>(kClasses))
      throw ContractError("label " + std::to_string(labels[i]) + " outside 1..6");
    out[i * kClasses + static_cast<std::size_t>(labels[i] - 1)] = 1.0f;
  }
  return out;
}

WindowBatch subsample(const WindowBatch& batch, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ContractError("subsample size must be positive");
  if (count >= batch.size()) return batch;
  std::vector<std::size_t> idx(batch.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  WindowBatch out;
  out.data = batch.data.gather_rows(idx);
  out.split = batch.split;
  for (std::size_t i : idx) out.labels.push_back(batch.labels[i]);
  return out;
}

}  // namespace sc::har
