#include "sensorcomp/pipeline.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "sensorcomp/binary_io.hpp"

namespace sc::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;

StageError::StageError(std::string stage, const std::string& detail)
    : std::runtime_error("[" + stage + "] " + detail), stage_(std::move(stage)) {}

namespace {

template <typename F>
auto in_stage(const std::string& stage, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(stage, e.what());
  }
}

void say(const Logger& log, const std::string& msg) {
  if (log) log(msg);
}

// Which tensors each stage read; lets a reader confirm that test labels only
// reach the final classification.
class AuditLog {
 public:
  void consumed(const std::string& stage, const std::string& tensor, const Shape& shape) {
    lines_ << stage << '\t' << tensor << '\t' << shape_str(shape) << '\n';
  }
  void consumed(const std::string& stage, const std::string& tensor, std::size_t count) {
    lines_ << stage << '\t' << tensor << '\t' << '(' << count << ')' << '\n';
  }
  std::string text() const { return "stage\ttensor\tshape\n" + lines_.str(); }

 private:
  std::ostringstream lines_;
};

std::string history_csv(const models::TrainingHistory& h) {
  auto opt = [](const std::optional<double>& v) {
    std::ostringstream s;
    if (v) s.precision(9), s << *v;
    return s.str();
  };
  std::ostringstream s;
  s.precision(9);
  s << "epoch,train_loss,val_loss,train_accuracy,val_accuracy,max_applied_gradient,seconds\n";
  for (const auto& e : h.epochs)
    s << e.epoch << ',' << e.train_loss << ',' << opt(e.val_loss) << ',' << opt(e.train_accuracy) << ','
      << opt(e.val_accuracy) << ',' << e.max_applied_gradient << ',' << e.seconds << '\n';
  return s.str();
}

models::EpochCallback epoch_logger(const Logger& log, const std::string& what, std::size_t total) {
  if (!log) return {};
  return [log, what, total](const models::EpochStats& e) {
    std::ostringstream s;
    s.precision(6);
    s << "[" << what << "] epoch " << e.epoch << "/" << total << " loss " << e.train_loss;
    if (e.val_loss) s << " val " << *e.val_loss;
    if (e.train_accuracy) s << " acc " << *e.train_accuracy;
    s.precision(3);
    s << " (" << e.seconds << "s)";
    log(s.str());
  };
}

models::TrainConfig classifier_train_config(std::uint64_t seed, std::size_t epochs, std::size_t batch,
                                            double learning_rate) {
  models::TrainConfig cfg;
  cfg.optimizer.learning_rate = learning_rate;
  cfg.batch_size = batch;
  cfg.epochs = epochs;
  cfg.loss = models::LossKind::categorical_cross_entropy;
  cfg.seed = seed;
  return cfg;
}

Tensor classifier_input(const Tensor& windows) { return har::reshape_for_model(windows, har::ModelLayout::sub4x32x9); }

}  // namespace

ExperimentSpec experiment_spec(int id) {
  using models::ValidationPolicy;
  ExperimentSpec s{id, "", nullptr, har::ModelLayout::flat1152, {}};
  s.train.loss = models::LossKind::mse;
  s.train.optimizer.learning_rate = 1e-3;
  s.train.validation = ValidationPolicy::fixed_holdout;
  switch (id) {
    case 1:
      s.name = "Exp. 1: MLP deep autoencoder";
      s.build = models::build_mlp_ae;
      s.layout = har::ModelLayout::flat1152;
      s.train.batch_size = 128;
      s.train.epochs = 20;
      break;
    case 2:
      s.name = "Exp. 2: Convolutional deep autoencoder";
      s.build = models::build_conv_ae;
      s.layout = har::ModelLayout::img128x9x1;
      s.train.batch_size = 16;
      s.train.epochs = 150;
      break;
    case 3:
      s.name = "Exp. 3: LSTM autoencoder";
      s.build = models::build_lstm_ae;
      s.layout = har::ModelLayout::seq128x9;
      s.train.optimizer.learning_rate = 1e-4;
      s.train.optimizer.clip_value = 0.5;
      s.train.batch_size = 32;
      s.train.epochs = 300;
      break;
    case 4:
      s.name = "Exp. 4: Convolutional LSTM autoencoder";
      s.build = models::build_convlstm_ae;
      s.layout = har::ModelLayout::sub4x32x9;
      s.train.optimizer.decay = 1e-6;
      s.train.batch_size = 16;
      s.train.epochs = 100;
      s.train.validation = ValidationPolicy::split;
      s.train.train_fraction = 0.8;
      break;
    default:
      throw ContractError("unknown experiment id " + std::to_string(id) + " (expected 1..4)");
  }
  return s;
}

PreparedData prepare_data(const fs::path& root, std::optional<std::size_t> subsample, std::uint64_t seed) {
  PreparedData d;
  d.train = har::load_windows(root, har::Split::train);
  d.test = har::load_windows(root, har::Split::test);
  if (subsample) {
    d.train = har::subsample(d.train, *subsample, seed);
    d.test = har::subsample(d.test, *subsample, seed ^ 0x9e3779b97f4a7c15ull);
  }
  d.normalization = har::normalize_fit(d.train);
  d.train = har::normalize_apply(d.train, d.normalization);
  d.test = har::normalize_apply(d.test, d.normalization);
  return d;
}

std::string ExperimentResult::to_json() const {
  json j;
  j["experiment"] = experiment;
  j["name"] = name;
  j["reconstruction_loss"] = reconstruction_loss;
  j["accuracy_percent"] = accuracy_percent;
  j["original_bytes"] = storage.original_bytes;
  j["encoded_bytes"] = storage.encoded_bytes;
  j["original_mb"] = storage.original_mb;
  j["encoded_mb"] = storage.encoded_mb;
  j["reduction_percent"] = storage.reduction_percent;
  j["seconds"] = seconds;
  j["seed"] = seed;
  j["epochs"] = epochs;
  j["train_rows"] = train_rows;
  j["test_rows"] = test_rows;
  j["latent_shape"] = latent_shape;
  return j.dump(2) + "\n";
}

ExperimentResult ExperimentResult::from_json(std::string_view text) {
  const auto j = json::parse(text);
  ExperimentResult r;
  r.experiment = j.at("experiment").get<int>();
  r.name = j.at("name").get<std::string>();
  r.reconstruction_loss = j.at("reconstruction_loss").get<double>();
  r.accuracy_percent = j.at("accuracy_percent").get<double>();
  r.storage.original_bytes = j.at("original_bytes").get<std::uint64_t>();
  r.storage.encoded_bytes = j.at("encoded_bytes").get<std::uint64_t>();
  r.storage.original_mb = j.at("original_mb").get<double>();
  r.storage.encoded_mb = j.at("encoded_mb").get<double>();
  r.storage.reduction_percent = j.at("reduction_percent").get<double>();
  r.seconds = j.value("seconds", 0.0);
  r.seed = j.value("seed", std::uint64_t{0});
  r.epochs = j.value("epochs", std::size_t{0});
  r.train_rows = j.value("train_rows", std::size_t{0});
  r.test_rows = j.value("test_rows", std::size_t{0});
  r.latent_shape = j.value("latent_shape", Shape{});
  return r;
}

namespace {

ClassifierOutcome train_classifier_on(const har::WindowBatch& train, const har::WindowBatch* test,
                                      const ClassifierConfig& cfg) {
  auto model = models::build_classifier(cfg.seed);
  const Tensor x = classifier_input(train.data);
  const auto tc = classifier_train_config(cfg.seed, cfg.epochs, cfg.batch_size, cfg.learning_rate);
  ClassifierOutcome out;
  out.history = models::fit(model, x, har::one_hot(train.labels), tc, std::nullopt,
                            epoch_logger(cfg.log, "classifier", cfg.epochs));
  models::save_weights(model, cfg.weights_path);
  out.train_accuracy = models::evaluate_accuracy(model, x, train.labels);
  if (test) out.test_accuracy = models::evaluate_accuracy(model, classifier_input(test->data), test->labels);
  return out;
}

}  // namespace

ClassifierOutcome train_baseline_classifier(const ClassifierConfig& config) {
  const auto data = in_stage("load", [&] { return prepare_data(config.dataset_root, config.subsample, config.seed); });
  say(config.log, "[load] " + std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) +
                      " test windows");
  auto out = in_stage("train_classifier", [&] { return train_classifier_on(data.train, &data.test, config); });
  if (config.weights_path.has_parent_path())
    io::write_file_atomic(fs::path(config.weights_path).replace_extension(".history.csv"), history_csv(out.history));
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  const auto started = std::chrono::steady_clock::now();
  auto spec = in_stage("config", [&] { return experiment_spec(config.experiment); });
  if (config.epochs) spec.train.epochs = *config.epochs;
  if (config.batch_size) spec.train.batch_size = *config.batch_size;
  if (config.disable_clip) spec.train.optimizer.clip_value.reset();
  spec.train.seed = config.seed;
  const fs::path out = config.output_dir;
  in_stage("config", [&] {
    if (out.empty()) throw ContractError("output directory is required");
    fs::create_directories(out);
    return 0;
  });
  const std::string tag = "experiment " + std::to_string(spec.id);
  const Logger& log = config.log;
  AuditLog audit;

  const auto data = in_stage("load", [&] { return prepare_data(config.dataset_root, config.subsample, config.seed); });
  audit.consumed("normalize", "train.windows", data.train.data.shape());
  audit.consumed("normalize", "test.windows", data.test.data.shape());
  say(log, "[load] " + std::to_string(data.train.size()) + " train / " + std::to_string(data.test.size()) +
               " test windows");
  in_stage("load", [&] {
    io::write_file_atomic(out / "normalization.json", data.normalization.to_json());
    return 0;
  });

  const fs::path classifier_path = config.classifier_weights.value_or(out / "classifier.scwt");
  auto classifier = models::build_classifier(config.seed);
  in_stage("classifier", [&] {
    if (fs::exists(classifier_path)) {
      models::load_weights(classifier, classifier_path);
      say(log, "[classifier] loaded " + classifier_path.string());
    } else {
      say(log, "[classifier] no weights at " + classifier_path.string() + ", training");
      ClassifierConfig cc;
      cc.weights_path = classifier_path;
      cc.seed = config.seed;
      if (config.classifier_epochs) cc.epochs = *config.classifier_epochs;
      cc.log = log;
      audit.consumed("classifier", "train.windows", data.train.data.shape());
      audit.consumed("classifier", "train.labels", data.train.labels.size());
      train_classifier_on(data.train, nullptr, cc);
      models::load_weights(classifier, classifier_path);
    }
    return 0;
  });

  auto model = spec.build(config.seed);
  const Tensor x_train = har::reshape_for_model(data.train.data, spec.layout);
  const Tensor x_test = har::reshape_for_model(data.test.data, spec.layout);
  const auto history = in_stage("train", [&] {
    std::optional<models::Holdout> holdout;
    audit.consumed("train", "train.windows", x_train.shape());
    if (spec.train.validation == models::ValidationPolicy::fixed_holdout) {
      holdout = models::Holdout{x_test, x_test};
      audit.consumed("train", "test.windows (validation)", x_test.shape());
    }
    try {
      return models::fit(model, x_train, x_train, spec.train, holdout,
                         epoch_logger(log, "train", spec.train.epochs));
    } catch (const models::TrainingDiverged& e) {
      throw StageError("train", tag + ": " + e.what());
    }
  });
  in_stage("train", [&] {
    models::save_weights(model, out / "autoencoder.scwt");
    io::write_file_atomic(out / "history.csv", history_csv(history));
    return 0;
  });

  const std::uint64_t fp = model.fingerprint();
  const auto storage = in_stage("store", [&] {
    audit.consumed("encode", "train.windows", x_train.shape());
    audit.consumed("encode", "test.windows", x_test.shape());
    const Tensor z_train = models::encode(model, x_train);
    const Tensor z_test = models::encode(model, x_test);
    codec::serialize_features(har::reshape_for_model(data.train.data, har::ModelLayout::flat1152), 0,
                              out / "original_train.encf", config.storage);
    codec::serialize_features(z_train, fp, out / "latent_train.encf", config.storage);
    codec::serialize_features(z_test, fp, out / "latent_test.encf", config.storage);
    return codec::make_storage_report(out / "original_train.encf", out / "latent_train.encf");
  });

  const Tensor reconstruction = in_stage("decode", [&] {
    const auto stored = codec::deserialize_features(out / "latent_test.encf");
    if (stored.fingerprint != fp) throw ContractError("latent file was produced by a different architecture");
    audit.consumed("decode", "latent.test", stored.shape());
    return har::from_model_layout(models::decode(model, stored.to_float()), spec.layout);
  });

  const double accuracy = in_stage("classify", [&] {
    audit.consumed("classify", "reconstruction.test", reconstruction.shape());
    audit.consumed("classify", "test.labels", data.test.labels.size());
    return models::evaluate_accuracy(classifier, classifier_input(reconstruction), data.test.labels);
  });

  ExperimentResult r;
  r.experiment = spec.id;
  r.name = spec.name;
  r.reconstruction_loss = history.epochs.back().val_loss.value_or(history.epochs.back().train_loss);
  r.accuracy_percent = 100.0 * accuracy;
  r.storage = storage;
  r.seed = config.seed;
  r.epochs = spec.train.epochs;
  r.train_rows = data.train.size();
  r.test_rows = data.test.size();
  r.latent_shape = model.latent_shape();
  r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  in_stage("report", [&] {
    io::write_file_atomic(out / "result.json", r.to_json());
    io::write_file_atomic(out / "audit.log", audit.text());
    emit_report({r}, ReportFormat::markdown, out / "report.md");
    emit_report({r}, ReportFormat::csv, out / "report.csv");
    return 0;
  });
  return r;
}

ReportFormat report_format_from_string(std::string_view s) {
  if (s == "md" || s == "markdown") return ReportFormat::markdown;
  if (s == "csv") return ReportFormat::csv;
  throw ContractError("unknown report format '" + std::string(s) + "' (expected md or csv)");
}

std::string format_fixed(double value, int decimals) {
  if (decimals < 0) throw ContractError("format_fixed: negative decimals");
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value < 0 ? "-inf" : "inf";
  char buf[512];
  const auto res = std::to_chars(buf, buf + sizeof buf, std::abs(value), std::chars_format::fixed);
  if (res.ec != std::errc()) throw ContractError("format_fixed: value out of range");
  std::string text(buf, res.ptr);
  const auto dot = text.find('.');
  std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
  std::string frac = dot == std::string::npos ? "" : text.substr(dot + 1);

  const auto cut = static_cast<std::size_t>(decimals);
  bool round_up = frac.size() > cut && frac[cut] >= '5';
  frac.resize(cut, '0');
  std::string digits = whole + frac;
  if (round_up) {
    std::size_t i = digits.size();
    while (i > 0) {
      --i;
      if (digits[i] == '9') {
        digits[i] = '0';
      } else {
        ++digits[i];
        round_up = false;
        break;
      }
    }
    if (round_up) digits.insert(digits.begin(), '1');
  }
  std::string out = digits.substr(0, digits.size() - cut);
  if (cut) out += "." + digits.substr(digits.size() - cut);
  const bool zero = std::all_of(digits.begin(), digits.end(), [](char c) { return c == '0'; });
  return (value < 0 && !zero) ? "-" + out : out;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string q = "\"";
  for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
  return q + "\"";
}

std::string published_note() {
  const auto checks = codec::check_published_reductions();
  std::string note;
  for (const auto& c : checks) {
    if (c.consistent) continue;
    const auto& row = codec::kPublishedRows[static_cast<std::size_t>(c.experiment - 1)];
    note += "- Published Exp. " + std::to_string(c.experiment) + " figures disagree: storing " +
            format_fixed(row.stored_mb, 3) + " MB against the " + format_fixed(codec::kPublishedBaselineMb, 2) +
            " MB baseline gives a reduction of " + format_fixed(c.computed_percent, 2) +
            "%, but the table prints " + format_fixed(c.printed_percent, 2) + "%.\n";
  }
  return note;
}

}  // namespace

std::string render_report(std::vector<ExperimentResult> results, ReportFormat format) {
  std::stable_sort(results.begin(), results.end(),
                   [](const auto& a, const auto& b) { return a.experiment < b.experiment; });
  std::ostringstream s;
  if (format == ReportFormat::csv) {
    s << "experiment,reconstruction_loss_mse,accuracy_percent,storage_reduction_percent\n";
    for (const auto& r : results)
      s << csv_field(r.name) << ',' << format_fixed(r.reconstruction_loss, 4) << ','
        << format_fixed(r.accuracy_percent, 2) << ',' << format_fixed(r.storage.reduction_percent, 2) << '\n';
    return s.str();
  }
  s << "| Experiment | Reconstruction Loss (MSE) | Accuracy (%) on the classifier | Storage Reduction (%) |\n";
  s << "|---|---:|---:|---:|\n";
  for (const auto& r : results)
    s << "| " << r.name << " | " << format_fixed(r.reconstruction_loss, 4) << " | "
      << format_fixed(r.accuracy_percent, 2) << " | " << format_fixed(r.storage.reduction_percent, 2) << " |\n";
  s << "\nStorage reduction is 100 x (1 - encoded / original) over the training-split files on disk "
       "(bytes / 1e6 = MB). Accuracy is measured on the reconstructed test split.\n";
  const std::string note = published_note();
  if (!note.empty()) s << "\nNotes on the published figures:\n\n" << note;
  return s.str();
}

void emit_report(const std::vector<ExperimentResult>& results, ReportFormat format, const fs::path& path) {
  io::write_file_atomic(path, render_report(results, format));
}

std::vector<ExperimentResult> collect_results(const std::vector<fs::path>& dirs) {
  std::vector<ExperimentResult> out;
  auto take = [&](const fs::path& file) { out.push_back(ExperimentResult::from_json(io::read_file(file))); };
  for (const auto& d : dirs) {
    if (fs::is_regular_file(d)) {
      take(d);
      continue;
    }
    if (!fs::is_directory(d)) throw ContractError("no such results directory: " + d.string());
    if (fs::exists(d / "result.json")) {
      take(d / "result.json");
      continue;
    }
    std::vector<fs::path> children;
    for (const auto& e : fs::directory_iterator(d))
      if (e.is_directory() && fs::exists(e.path() / "result.json")) children.push_back(e.path() / "result.json");
    std::sort(children.begin(), children.end());
    for (const auto& c : children) take(c);
  }
  if (out.empty()) throw ContractError("no result.json found");
  return out;
}

}  // namespace sc::pipeline
