// Command-line front end: ingest, train-classifier, run, report.
#include <CLI11.hpp>

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "sensorcomp/pipeline.hpp"

namespace fs = std::filesystem;
using namespace sc;

namespace {

constexpr const char* kRootEnv = "UCI_HAR_ROOT";

fs::path dataset_root(const std::string& flag) {
  if (!flag.empty()) return flag;
  if (const char* env = std::getenv(kRootEnv); env && *env) return env;
  throw pipeline::StageError("config", "dataset root not given: pass --root or set " + std::string(kRootEnv));
}

pipeline::Logger stderr_logger(bool quiet) {
  if (quiet) return {};
  return [](std::string_view line) { std::cerr << line << '\n'; };
}

int ingest(const std::string& root_flag, const std::string& out) {
  const fs::path root = dataset_root(root_flag);
  std::map<std::string, har::WindowBatch> splits;
  for (auto split : {har::Split::train, har::Split::test}) {
    try {
      splits.emplace(std::string(har::to_string(split)), har::load_windows(root, split));
    } catch (const std::exception& e) {
      throw pipeline::StageError("ingest", e.what());
    }
  }
  const auto& train = splits.at("train");
  const auto norm = har::normalize_fit(train);
  for (const auto& [name, batch] : splits) {
    std::array<std::size_t, har::kClasses> counts{};
    for (int l : batch.labels) ++counts[static_cast<std::size_t>(l - 1)];
    std::cout << name << ": " << batch.size() << " windows x " << har::kWindowLength << " x " << har::kChannels
              << "; per class";
    for (auto c : counts) std::cout << ' ' << c;
    std::cout << '\n';
  }
  std::cout << "channel ranges (train):\n";
  for (std::size_t c = 0; c < har::kChannels; ++c)
    std::cout << "  " << har::kChannelNames[c] << " [" << norm.min[c] << ", " << norm.max[c] << "]\n";
  if (!out.empty()) {
    fs::create_directories(out);
    std::ofstream(fs::path(out) / "normalization.json") << norm.to_json() << '\n';
    std::cout << "wrote " << (fs::path(out) / "normalization.json").string() << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Autoencoder compression of UCI HAR inertial windows"};
  app.require_subcommand(1);

  std::string root;
  auto* ingest_cmd = app.add_subcommand("ingest", "Validate the dataset and print a summary");
  std::string ingest_out;
  ingest_cmd->add_option("--root", root, "Dataset root (falls back to $UCI_HAR_ROOT)");
  ingest_cmd->add_option("--out", ingest_out, "Directory for normalization.json");

  auto* clf_cmd = app.add_subcommand("train-classifier", "Train the baseline convolutional-LSTM classifier");
  pipeline::ClassifierConfig clf;
  std::string clf_out = "classifier.scwt";
  std::size_t clf_subsample = 0;
  bool clf_quiet = false;
  clf_cmd->add_option("--root", root, "Dataset root (falls back to $UCI_HAR_ROOT)");
  clf_cmd->add_option("--out", clf_out, "Weight file to write")->capture_default_str();
  clf_cmd->add_option("--seed", clf.seed)->capture_default_str();
  clf_cmd->add_option("--epochs", clf.epochs)->capture_default_str()->check(CLI::PositiveNumber);
  clf_cmd->add_option("--batch", clf.batch_size)->capture_default_str()->check(CLI::PositiveNumber);
  clf_cmd->add_option("--lr", clf.learning_rate)->capture_default_str();
  clf_cmd->add_option("--subsample", clf_subsample, "Windows kept per split")->check(CLI::PositiveNumber);
  clf_cmd->add_flag("--quiet", clf_quiet);

  auto* run_cmd = app.add_subcommand("run", "Run one experiment end to end");
  pipeline::ExperimentConfig run;
  std::string run_out, classifier_path, storage = "f32";
  std::size_t run_epochs = 0, run_batch = 0, run_subsample = 0, clf_epochs = 0;
  bool run_quiet = false;
  run_cmd->add_option("--exp", run.experiment, "Experiment id")->required()->check(CLI::Range(1, 4));
  run_cmd->add_option("--root", root, "Dataset root (falls back to $UCI_HAR_ROOT)");
  run_cmd->add_option("--out", run_out, "Output directory")->required();
  run_cmd->add_option("--seed", run.seed)->capture_default_str();
  run_cmd->add_option("--epochs", run_epochs, "Override autoencoder epochs")->check(CLI::PositiveNumber);
  run_cmd->add_option("--batch", run_batch, "Override autoencoder batch size")->check(CLI::PositiveNumber);
  run_cmd->add_option("--subsample", run_subsample, "Windows kept per split")->check(CLI::PositiveNumber);
  run_cmd->add_option("--classifier", classifier_path, "Classifier weights; trained there if missing");
  run_cmd->add_option("--classifier-epochs", clf_epochs, "Epochs when training the classifier on demand")
      ->check(CLI::PositiveNumber);
  run_cmd->add_flag("--no-clip", run.disable_clip, "Disable gradient clipping");
  run_cmd->add_option("--storage", storage, "Stored dtype")->check(CLI::IsMember({"f32", "f64"}))->capture_default_str();
  run_cmd->add_flag("--quiet", run_quiet);

  auto* report_cmd = app.add_subcommand("report", "Combine run results into a table");
  std::string report_out, report_format;
  std::vector<std::string> report_from{"runs"};
  report_cmd->add_option("--out", report_out, "Report file")->required();
  report_cmd->add_option("--format", report_format, "md or csv")->required()->check(CLI::IsMember({"md", "csv"}));
  report_cmd->add_option("--from", report_from, "Run directories or their parents")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest_cmd) return ingest(root, ingest_out);

    if (*clf_cmd) {
      clf.dataset_root = dataset_root(root);
      clf.weights_path = clf_out;
      if (clf_subsample) clf.subsample = clf_subsample;
      clf.log = stderr_logger(clf_quiet);
      const auto o = pipeline::train_baseline_classifier(clf);
      std::cout << "train accuracy " << pipeline::format_fixed(100 * o.train_accuracy, 2) << "%, test accuracy "
                << pipeline::format_fixed(100 * o.test_accuracy, 2) << "%\nwrote " << clf_out << '\n';
      return 0;
    }

    if (*run_cmd) {
      run.dataset_root = dataset_root(root);
      run.output_dir = run_out;
      if (run_epochs) run.epochs = run_epochs;
      if (run_batch) run.batch_size = run_batch;
      if (run_subsample) run.subsample = run_subsample;
      if (!classifier_path.empty()) run.classifier_weights = classifier_path;
      if (clf_epochs) run.classifier_epochs = clf_epochs;
      run.storage = storage == "f64" ? codec::DType::f64 : codec::DType::f32;
      run.log = stderr_logger(run_quiet);
      const auto r = pipeline::run_experiment(run);
      std::cout << pipeline::render_report({r}, pipeline::ReportFormat::markdown);
      return 0;
    }

    if (*report_cmd) {
      std::vector<fs::path> dirs(report_from.begin(), report_from.end());
      std::vector<pipeline::ExperimentResult> results;
      try {
        results = pipeline::collect_results(dirs);
      } catch (const std::exception& e) {
        throw pipeline::StageError("report", e.what());
      }
      pipeline::emit_report(results, pipeline::report_format_from_string(report_format), report_out);
      std::cout << "wrote " << report_out << " (" << results.size() << " rows)\n";
      return 0;
    }
  } catch (const pipeline::StageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: [internal] " << e.what() << '\n';
    return 1;
  }
  return 0;
}
