#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "sensorcomp/binary_io.hpp"
#include "sensorcomp/pipeline.hpp"
#include "synthetic_har.hpp"
#include "temp_dir.hpp"

using namespace sc;
using namespace sc::pipeline;
using sc::testing::TempDir;
namespace fs = std::filesystem;

namespace {

ExperimentResult row(int id, double loss, double acc, double red) {
  ExperimentResult r;
  r.experiment = id;
  r.name = experiment_spec(id).name;
  r.reconstruction_loss = loss;
  r.accuracy_percent = acc;
  r.storage.reduction_percent = red;
  return r;
}

std::vector<std::string> lines_of(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') cur += '"', ++i;
      else if (c == '"') quoted = false;
      else cur += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur), cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

// Shared synthetic dataset and one tiny Exp-1 run, built once per process.
class PipelineRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir;
    sc::testing::write_synthetic_har(dir_->path() / "har", 96, 64, 3);
    ExperimentConfig cfg;
    cfg.experiment = 1;
    cfg.dataset_root = dir_->path() / "har";
    cfg.output_dir = dir_->path() / "run";
    cfg.seed = 11;
    cfg.epochs = 2;
    cfg.classifier_epochs = 1;
    result_ = new ExperimentResult(run_experiment(cfg));
  }
  static void TearDownTestSuite() {
    delete result_;
    delete dir_;
  }
  static fs::path root() { return dir_->path() / "har"; }
  static fs::path out() { return dir_->path() / "run"; }

  static TempDir* dir_;
  static ExperimentResult* result_;
};

TempDir* PipelineRun::dir_ = nullptr;
ExperimentResult* PipelineRun::result_ = nullptr;

}  // namespace

TEST(FormatFixed, RoundsShortestDecimalHalfAwayFromZero) {
  EXPECT_EQ(format_fixed(0.00239, 4), "0.0024");
  EXPECT_EQ(format_fixed(0.00235, 4), "0.0024");
  EXPECT_EQ(format_fixed(0.00234999, 4), "0.0023");
  EXPECT_EQ(format_fixed(2.675, 2), "2.68");  // binary value is below 2.675
  EXPECT_EQ(format_fixed(99.995, 2), "100.00");
  EXPECT_EQ(format_fixed(-0.125, 2), "-0.13");
  EXPECT_EQ(format_fixed(-0.0001, 2), "0.00");
  EXPECT_EQ(format_fixed(97.2828, 2), "97.28");
  EXPECT_EQ(format_fixed(42.0, 0), "42");
  EXPECT_EQ(format_fixed(-611.4, 2), "-611.40");
  EXPECT_EQ(format_fixed(1e-9, 4), "0.0000");
}

TEST(Report, MarkdownHasHeaderAndOneRowPerExperiment) {
  const std::vector<ExperimentResult> rs{row(3, 0.0221, 52.01, 49.99), row(1, 0.0038, 24.0, 97.28),
                                         row(4, 0.0593, 46.12, 72.35), row(2, 0.0024, 95.28, 11.10)};
  const auto md = render_report(rs, ReportFormat::markdown);
  const auto ls = lines_of(md);
  ASSERT_GE(ls.size(), 6u);
  EXPECT_EQ(ls[0], "| Experiment | Reconstruction Loss (MSE) | Accuracy (%) on the classifier | Storage Reduction (%) |");
  for (int i = 1; i <= 4; ++i) EXPECT_NE(ls[1 + i].find("Exp. " + std::to_string(i) + ":"), std::string::npos);
  EXPECT_NE(ls[2].find("| 0.0038 | 24.00 | 97.28 |"), std::string::npos);
  std::size_t table_rows = 0;
  for (const auto& l : ls) table_rows += l.rfind("| Exp. ", 0) == 0;
  EXPECT_EQ(table_rows, 4u);
}

TEST(Report, FootnoteFlagsInconsistentPublishedRows) {
  const auto md = render_report({row(1, 0.01, 50, 97.0)}, ReportFormat::markdown);
  EXPECT_NE(md.find("97.28"), std::string::npos);
  EXPECT_NE(md.find("90.18"), std::string::npos);
  EXPECT_NE(md.find("11.10"), std::string::npos);
  EXPECT_EQ(md.find("49.99"), std::string::npos);
}

TEST(Report, CsvParsesBackToRenderedValues) {
  const std::vector<ExperimentResult> rs{row(2, 0.00239, 95.281, 11.104), row(1, 0.0038, 24.0, -3.5)};
  const auto ls = lines_of(render_report(rs, ReportFormat::csv));
  ASSERT_EQ(ls.size(), 3u);
  EXPECT_EQ(ls[0], "experiment,reconstruction_loss_mse,accuracy_percent,storage_reduction_percent");
  const auto a = split_csv(ls[1]);
  ASSERT_EQ(a.size(), 4u);
  EXPECT_EQ(a[0], experiment_spec(1).name);
  EXPECT_EQ(std::stod(a[1]), 0.0038);
  EXPECT_EQ(std::stod(a[3]), -3.5);
  const auto b = split_csv(ls[2]);
  EXPECT_EQ(b[1], "0.0024");
  EXPECT_EQ(b[2], "95.28");
  EXPECT_EQ(b[3], "11.10");
}

TEST(Report, FormatNames) {
  EXPECT_EQ(report_format_from_string("md"), ReportFormat::markdown);
  EXPECT_EQ(report_format_from_string("csv"), ReportFormat::csv);
  EXPECT_THROW(report_format_from_string("xlsx"), ContractError);
}

TEST(ExperimentSpecs, PublishedTrainingSettings) {
  const auto e1 = experiment_spec(1), e2 = experiment_spec(2), e3 = experiment_spec(3), e4 = experiment_spec(4);
  EXPECT_EQ(e1.train.batch_size, 128u);
  EXPECT_EQ(e1.train.epochs, 20u);
  EXPECT_EQ(e2.train.batch_size, 16u);
  EXPECT_EQ(e2.train.epochs, 150u);
  EXPECT_EQ(e3.train.optimizer.learning_rate, 1e-4);
  ASSERT_TRUE(e3.train.optimizer.clip_value);
  EXPECT_EQ(*e3.train.optimizer.clip_value, 0.5);
  EXPECT_EQ(e3.train.epochs, 300u);
  EXPECT_EQ(e4.train.optimizer.decay, 1e-6);
  EXPECT_EQ(e4.train.epochs, 100u);
  EXPECT_EQ(e4.train.validation, models::ValidationPolicy::split);
  EXPECT_EQ(e4.train.train_fraction, 0.8);
  for (const auto& e : {e1, e2, e3}) EXPECT_EQ(e.train.validation, models::ValidationPolicy::fixed_holdout);
  EXPECT_THROW(experiment_spec(5), ContractError);
}

TEST_F(PipelineRun, WritesAllArtifacts) {
  for (const char* f : {"result.json", "report.md", "report.csv", "audit.log", "history.csv", "autoencoder.scwt",
                        "classifier.scwt", "normalization.json", "original_train.encf", "latent_train.encf",
                        "latent_test.encf"})
    EXPECT_TRUE(fs::exists(out() / f)) << f;
  EXPECT_EQ(result_->train_rows, 96u);
  EXPECT_EQ(result_->test_rows, 64u);
  EXPECT_EQ(result_->latent_shape, (Shape{32}));
  EXPECT_GE(result_->accuracy_percent, 0.0);
  EXPECT_LE(result_->accuracy_percent, 100.0);
}

TEST_F(PipelineRun, ReductionMatchesFilesOnDisk) {
  const double expected = codec::compute_reduction(static_cast<double>(fs::file_size(out() / "original_train.encf")),
                                                   static_cast<double>(fs::file_size(out() / "latent_train.encf")));
  EXPECT_DOUBLE_EQ(result_->storage.reduction_percent, expected);
  EXPECT_EQ(result_->storage.original_bytes, 96u * 1152u * 4u + 24u);
  EXPECT_EQ(result_->storage.encoded_bytes, 96u * 32u * 4u + 24u);
}

TEST_F(PipelineRun, TestLabelsOnlyReachClassification) {
  const auto audit = io::read_file(out() / "audit.log");
  std::size_t uses = 0;
  for (const auto& l : lines_of(audit)) {
    if (l.find("test.labels") == std::string::npos) continue;
    ++uses;
    EXPECT_EQ(l.rfind("classify\t", 0), 0u) << l;
  }
  EXPECT_EQ(uses, 1u);
}

TEST_F(PipelineRun, ResultJsonRoundTrips) {
  const auto back = collect_results({out()});
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].to_json(), result_->to_json());
  EXPECT_EQ(io::read_file(out() / "report.csv"), render_report({*result_}, ReportFormat::csv));
}

TEST_F(PipelineRun, LatentsCarryModelFingerprint) {
  const auto z = codec::deserialize_features(out() / "latent_test.encf");
  EXPECT_EQ(z.fingerprint, models::build_mlp_ae(0).fingerprint());
  EXPECT_EQ(z.shape(), (Shape{64, 32}));
}

TEST_F(PipelineRun, ReusesSavedClassifier) {
  ExperimentConfig cfg;
  cfg.experiment = 4;
  cfg.dataset_root = root();
  cfg.output_dir = dir_->path() / "run4";
  cfg.seed = 11;
  cfg.epochs = 1;
  cfg.subsample = 40;
  cfg.classifier_weights = out() / "classifier.scwt";
  const auto before = fs::last_write_time(out() / "classifier.scwt");
  const auto r = run_experiment(cfg);
  EXPECT_EQ(fs::last_write_time(out() / "classifier.scwt"), before);
  EXPECT_FALSE(fs::exists(dir_->path() / "run4" / "classifier.scwt"));
  EXPECT_EQ(r.latent_shape, (Shape{100}));
  EXPECT_EQ(r.train_rows, 40u);

  const auto both = collect_results({dir_->path()});
  ASSERT_EQ(both.size(), 2u);
  const auto csv = lines_of(render_report(both, ReportFormat::csv));
  EXPECT_EQ(csv.size(), 3u);
}

TEST_F(PipelineRun, ErrorsAreTaggedWithStage) {
  auto stage_of = [](const ExperimentConfig& cfg) {
    try {
      run_experiment(cfg);
    } catch (const StageError& e) {
      EXPECT_EQ(std::string(e.what()).rfind("[" + e.stage() + "] ", 0), 0u);
      return e.stage();
    }
    return std::string("none");
  };
  ExperimentConfig cfg;
  cfg.dataset_root = root();
  cfg.output_dir = dir_->path() / "err";
  cfg.epochs = 1;
  cfg.classifier_epochs = 1;

  auto bad = cfg;
  bad.experiment = 7;
  EXPECT_EQ(stage_of(bad), "config");
  bad = cfg;
  bad.dataset_root = dir_->path() / "missing";
  EXPECT_EQ(stage_of(bad), "load");
  bad = cfg;
  std::ofstream(dir_->path() / "junk.scwt") << "not weights";
  bad.classifier_weights = dir_->path() / "junk.scwt";
  EXPECT_EQ(stage_of(bad), "classifier");
  bad = cfg;
  bad.classifier_weights = out() / "autoencoder.scwt";  // wrong architecture
  EXPECT_EQ(stage_of(bad), "classifier");
}

TEST(CollectResults, MissingDirectoryIsError) {
  TempDir dir;
  EXPECT_THROW(collect_results({dir / "nope"}), ContractError);
  EXPECT_THROW(collect_results({dir.path()}), ContractError);
}
