#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "sensorcomp/binary_io.hpp"
#include "sensorcomp/codec_store.hpp"
#include "sensorcomp/har_dataset.hpp"
#include "sensorcomp/models.hpp"
#include "sensorcomp/pipeline.hpp"

namespace py = pybind11;
using namespace sc;

namespace {

using F32Array = py::array_t<float, py::array::c_style | py::array::forcecast>;
using F64Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

template <typename T>
BasicTensor<T> to_tensor(const py::array_t<T, py::array::c_style | py::array::forcecast>& a) {
  Shape s(a.shape(), a.shape() + a.ndim());
  return BasicTensor<T>(std::move(s), std::vector<T>(a.data(), a.data() + a.size()));
}

template <typename T>
py::array_t<T> to_numpy(const BasicTensor<T>& t) {
  py::array_t<T> out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
  std::copy(t.data().begin(), t.data().end(), out.mutable_data());
  return out;
}

codec::DType dtype_from(const std::string& s) {
  if (s == "f32" || s == "float32") return codec::DType::f32;
  if (s == "f64" || s == "float64") return codec::DType::f64;
  throw ContractError("unknown dtype '" + s + "' (expected f32 or f64)");
}

py::tuple feature_tuple(const codec::FeatureFile& f) {
  py::object data = std::visit([](const auto& t) -> py::object { return to_numpy(t); }, f.data);
  return py::make_tuple(data, f.fingerprint, std::string(codec::to_string(f.dtype)));
}

// Encoding through a float64 array keeps f64 values intact; f32 arrays go
// through the float path so storage widening is explicit.
py::bytes encode_any(const py::array& a, std::uint64_t fingerprint, const std::string& dtype) {
  if (a.dtype().is(py::dtype::of<double>())) {
    const auto t = to_tensor<double>(a.cast<F64Array>());
    if (dtype_from(dtype) == codec::DType::f64) return py::bytes(codec::encode_features(t, fingerprint));
    return py::bytes(codec::encode_features(t.cast<float>(), fingerprint));
  }
  return py::bytes(codec::encode_features(to_tensor<float>(a.cast<F32Array>()), fingerprint, dtype_from(dtype)));
}

models::ModelGraph build(const std::string& kind, std::uint64_t seed) {
  if (kind == "mlp") return models::build_mlp_ae(seed);
  if (kind == "conv") return models::build_conv_ae(seed);
  if (kind == "lstm") return models::build_lstm_ae(seed);
  if (kind == "convlstm") return models::build_convlstm_ae(seed);
  if (kind == "classifier") return models::build_classifier(seed);
  throw ContractError("unknown model '" + kind + "' (expected mlp, conv, lstm, convlstm or classifier)");
}

py::list history_rows(const models::TrainingHistory& h) {
  py::list rows;
  for (const auto& e : h.epochs) {
    py::dict d;
    d["epoch"] = e.epoch;
    d["train_loss"] = e.train_loss;
    d["val_loss"] = e.val_loss;
    d["train_accuracy"] = e.train_accuracy;
    d["val_accuracy"] = e.val_accuracy;
    d["max_applied_gradient"] = e.max_applied_gradient;
    rows.append(d);
  }
  return rows;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sensor-window autoencoders, feature container and experiment pipeline";

  py::register_exception<io::FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<har::DatasetError>(m, "DatasetError", PyExc_RuntimeError);
  py::register_exception<models::TrainingDiverged>(m, "TrainingDiverged", PyExc_ArithmeticError);
  py::register_exception<pipeline::StageError>(m, "StageError", PyExc_RuntimeError);

  m.def("header_bytes", &codec::header_bytes, py::arg("rank"));
  m.def("encode_features", &encode_any, py::arg("array"), py::arg("fingerprint") = 0, py::arg("dtype") = "f32");
  m.def(
      "decode_features", [](const py::bytes& b) { return feature_tuple(codec::decode_features(std::string(b))); },
      py::arg("data"), "Returns (array, fingerprint, dtype).");
  m.def(
      "serialize_features",
      [](const py::array& a, const std::filesystem::path& path, std::uint64_t fingerprint, const std::string& dtype) {
        const std::string bytes = encode_any(a, fingerprint, dtype);
        io::write_file_atomic(path, bytes);
        return bytes.size();
      },
      py::arg("array"), py::arg("path"), py::arg("fingerprint") = 0, py::arg("dtype") = "f32");
  m.def(
      "deserialize_features", [](const std::filesystem::path& p) { return feature_tuple(codec::deserialize_features(p)); },
      py::arg("path"));
  m.def("measure_size_mb", &codec::measure_size_mb, py::arg("path"));
  m.def("compute_reduction", &codec::compute_reduction, py::arg("original"), py::arg("encoded"));
  m.def("format_fixed", &pipeline::format_fixed, py::arg("value"), py::arg("decimals"));

  m.def(
      "load_windows",
      [](const std::filesystem::path& root, const std::string& split) {
        if (split != "train" && split != "test") throw ContractError("split must be 'train' or 'test'");
        const auto b = har::load_windows(root, split == "train" ? har::Split::train : har::Split::test);
        return py::make_tuple(to_numpy(b.data), py::array_t<int>(b.labels.size(), b.labels.data()));
      },
      py::arg("root"), py::arg("split"), "Raw windows (N, 128, 9) and labels 1..6.");

  py::class_<models::ModelGraph>(m, "Model")
      .def(py::init(&build), py::arg("kind"), py::arg("seed") = 0)
      .def_property_readonly("name", &models::ModelGraph::name)
      .def_property_readonly("input_shape", &models::ModelGraph::input_shape)
      .def_property_readonly("output_shape", &models::ModelGraph::output_shape)
      .def_property_readonly("latent_shape", &models::ModelGraph::latent_shape)
      .def_property_readonly("fingerprint", &models::ModelGraph::fingerprint)
      .def_property_readonly("parameter_count", &models::ModelGraph::parameter_count)
      .def("describe", &models::ModelGraph::describe)
      .def("predict", [](const models::ModelGraph& g, const F32Array& x) { return to_numpy(models::predict(g, to_tensor(x))); })
      .def("encode", [](const models::ModelGraph& g, const F32Array& x) { return to_numpy(models::encode(g, to_tensor(x))); })
      .def("decode", [](const models::ModelGraph& g, const F32Array& z) { return to_numpy(models::decode(g, to_tensor(z))); })
      .def("save_weights", [](const models::ModelGraph& g, const std::filesystem::path& p) { models::save_weights(g, p); })
      .def("load_weights", [](models::ModelGraph& g, const std::filesystem::path& p) { models::load_weights(g, p); })
      .def(
          "fit",
          [](models::ModelGraph& g, const F32Array& x, const F32Array& y, std::size_t epochs, std::size_t batch_size,
             double learning_rate, std::optional<double> clip_value, const std::string& loss, std::uint64_t seed) {
            models::TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.batch_size = batch_size;
            cfg.optimizer.learning_rate = learning_rate;
            cfg.optimizer.clip_value = clip_value;
            if (loss == "mse") cfg.loss = models::LossKind::mse;
            else if (loss == "categorical_cross_entropy") cfg.loss = models::LossKind::categorical_cross_entropy;
            else throw ContractError("unknown loss '" + loss + "'");
            cfg.seed = seed;
            const auto xt = to_tensor(x), yt = to_tensor(y);
            models::TrainingHistory h;
            {
              py::gil_scoped_release release;
              h = models::fit(g, xt, yt, cfg);
            }
            return history_rows(h);
          },
          py::arg("x"), py::arg("y"), py::arg("epochs") = 1, py::arg("batch_size") = 32,
          py::arg("learning_rate") = 1e-3, py::arg("clip_value") = std::nullopt, py::arg("loss") = "mse",
          py::arg("seed") = 0);

  m.def(
      "run_experiment",
      [](int experiment, const std::filesystem::path& root, const std::filesystem::path& out, std::uint64_t seed,
         std::optional<std::size_t> epochs, std::optional<std::size_t> subsample,
         std::optional<std::filesystem::path> classifier_weights, std::optional<std::size_t> classifier_epochs,
         bool disable_clip, const std::string& storage) {
        pipeline::ExperimentConfig cfg;
        cfg.experiment = experiment;
        cfg.dataset_root = root;
        cfg.output_dir = out;
        cfg.seed = seed;
        cfg.epochs = epochs;
        cfg.subsample = subsample;
        cfg.classifier_weights = classifier_weights;
        cfg.classifier_epochs = classifier_epochs;
        cfg.disable_clip = disable_clip;
        cfg.storage = dtype_from(storage);
        py::gil_scoped_release release;
        return pipeline::run_experiment(cfg).to_json();
      },
      py::arg("experiment"), py::arg("root"), py::arg("out"), py::arg("seed") = 0, py::arg("epochs") = std::nullopt,
      py::arg("subsample") = std::nullopt, py::arg("classifier_weights") = std::nullopt,
      py::arg("classifier_epochs") = std::nullopt, py::arg("disable_clip") = false, py::arg("storage") = "f32",
      "Runs one experiment and returns its result as a JSON string.");
  m.def(
      "render_report",
      [](const std::vector<std::filesystem::path>& dirs, const std::string& format) {
        return pipeline::render_report(pipeline::collect_results(dirs), pipeline::report_format_from_string(format));
      },
      py::arg("dirs"), py::arg("format") = "md");
}
