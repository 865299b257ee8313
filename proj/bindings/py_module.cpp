// Python bindings for the main operations: dataset synthesis, AU map
// construction, training, CAM extraction and evaluation.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "ferau/cam.hpp"
#include "ferau/data_synth.hpp"
#include "ferau/errors.hpp"
#include "ferau/metrics.hpp"
#include "ferau/model.hpp"
#include "ferau/trainer.hpp"

namespace py = pybind11;
using namespace ferau;

namespace {

py::array_t<double> map_to_array(const std::vector<double>& values, int h,
                                 int w) {
  py::array_t<double> out({h, w});
  std::copy(values.begin(), values.end(), out.mutable_data());
  return out;
}

LandmarkSet landmarks_from_array(const py::array_t<double>& arr) {
  auto buf = arr.unchecked<2>();
  if (buf.shape(0) != kNumLandmarks || buf.shape(1) != 2)
    throw DimensionError("landmarks must be a (68, 2) array");
  LandmarkSet lm;
  for (int i = 0; i < kNumLandmarks; ++i)
    lm.points[i] = {buf(i, 0), buf(i, 1)};
  lm.validate();
  return lm;
}

Tensor image_from_array(const py::array_t<double>& arr) {
  auto buf = arr.unchecked<2>();
  const int h = static_cast<int>(buf.shape(0));
  const int w = static_cast<int>(buf.shape(1));
  std::vector<double> data(static_cast<size_t>(h) * w);
  for (int r = 0; r < h; ++r)
    for (int c = 0; c < w; ++c) data[static_cast<size_t>(r) * w + c] = buf(r, c);
  return Tensor::from_data({1, h, w}, std::move(data), false);
}

}  // namespace

PYBIND11_MODULE(_ferau, m) {
  m.doc() = "action-unit-guided interpretable expression classification";

  py::register_exception<Error>(m, "FerauError");

  py::class_<SynthConfig>(m, "SynthConfig")
      .def(py::init<>())
      .def_readwrite("samples_per_class", &SynthConfig::samples_per_class)
      .def_readwrite("image_h", &SynthConfig::image_h)
      .def_readwrite("image_w", &SynthConfig::image_w)
      .def_readwrite("jitter", &SynthConfig::jitter)
      .def_readwrite("noise", &SynthConfig::noise)
      .def_readwrite("flip_prob", &SynthConfig::flip_prob)
      .def_readwrite("seed", &SynthConfig::seed)
      .def_static("class_names", &SynthConfig::class_names);

  py::class_<Sample>(m, "Sample")
      .def_property_readonly("label", [](const Sample& s) { return s.label; })
      .def_property_readonly("image",
                             [](const Sample& s) {
                               return map_to_array(s.image.values, s.image.h,
                                                   s.image.w);
                             })
      .def_property_readonly("landmarks", [](const Sample& s) {
        py::array_t<double> out({kNumLandmarks, 2});
        auto buf = out.mutable_unchecked<2>();
        for (int i = 0; i < kNumLandmarks; ++i) {
          buf(i, 0) = s.landmarks.points[i].x;
          buf(i, 1) = s.landmarks.points[i].y;
        }
        return out;
      });

  py::class_<Dataset>(m, "Dataset")
      .def_property_readonly("class_names",
                             [](const Dataset& d) { return d.class_names; })
      .def("__len__", [](const Dataset& d) { return d.samples.size(); })
      .def("__getitem__",
           [](const Dataset& d, size_t i) {
             if (i >= d.samples.size()) throw py::index_error();
             return d.samples[i];
           });

  py::class_<SplitDatasets>(m, "SplitDatasets")
      .def_readonly("train", &SplitDatasets::train)
      .def_readonly("val", &SplitDatasets::val)
      .def_readonly("test", &SplitDatasets::test);

  m.def("generate", &generate, py::arg("config"),
        "Deterministic synthetic dataset with exact landmarks.");
  m.def("save_dataset", &save_dataset, py::arg("data"), py::arg("path"));
  m.def("load_dataset", &load_dataset, py::arg("path"));

  m.def(
      "build_au_map",
      [](const py::array_t<double>& landmarks, int label, double sigma, int h,
         int w) {
        AUMap map = build_au_map(landmarks_from_array(landmarks), label,
                                 default_codebook(), default_anchor_table(),
                                 sigma > 0.0 ? sigma : default_sigma(h, w), h,
                                 w);
        return map_to_array(map.values, map.h, map.w);
      },
      py::arg("landmarks"), py::arg("label"), py::arg("sigma") = 0.0,
      py::arg("h") = 64, py::arg("w") = 64,
      "Spatial AU map for a (landmarks, label) pair using the default "
      "codebook and anchor table.");

  py::class_<ModelState>(m, "Model")
      .def_static(
          "create",
          [](int classes, std::uint64_t seed) {
            return init_model(ModelConfig::default_config(classes, seed));
          },
          py::arg("classes") = 6, py::arg("seed") = 0)
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save",
           [](const ModelState& s, const std::string& path) {
             save_checkpoint(s, path);
           })
      .def_property_readonly(
          "attention_layer",
          [](const ModelState& s) { return s.config.attention_layer; })
      .def("logits",
           [](ModelState& s, const py::array_t<double>& image) {
             ForwardResult fw = forward(s, image_from_array(image));
             py::array_t<double> out(fw.logits.size());
             std::copy(fw.logits.data().begin(), fw.logits.data().end(),
                       out.mutable_data());
             return out;
           })
      .def("attention",
           [](ModelState& s, const py::array_t<double>& image, int layer) {
             ForwardResult fw = forward(s, image_from_array(image));
             Tensor t = attention_at_layer(
                 fw.features, layer > 0 ? layer : s.config.attention_layer);
             return map_to_array(t.data(), t.shape()[0], t.shape()[1]);
           },
           py::arg("image"), py::arg("layer") = 0)
      .def("cam",
           [](ModelState& s, const py::array_t<double>& image, int label,
              const std::string& method, int layer) {
             CamMap map = extract_cam(
                 cam_method_from_name(method), s, image_from_array(image),
                 label, layer > 0 ? layer : s.config.attention_layer);
             return map_to_array(map.values, map.h, map.w);
           },
           py::arg("image"), py::arg("label"), py::arg("method") = "gradcam",
           py::arg("layer") = 0);

  m.def(
      "fit",
      [](ModelState& state, const Dataset& train, const Dataset& val,
         double lambda, double lr, int epochs, int batch_size,
         std::uint64_t seed) {
        TrainConfig cfg;
        cfg.lambda = lambda;
        cfg.lr = lr;
        cfg.epochs = epochs;
        cfg.batch_size = batch_size;
        cfg.seed = seed;
        cfg.attention_layer = state.config.attention_layer;
        TrainLog log = fit(state, train, val, cfg, default_codebook(),
                           default_anchor_table());
        py::list out;
        for (const EpochRecord& r : log.epochs) {
          py::dict d;
          d["epoch"] = r.epoch;
          d["ce"] = r.mean_ce;
          d["align"] = r.mean_align;
          d["r_train"] = r.mean_r_train;
          d["r_val"] = r.mean_r_val;
          d["acc_val"] = r.acc_val;
          d["seconds"] = r.seconds;
          out.append(d);
        }
        return out;
      },
      py::arg("model"), py::arg("train"), py::arg("val"),
      py::arg("lambda_") = 1.0, py::arg("lr") = 0.01, py::arg("epochs") = 1,
      py::arg("batch_size") = 16, py::arg("seed") = 0);

  m.def(
      "evaluate",
      [](ModelState& state, const Dataset& dataset,
         const std::vector<std::string>& methods, int layer) {
        std::vector<CamMethod> ms;
        for (const std::string& name : methods)
          ms.push_back(cam_method_from_name(name));
        MetricsReport r =
            evaluate(state, dataset, ms,
                     layer > 0 ? layer : state.config.attention_layer,
                     AuEvalConfig::defaults(), false);
        py::dict d;
        d["cl"] = r.cl;
        d["att_cos"] = r.att_cos;
        py::dict cams;
        for (const auto& [name, value] : r.cam_cos) cams[name.c_str()] = value;
        d["cam_cos"] = cams;
        d["n_samples"] = r.n_samples;
        return d;
      },
      py::arg("model"), py::arg("dataset"),
      py::arg("methods") = std::vector<std::string>{"gradcam"},
      py::arg("layer") = 0);

  m.def("grad_check_sum", [](const py::array_t<double>& x) {
    // Smoke hook: finite-difference check of a simple composite op chain.
    auto buf = x.unchecked<1>();
    std::vector<double> data(buf.shape(0));
    for (py::ssize_t i = 0; i < buf.shape(0); ++i) data[i] = buf(i);
    Tensor t = Tensor::from_data({static_cast<int>(data.size())}, data, false);
    return grad_check([](const Tensor& v) { return sum(relu(v)); }, t, 1e-5);
  });
}
