// Python extension: exposes the forecasting pipeline (synthesis, dataset
// preparation, training, evaluation, checkpoints) plus the spectral and
// metric primitives. Config arguments accept either a dict or a JSON
// string; absent keys keep the library defaults.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cmath>
#include <cstring>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "ftx/config.hpp"
#include "ftx/data.hpp"
#include "ftx/errors.hpp"
#include "ftx/metrics.hpp"
#include "ftx/model.hpp"
#include "ftx/spectral.hpp"
#include "ftx/tensor.hpp"
#include "ftx/training.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

json as_json(const py::object& obj) {
  if (obj.is_none()) return json::object();
  if (py::isinstance<py::str>(obj)) {
    return json::parse(obj.cast<std::string>());
  }
  const py::object dumps = py::module_::import("json").attr("dumps");
  return json::parse(dumps(obj).cast<std::string>());
}

py::object to_py(const json& j) {
  const py::object loads = py::module_::import("json").attr("loads");
  return loads(py::str(j.dump()));
}

py::array_t<double> matrix_array(const ftx::Matrix& m) {
  py::array_t<double> a({m.rows, m.cols});
  std::memcpy(a.mutable_data(), m.v.data(), m.v.size() * sizeof(double));
  return a;
}

py::array_t<double> vector_array(const std::vector<double>& v) {
  py::array_t<double> a(v.size());
  std::memcpy(a.mutable_data(), v.data(), v.size() * sizeof(double));
  return a;
}

ftx::Tensor tensor_2d(const py::array_t<double>& a, const char* name) {
  const auto buf = a.request();
  if (buf.ndim != 2) {
    throw ftx::ShapeError(std::string(name) + ": expected a 2-D array");
  }
  const auto rows = static_cast<std::size_t>(buf.shape[0]);
  const auto cols = static_cast<std::size_t>(buf.shape[1]);
  std::vector<double> v(rows * cols);
  const auto* src = static_cast<const double*>(buf.ptr);
  const auto rs = static_cast<std::size_t>(buf.strides[0] / sizeof(double));
  const auto cs = static_cast<std::size_t>(buf.strides[1] / sizeof(double));
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t j = 0; j < cols; ++j) v[i * cols + j] = src[i * rs + j * cs];
  }
  return ftx::Tensor::from_data({rows, cols}, std::move(v));
}

py::dict metrics_dict(const ftx::eval::Metrics& m) {
  py::dict d;
  d["r2"] = m.r2_defined ? py::cast(m.r2) : py::none();
  d["mse"] = m.mse;
  d["rmse"] = m.rmse;
  d["mae"] = m.mae;
  d["n"] = m.n;
  d["r2_defined"] = m.r2_defined;
  return d;
}

py::dict report_dict(const ftx::eval::EvalReport& r) {
  py::dict d = metrics_dict(r.metrics);
  d["n_test"] = r.n_test;
  d["label"] = r.label;
  d["seed"] = r.seed;
  d["config_hash"] = r.config_hash;
  d["freq_branch"] = r.freq_branch;
  d["robust"] = r.robust;
  d["p"] = r.p;
  d["lambda"] = r.lambda;
  return d;
}

// Dataset handle: prepared windows plus the geometry the model must match.
struct PyDataset {
  ftx::data::Dataset ds;
  std::size_t lookback = 0;
  std::size_t horizon = 1;
  std::size_t rejected_lines = 0;
};

PyDataset dataset_from_synth(const py::object& spec, std::size_t lookback,
                             std::size_t horizon, double train_frac) {
  const ftx::data::SynthSpec s =
      ftx::data::synth_spec_from_json(as_json(spec));
  PyDataset out;
  out.ds = ftx::data::prepare_dataset(ftx::data::synth_generate(s), lookback,
                                      horizon, train_frac);
  out.lookback = lookback;
  out.horizon = horizon;
  return out;
}

PyDataset dataset_from_csv(const py::object& manifest) {
  const ftx::data::DatasetManifest m =
      ftx::data::manifest_from_json(as_json(manifest));
  ftx::data::SchemaSpec schema;
  schema.timestamp_col = m.timestamp_col;
  schema.endo_cols = m.endo_cols;
  schema.exo_cols = m.exo_cols;
  const ftx::data::RawSeries raw = ftx::data::ingest_csv(m.csv_path, schema);
  PyDataset out;
  out.ds = ftx::data::prepare_dataset(raw, m.lookback, m.horizon,
                                      m.train_frac);
  out.lookback = m.lookback;
  out.horizon = m.horizon;
  out.rejected_lines = raw.rejected_lines.size();
  return out;
}

struct PyModel {
  std::unique_ptr<ftx::FTimeXerModel> model;

  PyModel(const py::object& config, std::uint64_t seed) {
    const ftx::ModelConfig cfg = ftx::model_config_from_json(as_json(config));
    cfg.validate();
    model = std::make_unique<ftx::FTimeXerModel>(cfg, seed);
  }
  explicit PyModel(ftx::FTimeXerModel&& m)
      : model(std::make_unique<ftx::FTimeXerModel>(std::move(m))) {}

  py::dict fit(const PyDataset& data, const py::object& training,
               const std::string& log_path) {
    const ftx::TrainingConfig tc =
        ftx::training_config_from_json(as_json(training));
    ftx::training::FitResult res;
    {
      py::gil_scoped_release release;
      res = ftx::training::fit(*model, data.ds.train, tc, log_path);
    }
    py::list log;
    for (const auto& e : res.log) {
      py::dict row;
      row["epoch"] = e.epoch;
      row["l_pred"] = e.l_pred;
      row["l_cons"] = e.l_cons;
      row["total"] = e.total;
      row["val_mse"] = e.val_mse;
      row["wall_ms"] = e.wall_ms;
      log.append(row);
    }
    py::dict d;
    d["epochs"] = res.log.size();
    d["best_epoch"] = res.best_epoch;
    d["best_val_mse"] = res.best_val_mse;
    d["steps"] = res.steps;
    d["early_stopped"] = res.early_stopped;
    d["log"] = log;
    return d;
  }

  py::dict evaluate(const PyDataset& data, bool on_train) {
    ftx::eval::EvalReport r;
    {
      py::gil_scoped_release release;
      r = ftx::eval::evaluate(*model, data.ds, on_train);
    }
    return report_dict(r);
  }

  py::dict evaluate_corrupted(const PyDataset& data, double missing_frac,
                              std::size_t shift, std::uint64_t seed) {
    ftx::eval::CorruptionSpec spec;
    spec.missing_frac = missing_frac;
    spec.shift = shift;
    spec.seed = seed;
    ftx::eval::Metrics m;
    {
      py::gil_scoped_release release;
      m = ftx::eval::evaluate_corrupted(*model, data.ds, spec);
    }
    return metrics_dict(m);
  }

  py::list robustness(const PyDataset& data,
                      const std::vector<double>& missing_levels,
                      const std::vector<std::size_t>& shifts,
                      std::uint64_t seed) {
    std::vector<ftx::eval::RobustnessPoint> pts;
    {
      py::gil_scoped_release release;
      pts = ftx::eval::robustness_eval(*model, data.ds, missing_levels,
                                       shifts, seed);
    }
    py::list out;
    for (const auto& p : pts) {
      py::dict d = metrics_dict(p.metrics);
      d["missing_frac"] = p.missing_frac;
      d["shift"] = p.shift;
      out.append(d);
    }
    return out;
  }

  py::dict predictions(const PyDataset& data, bool on_train) {
    const auto& windows = on_train ? data.ds.train : data.ds.test;
    ftx::eval::SeriesPair sp;
    {
      py::gil_scoped_release release;
      sp = ftx::eval::predict_denormalized(*model, windows,
                                           data.ds.normalizer);
    }
    const std::size_t n = sp.dims == 0 ? 0 : sp.truth.size() / sp.dims;
    py::array_t<double> truth({n, sp.dims});
    py::array_t<double> pred({n, sp.dims});
    std::memcpy(truth.mutable_data(), sp.truth.data(),
                sp.truth.size() * sizeof(double));
    std::memcpy(pred.mutable_data(), sp.pred.data(),
                sp.pred.size() * sizeof(double));
    py::array_t<std::int64_t> origins(sp.origins.size());
    for (std::size_t i = 0; i < sp.origins.size(); ++i) {
      origins.mutable_data()[i] = static_cast<std::int64_t>(sp.origins[i]);
    }
    py::dict d;
    d["origins"] = origins;
    d["truth"] = truth;
    d["pred"] = pred;
    return d;
  }

  // Single normalized-space window; returns the (d_endo,) prediction.
  py::array_t<double> forward(const py::array_t<double>& x_endo,
                              const py::object& x_exo) {
    const ftx::ModelConfig& c = model->config();
    ftx::Tensor xe = tensor_2d(x_endo, "x_endo");
    ftx::Tensor xx;
    if (!x_exo.is_none()) {
      xx = tensor_2d(x_exo.cast<py::array_t<double>>(), "x_exo");
    } else if (c.d_exo > 0) {
      throw ftx::ShapeError("x_exo: required when the model has exogenous "
                            "inputs");
    } else {
      xx = ftx::Tensor::from_data({c.lookback, 0}, {});
    }
    ftx::NoGradGuard ng;
    ftx::Tensor y = model->forward(xe, xx);
    std::vector<double> v(y.data().begin(), y.data().end());
    return vector_array(v);
  }

  py::object config() const { return to_py(ftx::to_json(model->config())); }
  std::uint64_t seed() const { return model->init_seed(); }
  void save(const std::string& path) const {
    ftx::save_checkpoint(*model, path);
  }
};

py::dict synth_series(const py::object& spec) {
  const ftx::data::SynthSpec s =
      ftx::data::synth_spec_from_json(as_json(spec));
  ftx::data::SynthTruth truth;
  const ftx::data::RawSeries raw = ftx::data::synth_generate(s, &truth);
  py::array_t<std::int64_t> ts(raw.timestamps.size());
  std::memcpy(ts.mutable_data(), raw.timestamps.data(),
              raw.timestamps.size() * sizeof(std::int64_t));
  py::dict t;
  t["periods"] = truth.periods;
  t["amplitudes"] = truth.amplitudes;
  t["noise_sigma"] = truth.noise_sigma;
  t["driver_scale"] = truth.driver_scale;
  py::dict d;
  d["timestamps"] = ts;
  d["endo"] = matrix_array(raw.endo);
  d["exo"] = matrix_array(raw.exo);
  d["endo_names"] = raw.endo_names;
  d["exo_names"] = raw.exo_names;
  d["truth"] = t;
  return d;
}

void synth_csv(const py::object& spec, const std::string& path) {
  const ftx::data::SynthSpec s =
      ftx::data::synth_spec_from_json(as_json(spec));
  ftx::data::write_csv(ftx::data::synth_generate(s), path);
}

std::pair<py::array_t<double>, py::array_t<double>> dft_arrays(
    const std::vector<double>& x, bool direct) {
  const ftx::spectral::ComplexSpectrum s =
      direct ? ftx::spectral::dft_direct(x) : ftx::spectral::dft_forward(x);
  return {vector_array(s.re), vector_array(s.im)};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "patch-attention forecaster with a frequency branch and "
            "robustness training";

  py::register_exception<ftx::ConfigError>(m, "ConfigError",
                                           PyExc_ValueError);
  py::register_exception<ftx::DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ftx::ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ftx::DivergedError>(m, "DivergedError",
                                             PyExc_RuntimeError);

  m.def("default_config", [] {
    json j{{"model", ftx::to_json(ftx::ModelConfig{})},
           {"training", ftx::to_json(ftx::TrainingConfig{})},
           {"synth", ftx::data::to_json(ftx::data::SynthSpec{})},
           {"data", ftx::data::to_json(ftx::data::DatasetManifest{})}};
    return to_py(j);
  }, "Full default configuration as nested dicts.");

  m.def("synth", &synth_series, py::arg("spec") = py::none(),
        "Generate the synthetic benchmark series; returns arrays plus the "
        "ground-truth component description.");
  m.def("synth_csv", &synth_csv, py::arg("spec"), py::arg("path"),
        "Generate the synthetic series and write it as a CSV file.");

  m.def("dft", [](const std::vector<double>& x) { return dft_arrays(x, false); },
        py::arg("x"), "Forward DFT; returns (real, imaginary) arrays.");
  m.def("dft_direct",
        [](const std::vector<double>& x) { return dft_arrays(x, true); },
        py::arg("x"), "Reference direct-summation DFT.");
  m.def("amplitude_phase",
        [](const std::vector<double>& re, const std::vector<double>& im) {
          ftx::spectral::ComplexSpectrum s{re, im};
          std::vector<double> amp, phase;
          ftx::spectral::amplitude_phase(s, amp, phase);
          return std::make_pair(vector_array(amp), vector_array(phase));
        },
        py::arg("re"), py::arg("im"));
  m.def("reconstruct",
        [](const std::vector<double>& amp, const std::vector<double>& phase) {
          return vector_array(ftx::spectral::reconstruct(amp, phase));
        },
        py::arg("amplitude"), py::arg("phase"),
        "Inverse transform from an amplitude/phase spectrum.");

  m.def("compute_metrics",
        [](const std::vector<double>& y, const std::vector<double>& y_hat) {
          return metrics_dict(ftx::eval::compute_metrics(y, y_hat));
        },
        py::arg("y"), py::arg("y_hat"),
        "Forecast quality metrics; r2 is None when the truth has no "
        "variance.");

  py::class_<PyDataset>(m, "Dataset")
      .def_static("from_synth", &dataset_from_synth,
                  py::arg("spec") = py::none(), py::arg("lookback") = 24,
                  py::arg("horizon") = 1, py::arg("train_frac") = 0.8,
                  "Prepared windows over a generated series.")
      .def_static("from_csv", &dataset_from_csv, py::arg("manifest"),
                  "Prepared windows over an ingested CSV; the manifest names "
                  "the file, the timestamp column, and the variable columns.")
      .def_property_readonly(
          "n_train", [](const PyDataset& d) { return d.ds.train.size(); })
      .def_property_readonly(
          "n_test", [](const PyDataset& d) { return d.ds.test.size(); })
      .def_property_readonly("d_endo",
                             [](const PyDataset& d) { return d.ds.d_endo; })
      .def_property_readonly("d_exo",
                             [](const PyDataset& d) { return d.ds.d_exo; })
      .def_readonly("lookback", &PyDataset::lookback)
      .def_readonly("horizon", &PyDataset::horizon)
      .def_readonly("rejected_lines", &PyDataset::rejected_lines);

  py::class_<PyModel>(m, "Model")
      .def(py::init<const py::object&, std::uint64_t>(), py::arg("config"),
           py::arg("seed") = 1)
      .def_static("load",
                  [](const std::string& path) {
                    return PyModel(ftx::load_checkpoint(path));
                  },
                  py::arg("path"), "Restore a model from a checkpoint file.")
      .def("fit", &PyModel::fit, py::arg("dataset"),
           py::arg("training") = py::none(), py::arg("log_path") = "",
           "Train in place on the dataset's training windows.")
      .def("evaluate", &PyModel::evaluate, py::arg("dataset"),
           py::arg("on_train") = false)
      .def("evaluate_corrupted", &PyModel::evaluate_corrupted,
           py::arg("dataset"), py::arg("missing_frac"), py::arg("shift") = 0,
           py::arg("seed") = 1,
           "Metrics under exogenous corruption of the test windows.")
      .def("robustness", &PyModel::robustness, py::arg("dataset"),
           py::arg("missing_levels"), py::arg("shifts"), py::arg("seed") = 1)
      .def("predictions", &PyModel::predictions, py::arg("dataset"),
           py::arg("on_train") = false,
           "Denormalized truth/prediction pairs with window origins.")
      .def("forward", &PyModel::forward, py::arg("x_endo"),
           py::arg("x_exo") = py::none(),
           "One normalized-space window through the model.")
      .def("save", &PyModel::save, py::arg("path"))
      .def_property_readonly("config", &PyModel::config)
      .def_property_readonly("seed", &PyModel::seed);
}
