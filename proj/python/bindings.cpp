#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "zsda/config.hpp"
#include "zsda/errors.hpp"
#include "zsda/harness.hpp"
#include "zsda/inference.hpp"
#include "zsda/model_io.hpp"
#include "zsda/objective.hpp"
#include "zsda/report.hpp"

namespace py = pybind11;
using namespace zsda;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw ShapeError("expected a 2-D array");
  const auto r = static_cast<std::size_t>(a.shape(0));
  const auto c = static_cast<std::size_t>(a.shape(1));
  return Matrix(r, c, std::vector<double>(a.data(), a.data() + r * c));
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(v.size());
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

py::dict report_dict(const MetricsReport& r) {
  py::list records;
  for (const auto& t : r.records) {
    records.append(py::make_tuple(t.target, to_string(t.method), t.trial, t.value));
  }
  py::dict d;
  d["metric"] = to_string(r.metric);
  d["records"] = records;
  d["csv"] = r.to_csv();
  d["summary_json"] = r.summary_json();
  return d;
}

// Probability table (classification) or predicted means (regression).
Array prediction_array(const std::vector<PredictiveDistribution>& preds, TaskSpec task) {
  if (!task.is_classification()) {
    std::vector<double> means;
    for (const auto& p : preds) means.push_back(p.mean);
    return to_array(means);
  }
  Matrix m(preds.size(), task.classes);
  for (std::size_t i = 0; i < preds.size(); ++i)
    for (std::size_t c = 0; c < task.classes; ++c) m(i, c) = preds[i].probabilities[c];
  return to_array(m);
}

}  // namespace

PYBIND11_MODULE(_zsda, m) {
  m.doc() = "Zero-shot domain adaptation with set-encoded latent domain vectors.";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
  py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
  py::register_exception<SchemaError>(m, "SchemaError", PyExc_ValueError);

  py::class_<DomainDataset>(m, "Dataset")
      .def_property_readonly("dim", [](const DomainDataset& d) { return d.dim; })
      .def_property_readonly("task", [](const DomainDataset& d) { return to_string(d.task.kind); })
      .def_property_readonly("classes", [](const DomainDataset& d) { return d.task.classes; })
      .def_property_readonly("ids", &DomainDataset::ids)
      .def_property_readonly("total_points", &DomainDataset::total_points)
      .def("features", [](const DomainDataset& d, int id) {
        const Domain* dom = d.find(id);
        if (!dom) throw py::key_error("no domain " + std::to_string(id));
        return to_array(dom->x);
      })
      .def("targets", [](const DomainDataset& d, int id) {
        const Domain* dom = d.find(id);
        if (!dom) throw py::key_error("no domain " + std::to_string(id));
        return to_array(dom->y);
      })
      .def("save", [](const DomainDataset& d, const std::filesystem::path& p) { save_text(d, p); })
      .def("__len__", &DomainDataset::domain_count);

  m.def("load_dataset", &load_text, py::arg("path"));
  m.def("rotated_gaussians",
        [](std::vector<double> angles, std::size_t n, std::size_t classes, double noise,
           std::uint64_t seed, std::optional<double> spacing) {
          return gen_rotated_gaussians({std::move(angles), n, classes, noise, seed, spacing});
        },
        py::arg("angles"), py::arg("n_per_domain") = 200, py::arg("classes") = 3,
        py::arg("noise") = 0.25, py::arg("seed") = 0, py::arg("anchor_spacing") = py::none());
  m.def("slope_regression",
        [](std::vector<double> slopes, std::size_t n, double noise, std::size_t dim, double shift,
           std::uint64_t seed) {
          return gen_slope_regression({std::move(slopes), n, noise, dim, shift, seed});
        },
        py::arg("slopes"), py::arg("n_per_domain") = 100, py::arg("noise") = 0.1, py::arg("dim") = 2,
        py::arg("shift") = 0.0, py::arg("seed") = 0);

  m.def("kl_standard_normal",
        [](std::vector<double> mu, std::vector<double> logvar) {
          return kl_standard_normal(LatentPosterior{-1, std::move(mu), std::move(logvar)});
        },
        py::arg("mu"), py::arg("logvar"));

  py::class_<ExperimentConfig>(m, "Config")
      .def_static("from_json",
                  [](const std::string& text, const std::vector<std::string>& overrides) {
                    return parse_config(text, overrides);
                  },
                  py::arg("text"), py::arg("overrides") = std::vector<std::string>{})
      .def_static("load", &load_config, py::arg("path"),
                  py::arg("overrides") = std::vector<std::string>{})
      .def("dataset", [](const ExperimentConfig& c) { return materialize(c.dataset); });

  py::class_<TrainedModel>(m, "Model")
      .def_property_readonly("latent_dim", [](const TrainedModel& t) { return t.encoder.latent_dim(); })
      .def_property_readonly("input_dim", [](const TrainedModel& t) { return t.encoder.input_dim(); })
      .def_property_readonly("source_ids", [](const TrainedModel& t) { return t.source_ids; })
      .def_property_readonly("best_epoch", [](const TrainedModel& t) { return t.trace.best_epoch; })
      .def("trace_csv", [](const TrainedModel& t) { return t.trace.to_csv(); })
      .def("encode",
           [](const TrainedModel& t, const Array& set) {
             const auto post = encode(t.encoder, to_matrix(set));
             return py::make_tuple(to_array(post.mu), to_array(post.logvar));
           },
           py::arg("set"))
      .def("predict",
           [](const TrainedModel& t, const Array& unseen_set, const Array& queries, std::size_t samples,
              std::uint64_t seed) {
             InferenceConfig cfg{samples, seed, PredictionMode::stochastic};
             const auto preds = predict_domain(t.encoder, t.predictor, to_matrix(unseen_set),
                                               to_matrix(queries), cfg);
             return prediction_array(preds, t.predictor.task);
           },
           py::arg("unseen_set"), py::arg("queries"), py::arg("samples") = 10, py::arg("seed") = 0)
      .def("save", [](const TrainedModel& t, const std::filesystem::path& p) { save_model(t, p); });

  m.def("load_model", &load_model, py::arg("path"));

  m.def("train",
        [](const DomainDataset& ds, const ExperimentConfig& cfg, std::vector<int> held_out) {
          py::gil_scoped_release release;
          const auto& spec = cfg.experiment;
          const auto sp = trial_split(ds, spec, held_out, spec.seed);
          return fit_proposed(sp, spec, spec.seed);
        },
        py::arg("dataset"), py::arg("config"), py::arg("held_out") = std::vector<int>{});

  m.def("run_loo",
        [](const DomainDataset& ds, const ExperimentConfig& cfg) {
          MetricsReport r;
          {
            py::gil_scoped_release release;
            r = run_loo(ds, cfg.experiment);
          }
          return report_dict(r);
        },
        py::arg("dataset"), py::arg("config"));

  m.def("latents_csv",
        [](const TrainedModel& t, const DomainDataset& ds) {
          return latents_csv(export_posteriors(t.encoder, ds.domains));
        },
        py::arg("model"), py::arg("dataset"));
}
