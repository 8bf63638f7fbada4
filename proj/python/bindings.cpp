#include "fairtensor/errors.hpp"
#include "fairtensor/harness.hpp"

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <optional>
#include <string>
#include <tuple>
#include <vector>

namespace py = pybind11;
using namespace fairtensor;
using nlohmann::json;

namespace {

using DimsTuple = std::tuple<int, int, int>;
using EntryTuple = std::tuple<int, int, int, double>;

Dims to_dims(const DimsTuple& d) { return {std::get<0>(d), std::get<1>(d), std::get<2>(d)}; }
DimsTuple from_dims(const Dims& d) { return {d.users, d.curators, d.topics}; }

ObservationTensor make_tensor(const DimsTuple& dims, const std::vector<EntryTuple>& rows) {
  std::vector<Entry> entries;
  entries.reserve(rows.size());
  for (const auto& [i, j, k, v] : rows) entries.push_back({i, j, k, v});
  return ObservationTensor(to_dims(dims), std::move(entries));
}

std::vector<EntryTuple> tensor_entries(const ObservationTensor& t) {
  std::vector<EntryTuple> out;
  out.reserve(t.size());
  for (const Entry& e : t.entries()) out.emplace_back(e.i, e.j, e.k, e.value);
  return out;
}

py::dict oracle_dict(const OracleCheck& c) {
  py::dict d;
  d["name"] = c.name;
  d["passed"] = c.passed;
  d["measured"] = c.measured;
  d["threshold"] = c.threshold;
  d["detail"] = c.detail;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Native core of the fairtensor recommender library";

  auto base = py::register_exception<Error>(m, "FairtensorError", PyExc_RuntimeError);
  py::register_exception<ParseError>(m, "ParseError", base.ptr());
  py::register_exception<EmptyDatasetError>(m, "EmptyDatasetError", base.ptr());
  py::register_exception<SplitError>(m, "SplitError", base.ptr());
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<UndefinedMetricError>(m, "UndefinedMetricError", base.ptr());

  py::class_<ObservationTensor>(m, "ObservationTensor")
      .def(py::init(&make_tensor), py::arg("dims"), py::arg("entries"))
      .def_property_readonly("dims", [](const ObservationTensor& t) { return from_dims(t.dims()); })
      .def("entries", &tensor_entries)
      .def("__len__", &ObservationTensor::size)
      .def("sparsity", &ObservationTensor::sparsity)
      .def("contains", &ObservationTensor::contains)
      .def("count_value", &ObservationTensor::count_value);

  m.def(
      "synth_generate",
      [](const std::string& config_json) {
        const SynthDataset d = synth_generate(json::parse(config_json).get<SynthConfig>());
        return py::make_tuple(d.observations, d.groups.groups(), d.positives_group0, d.positives_group1);
      },
      py::arg("config_json"), "Returns (positives, curator_groups, positives_group0, positives_group1).");
  m.def(
      "calibrate_bias",
      [](const std::string& config_json, double target_ratio) {
        return calibrate_bias(json::parse(config_json).get<SynthConfig>(), target_ratio);
      },
      py::arg("config_json"), py::arg("target_ratio"));

  m.def("negative_sample", &negative_sample, py::arg("positives"), py::arg("probability"), py::arg("seed"));
  m.def(
      "split",
      [](const ObservationTensor& obs, double fraction, std::uint64_t seed) {
        SplitDataset s = split(obs, fraction, seed);
        return py::make_tuple(std::move(s.train), std::move(s.test));
      },
      py::arg("observations"), py::arg("train_fraction"), py::arg("seed"));

  py::class_<TrainedModel>(m, "TrainedModel")
      .def_property_readonly("kind", [](const TrainedModel& t) { return std::string(to_string(t.kind)); })
      .def_property_readonly("dims", [](const TrainedModel& t) { return from_dims(t.dims); })
      .def_readonly("loss_traces", &TrainedModel::loss_traces)
      .def_readonly("warnings", &TrainedModel::warnings)
      .def("predict", &predict, py::arg("i"), py::arg("j"), py::arg("k"))
      .def(
          "top_k",
          [](const TrainedModel& t, int user, int topic, int k, const std::vector<int>& exclude) {
            return top_k(t, user, topic, k, exclude);
          },
          py::arg("user"), py::arg("topic"), py::arg("k"), py::arg("exclude") = std::vector<int>{})
      .def("checkpoint_json", [](const TrainedModel& t) { return checkpoint_json(t).dump(); })
      .def_static(
          "from_checkpoint_json", [](const std::string& s) { return model_from_checkpoint(json::parse(s)); },
          py::arg("text"));

  m.def(
      "train_model",
      [](const std::string& kind, const ObservationTensor& train, std::optional<std::vector<int>> groups,
         const std::string& config_json) {
        const ModelKind k = parse_model_kind(kind);
        const TrainConfig cfg = json::parse(config_json).get<TrainConfig>();
        std::optional<SensitiveMap> sensitive;
        if (groups) sensitive.emplace(*groups);
        py::gil_scoped_release release;
        return train_model(k, train, sensitive ? &*sensitive : nullptr, cfg);
      },
      py::arg("kind"), py::arg("train"), py::arg("groups") = std::nullopt, py::arg("config_json") = "{}");

  m.def(
      "precision_at_k",
      [](const std::vector<std::vector<int>>& ranked, const std::vector<std::vector<int>>& positives, int k) {
        return precision_at_k(ranked, positives, k);
      },
      py::arg("ranked"), py::arg("positives"), py::arg("k"));
  m.def(
      "recall_at_k",
      [](const std::vector<std::vector<int>>& ranked, const std::vector<std::vector<int>>& positives, int k) {
        return recall_at_k(ranked, positives, k);
      },
      py::arg("ranked"), py::arg("positives"), py::arg("k"));
  m.def("f1_at_k", &f1_at_k, py::arg("precision"), py::arg("recall"));
  m.def(
      "mad", [](std::vector<double> g0, std::vector<double> g1) { return mad({std::move(g0), std::move(g1)}); },
      py::arg("group0"), py::arg("group1"));
  m.def(
      "ks",
      [](std::vector<double> g0, std::vector<double> g1, int intervals) {
        return ks({std::move(g0), std::move(g1)}, intervals);
      },
      py::arg("group0"), py::arg("group1"), py::arg("intervals") = 50);

  m.def("run_oracles", [] {
    std::vector<OracleCheck> checks;
    {
      py::gil_scoped_release release;
      checks = run_oracles();
    }
    py::list out;
    for (const OracleCheck& c : checks) out.append(oracle_dict(c));
    return out;
  });

  m.def(
      "run_experiment",
      [](const std::string& config_json) {
        const ExperimentConfig cfg = json::parse(config_json).get<ExperimentConfig>();
        MetricsReport report;
        {
          py::gil_scoped_release release;
          report = run_experiment(cfg);
        }
        return py::make_tuple(report.to_csv(), report.to_json().dump());
      },
      py::arg("config_json"), "Returns (report_csv, report_json).");
}
