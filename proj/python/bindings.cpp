#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "semparse/checkpoint.hpp"
#include "semparse/error.hpp"
#include "semparse/evaluation.hpp"
#include "semparse/workflow.hpp"

namespace py = pybind11;
using namespace semparse;

namespace {

struct PyParser {
  Parser parser;
  nlohmann::json config;
  std::uint64_t seed = 0;
};

py::dict prediction_dict(const Prediction& p) {
  py::dict d;
  d["logical_form"] = p.logical_form;
  d["well_formed"] = p.tree.has_value();
  d["truncated"] = p.truncated;
  d["encoder_tokens"] = p.encoder_tokens;
  d["decoder_tokens"] = p.decoder_tokens;
  d["unresolved"] = p.unresolved;
  std::vector<std::vector<double>> rows;
  for (const auto& r : p.attention.rows) rows.emplace_back(r.data(), r.data() + r.size());
  d["attention"] = rows;
  return d;
}

py::dict eval_dict(const EvalResult& r) {
  py::dict d;
  d["correct"] = r.correct;
  d["total"] = r.total;
  d["accuracy"] = r.accuracy;
  d["f1"] = r.f1;
  py::list verdicts;
  for (const Verdict& v : r.verdicts) {
    py::dict row;
    row["line"] = v.id;
    row["gold"] = v.gold;
    row["prediction"] = v.prediction;
    row["exact"] = v.exact;
    row["f1"] = v.f1;
    verdicts.append(row);
  }
  d["verdicts"] = verdicts;
  return d;
}

std::vector<RawExample> to_examples(const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<RawExample> out;
  for (std::size_t k = 0; k < pairs.size(); ++k) {
    out.push_back({pairs[k].first, pairs[k].second, static_cast<int>(k + 1)});
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_semparse, m) {
  m.doc() = "Neural semantic parser core";

  auto base = py::register_exception<Error>(m, "SemparseError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

  m.def("normalize_lf", [](const std::string& s) { return normalize_lf(s); });
  m.def(
      "exact_match",
      [](const std::string& prediction, const std::string& gold, const std::string& format) {
        return exact_match(prediction, gold, lf_format_from_string(format));
      },
      py::arg("prediction"), py::arg("gold"), py::arg("format") = "bracket");
  m.def(
      "balanced_f1",
      [](const std::string& prediction, const std::string& gold, const std::string& format) {
        const LfFormat f = lf_format_from_string(format);
        return balanced_f1(parse_lf(prediction, f), parse_lf(gold, f));
      },
      py::arg("prediction"), py::arg("gold"), py::arg("format") = "bracket");
  m.def("load_dataset", [](const std::string& path) {
    std::vector<std::pair<std::string, std::string>> out;
    for (const RawExample& e : load_dataset(path)) out.emplace_back(e.utterance, e.logical_form);
    return out;
  });

  py::class_<PyParser>(m, "Parser")
      .def_static(
          "load",
          [](const std::string& path) {
            Checkpoint c = load_checkpoint(path);
            return PyParser{std::move(c.parser), std::move(c.config), c.seed};
          },
          py::arg("path"))
      .def(
          "save",
          [](const PyParser& p, const std::string& path) {
            save_checkpoint(path, p.parser, p.config, p.seed);
          },
          py::arg("path"))
      .def(
          "predict",
          [](const PyParser& p, const std::string& utterance, int beam) {
            py::gil_scoped_release release;
            Prediction pred = p.parser.predict(utterance, beam);
            py::gil_scoped_acquire acquire;
            return prediction_dict(pred);
          },
          py::arg("utterance"), py::arg("beam") = 1)
      .def(
          "evaluate",
          [](const PyParser& p, const std::vector<std::pair<std::string, std::string>>& pairs,
             int beam, int threads) {
            const std::vector<RawExample> data = to_examples(pairs);
            EvalResult r;
            {
              py::gil_scoped_release release;
              r = evaluate(p.parser, data, beam, threads);
            }
            return eval_dict(r);
          },
          py::arg("pairs"), py::arg("beam") = 1, py::arg("threads") = 0)
      .def_property_readonly("decoder",
                             [](const PyParser& p) { return std::string(to_string(p.parser.model().config().decoder)); })
      .def_property_readonly("attention", [](const PyParser& p) { return p.parser.model().config().attention; })
      .def_property_readonly("config_json", [](const PyParser& p) { return p.config.dump(); })
      .def_property_readonly("checkpoint_bytes", [](const PyParser& p) {
        return py::bytes(serialize_checkpoint(p.parser, p.config, p.seed));
      });

  m.def(
      "train",
      [](const std::string& config_json) {
        const TrainConfig config = TrainConfig::from_json(nlohmann::json::parse(config_json));
        TrainingOutcome run;
        {
          py::gil_scoped_release release;
          run = run_training(config);
        }
        PyParser p{std::move(run.parser), config.to_json(), config.seed};
        return py::make_tuple(std::move(p), run.report.to_json(false).dump());
      },
      py::arg("config_json"),
      "Trains from a JSON config; returns (Parser, report JSON).");
}
