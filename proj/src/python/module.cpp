#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mflal/checkpoint.hpp"
#include "mflal/config.hpp"
#include "mflal/controller.hpp"
#include "mflal/errors.hpp"
#include "mflal/generation.hpp"
#include "mflal/report.hpp"

namespace py = pybind11;
using namespace mflal;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
  const py::buffer_info info = a.request();
  std::vector<double> v(static_cast<const double*>(info.ptr), static_cast<const double*>(info.ptr) + info.size);
  const auto n = v.size();
  if (info.ndim == 1) return Tensor::from({1, n}, std::move(v));
  if (info.ndim != 2) throw std::invalid_argument("expected a 1-D or 2-D array");
  return Tensor::from({static_cast<std::size_t>(info.shape[0]), static_cast<std::size_t>(info.shape[1])}, std::move(v));
}

Array to_array(const Tensor& t) {
  Array out(static_cast<py::ssize_t>(t.size()));
  std::copy(t.values().begin(), t.values().end(), out.mutable_data());
  return out;
}

py::dict record_dict(const QueryRecord& r) {
  py::dict d;
  d["sequence"] = r.sequence;
  d["fidelity"] = r.fidelity;
  d["score"] = r.score;
  d["cost"] = r.cost;
  d["step"] = r.step;
  d["phase"] = r.phase;
  d["ok"] = r.ok;
  d["error"] = r.error;
  return d;
}

py::dict summary_dict(const FinalSummary& s) {
  py::dict d;
  d["count"] = s.count;
  d["mean"] = s.mean;
  d["sd"] = s.sd;
  d["top"] = s.top;
  d["similarity"] = s.similarity;
  d["flagged"] = s.flagged;
  return d;
}

RunConfig config_from(const std::optional<std::string>& json, std::optional<std::uint64_t> seed,
                      std::optional<std::string> mode, std::optional<double> budget) {
  return with_overrides(json ? parse_config(*json) : default_config(), seed, std::move(mode), budget);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Multi-fidelity latent-space active learning";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
  py::register_exception<CheckpointError>(m, "CheckpointError", PyExc_IOError);

  m.def("resolve_config", [](std::optional<std::string> json, std::optional<std::uint64_t> seed,
                             std::optional<std::string> mode, std::optional<double> budget) {
    return config_to_json(config_from(json, seed, std::move(mode), budget));
  }, py::arg("json") = py::none(), py::arg("seed") = py::none(), py::arg("mode") = py::none(),
     py::arg("budget") = py::none(), "Canonical JSON of a config after defaults and overrides.");

  m.def("mixture_log_density", [](const Array& z, const Array& mu, const Array& sigma) {
    return to_array(mixture_log_density(to_tensor(z), {to_tensor(mu), to_tensor(sigma)}));
  }, py::arg("z"), py::arg("mu"), py::arg("sigma"));

  m.def("diversity_penalty", [](const Array& z) { return diversity_penalty(to_tensor(z)).item(); }, py::arg("z"));

  m.def("spearman", &spearman, py::arg("a"), py::arg("b"));

  py::class_<OracleSuite>(m, "Oracles")
      .def(py::init([](std::optional<std::string> json, std::optional<std::uint64_t> seed) {
             return make_oracles(config_from(json, seed, std::nullopt, std::nullopt));
           }), py::arg("json") = py::none(), py::arg("seed") = py::none())
      .def_property_readonly("fidelities", &OracleSuite::fidelities)
      .def("true_score", [](const OracleSuite& o, const std::string& seq) {
        return o.true_score(parse_sequence(seq, o.alphabet()));
      }, py::arg("sequence"))
      .def("evaluate", [](OracleSuite& o, const std::string& seq, std::size_t k) {
        const OracleResult r = o.evaluate(parse_sequence(seq, o.alphabet()), k, 0, "manual");
        return r.score;
      }, py::arg("sequence"), py::arg("fidelity"))
      .def_property_readonly("spent", [](const OracleSuite& o) { return o.ledger().total(); })
      .def("random_sequence", [](const OracleSuite& o, std::uint64_t seed) {
        Rng rng(seed);
        return to_string(random_sequence(o.landscape().seq_len(), o.alphabet(), rng), o.alphabet());
      }, py::arg("seed"));

  py::class_<ActiveLearner>(m, "Run")
      .def(py::init([](std::optional<std::string> json, std::optional<std::uint64_t> seed,
                       std::optional<std::string> mode, std::optional<double> budget) {
             return ActiveLearner(config_from(json, seed, std::move(mode), budget));
           }), py::arg("json") = py::none(), py::arg("seed") = py::none(), py::arg("mode") = py::none(),
           py::arg("budget") = py::none())
      .def_static("load", &load_checkpoint, py::arg("path"))
      .def("save", [](const ActiveLearner& l, const std::string& path) { save_checkpoint(l, path); }, py::arg("path"))
      .def("run", [](ActiveLearner& l, std::optional<std::int64_t> stop_after) {
        RunOptions options;
        options.stop_after_step = stop_after;
        py::gil_scoped_release release;
        return l.run(options);
      }, py::arg("stop_after") = py::none(), "Runs to completion or to the given step; True when finished.")
      .def_property_readonly("step", [](const ActiveLearner& l) { return l.state().step; })
      .def_property_readonly("fidelity", [](const ActiveLearner& l) { return l.state().k; })
      .def_property_readonly("spent", &ActiveLearner::spent)
      .def_property_readonly("escalations", [](const ActiveLearner& l) { return l.state().escalations; })
      .def_property_readonly("config", [](const ActiveLearner& l) { return config_to_json(l.config()); })
      .def("records", [](const ActiveLearner& l) {
        py::list out;
        for (const QueryRecord& r : l.oracles().records()) out.append(record_dict(r));
        return out;
      })
      .def("summary", [](const ActiveLearner& l) { return summary_dict(make_report(l).summary); })
      .def("emit", [](const ActiveLearner& l, const std::string& dir) { emit_report(make_report(l), dir); },
           py::arg("dir"), "Writes the report files into dir.");
}
