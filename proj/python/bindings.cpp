// Python bindings. Results cross the boundary as the same JSON documents the
// CLI writes; the Python package parses them into dicts.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "glmmlasso/error.hpp"
#include "glmmlasso/io.hpp"
#include "glmmlasso/optimizer.hpp"
#include "glmmlasso/results.hpp"
#include "glmmlasso/simulate.hpp"

namespace py = pybind11;
using namespace glmmlasso;

namespace {

struct Model {
  LoadedModel m;
  Problem problem() const { return Problem(m.data, m.cov, m.family, m.penalty_mask); }
};

Model load(const CsvTable& t, const std::string& spec) { return Model{build_model(t, parse_model_spec(spec))}; }

OptimizerConfig opt(const std::string& mode) {
  OptimizerConfig c;
  c.mode = fit_mode_from_name(mode);
  return c;
}

PathConfig pathcfg(int n_lambda, double min_ratio) {
  PathConfig p;
  p.n_lambda = n_lambda;
  p.min_ratio = min_ratio;
  return p;
}

}  // namespace

PYBIND11_MODULE(_core, mod) {
  mod.doc() = "Lasso-penalized GLMMs via the Laplace approximation";

  py::register_exception<InvalidInput>(mod, "InvalidInput", PyExc_ValueError);
  py::register_exception<UnsupportedModel>(mod, "UnsupportedModel", PyExc_ValueError);
  py::register_exception<ConvergenceError>(mod, "ConvergenceError", PyExc_RuntimeError);
  py::register_exception<NumericalError>(mod, "NumericalError", PyExc_ArithmeticError);

  py::class_<Model>(mod, "Model")
      .def_property_readonly("n", [](const Model& m) { return m.m.data.n(); })
      .def_property_readonly("columns", [](const Model& m) { return m.m.data.column_names; })
      .def_property_readonly("family", [](const Model& m) { return m.m.family.name(); })
      .def(
          "fit",
          [](const Model& m, double lambda, const std::string& mode) {
            const Problem prob = m.problem();
            const OptimizerConfig cfg = opt(mode);
            FitRecord rec;
            {
              py::gil_scoped_release nogil;
              rec = fit(prob, lambda, cfg, init_start(prob, cfg));
            }
            return fit_json(m.m, rec);
          },
          py::arg("lam"), py::arg("mode") = "exact")
      .def(
          "path",
          [](const Model& m, int n_lambda, double min_ratio, const std::string& mode) {
            const Problem prob = m.problem();
            FitPath fp;
            {
              py::gil_scoped_release nogil;
              fp = compute_path(prob, opt(mode), pathcfg(n_lambda, min_ratio));
            }
            return path_json(m.m, fp);
          },
          py::arg("n_lambda") = 21, py::arg("min_ratio") = 0.01, py::arg("mode") = "exact")
      .def(
          "two_stage",
          [](const Model& m, const std::string& kind, int n_lambda, double min_ratio, const std::string& mode) {
            if (kind != "hybrid" && kind != "thresholded") throw InvalidInput("kind must be hybrid or thresholded");
            const Problem prob = m.problem();
            const OptimizerConfig cfg = opt(mode);
            FitPath fp;
            TwoStageResult ts;
            {
              py::gil_scoped_release nogil;
              fp = compute_path(prob, cfg, pathcfg(n_lambda, min_ratio));
              ts = kind == "hybrid" ? select_hybrid(prob, cfg, fp) : select_thresholded(prob, cfg, fp);
            }
            return two_stage_json(m.m, fp, ts);
          },
          py::arg("kind") = "hybrid", py::arg("n_lambda") = 21, py::arg("min_ratio") = 0.01,
          py::arg("mode") = "exact")
      .def("rescore",
           [](const Model& m, const std::string& doc) {
             std::vector<std::tuple<std::string, double, double>> out;
             for (const auto& e : rescore_json(doc, m.m)) out.emplace_back(e.where, e.stored, e.recomputed);
             return out;
           });

  mod.def(
      "load_csv_text",
      [](const std::string& csv, const std::string& spec) {
        std::istringstream in(csv);
        return load(read_csv(in, "<data>"), spec);
      },
      py::arg("csv"), py::arg("spec"));
  mod.def(
      "load_csv_file", [](const std::string& path, const std::string& spec) { return load(read_csv_file(path), spec); },
      py::arg("path"), py::arg("spec"));

  mod.def("designs", &SimDesign::names);
  mod.def(
      "simulate",
      [](const std::string& design, int replicates, std::uint64_t seed, int workers,
         const std::vector<std::string>& methods, int n_lambda) {
        StudyConfig cfg;
        cfg.replicates = replicates;
        cfg.seed = seed;
        cfg.workers = workers;
        if (!methods.empty()) cfg.methods = methods;
        cfg.path.n_lambda = n_lambda;
        const SimDesign d = SimDesign::named(design, StudyScale::desk);
        StudyResult st;
        {
          py::gil_scoped_release nogil;
          st = run_study(d, cfg);
        }
        return py::make_tuple(st.replicates_csv(), st.summary_csv(), st.table_text());
      },
      py::arg("design"), py::arg("replicates") = 2, py::arg("seed") = 1, py::arg("workers") = 1,
      py::arg("methods") = std::vector<std::string>{}, py::arg("n_lambda") = 21);
  mod.def("descent_direction", &descent_direction, py::arg("grad"), py::arg("h"), py::arg("lam"), py::arg("beta"),
          py::arg("penalized") = true);
}
