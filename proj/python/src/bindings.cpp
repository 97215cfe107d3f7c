#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <json.hpp>

#include "shiftmoment/cli.hpp"
#include "shiftmoment/csv.hpp"
#include "shiftmoment/distributions.hpp"
#include "shiftmoment/errors.hpp"
#include "shiftmoment/experiments.hpp"
#include "shiftmoment/moment_estimators.hpp"
#include "shiftmoment/ratio_estimation.hpp"

namespace py = pybind11;
using namespace shiftmoment;
using nlohmann::json;

namespace {

DensitySpec density(const std::string& text) { return density_from_json(json::parse(text)); }

PointSet points(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw ConfigError("points: empty list");
  PointSet out(rows.front().size());
  for (const auto& r : rows) out.push_back(r);
  return out;
}

LabeledDataset labeled(const std::vector<std::vector<double>>& xs, const std::vector<double>& ys) {
  LabeledDataset d{points(xs), ys};
  d.validate();
  return d;
}

EstimatorConfig estimator_config(const std::string& text) {
  const auto j = json::parse(text);
  EstimatorConfig cfg;
  cfg.q = j.value("q", cfg.q);
  cfg.split_fraction = j.value("split_fraction", cfg.split_fraction);
  if (j.contains("threshold") && !j.at("threshold").is_null()) cfg.threshold = j.at("threshold").get<double>();
  if (j.contains("regressor")) cfg.regressor = regressor_from_json(j.at("regressor"));
  if (j.contains("quadrature_nodes")) cfg.target_integration = QuadratureIntegration{j.at("quadrature_nodes").get<std::size_t>()};
  if (j.contains("monte_carlo_draws")) cfg.target_integration = MonteCarloIntegration{j.at("monte_carlo_draws").get<std::size_t>()};
  cfg.validate();
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_shiftmoment, m) {
  m.doc() = "Moment estimation under covariate shift (C++ core).";
  m.attr("__version__") = SHIFTMOMENT_VERSION;

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<InputError>(m, "InputError", PyExc_OSError);
  py::register_exception<DomainError>(m, "DomainError", PyExc_ValueError);
  py::register_exception<DegeneratePairError>(m, "DegeneratePairError", PyExc_ArithmeticError);

  m.def("pdf", [](const std::string& spec, const std::vector<double>& x) { return density(spec).pdf(x); },
        py::arg("spec"), py::arg("x"));
  m.def(
      "sample",
      [](const std::string& spec, std::size_t n, std::uint64_t seed) {
        Rng rng(seed);
        const auto pts = density(spec).sample(n, rng);
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < pts.size(); ++i) out.emplace_back(pts[i].begin(), pts[i].end());
        return out;
      },
      py::arg("spec"), py::arg("n"), py::arg("seed"));
  m.def(
      "likelihood_ratio",
      [](const std::string& source, const std::string& target, const std::vector<double>& x) {
        return likelihood_ratio(SourceTargetPair(density(source), density(target)), x);
      },
      py::arg("source"), py::arg("target"), py::arg("x"));
  m.def(
      "sup_ratio",
      [](const std::string& source, const std::string& target) {
        return sup_ratio(SourceTargetPair(density(source), density(target)));
      },
      py::arg("source"), py::arg("target"));
  m.def(
      "density_bounds",
      [](const std::string& spec) {
        const auto b = density_bounds(density(spec));
        return py::make_tuple(b.lower, b.upper);
      },
      py::arg("spec"));
  m.def(
      "truth_oracle",
      [](double k, const std::string& target, int q) { return truth_oracle(TestFunction(SinFamily{k}), density(target), q); },
      py::arg("k"), py::arg("target"), py::arg("q"));

  m.def(
      "estimate_two_stage_known",
      [](const std::vector<std::vector<double>>& xs, const std::vector<double>& ys, const std::string& source,
         const std::string& target, const std::string& config, std::uint64_t seed) {
        Rng rng(seed);
        const auto e = estimate_two_stage_known(labeled(xs, ys), SourceTargetPair(density(source), density(target)),
                                                estimator_config(config), rng);
        return to_json(e).dump();
      },
      py::arg("xs"), py::arg("ys"), py::arg("source"), py::arg("target"), py::arg("config"), py::arg("seed"));
  m.def(
      "estimate_plugin",
      [](const std::vector<std::vector<double>>& xs, const std::vector<double>& ys,
         const std::vector<std::vector<double>>& unlabeled, const std::string& config, int degree, std::uint64_t seed) {
        const auto data = labeled(xs, ys);
        const UnlabeledDataset u{points(unlabeled)};
        const auto model = fit_propensity(UnlabeledDataset{data.xs}, u, degree);
        Rng rng(seed);
        auto j = to_json(estimate_two_stage_plugin(data, u, estimator_config(config), model, rng));
        j["propensity_model"] = to_json(model);
        return j.dump();
      },
      py::arg("xs"), py::arg("ys"), py::arg("unlabeled"), py::arg("config"), py::arg("degree"), py::arg("seed"));
  m.def(
      "ratio_from_propensity",
      [](double e, std::size_t n, std::size_t m_count) { return ratio_from_propensity(e, n, m_count); }, py::arg("e"),
      py::arg("n"), py::arg("m"));

  m.def(
      "run_experiment",
      [](const std::string& spec_text) {
        const auto spec = experiment_from_json(json::parse(spec_text));
        py::gil_scoped_release release;
        if (spec.study == Study::FunctionClass) {
          auto r = run_function_class(spec);
          json rows = json::array();
          for (const auto& row : r.rows) {
            rows.push_back({{"k", row.k},
                            {"error_target", row.error_target},
                            {"required_n", row.required_n},
                            {"median_error", row.median_error},
                            {"capped", row.capped}});
          }
          return json{{"rows", rows}, {"metadata", r.metadata}}.dump();
        }
        ExperimentResult r;
        switch (spec.study) {
          case Study::ShiftIntensity: r = run_shift_intensity(spec); break;
          case Study::SamplingStrategy: r = run_sampling_strategy(spec); break;
          case Study::MethodComparison: r = run_method_comparison(spec); break;
          case Study::TruncationStudy: r = run_truncation_study(spec); break;
          case Study::CsvProtocol: r = run_csv_protocol(spec); break;
          case Study::FunctionClass: break;
        }
        std::ostringstream csv;
        write_trial_records(csv, r.records);
        return json{{"csv", csv.str()}, {"metadata", r.metadata}}.dump();
      },
      py::arg("spec"));

  m.def(
      "run_cli",
      [](const std::vector<std::string>& args) {
        std::vector<std::string> argv = {"shiftmoment"};
        argv.insert(argv.end(), args.begin(), args.end());
        std::ostringstream out, err;
        int code;
        {
          py::gil_scoped_release release;
          code = run_cli(argv, out, err);
        }
        return py::make_tuple(code, out.str(), err.str());
      },
      py::arg("args"));
}
