#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ssmiss/config.hpp"
#include "ssmiss/em_impute.hpp"
#include "ssmiss/estimator.hpp"
#include "ssmiss/metrics.hpp"
#include "ssmiss/mice_impute.hpp"
#include "ssmiss/missingness.hpp"
#include "ssmiss/model.hpp"
#include "ssmiss/study.hpp"

namespace py = pybind11;
using namespace ssmiss;

namespace {

LevelModel parse_level_model(const std::string& name) {
  for (LevelModel m : {LevelModel::kArima, LevelModel::kSpline, LevelModel::kRegression})
    if (to_string(m) == name) return m;
  throw std::invalid_argument("unknown level model: " + name);
}

MiceVariant parse_variant(const std::string& name) {
  for (MiceVariant v : {MiceVariant::kDef, MiceVariant::kLag1})
    if (to_string(v) == name) return v;
  throw std::invalid_argument("unknown MICE variant: " + name);
}

py::dict model_dict(const ModelParams& p) {
  py::dict d;
  d["A"] = p.A;
  d["H"] = p.H;
  d["Q"] = p.Q;
  d["R"] = p.R;
  return d;
}

py::dict reported_dict(const std::vector<ReportedParameter>& params) {
  py::dict d;
  for (const auto& r : params) d[py::str(r.name)] = py::make_tuple(r.estimate, r.se);
  return d;
}

}  // namespace

PYBIND11_MODULE(_ssmiss, m) {
  m.doc() = "State-space models with missing observations";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<MaskedSeries>(m, "Series")
      .def(py::init([](Eigen::MatrixXd z, std::optional<MaskMatrix> mask) {
             MaskedSeries s = make_series(std::move(z));
             if (mask) {
               if (mask->rows() != s.z.rows() || mask->cols() != s.z.cols())
                 throw std::invalid_argument("mask shape differs from z");
               s.mask = *mask;
             }
             return s;
           }),
           py::arg("z"), py::arg("mask") = py::none())
      .def_property_readonly("z", [](const MaskedSeries& s) { return s.z; })
      .def_property_readonly("mask", [](const MaskedSeries& s) { return s.mask; })
      .def_property_readonly("day_index", [](const MaskedSeries& s) { return s.day_index; })
      .def_property_readonly("x", [](const MaskedSeries& s) -> std::optional<Eigen::MatrixXd> {
        if (s.truth) return s.truth->x;
        return std::nullopt;
      })
      .def_property_readonly("length", &MaskedSeries::length);

  m.def("make_condition",
        [](double sigma2, double alpha, double gamma) { return model_dict(make_condition(sigma2, alpha, gamma)); },
        py::arg("sigma2"), py::arg("alpha"), py::arg("gamma"));

  m.def("simulate",
        [](double sigma2, double alpha, double gamma, int timepoints, std::uint64_t seed, int burn_in) {
          return simulate(make_condition(sigma2, alpha, gamma), timepoints, seed, burn_in);
        },
        py::arg("sigma2"), py::arg("alpha"), py::arg("gamma"), py::arg("timepoints") = 500,
        py::arg("seed") = 1, py::arg("burn_in") = kDefaultBurnIn);

  m.def("mask_series",
        [](const MaskedSeries& s, const std::string& mechanism, double rate, std::uint64_t seed) {
          return apply_missingness(s, paper_spec(parse_mechanism(mechanism), rate), seed);
        },
        py::arg("series"), py::arg("mechanism"), py::arg("rate"), py::arg("seed") = 1);

  m.def("neg_loglik",
        [](const MaskedSeries& s, double sigma2, double alpha, double gamma) {
          return neg_loglik(ParamVector::from_model(make_condition(sigma2, alpha, gamma)), s);
        },
        py::arg("series"), py::arg("sigma2"), py::arg("alpha"), py::arg("gamma"));

  m.def("fit_mle",
        [](const MaskedSeries& s, bool free_gamma21, bool diffuse, int max_iter) {
          FitOptions o;
          o.likelihood.free_gamma21 = free_gamma21;
          o.likelihood.init = diffuse ? InitMode::kDiffuse : InitMode::kStationary;
          o.max_iter = max_iter;
          const FitResult f = fit_mle(s, o);
          py::dict d;
          d["parameters"] = reported_dict(reported_parameters(f, free_gamma21));
          d["loglik"] = f.loglik;
          d["converged"] = f.converged;
          d["iterations"] = f.n_iter;
          d["nonstationary"] = f.nonstationary;
          return d;
        },
        py::arg("series"), py::arg("free_gamma21") = false, py::arg("diffuse") = false,
        py::arg("max_iter") = 1000);

  m.def("em_impute",
        [](const MaskedSeries& s, const std::string& level_model, double tol, int max_iter) {
          EmConfig c;
          c.level_model = parse_level_model(level_model);
          c.tol = tol;
          c.max_iter = max_iter;
          const EmResult r = em_impute(s, c);
          py::dict d;
          d["completed"] = r.completed;
          d["iterations"] = r.iterations;
          d["converged"] = r.converged;
          d["objective_trace"] = r.objective_trace;
          return d;
        },
        py::arg("series"), py::arg("level_model") = "ARIMA", py::arg("tol") = 1e-4,
        py::arg("max_iter") = 100);

  m.def("mice_impute",
        [](const MaskedSeries& s, const std::string& variant, int imputations, std::uint64_t seed) {
          MiceConfig c;
          c.variant = parse_variant(variant);
          c.m = imputations;
          return mice_chain(s, c, seed).datasets;
        },
        py::arg("series"), py::arg("variant") = "MICE-def", py::arg("m") = 10, py::arg("seed") = 1);

  m.def("rubin_pool",
        [](const std::vector<std::vector<double>>& estimates, const std::vector<std::vector<double>>& ses) {
          if (estimates.size() != ses.size()) throw std::invalid_argument("estimates and ses differ in length");
          std::vector<std::vector<ReportedParameter>> fits(estimates.size());
          for (std::size_t k = 0; k < estimates.size(); ++k) {
            if (estimates[k].size() != ses[k].size()) throw std::invalid_argument("ragged estimates and ses");
            for (std::size_t i = 0; i < estimates[k].size(); ++i)
              fits[k].push_back({"p" + std::to_string(i), estimates[k][i], ses[k][i]});
          }
          const PooledFit f = rubin_pool(fits);
          py::dict d;
          d["estimate"] = f.q_bar;
          d["within"] = f.u_bar;
          d["between"] = f.b_m;
          d["total"] = f.t_var;
          d["se"] = f.se;
          return d;
        },
        py::arg("estimates"), py::arg("ses"));

  m.def("median_bias", &median_bias, py::arg("truth"), py::arg("estimates"));

  m.def("coverage",
        [](double truth, const std::vector<double>& est, const std::vector<double>& se) {
          return coverage(truth, est, se).percent;
        },
        py::arg("truth"), py::arg("estimates"), py::arg("ses"));

  m.def("run_study",
        [](const std::string& config_yaml, const std::optional<std::string>& output_dir, int threads) {
          StudyConfig c = parse_config(config_yaml);
          if (output_dir) c.output_dir = *output_dir;
          if (threads > 0) c.threads = threads;
          RunSummary s;
          {
            py::gil_scoped_release release;
            s = run_study(c);
          }
          py::dict d;
          d["items_total"] = s.items_total;
          d["items_run"] = s.items_run;
          d["failure_records"] = s.failure_records;
          d["records_path"] = s.records_path;
          return d;
        },
        py::arg("config_yaml"), py::arg("output_dir") = py::none(), py::arg("threads") = 0);
}
