#include "ssmiss/config.hpp"

#include <yaml-cpp/yaml.h>

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

namespace ssmiss {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  std::string s(buf, r.ptr);
  // Keep YAML from reading integral values back as integers-only tokens.
  if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
  return s;
}

std::string fmt_list(const std::vector<double>& v) {
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

class Reader {
 public:
  Reader(const YAML::Node& node, std::string path) : node_(node), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) {
      throw ConfigError("config key '" + (path_.empty() ? "<root>" : path_) +
                        "' must be a mapping");
    }
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!has(key)) return;
    try {
      out = std::as_const(node_)[key].template as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError("config key '" + qualified(key) + "' has an invalid value");
    }
  }

  bool has(const std::string& key) const {
    return node_ && !node_.IsNull() && static_cast<bool>(std::as_const(node_)[key]);
  }

  Reader child(const std::string& key) {
    seen_.insert(key);
    if (!has(key)) return Reader(YAML::Node(), qualified(key));
    return Reader(std::as_const(node_)[key], qualified(key));
  }

  void reject_unknown() const {
    if (!node_ || node_.IsNull()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError("unknown config key '" + qualified(key) + "'");
    }
  }

  std::string qualified(const std::string& key) const {
    return path_.empty() ? key : path_ + "." + key;
  }

 private:
  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError("config key '" + key + "': " + what);
}

}  // namespace

std::string_view to_string(Method m) {
  switch (m) {
    case Method::kComplete: return "Complete";
    case Method::kKalman: return "K";
    case Method::kMiceDef: return "MICE-def";
    case Method::kMiceT: return "MICE-t";
    case Method::kEmArima: return "EM-ARIMA";
    case Method::kEmSpline: return "EM-Spline";
    case Method::kEmRegression: return "EM-Regression";
  }
  return "?";
}

std::vector<Method> all_methods() {
  return {Method::kComplete, Method::kKalman,   Method::kMiceDef,     Method::kMiceT,
          Method::kEmArima,  Method::kEmSpline, Method::kEmRegression};
}

std::vector<Mechanism> all_mechanisms() {
  return {Mechanism::kMcar, Mechanism::kMar, Mechanism::kTmar, Mechanism::kAtmar,
          Mechanism::kMnar};
}

Method parse_method(std::string_view name) {
  for (Method m : all_methods()) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

int StudyConfig::cell_count() const {
  return static_cast<int>(sigma2_levels.size() * alpha_levels.size() * gamma_levels.size());
}

void StudyConfig::cell_levels(int cell, double& sigma2, double& alpha, double& gamma) const {
  if (cell < 0 || cell >= cell_count()) throw std::out_of_range("cell index out of range");
  const auto ng = static_cast<int>(gamma_levels.size());
  const auto na = static_cast<int>(alpha_levels.size());
  gamma = gamma_levels[cell % ng];
  alpha = alpha_levels[(cell / ng) % na];
  sigma2 = sigma2_levels[cell / (ng * na)];
}

MiceConfig StudyConfig::mice(MiceVariant variant) const {
  MiceConfig c;
  c.variant = variant;
  c.m = mice_m;
  c.chain_iters = mice_chain_iters;
  c.donors = mice_donors;
  c.contemporaneous_peers = mice_contemporaneous_peers;
  c.impute_lag_copies = mice_impute_lag_copies;
  c.lag_incomplete_columns = mice_lag_incomplete_columns;
  return c;
}

EmConfig StudyConfig::em(LevelModel model) const {
  EmConfig c;
  c.level_model = model;
  c.max_iter = em_max_iter;
  c.tol = em_tol;
  c.arima_order = em_arima_order;
  c.spline_df = em_spline_df;
  return c;
}

FitOptions StudyConfig::fit() const {
  FitOptions o;
  o.max_iter = fit_max_iter;
  o.multistart = fit_multistart;
  o.likelihood.init = fit_init;
  o.likelihood.free_gamma21 = fit_free_gamma21;
  return o;
}

void validate(const StudyConfig& c) {
  require(c.replications >= 1, "replications", "must be >= 1");
  require(c.timepoints >= 20, "timepoints", "must be >= 20");
  require(c.burn_in >= 0, "burn_in", "must be >= 0");
  require(c.threads >= 0, "threads", "must be >= 0");
  require(!c.output_dir.empty(), "output_dir", "must not be empty");
  require(!c.sigma2_levels.empty(), "conditions.sigma2", "must not be empty");
  require(!c.alpha_levels.empty(), "conditions.alpha", "must not be empty");
  require(!c.gamma_levels.empty(), "conditions.gamma", "must not be empty");
  for (double s : c.sigma2_levels) require(s > 0.0 && s < 1.0, "conditions.sigma2", "levels must lie in (0, 1)");
  for (double s : c.sigma2_levels) {
    for (double a : c.alpha_levels) {
      for (double g : c.gamma_levels) {
        try {
          validate(make_condition(s, a, g));
        } catch (const std::exception& e) {
          throw ConfigError(std::string("config key 'conditions': ") + e.what());
        }
      }
    }
  }
  require(!c.methods.empty(), "methods", "must not be empty");
  bool masked_method = false;
  for (Method m : c.methods) masked_method |= m != Method::kComplete;
  if (masked_method) {
    require(!c.mechanisms.empty(), "missingness.mechanisms", "must not be empty");
    require(!c.rates.empty(), "missingness.rates", "must not be empty");
  }
  for (double r : c.rates) require(r > 0.0 && r < 1.0, "missingness.rates", "rates must lie in (0, 1)");
  require(c.calibration_timepoints >= kCalibrationTimepoints, "missingness.calibration_timepoints",
          "must be >= " + std::to_string(kCalibrationTimepoints));
  require(c.mice_m >= 2, "mice.m", "must be >= 2");
  require(c.mice_chain_iters >= 1, "mice.chain_iters", "must be >= 1");
  require(c.mice_donors >= 1, "mice.donors", "must be >= 1");
  require(c.em_max_iter >= 1, "em.max_iter", "must be >= 1");
  require(c.em_tol > 0.0, "em.tol", "must be > 0");
  require(c.em_arima_order.p >= 0 && c.em_arima_order.d >= 0 && c.em_arima_order.q >= 0,
          "em.arima_order", "orders must be >= 0");
  require(c.em_spline_df == 0 || c.em_spline_df >= 2, "em.spline_df", "must be 0 (default) or >= 2");
  require(c.fit_max_iter >= 1, "fit.max_iter", "must be >= 1");
  require(c.outlier_cutoff > 0.0, "summary.outlier_cutoff", "must be > 0");
}

StudyConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw ConfigError(std::string("config is not valid YAML: ") + e.what());
  }
  StudyConfig c;
  Reader r(root, "");
  r.get("master_seed", c.master_seed);
  r.get("replications", c.replications);
  r.get("timepoints", c.timepoints);
  r.get("burn_in", c.burn_in);
  r.get("threads", c.threads);
  r.get("output_dir", c.output_dir);

  Reader cond = r.child("conditions");
  cond.get("sigma2", c.sigma2_levels);
  cond.get("alpha", c.alpha_levels);
  cond.get("gamma", c.gamma_levels);
  cond.reject_unknown();

  Reader miss = r.child("missingness");
  std::vector<std::string> mech_names;
  miss.get("mechanisms", mech_names);
  if (miss.has("mechanisms")) {
    c.mechanisms.clear();
    for (const auto& n : mech_names) {
      try {
        c.mechanisms.push_back(parse_mechanism(n));
      } catch (const std::invalid_argument&) {
        throw ConfigError("config key 'missingness.mechanisms': unknown mechanism '" + n + "'");
      }
    }
  }
  miss.get("rates", c.rates);
  miss.get("calibrate", c.calibrate);
  miss.get("calibration_timepoints", c.calibration_timepoints);
  miss.reject_unknown();

  std::vector<std::string> method_names;
  r.get("methods", method_names);
  if (r.has("methods")) {
    c.methods.clear();
    for (const auto& n : method_names) {
      try {
        c.methods.push_back(parse_method(n));
      } catch (const std::invalid_argument&) {
        throw ConfigError("config key 'methods': unknown method '" + n + "'");
      }
    }
  }

  Reader mice = r.child("mice");
  mice.get("m", c.mice_m);
  mice.get("chain_iters", c.mice_chain_iters);
  mice.get("donors", c.mice_donors);
  mice.get("contemporaneous_peers", c.mice_contemporaneous_peers);
  mice.get("impute_lag_copies", c.mice_impute_lag_copies);
  mice.get("lag_incomplete_columns", c.mice_lag_incomplete_columns);
  mice.reject_unknown();

  Reader em = r.child("em");
  em.get("max_iter", c.em_max_iter);
  em.get("tol", c.em_tol);
  std::vector<int> order{c.em_arima_order.p, c.em_arima_order.d, c.em_arima_order.q};
  em.get("arima_order", order);
  if (order.size() != 3) throw ConfigError("config key 'em.arima_order' must have three entries");
  c.em_arima_order = {order[0], order[1], order[2]};
  em.get("spline_df", c.em_spline_df);
  em.reject_unknown();

  Reader fit = r.child("fit");
  fit.get("max_iter", c.fit_max_iter);
  fit.get("multistart", c.fit_multistart);
  std::string init = c.fit_init == InitMode::kStationary ? "stationary" : "diffuse";
  fit.get("init", init);
  if (init == "stationary") {
    c.fit_init = InitMode::kStationary;
  } else if (init == "diffuse") {
    c.fit_init = InitMode::kDiffuse;
  } else {
    throw ConfigError("config key 'fit.init' must be 'stationary' or 'diffuse'");
  }
  fit.get("free_gamma21", c.fit_free_gamma21);
  fit.reject_unknown();

  Reader summary = r.child("summary");
  summary.get("outlier_cutoff", c.outlier_cutoff);
  summary.get("exclude_nonconverged", c.exclude_nonconverged);
  summary.reject_unknown();

  r.reject_unknown();
  validate(c);
  return c;
}

StudyConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string echo_config(const StudyConfig& c) {
  std::ostringstream o;
  auto b = [](bool v) { return v ? "true" : "false"; };
  o << "master_seed: " << c.master_seed << "\n"
    << "replications: " << c.replications << "\n"
    << "timepoints: " << c.timepoints << "\n"
    << "burn_in: " << c.burn_in << "\n"
    << "threads: " << c.threads << "\n"
    << "output_dir: " << YAML::Dump(YAML::Node(c.output_dir)) << "\n"
    << "conditions:\n"
    << "  sigma2: " << fmt_list(c.sigma2_levels) << "\n"
    << "  alpha: " << fmt_list(c.alpha_levels) << "\n"
    << "  gamma: " << fmt_list(c.gamma_levels) << "\n"
    << "missingness:\n  mechanisms: [";
  for (std::size_t i = 0; i < c.mechanisms.size(); ++i) {
    o << (i ? ", " : "") << to_string(c.mechanisms[i]);
  }
  o << "]\n"
    << "  rates: " << fmt_list(c.rates) << "\n"
    << "  calibrate: " << b(c.calibrate) << "\n"
    << "  calibration_timepoints: " << c.calibration_timepoints << "\n"
    << "methods: [";
  for (std::size_t i = 0; i < c.methods.size(); ++i) {
    o << (i ? ", " : "") << to_string(c.methods[i]);
  }
  o << "]\n"
    << "mice:\n"
    << "  m: " << c.mice_m << "\n"
    << "  chain_iters: " << c.mice_chain_iters << "\n"
    << "  donors: " << c.mice_donors << "\n"
    << "  contemporaneous_peers: " << b(c.mice_contemporaneous_peers) << "\n"
    << "  impute_lag_copies: " << b(c.mice_impute_lag_copies) << "\n"
    << "  lag_incomplete_columns: " << b(c.mice_lag_incomplete_columns) << "\n"
    << "em:\n"
    << "  max_iter: " << c.em_max_iter << "\n"
    << "  tol: " << fmt(c.em_tol) << "\n"
    << "  arima_order: [" << c.em_arima_order.p << ", " << c.em_arima_order.d << ", "
    << c.em_arima_order.q << "]\n"
    << "  spline_df: " << c.em_spline_df << "\n"
    << "fit:\n"
    << "  max_iter: " << c.fit_max_iter << "\n"
    << "  multistart: " << b(c.fit_multistart) << "\n"
    << "  init: " << (c.fit_init == InitMode::kStationary ? "stationary" : "diffuse") << "\n"
    << "  free_gamma21: " << b(c.fit_free_gamma21) << "\n"
    << "summary:\n"
    << "  outlier_cutoff: " << fmt(c.outlier_cutoff) << "\n"
    << "  exclude_nonconverged: " << b(c.exclude_nonconverged) << "\n";
  return o.str();
}

int resolve_threads(const StudyConfig& config) {
  if (config.threads > 0) return config.threads;
  if (const char* env = std::getenv("SSMISS_THREADS")) {
    int n = 0;
    const std::string_view s(env);
    const auto r = std::from_chars(s.data(), s.data() + s.size(), n);
    if (r.ec == std::errc() && n > 0) return n;
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

}  // namespace ssmiss
