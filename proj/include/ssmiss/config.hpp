#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ssmiss/em_impute.hpp"
#include "ssmiss/estimator.hpp"
#include "ssmiss/mice_impute.hpp"
#include "ssmiss/missingness.hpp"

namespace ssmiss {

enum class Method { kComplete, kKalman, kMiceDef, kMiceT, kEmArima, kEmSpline, kEmRegression };

std::string_view to_string(Method m);
Method parse_method(std::string_view name);
std::vector<Method> all_methods();
std::vector<Mechanism> all_mechanisms();

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StudyConfig {
  std::uint64_t master_seed = 20190601;
  int replications = 100;
  int timepoints = 500;
  int burn_in = kDefaultBurnIn;
  int threads = 0;  // 0: SSMISS_THREADS, else hardware concurrency
  std::string output_dir = "results";

  std::vector<double> sigma2_levels{0.25, 0.75};
  std::vector<double> alpha_levels{0.2, 0.7};
  std::vector<double> gamma_levels{0.0, 0.15, 0.3};

  std::vector<Mechanism> mechanisms = all_mechanisms();
  std::vector<double> rates{0.15, 0.30};
  bool calibrate = true;
  int calibration_timepoints = kCalibrationTimepoints;

  std::vector<Method> methods = all_methods();

  int mice_m = 10;
  int mice_chain_iters = 5;
  int mice_donors = 5;
  bool mice_contemporaneous_peers = true;
  bool mice_impute_lag_copies = false;
  bool mice_lag_incomplete_columns = true;

  int em_max_iter = 100;
  double em_tol = 1e-4;
  ArimaOrder em_arima_order{1, 0, 0};
  int em_spline_df = 0;

  int fit_max_iter = 1000;
  bool fit_multistart = false;
  InitMode fit_init = InitMode::kStationary;
  bool fit_free_gamma21 = false;

  double outlier_cutoff = 1.0;
  bool exclude_nonconverged = false;

  int cell_count() const;
  /// Cells are numbered with gamma varying fastest, then alpha, then sigma2.
  void cell_levels(int cell, double& sigma2, double& alpha, double& gamma) const;

  MiceConfig mice(MiceVariant variant) const;
  EmConfig em(LevelModel model) const;
  FitOptions fit() const;

  bool operator==(const StudyConfig&) const = default;
};

/// Throws ConfigError naming the offending key.
void validate(const StudyConfig& config);

/// Structured YAML; every key is optional and unknown keys are rejected.
StudyConfig parse_config(const std::string& text);
StudyConfig load_config(const std::filesystem::path& path);

/// Effective configuration as YAML that parse_config reads back exactly.
std::string echo_config(const StudyConfig& config);

/// Worker count: the config value, else SSMISS_THREADS, else the hardware.
int resolve_threads(const StudyConfig& config);

}  // namespace ssmiss
