#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ssmiss/estimator.hpp"
#include "ssmiss/model.hpp"
#include "ssmiss/rng.hpp"

namespace ssmiss {

enum class MiceVariant { kDef, kLag1 };

std::string_view to_string(MiceVariant v);

struct MiceConfig {
  MiceVariant variant = MiceVariant::kDef;
  int m = 10;
  int chain_iters = 5;
  int donors = 5;
  /// Also predict each incomplete column from the other incomplete columns
  /// at the same timepoint (their current imputations), as a default
  /// chained-equation predictor matrix does.
  bool contemporaneous_peers = true;
  /// Lag1 only. When set, the lagged copies are incomplete variables of their
  /// own, imputed in the chain like any other column of a lagged data frame.
  /// Otherwise they follow the current imputations of the lagged columns.
  bool impute_lag_copies = false;
  /// Lag1 only. When cleared, lagged copies of incomplete columns are left
  /// out of the predictors and only the complete columns' lags are used.
  bool lag_incomplete_columns = true;
};

struct PmmOptions {
  /// Test hook: use the least-squares coefficients for the missing cases
  /// instead of a posterior draw.
  bool deterministic_beta = false;
  double ridge = 1e-6;
};

struct PmmResult {
  Eigen::VectorXd values;
  bool ridged = false;
};

/// Predictive mean matching with a Bayesian linear regression. An intercept
/// is added to X internally. sigma^2 is drawn as SSR / chi2(n - p), beta-dot
/// from N(beta-hat, sigma^2 (X'X)^-1); each missing case takes the observed
/// y of a donor drawn uniformly among the `donors` observed cases whose
/// fitted value X_obs beta-hat is closest to X_mis beta-dot.
PmmResult pmm_impute_column(const Eigen::VectorXd& y_obs,
                            const Eigen::MatrixXd& X_obs,
                            const Eigen::MatrixXd& X_mis, int donors, Rng& rng,
                            const PmmOptions& options = {});

struct ImputationSet {
  std::vector<Eigen::MatrixXd> datasets;
  std::vector<std::uint64_t> seeds;  // one stream per chain
  int ridge_events = 0;
};

/// m independent chains. Each starts from random draws of the observed
/// values of each incomplete column and runs chain_iters sweeps over the
/// incomplete columns. Def predicts from the complete columns at t; Lag1 from
/// all columns at t-1, with the first row using column means.
ImputationSet mice_chain(const MaskedSeries& series, const MiceConfig& config,
                         std::uint64_t seed);

struct PooledFit {
  std::vector<std::string> names;
  Eigen::VectorXd q_bar;
  Eigen::VectorXd u_bar;
  Eigen::VectorXd b_m;
  Eigen::VectorXd t_var;
  Eigen::VectorXd se;  // NaN where any input SE was missing
  std::vector<bool> se_available;
  int m = 0;
};

/// Rubin's rules on already-reported estimates and standard errors.
PooledFit rubin_pool(const std::vector<std::vector<ReportedParameter>>& fits);
PooledFit rubin_pool(const std::vector<FitResult>& fits, bool free_gamma21 = false);

}  // namespace ssmiss
