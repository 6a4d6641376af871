#pragma once

#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "ssmiss/levels.hpp"
#include "ssmiss/model.hpp"

namespace ssmiss {

enum class LevelModel { kArima, kSpline, kRegression };

std::string_view to_string(LevelModel m);

struct EmConfig {
  LevelModel level_model = LevelModel::kArima;
  int max_iter = 100;
  double tol = 1e-4;  // max abs change in imputed values
  ArimaOrder arima_order{1, 0, 0};
  int spline_df = 0;  // 0 selects default_spline_df(T)
};

/// One basis column per five days of ten beeps, at least 2.
int default_spline_df(int T);

struct LevelDiagnostics {
  int regression_fallbacks = 0;  // singular designs replaced by column means
};

/// Per-column level (mean) series for a fully observed working matrix.
///  Arima:      in-sample one-step-ahead predictions of the fitted model;
///  Spline:     natural cubic spline of the column on time;
///  Regression: OLS on (1, t, the other columns), fitted values.
Eigen::MatrixXd estimate_levels(const Eigen::MatrixXd& z_completed,
                                const EmConfig& config,
                                LevelDiagnostics* diagnostics = nullptr);

/// Replaces the missing entries of `z` by their Gaussian conditional mean
///   mu_m + Sigma_mo Sigma_oo^-1 (z_o - mu_o).
/// A singular observed block gets a 1e-8 ridge and sets `ridged`.
Eigen::VectorXd em_conditional_fill(const Eigen::VectorXd& z,
                                    const Eigen::Array<bool, Eigen::Dynamic, 1>& missing,
                                    const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& sigma,
                                    bool* ridged = nullptr);

struct EmResult {
  Eigen::MatrixXd completed;
  int iterations = 0;
  double final_change = 0.0;
  bool converged = false;
  int ridge_events = 0;
  int regression_fallbacks = 0;
  /// Observed-data Gaussian quasi-log-likelihood under each iteration's
  /// working mean and covariance.
  std::vector<double> objective_trace;
};

/// Observed-data log-density sum_t log N(z_t,o | mu_t,o, Sigma_oo).
double em_objective(const MaskedSeries& series, const Eigen::MatrixXd& mu,
                    const Eigen::MatrixXd& sigma);

/// Single imputation by EM: start from column means, then alternate level
/// estimation, the residual covariance MLE and the conditional-mean fill
/// until the largest change in an imputed value drops below tol.
EmResult em_impute(const MaskedSeries& series, const EmConfig& config);

}  // namespace ssmiss
