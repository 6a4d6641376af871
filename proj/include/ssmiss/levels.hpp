#pragma once

#include <Eigen/Dense>

namespace ssmiss {

struct ArimaOrder {
  int p = 1;
  int d = 0;
  int q = 0;

  bool operator==(const ArimaOrder&) const = default;
};

/// ARMA(p, q) with intercept on the d-times differenced series.
struct ArimaFit {
  ArimaOrder order;
  double intercept = 0.0;
  Eigen::VectorXd ar;  // phi_1..phi_p
  Eigen::VectorXd ma;  // theta_1..theta_q
  double sigma2 = 0.0;
};

/// Conditional least squares. Pure AR orders are a single regression of w_t
/// on (1, w_{t-1}, ..., w_{t-p}); MA terms use the Hannan-Rissanen two-stage
/// regression on residuals of a long autoregression.
ArimaFit fit_arima(const Eigen::VectorXd& y, const ArimaOrder& order);

/// In-sample one-step-ahead predictions of y from a fitted model. Timepoints
/// without enough history take the differenced series' mean (d = 0) or the
/// observed value (the first d points when d > 0).
Eigen::VectorXd arima_one_step(const Eigen::VectorXd& y, const ArimaFit& fit);

/// Natural cubic spline basis (truncated power form) with `df` columns,
/// intercept included: knots at equally spaced quantiles of x, boundary knots
/// at min(x) and max(x). df = 2 is the straight line.
Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& x, int df);

/// Least-squares fit of y on natural_spline_basis(x, df); fitted values.
Eigen::VectorXd natural_spline_fit(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y, int df);

/// Fitted values of an OLS regression of y on the columns of X (an intercept
/// is not added). Returns false when X is rank deficient.
bool ols_fitted(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                Eigen::VectorXd& fitted);

}  // namespace ssmiss
