#include "ssmiss/em_impute.hpp"

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

namespace ssmiss {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::vector<int> indices(const Eigen::Array<bool, Eigen::Dynamic, 1>& flags,
                         bool value) {
  std::vector<int> out;
  for (int i = 0; i < flags.size(); ++i) {
    if (flags(i) == value) out.push_back(i);
  }
  return out;
}

Eigen::MatrixXd sub(const Eigen::MatrixXd& m, const std::vector<int>& r,
                    const std::vector<int>& c) {
  Eigen::MatrixXd out(r.size(), c.size());
  for (std::size_t i = 0; i < r.size(); ++i) {
    for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = m(r[i], c[j]);
  }
  return out;
}

Eigen::VectorXd sub(const Eigen::VectorXd& v, const std::vector<int>& r) {
  Eigen::VectorXd out(r.size());
  for (std::size_t i = 0; i < r.size(); ++i) out(i) = v(r[i]);
  return out;
}

}  // namespace

std::string_view to_string(LevelModel m) {
  switch (m) {
    case LevelModel::kArima: return "ARIMA";
    case LevelModel::kSpline: return "Spline";
    case LevelModel::kRegression: return "Regression";
  }
  return "?";
}

int default_spline_df(int T) {
  const int days = (T + kBeepsPerDay - 1) / kBeepsPerDay;
  return std::max(2, static_cast<int>(std::lround(2.0 * days / 10.0)));
}

Eigen::MatrixXd estimate_levels(const Eigen::MatrixXd& z, const EmConfig& config,
                                LevelDiagnostics* diagnostics) {
  const Eigen::Index T = z.rows();
  const Eigen::Index m = z.cols();
  if (!z.allFinite()) {
    throw std::invalid_argument("estimate_levels: working matrix has missing entries");
  }
  Eigen::MatrixXd mu(T, m);
  const Eigen::VectorXd time = Eigen::VectorXd::LinSpaced(T, 0.0, static_cast<double>(T - 1));

  switch (config.level_model) {
    case LevelModel::kArima:
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::VectorXd col = z.col(j);
        mu.col(j) = arima_one_step(col, fit_arima(col, config.arima_order));
      }
      break;
    case LevelModel::kSpline: {
      const int df = config.spline_df > 0 ? config.spline_df
                                          : default_spline_df(static_cast<int>(T));
      const Eigen::MatrixXd B = natural_spline_basis(time, df);
      const auto qr = B.colPivHouseholderQr();
      for (Eigen::Index j = 0; j < m; ++j) {
        const Eigen::VectorXd col = z.col(j);
        mu.col(j) = B * qr.solve(col);
      }
      break;
    }
    case LevelModel::kRegression:
      for (Eigen::Index j = 0; j < m; ++j) {
        Eigen::MatrixXd X(T, m + 1);
        X.col(0).setOnes();
        X.col(1) = time / std::max<double>(1.0, static_cast<double>(T - 1));
        Eigen::Index c = 2;
        for (Eigen::Index k = 0; k < m; ++k) {
          if (k != j) X.col(c++) = z.col(k);
        }
        Eigen::VectorXd fitted;
        if (ols_fitted(X, z.col(j), fitted)) {
          mu.col(j) = fitted;
        } else {
          mu.col(j).setConstant(z.col(j).mean());
          if (diagnostics) ++diagnostics->regression_fallbacks;
        }
      }
      break;
  }
  return mu;
}

Eigen::VectorXd em_conditional_fill(const Eigen::VectorXd& z,
                                    const Eigen::Array<bool, Eigen::Dynamic, 1>& missing,
                                    const Eigen::VectorXd& mu,
                                    const Eigen::MatrixXd& sigma, bool* ridged) {
  if (ridged) *ridged = false;
  const std::vector<int> mis = indices(missing, true);
  if (mis.empty()) return z;
  const std::vector<int> obs = indices(missing, false);
  Eigen::VectorXd out = z;
  if (obs.empty()) {
    for (int i : mis) out(i) = mu(i);
    return out;
  }
  Eigen::MatrixXd soo = sub(sigma, obs, obs);
  const Eigen::MatrixXd smo = sub(sigma, mis, obs);
  const Eigen::VectorXd resid = sub(z, obs) - sub(mu, obs);

  Eigen::LLT<Eigen::MatrixXd> llt(soo);
  bool singular = llt.info() != Eigen::Success ||
                  llt.matrixL().toDenseMatrix().diagonal().minCoeff() <
                      1e-12 * std::sqrt(std::max(1e-300, soo.diagonal().maxCoeff()));
  if (singular) {
    soo += 1e-8 * Eigen::MatrixXd::Identity(soo.rows(), soo.cols());
    llt.compute(soo);
    if (ridged) *ridged = true;
  }
  const Eigen::VectorXd fill = smo * llt.solve(resid);
  for (std::size_t a = 0; a < mis.size(); ++a) out(mis[a]) = mu(mis[a]) + fill(a);
  return out;
}

namespace {

// Sigma_mm - Sigma_mo Sigma_oo^-1 Sigma_om placed on the missing block of an
// m x m matrix.
Eigen::MatrixXd conditional_covariance(const Eigen::Array<bool, Eigen::Dynamic, 1>& missing,
                                       const Eigen::MatrixXd& sigma) {
  const Eigen::Index m = sigma.rows();
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(m, m);
  const std::vector<int> mis = indices(missing, true);
  if (mis.empty()) return out;
  const std::vector<int> obs = indices(missing, false);
  Eigen::MatrixXd c = sub(sigma, mis, mis);
  if (!obs.empty()) {
    Eigen::MatrixXd soo = sub(sigma, obs, obs);
    const Eigen::MatrixXd smo = sub(sigma, mis, obs);
    Eigen::LLT<Eigen::MatrixXd> llt(soo);
    if (llt.info() != Eigen::Success ||
        llt.matrixL().toDenseMatrix().diagonal().minCoeff() <
            1e-12 * std::sqrt(std::max(1e-300, soo.diagonal().maxCoeff()))) {
      soo += 1e-8 * Eigen::MatrixXd::Identity(soo.rows(), soo.cols());
      llt.compute(soo);
    }
    c -= smo * llt.solve(smo.transpose());
  }
  for (std::size_t a = 0; a < mis.size(); ++a)
    for (std::size_t b = 0; b < mis.size(); ++b) out(mis[a], mis[b]) = c(a, b);
  return out;
}

}  // namespace

double em_objective(const MaskedSeries& series, const Eigen::MatrixXd& mu,
                    const Eigen::MatrixXd& sigma) {
  double total = 0.0;
  for (int t = 0; t < series.length(); ++t) {
    const Eigen::Array<bool, Eigen::Dynamic, 1> missing = series.mask.row(t).transpose();
    const std::vector<int> obs = indices(missing, false);
    if (obs.empty()) continue;
    const Eigen::MatrixXd soo = sub(sigma, obs, obs);
    const Eigen::VectorXd r = sub(Eigen::VectorXd(series.z.row(t).transpose()), obs) -
                              sub(Eigen::VectorXd(mu.row(t).transpose()), obs);
    Eigen::LLT<Eigen::MatrixXd> llt(soo);
    if (llt.info() != Eigen::Success) return -std::numeric_limits<double>::infinity();
    const Eigen::MatrixXd L = llt.matrixL();
    total -= 0.5 * (static_cast<double>(obs.size()) * kLog2Pi +
                    2.0 * L.diagonal().array().log().sum() + r.dot(llt.solve(r)));
  }
  return total;
}

EmResult em_impute(const MaskedSeries& series, const EmConfig& config) {
  if (config.max_iter < 1) throw std::invalid_argument("em_impute: max_iter must be >= 1");
  if (!(config.tol > 0.0)) throw std::invalid_argument("em_impute: tol must be > 0");
  const int T = series.length();
  const int m = series.width();

  EmResult res;
  res.completed = series.z;
  for (int j = 0; j < m; ++j) {
    double sum = 0.0;
    int n = 0;
    for (int t = 0; t < T; ++t) {
      if (!series.mask(t, j)) {
        sum += series.z(t, j);
        ++n;
      }
    }
    if (n < 10) {
      throw std::invalid_argument("em_impute: column " + std::to_string(j + 1) +
                                  " has fewer than 10 observed values");
    }
    for (int t = 0; t < T; ++t) {
      if (series.mask(t, j)) res.completed(t, j) = sum / n;
    }
  }

  std::vector<int> rows_with_missing;
  for (int t = 0; t < T; ++t) {
    if (series.mask.row(t).any()) rows_with_missing.push_back(t);
  }

  // Summed conditional covariance of the filled entries from the last E-step.
  Eigen::MatrixXd spread = Eigen::MatrixXd::Zero(m, m);
  for (res.iterations = 1; res.iterations <= config.max_iter; ++res.iterations) {
    LevelDiagnostics diag;
    const Eigen::MatrixXd mu = estimate_levels(res.completed, config, &diag);
    res.regression_fallbacks += diag.regression_fallbacks;
    const Eigen::MatrixXd resid = res.completed - mu;
    Eigen::MatrixXd sigma = (resid.transpose() * resid + spread) / static_cast<double>(T);
    sigma = 0.5 * (sigma + sigma.transpose()).eval();
    res.objective_trace.push_back(em_objective(series, mu, sigma));

    double change = 0.0;
    spread.setZero();
    for (int t : rows_with_missing) {
      const Eigen::Array<bool, Eigen::Dynamic, 1> missing = series.mask.row(t).transpose();
      bool ridged = false;
      const Eigen::VectorXd filled =
          em_conditional_fill(res.completed.row(t).transpose(), missing,
                              mu.row(t).transpose(), sigma, &ridged);
      if (ridged) ++res.ridge_events;
      spread += conditional_covariance(missing, sigma);
      for (int j = 0; j < m; ++j) {
        if (missing(j)) {
          change = std::max(change, std::abs(filled(j) - res.completed(t, j)));
          res.completed(t, j) = filled(j);
        }
      }
    }
    res.final_change = change;
    if (change < config.tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, config.max_iter);
  return res;
}

}  // namespace ssmiss
