#include "ssmiss/levels.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

namespace ssmiss {

namespace {

Eigen::VectorXd difference(const Eigen::VectorXd& y, int d) {
  Eigen::VectorXd w = y;
  for (int k = 0; k < d; ++k) {
    if (w.size() < 2) return Eigen::VectorXd();
    w = (w.tail(w.size() - 1) - w.head(w.size() - 1)).eval();
  }
  return w;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

Eigen::VectorXd lstsq(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  return X.colPivHouseholderQr().solve(y);
}

// One-step predictions of the (differenced) series w given ARMA coefficients.
Eigen::VectorXd arma_predict(const Eigen::VectorXd& w, double c,
                             const Eigen::VectorXd& ar,
                             const Eigen::VectorXd& ma, double fallback) {
  const Eigen::Index n = w.size();
  const Eigen::Index p = ar.size();
  const Eigen::Index q = ma.size();
  Eigen::VectorXd pred(n);
  Eigen::VectorXd resid = Eigen::VectorXd::Zero(n);
  for (Eigen::Index t = 0; t < n; ++t) {
    if (t < p) {
      pred(t) = fallback;
    } else {
      double v = c;
      for (Eigen::Index i = 0; i < p; ++i) v += ar(i) * w(t - 1 - i);
      for (Eigen::Index j = 0; j < q && j < t; ++j) v += ma(j) * resid(t - 1 - j);
      pred(t) = v;
    }
    resid(t) = w(t) - pred(t);
  }
  return pred;
}

}  // namespace

ArimaFit fit_arima(const Eigen::VectorXd& y, const ArimaOrder& order) {
  if (order.p < 0 || order.d < 0 || order.q < 0) {
    throw std::invalid_argument("fit_arima: negative order");
  }
  const Eigen::VectorXd w = difference(y, order.d);
  const Eigen::Index n = w.size();
  const int p = order.p;
  const int q = order.q;

  ArimaFit fit;
  fit.order = order;
  fit.ar = Eigen::VectorXd::Zero(p);
  fit.ma = Eigen::VectorXd::Zero(q);
  if (n == 0) return fit;

  Eigen::VectorXd innovations;  // stage-one residuals for MA terms
  int start = p;
  if (q > 0) {
    const int m = static_cast<int>(std::min<Eigen::Index>(
        std::max(p + q + 5, 10), std::max<Eigen::Index>(n / 4, 1)));
    if (n <= 2 * m + p + q + 2) {
      throw std::invalid_argument("fit_arima: series too short for MA terms");
    }
    Eigen::MatrixXd Xl(n - m, m + 1);
    for (Eigen::Index t = m; t < n; ++t) {
      Xl(t - m, 0) = 1.0;
      for (int i = 0; i < m; ++i) Xl(t - m, 1 + i) = w(t - 1 - i);
    }
    const Eigen::VectorXd bl = lstsq(Xl, w.tail(n - m));
    innovations = Eigen::VectorXd::Zero(n);
    innovations.tail(n - m) = w.tail(n - m) - Xl * bl;
    start = m + std::max(p, q);
  }

  const Eigen::Index rows = n - start;
  if (rows <= p + q + 1) {
    // Too short for a regression: mean-only model.
    fit.intercept = w.mean();
    fit.sigma2 = (w.array() - fit.intercept).square().mean();
    return fit;
  }
  Eigen::MatrixXd X(rows, 1 + p + q);
  for (Eigen::Index t = start; t < n; ++t) {
    const Eigen::Index r = t - start;
    X(r, 0) = 1.0;
    for (int i = 0; i < p; ++i) X(r, 1 + i) = w(t - 1 - i);
    for (int j = 0; j < q; ++j) X(r, 1 + p + j) = innovations(t - 1 - j);
  }
  const Eigen::VectorXd target = w.tail(rows);
  const Eigen::VectorXd beta = lstsq(X, target);
  fit.intercept = beta(0);
  fit.ar = beta.segment(1, p);
  fit.ma = beta.segment(1 + p, q);
  fit.sigma2 = (target - X * beta).squaredNorm() / static_cast<double>(rows);
  return fit;
}

Eigen::VectorXd arima_one_step(const Eigen::VectorXd& y, const ArimaFit& fit) {
  const int d = fit.order.d;
  const Eigen::VectorXd w = difference(y, d);
  Eigen::VectorXd out = y;
  if (w.size() == 0) return out;
  const Eigen::VectorXd wpred =
      arma_predict(w, fit.intercept, fit.ar, fit.ma, w.mean());
  for (Eigen::Index t = d; t < y.size(); ++t) {
    // y_t = w_t + sum_k (-1)^{k+1} C(d,k) y_{t-k}
    double base = 0.0;
    for (int k = 1; k <= d; ++k) {
      base += ((k % 2 == 1) ? 1.0 : -1.0) * binomial(d, k) * y(t - k);
    }
    out(t) = wpred(t - d) + base;
  }
  return out;
}

Eigen::MatrixXd natural_spline_basis(const Eigen::VectorXd& x, int df) {
  if (df < 2) throw std::invalid_argument("natural_spline_basis: df must be >= 2");
  const Eigen::Index n = x.size();
  if (n == 0) return Eigen::MatrixXd(0, df);
  const double lo = x.minCoeff();
  const double hi = x.maxCoeff();
  const double span = hi > lo ? hi - lo : 1.0;
  const Eigen::VectorXd u = (x.array() - lo) / span;

  // Knots at equally spaced quantiles of the rescaled abscissa.
  std::vector<double> sorted(u.data(), u.data() + n);
  std::sort(sorted.begin(), sorted.end());
  const int K = df;
  std::vector<double> knots(K);
  for (int k = 0; k < K; ++k) {
    const double pos = static_cast<double>(k) * (n - 1) / (K - 1);
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double frac = pos - static_cast<double>(i);
    knots[k] = i + 1 < sorted.size()
                   ? sorted[i] + frac * (sorted[i + 1] - sorted[i])
                   : sorted[i];
  }

  auto cube = [](double v) { return v > 0.0 ? v * v * v : 0.0; };
  auto dk = [&](double v, int k) {
    const double denom = knots[K - 1] - knots[k];
    if (denom <= 0.0) return 0.0;
    return (cube(v - knots[k]) - cube(v - knots[K - 1])) / denom;
  };

  Eigen::MatrixXd B(n, df);
  for (Eigen::Index i = 0; i < n; ++i) {
    B(i, 0) = 1.0;
    B(i, 1) = u(i);
    for (int k = 0; k + 2 < K; ++k) B(i, 2 + k) = dk(u(i), k) - dk(u(i), K - 2);
  }
  return B;
}

Eigen::VectorXd natural_spline_fit(const Eigen::VectorXd& x,
                                   const Eigen::VectorXd& y, int df) {
  const Eigen::MatrixXd B = natural_spline_basis(x, df);
  return B * lstsq(B, y);
}

bool ols_fitted(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                Eigen::VectorXd& fitted) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  qr.setThreshold(1e-10);
  if (qr.rank() < X.cols()) return false;
  fitted = X * qr.solve(y);
  return true;
}

}  // namespace ssmiss
