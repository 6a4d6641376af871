#include "ssmiss/mice_impute.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ssmiss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
  Eigen::MatrixXd out(X.rows(), X.cols() + 1);
  out.col(0).setOnes();
  out.rightCols(X.cols()) = X;
  return out;
}

// Column layout of the chain's data matrix: the series' columns, then for
// Lag1 their copies shifted by one row.
struct ChainLayout {
  Eigen::MatrixXd data;
  MaskMatrix mask;
  std::vector<int> targets;                  // columns imputed by the sweeps
  std::vector<std::vector<int>> predictors;  // per target
  bool passive_lags = false;                 // lag copies follow the imputations
  int width = 0;                             // columns of the series
};

void refresh_lags(Eigen::MatrixXd& data, int width) {
  const Eigen::Index T = data.rows();
  for (int k = 0; k < width; ++k) {
    data(0, width + k) = data.col(k).mean();
    data.col(width + k).tail(T - 1) = data.col(k).head(T - 1);
  }
}

ChainLayout make_layout(const MaskedSeries& series, const MiceConfig& config) {
  const int T = series.length();
  const int width = series.width();
  const bool lag = config.variant == MiceVariant::kLag1;
  ChainLayout L;
  L.width = width;
  L.passive_lags = lag && !config.impute_lag_copies;
  const int cols = lag ? 2 * width : width;
  L.data.resize(T, cols);
  L.mask = MaskMatrix::Constant(T, cols, false);
  L.data.leftCols(width) = series.z;
  L.mask.leftCols(width) = series.mask;
  if (lag) {
    for (int k = 0; k < width; ++k) {
      double sum = 0.0;
      int n = 0;
      for (int t = 0; t < T; ++t) {
        if (!series.mask(t, k)) {
          sum += series.z(t, k);
          ++n;
        }
      }
      L.data(0, width + k) = n > 0 ? sum / n : 0.0;
      for (int t = 1; t < T; ++t) {
        L.data(t, width + k) = series.z(t - 1, k);
        if (!L.passive_lags) L.mask(t, width + k) = series.mask(t - 1, k);
      }
    }
  }

  std::vector<int> complete;
  std::vector<int> incomplete;
  for (int j = 0; j < width; ++j) (series.mask.col(j).any() ? incomplete : complete).push_back(j);
  for (int j : incomplete) {
    std::vector<int> p;
    if (lag) {
      for (int k = 0; k < width; ++k) {
        if (config.lag_incomplete_columns || !series.mask.col(k).any()) p.push_back(width + k);
      }
    }
    if (!lag || config.contemporaneous_peers) p.insert(p.end(), complete.begin(), complete.end());
    if (config.contemporaneous_peers) {
      for (int k : incomplete) {
        if (k != j) p.push_back(k);
      }
    }
    L.targets.push_back(j);
    L.predictors.push_back(std::move(p));
  }
  if (lag && !L.passive_lags) {
    // Lagged copies with gaps are ordinary incomplete variables predicted from
    // every other column.
    for (int k = 0; k < width; ++k) {
      const int c = width + k;
      if (!L.mask.col(c).any()) continue;
      std::vector<int> p;
      for (int o = 0; o < cols; ++o) {
        if (o != c) p.push_back(o);
      }
      L.targets.push_back(c);
      L.predictors.push_back(std::move(p));
    }
  }
  return L;
}

}  // namespace

std::string_view to_string(MiceVariant v) {
  return v == MiceVariant::kDef ? "MICE-def" : "MICE-t";
}

PmmResult pmm_impute_column(const Eigen::VectorXd& y_obs,
                            const Eigen::MatrixXd& X_obs_raw,
                            const Eigen::MatrixXd& X_mis_raw, int donors, Rng& rng,
                            const PmmOptions& options) {
  if (donors < 1) throw std::invalid_argument("pmm_impute_column: donors must be >= 1");
  if (X_obs_raw.rows() != y_obs.size() || X_obs_raw.cols() != X_mis_raw.cols()) {
    throw std::invalid_argument("pmm_impute_column: dimension mismatch");
  }
  const Eigen::MatrixXd X_obs = with_intercept(X_obs_raw);
  const Eigen::MatrixXd X_mis = with_intercept(X_mis_raw);
  const Eigen::Index n = X_obs.rows();
  const Eigen::Index p = X_obs.cols();
  if (n <= p + 2) {
    throw std::invalid_argument("pmm_impute_column: too few observed cases for the predictors");
  }

  PmmResult res;
  Eigen::MatrixXd xtx = X_obs.transpose() * X_obs;
  {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(xtx);
    lu.setThreshold(1e-10);
    if (lu.rank() < p) {
      xtx.diagonal() += options.ridge * xtx.diagonal().cwiseMax(1.0);
      res.ridged = true;
    }
  }
  const Eigen::LLT<Eigen::MatrixXd> llt(xtx);
  const Eigen::VectorXd beta_hat = llt.solve(X_obs.transpose() * y_obs);

  Eigen::VectorXd beta_dot = beta_hat;
  if (!options.deterministic_beta) {
    const double ssr = (y_obs - X_obs * beta_hat).squaredNorm();
    std::chi_squared_distribution<double> chi2(static_cast<double>(n - p));
    const double sigma = std::sqrt(ssr / chi2(rng));
    std::normal_distribution<double> normal;
    Eigen::VectorXd u(p);
    for (Eigen::Index i = 0; i < p; ++i) u(i) = normal(rng);
    // L L' = X'X, so L'^-1 u ~ N(0, (X'X)^-1).
    beta_dot += sigma * llt.matrixU().solve(u);
  }

  const Eigen::VectorXd fit_obs = X_obs * beta_hat;
  const Eigen::VectorXd fit_mis = X_mis * beta_dot;
  const auto k = static_cast<std::size_t>(std::min<Eigen::Index>(donors, n));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  res.values.resize(X_mis.rows());
  for (Eigen::Index i = 0; i < X_mis.rows(); ++i) {
    std::iota(order.begin(), order.end(), Eigen::Index{0});
    const double target = fit_mis(i);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k),
                      order.end(), [&](Eigen::Index a, Eigen::Index b) {
                        const double da = std::abs(fit_obs(a) - target);
                        const double db = std::abs(fit_obs(b) - target);
                        return da < db || (da == db && a < b);
                      });
    std::uniform_int_distribution<std::size_t> pick(0, k - 1);
    res.values(i) = y_obs(order[pick(rng)]);
  }
  return res;
}

ImputationSet mice_chain(const MaskedSeries& series, const MiceConfig& config,
                         std::uint64_t seed) {
  if (config.m < 2) throw std::invalid_argument("mice_chain: m must be >= 2");
  if (config.donors < 1) throw std::invalid_argument("mice_chain: donors must be >= 1");
  if (config.chain_iters < 1) throw std::invalid_argument("mice_chain: chain_iters must be >= 1");

  const int T = series.length();
  const ChainLayout L = make_layout(series, config);
  const int width = L.width;
  std::vector<std::vector<int>> obs_rows;
  std::vector<std::vector<int>> mis_rows;
  for (int j : L.targets) {
    std::vector<int> o;
    std::vector<int> m;
    for (int t = 0; t < T; ++t) (L.mask(t, j) ? m : o).push_back(t);
    if (o.size() < 10) {
      throw std::invalid_argument("mice_chain: column " + std::to_string(j % width + 1) +
                                  " has fewer than 10 observed values");
    }
    obs_rows.push_back(std::move(o));
    mis_rows.push_back(std::move(m));
  }

  ImputationSet set;
  for (int d = 0; d < config.m; ++d) {
    const std::uint64_t chain_seed = derive_seed(seed, 0, 0, Stage::kMice, d);
    set.seeds.push_back(chain_seed);
    Rng rng = make_rng(chain_seed);
    Eigen::MatrixXd work = L.data;
    for (std::size_t i = 0; i < L.targets.size(); ++i) {
      const int j = L.targets[i];
      std::uniform_int_distribution<std::size_t> pick(0, obs_rows[i].size() - 1);
      for (int t : mis_rows[i]) work(t, j) = L.data(obs_rows[i][pick(rng)], j);
    }
    for (int sweep = 0; sweep < config.chain_iters; ++sweep) {
      for (std::size_t i = 0; i < L.targets.size(); ++i) {
        const int j = L.targets[i];
        if (L.passive_lags) refresh_lags(work, width);
        const auto& pred = L.predictors[i];
        const auto& o = obs_rows[i];
        const auto& mr = mis_rows[i];
        Eigen::MatrixXd X_obs(o.size(), pred.size());
        Eigen::VectorXd y_obs(o.size());
        for (std::size_t r = 0; r < o.size(); ++r) {
          for (std::size_t c = 0; c < pred.size(); ++c) X_obs(r, c) = work(o[r], pred[c]);
          y_obs(r) = L.data(o[r], j);
        }
        Eigen::MatrixXd X_mis(mr.size(), pred.size());
        for (std::size_t r = 0; r < mr.size(); ++r) {
          for (std::size_t c = 0; c < pred.size(); ++c) X_mis(r, c) = work(mr[r], pred[c]);
        }
        const PmmResult imp = pmm_impute_column(y_obs, X_obs, X_mis, config.donors, rng);
        if (imp.ridged) ++set.ridge_events;
        for (std::size_t r = 0; r < mr.size(); ++r) work(mr[r], j) = imp.values(r);
      }
    }
    set.datasets.push_back(work.leftCols(width));
  }
  return set;
}

PooledFit rubin_pool(const std::vector<std::vector<ReportedParameter>>& fits) {
  if (fits.size() < 2) throw std::invalid_argument("rubin_pool: need at least two fits");
  const std::size_t k = fits.front().size();
  const double m = static_cast<double>(fits.size());
  PooledFit out;
  out.m = static_cast<int>(fits.size());
  out.q_bar = Eigen::VectorXd::Zero(k);
  out.u_bar = Eigen::VectorXd::Zero(k);
  out.b_m = Eigen::VectorXd::Zero(k);
  out.t_var.resize(k);
  out.se.resize(k);
  out.se_available.assign(k, true);
  for (const auto& f : fits) {
    if (f.size() != k) throw std::invalid_argument("rubin_pool: fits cover different parameters");
  }
  for (std::size_t i = 0; i < k; ++i) {
    out.names.push_back(fits.front()[i].name);
    // Sums in a fixed order of sorted values so that pooling is invariant to
    // the order of the fits.
    std::vector<double> q;
    std::vector<double> u;
    for (const auto& f : fits) {
      if (f[i].name != out.names.back()) {
        throw std::invalid_argument("rubin_pool: fits cover different parameters");
      }
      q.push_back(f[i].estimate);
      u.push_back(f[i].se * f[i].se);
      if (!std::isfinite(f[i].se)) out.se_available[i] = false;
    }
    std::sort(q.begin(), q.end());
    std::sort(u.begin(), u.end());
    if (q.front() == q.back()) {
      out.q_bar(i) = q.front();
      out.b_m(i) = 0.0;
    } else {
      out.q_bar(i) = std::accumulate(q.begin(), q.end(), 0.0) / m;
      double ss = 0.0;
      for (double v : q) ss += (v - out.q_bar(i)) * (v - out.q_bar(i));
      out.b_m(i) = ss / (m - 1.0);
    }
    if (out.se_available[i]) {
      out.u_bar(i) = std::accumulate(u.begin(), u.end(), 0.0) / m;
      out.t_var(i) = out.u_bar(i) + (m + 1.0) / m * out.b_m(i);
      out.se(i) = std::sqrt(out.t_var(i));
    } else {
      out.u_bar(i) = kNaN;
      out.t_var(i) = kNaN;
      out.se(i) = kNaN;
    }
  }
  return out;
}

PooledFit rubin_pool(const std::vector<FitResult>& fits, bool free_gamma21) {
  std::vector<std::vector<ReportedParameter>> reported;
  reported.reserve(fits.size());
  for (const auto& f : fits) reported.push_back(reported_parameters(f, free_gamma21));
  return rubin_pool(reported);
}

}  // namespace ssmiss
