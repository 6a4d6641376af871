#include "ssmiss/kalman.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace ssmiss {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;

std::vector<int> observed_indices(const MissingRow& missing) {
  std::vector<int> idx;
  for (int i = 0; i < missing.size(); ++i) {
    if (!missing(i)) idx.push_back(i);
  }
  return idx;
}

}  // namespace

FilterState stationary_init(const ModelParams& params) {
  return {Eigen::VectorXd::Zero(params.states()), stationary_covariance(params)};
}

FilterState diffuse_init(int states, double scale) {
  return {Eigen::VectorXd::Zero(states),
          scale * Eigen::MatrixXd::Identity(states, states)};
}

FilterState time_update(const FilterState& state, const ModelParams& params) {
  FilterState out;
  out.x = params.A * state.x;
  out.P = params.A * state.P * params.A.transpose() + params.Q;
  symmetrize(out.P);
  return out;
}

UpdateResult measurement_update(const FilterState& predicted,
                                const Eigen::VectorXd& z,
                                const MissingRow& missing,
                                const ModelParams& params) {
  const std::vector<int> obs = observed_indices(missing);
  if (obs.empty()) return {predicted, 0.0};

  const int k = static_cast<int>(obs.size());
  const int n = params.states();
  Eigen::MatrixXd H(k, n);
  Eigen::MatrixXd R(k, k);
  Eigen::VectorXd e(k);
  for (int a = 0; a < k; ++a) {
    H.row(a) = params.H.row(obs[a]);
    for (int b = 0; b < k; ++b) R(a, b) = params.R(obs[a], obs[b]);
  }
  for (int a = 0; a < k; ++a) e(a) = z(obs[a]) - H.row(a).dot(predicted.x);

  Eigen::MatrixXd S = H * predicted.P * H.transpose() + R;
  symmetrize(S);
  Eigen::LLT<Eigen::MatrixXd> llt(S);
  if (llt.info() != Eigen::Success) {
    throw FilterError("measurement_update: innovation covariance is not invertible");
  }
  const Eigen::MatrixXd PHt = predicted.P * H.transpose();
  const Eigen::MatrixXd K = llt.solve(PHt.transpose()).transpose();

  UpdateResult out;
  out.state.x = predicted.x + K * e;
  const Eigen::MatrixXd IKH = Eigen::MatrixXd::Identity(n, n) - K * H;
  out.state.P = IKH * predicted.P * IKH.transpose() + K * R * K.transpose();
  symmetrize(out.state.P);

  const Eigen::MatrixXd L = llt.matrixL();
  const double logdet = 2.0 * L.diagonal().array().log().sum();
  const double quad = e.dot(llt.solve(e));
  out.loglik_increment = -0.5 * (k * kLog2Pi + logdet + quad);
  return out;
}

UpdateResult measurement_update_information(const FilterState& predicted,
                                            const Eigen::VectorXd& z,
                                            const MissingRow& missing,
                                            const ModelParams& params) {
  const std::vector<int> obs = observed_indices(missing);
  if (obs.empty()) return {predicted, 0.0};

  const int n = params.states();
  Eigen::MatrixXd J = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(n);
  double quad = 0.0;
  double logdet_r = 0.0;
  for (int i : obs) {
    const double r = params.R(i, i);
    if (!(r > 0.0)) {
      throw FilterError("measurement_update_information: needs R_ii > 0");
    }
    const Eigen::VectorXd h = params.H.row(i).transpose();
    const double e = z(i) - h.dot(predicted.x);
    J += h * h.transpose() / r;
    b += h * (e / r);
    quad += e * e / r;
    logdet_r += std::log(r);
  }
  Eigen::LLT<Eigen::MatrixXd> prior(predicted.P);
  if (prior.info() != Eigen::Success) {
    throw FilterError("measurement_update_information: predicted P not PD");
  }
  const Eigen::MatrixXd Pinv = prior.solve(Eigen::MatrixXd::Identity(n, n));
  Eigen::MatrixXd M = Pinv + J;
  symmetrize(M);
  Eigen::LLT<Eigen::MatrixXd> post(M);
  if (post.info() != Eigen::Success) {
    throw FilterError("measurement_update_information: posterior precision not PD");
  }
  UpdateResult out;
  out.state.P = post.solve(Eigen::MatrixXd::Identity(n, n));
  symmetrize(out.state.P);
  out.state.x = predicted.x + out.state.P * b;

  const Eigen::MatrixXd Lp = prior.matrixL();
  const Eigen::MatrixXd Lm = post.matrixL();
  const double logdet_s = logdet_r + 2.0 * Lp.diagonal().array().log().sum() +
                          2.0 * Lm.diagonal().array().log().sum();
  const double q = quad - b.dot(out.state.P * b);
  out.loglik_increment =
      -0.5 * (static_cast<double>(obs.size()) * kLog2Pi + logdet_s + q);
  return out;
}

FilterOutput filter_series(const MaskedSeries& series, const ModelParams& params,
                           const FilterState& init) {
  const int T = series.length();
  if (T < 1) throw std::invalid_argument("filter_series: empty series");
  const int n = params.states();
  FilterOutput out;
  out.filtered_means.resize(T, n);
  out.predicted_means.resize(T, n);
  out.filtered_covs.reserve(T);
  out.predicted_covs.reserve(T);

  FilterState state = init;
  for (int t = 0; t < T; ++t) {
    const FilterState pred = time_update(state, params);
    out.predicted_means.row(t) = pred.x.transpose();
    out.predicted_covs.push_back(pred.P);
    const MissingRow missing = series.mask.row(t).transpose();
    UpdateResult upd =
        measurement_update(pred, series.z.row(t).transpose(), missing, params);
    state = std::move(upd.state);
    out.loglik += upd.loglik_increment;
    out.filtered_means.row(t) = state.x.transpose();
    out.filtered_covs.push_back(state.P);
  }
  return out;
}

}  // namespace ssmiss
