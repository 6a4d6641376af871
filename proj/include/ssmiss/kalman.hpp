#pragma once

#include <stdexcept>
#include <vector>

#include <Eigen/Dense>

#include "ssmiss/model.hpp"

namespace ssmiss {

class FilterError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FilterState {
  Eigen::VectorXd x;
  Eigen::MatrixXd P;
};

struct UpdateResult {
  FilterState state;
  double loglik_increment = 0.0;
};

struct FilterOutput {
  Eigen::MatrixXd filtered_means;  // T x states
  std::vector<Eigen::MatrixXd> filtered_covs;
  Eigen::MatrixXd predicted_means;  // T x states
  std::vector<Eigen::MatrixXd> predicted_covs;
  double loglik = 0.0;
};

using MissingRow = Eigen::Array<bool, Eigen::Dynamic, 1>;

inline constexpr double kDiffuseScale = 1e7;

/// x0 = 0, P0 = stationary covariance of the model.
FilterState stationary_init(const ModelParams& params);
/// x0 = 0, P0 = scale * I.
FilterState diffuse_init(int states, double scale = kDiffuseScale);

/// (A x, A P A' + Q), symmetrised.
FilterState time_update(const FilterState& state, const ModelParams& params);

/// Gaussian update on the observed entries of `z` (covariance form with the
/// Joseph-stabilised covariance). A fully missing row leaves the state as is
/// and contributes zero log-likelihood.
UpdateResult measurement_update(const FilterState& predicted,
                                const Eigen::VectorXd& z,
                                const MissingRow& missing,
                                const ModelParams& params);

/// Same update in information form,
///   P = (Pbar^-1 + H' R^-1 H)^-1,  x = xbar + P H' R^-1 (z - H xbar),
/// with the log-density obtained through the matrix determinant lemma.
/// Needs positive observed measurement variances.
UpdateResult measurement_update_information(const FilterState& predicted,
                                            const Eigen::VectorXd& z,
                                            const MissingRow& missing,
                                            const ModelParams& params);

/// Alternates time and measurement updates over the series. Predicted states
/// at fully missing rows are the filter's state-level imputation.
FilterOutput filter_series(const MaskedSeries& series, const ModelParams& params,
                           const FilterState& init);

inline void symmetrize(Eigen::MatrixXd& P) { P = 0.5 * (P + P.transpose()).eval(); }

}  // namespace ssmiss
