#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ssmiss/model.hpp"

namespace ssmiss {

/// Free parameters of the constrained two-state, six-indicator model.
/// Q is fixed at I and A(2,1) is fixed at 0 unless gamma21 is freed.
/// Indicators 1-3 load on state 1 and 4-6 on state 2.
struct ParamVector {
  double alpha11 = 0.5;
  double alpha22 = 0.5;
  double gamma12 = 0.0;
  double gamma21 = 0.0;
  std::array<double, kIndicators> lambda{};
  std::array<double, kIndicators> logvar{};

  /// Layout: alpha11, alpha22, gamma12, lambda1..6, logvar1..6[, gamma21].
  Eigen::VectorXd to_vector(bool free_gamma21 = false) const;
  static ParamVector from_vector(const Eigen::VectorXd& v,
                                 bool free_gamma21 = false);

  ModelParams to_model() const;
  /// Reads A, H and diag(R) of a model with the block loading pattern.
  static ParamVector from_model(const ModelParams& params);

  /// Flips each state's loadings (and the cross-lags touching that state)
  /// so that the block's loading sum is nonnegative. Likelihood-preserving.
  ParamVector sign_normalized() const;

  static std::vector<std::string> names(bool free_gamma21 = false);
};

enum class InitMode { kStationary, kDiffuse };

struct LikelihoodOptions {
  bool free_gamma21 = false;
  InitMode init = InitMode::kStationary;
};

/// Negative log-likelihood from the Kalman filter. Numerical failure yields
/// kPenalty and sets `failed` when given.
double neg_loglik(const ParamVector& theta, const MaskedSeries& series,
                  const LikelihoodOptions& options = {},
                  bool* failed = nullptr);

inline constexpr double kPenalty = 1e10;

/// Series preprocessed for repeated likelihood evaluation.
class LikelihoodProblem {
 public:
  LikelihoodProblem(const MaskedSeries& series, LikelihoodOptions options);

  int dimension() const { return options_.free_gamma21 ? 16 : 15; }
  const LikelihoodOptions& options() const { return options_; }

  /// Value only.
  double value(const Eigen::VectorXd& theta, bool* failed = nullptr) const;
  /// Value and exact gradient (forward-mode automatic differentiation).
  double value_and_gradient(const Eigen::VectorXd& theta, Eigen::VectorXd& grad,
                            bool* failed = nullptr) const;

 private:
  LikelihoodOptions options_;
  int T_ = 0;
  std::vector<std::array<double, kIndicators>> z_;
  std::vector<unsigned> observed_;  // bit i set = indicator i observed
};

struct FitOptions {
  LikelihoodOptions likelihood;
  int max_iter = 1000;
  double rel_tol = 1e-9;
  double grad_tol = 1e-5;
  bool multistart = false;  // two extra perturbed starts
  bool compute_se = true;
};

struct FitResult {
  ParamVector estimates;
  std::vector<std::string> names;
  Eigen::VectorXd std_errors;  // per free parameter, NaN when unavailable
  bool se_available = false;
  double loglik = 0.0;
  bool converged = false;
  int n_iter = 0;
  bool nonstationary = false;  // |eigenvalue of A-hat| >= 1
  std::array<double, kIndicators> lambda2{};
  std::array<double, kIndicators> lambda2_se{};
  std::array<double, kIndicators> sigma2{};
  std::array<double, kIndicators> sigma2_se{};
};

/// alpha = 0.5, gamma = 0; each column's sample variance split evenly between
/// the squared loading and the measurement variance. Columns with fewer than
/// two observed values get lambda = 1, logvar = 0.
ParamVector default_init(const MaskedSeries& series);

FitResult fit_mle(const MaskedSeries& series, const ParamVector& init,
                  const FitOptions& options = {});
FitResult fit_mle(const MaskedSeries& series, const FitOptions& options = {});

/// Estimates and SEs on the reporting scale, keyed by parameter name:
/// alpha11, alpha22, gamma12[, gamma21], lambda2_1..6, sigma2_1..6.
struct ReportedParameter {
  std::string name;
  double estimate = 0.0;
  double se = 0.0;  // NaN when unavailable
};
std::vector<ReportedParameter> reported_parameters(const FitResult& fit,
                                                   bool free_gamma21 = false);
/// Truth on the same scale and in the same order.
std::vector<ReportedParameter> reported_truth(const ModelParams& params,
                                              bool free_gamma21 = false);

}  // namespace ssmiss
