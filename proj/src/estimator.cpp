#include "ssmiss/estimator.hpp"

#include <cmath>
#include <limits>

#include <unsupported/Eigen/AutoDiff>

#include "info_filter.hpp"
#include "ssmiss/optimize.hpp"

namespace ssmiss {

namespace {

constexpr int kMaxParams = 16;
using Derivative = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, kMaxParams, 1>;
using Dual = Eigen::AutoDiffScalar<Derivative>;

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

// ---------------------------------------------------------------------------
// ParamVector

Eigen::VectorXd ParamVector::to_vector(bool free_gamma21) const {
  Eigen::VectorXd v(free_gamma21 ? 16 : 15);
  v(0) = alpha11;
  v(1) = alpha22;
  v(2) = gamma12;
  for (int i = 0; i < kIndicators; ++i) {
    v(3 + i) = lambda[i];
    v(9 + i) = logvar[i];
  }
  if (free_gamma21) v(15) = gamma21;
  return v;
}

ParamVector ParamVector::from_vector(const Eigen::VectorXd& v, bool free_gamma21) {
  const Eigen::Index expected = free_gamma21 ? 16 : 15;
  if (v.size() != expected) {
    throw std::invalid_argument("ParamVector::from_vector: wrong length");
  }
  ParamVector p;
  p.alpha11 = v(0);
  p.alpha22 = v(1);
  p.gamma12 = v(2);
  for (int i = 0; i < kIndicators; ++i) {
    p.lambda[i] = v(3 + i);
    p.logvar[i] = v(9 + i);
  }
  p.gamma21 = free_gamma21 ? v(15) : 0.0;
  return p;
}

ModelParams ParamVector::to_model() const {
  ModelParams m;
  m.A.resize(kStates, kStates);
  m.A << alpha11, gamma12, gamma21, alpha22;
  m.Q = Eigen::MatrixXd::Identity(kStates, kStates);
  m.H = Eigen::MatrixXd::Zero(kIndicators, kStates);
  m.R = Eigen::MatrixXd::Zero(kIndicators, kIndicators);
  for (int i = 0; i < kIndicators; ++i) {
    m.H(i, i < 3 ? 0 : 1) = lambda[i];
    m.R(i, i) = std::exp(logvar[i]);
  }
  return m;
}

ParamVector ParamVector::from_model(const ModelParams& params) {
  if (params.states() != kStates || params.indicators() != kIndicators) {
    throw std::invalid_argument("ParamVector::from_model: expects a 2x6 model");
  }
  ParamVector p;
  p.alpha11 = params.A(0, 0);
  p.gamma12 = params.A(0, 1);
  p.gamma21 = params.A(1, 0);
  p.alpha22 = params.A(1, 1);
  for (int i = 0; i < kIndicators; ++i) {
    p.lambda[i] = params.H(i, i < 3 ? 0 : 1);
    p.logvar[i] = std::log(params.R(i, i));
  }
  return p;
}

ParamVector ParamVector::sign_normalized() const {
  ParamVector p = *this;
  for (int block = 0; block < 2; ++block) {
    double sum = 0.0;
    for (int i = 3 * block; i < 3 * block + 3; ++i) sum += p.lambda[i];
    if (sum < 0.0) {
      for (int i = 3 * block; i < 3 * block + 3; ++i) p.lambda[i] = -p.lambda[i];
      // Negating state k flips A(k, j) and A(j, k) for j != k.
      p.gamma12 = -p.gamma12;
      p.gamma21 = -p.gamma21;
    }
  }
  return p;
}

std::vector<std::string> ParamVector::names(bool free_gamma21) {
  std::vector<std::string> n = {"alpha11", "alpha22", "gamma12"};
  for (int i = 1; i <= kIndicators; ++i) n.push_back("lambda" + std::to_string(i));
  for (int i = 1; i <= kIndicators; ++i) n.push_back("logvar" + std::to_string(i));
  if (free_gamma21) n.push_back("gamma21");
  return n;
}

// ---------------------------------------------------------------------------
// Likelihood

LikelihoodProblem::LikelihoodProblem(const MaskedSeries& series,
                                     LikelihoodOptions options)
    : options_(options), T_(series.length()) {
  if (series.width() != kIndicators) {
    throw std::invalid_argument("LikelihoodProblem: expects six indicators");
  }
  z_.resize(T_);
  observed_.resize(T_);
  for (int t = 0; t < T_; ++t) {
    unsigned bits = 0;
    for (int i = 0; i < kIndicators; ++i) {
      const bool missing = series.mask(t, i) || !std::isfinite(series.z(t, i));
      z_[t][i] = missing ? 0.0 : series.z(t, i);
      if (!missing) bits |= 1u << i;
    }
    observed_[t] = bits;
  }
}

double LikelihoodProblem::value(const Eigen::VectorXd& theta, bool* failed) const {
  if (theta.size() != dimension()) {
    throw std::invalid_argument("LikelihoodProblem: wrong parameter length");
  }
  bool fail = !theta.allFinite();
  double ll = 0.0;
  if (!fail) ll = detail::info_loglik<double>(theta.data(), options_, T_, z_,
                                              observed_, fail);
  if (failed) *failed = fail;
  return fail ? kPenalty : -ll;
}

double LikelihoodProblem::value_and_gradient(const Eigen::VectorXd& theta,
                                             Eigen::VectorXd& grad,
                                             bool* failed) const {
  const int n = dimension();
  if (theta.size() != n) {
    throw std::invalid_argument("LikelihoodProblem: wrong parameter length");
  }
  grad = Eigen::VectorXd::Zero(n);
  bool fail = !theta.allFinite();
  if (fail) {
    if (failed) *failed = true;
    return kPenalty;
  }
  std::array<Dual, kMaxParams> th;
  for (int i = 0; i < n; ++i) {
    th[i] = Dual(theta(i), Derivative::Unit(n, i));
  }
  const Dual ll =
      detail::info_loglik<Dual>(th.data(), options_, T_, z_, observed_, fail);
  if (failed) *failed = fail;
  if (fail) return kPenalty;
  if (ll.derivatives().size() == n) grad = -ll.derivatives();
  return -ll.value();
}

double neg_loglik(const ParamVector& theta, const MaskedSeries& series,
                  const LikelihoodOptions& options, bool* failed) {
  const LikelihoodProblem problem(series, options);
  return problem.value(theta.to_vector(options.free_gamma21), failed);
}

// ---------------------------------------------------------------------------
// Fitting

ParamVector default_init(const MaskedSeries& series) {
  ParamVector p;
  p.alpha11 = 0.5;
  p.alpha22 = 0.5;
  p.gamma12 = 0.0;
  p.gamma21 = 0.0;
  for (int i = 0; i < kIndicators; ++i) {
    double sum = 0.0;
    double sq = 0.0;
    int n = 0;
    for (int t = 0; t < series.length(); ++t) {
      if (series.mask(t, i)) continue;
      const double v = series.z(t, i);
      sum += v;
      sq += v * v;
      ++n;
    }
    if (n < 2) {
      p.lambda[i] = 1.0;
      p.logvar[i] = 0.0;
      continue;
    }
    const double mean = sum / n;
    const double var = std::max((sq - n * mean * mean) / (n - 1), 1e-8);
    p.lambda[i] = std::sqrt(0.5 * var);
    p.logvar[i] = std::log(0.5 * var);
  }
  return p;
}

namespace {

void fill_standard_errors(FitResult& fit, const LikelihoodProblem& problem,
                          const Objective& objective) {
  const int n = problem.dimension();
  const Eigen::VectorXd x = fit.estimates.to_vector(problem.options().free_gamma21);
  fit.std_errors = Eigen::VectorXd::Constant(n, kNaN);
  fit.se_available = false;

  const Eigen::MatrixXd H = numerical_hessian(objective, x);
  if (H.allFinite()) {
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() == Eigen::Success) {
      const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(n, n));
      const Eigen::VectorXd d = cov.diagonal();
      if ((d.array() > 0.0).all() && d.allFinite()) {
        fit.std_errors = d.cwiseSqrt();
        fit.se_available = true;
      }
    }
  }
}

void fill_derived(FitResult& fit) {
  for (int i = 0; i < kIndicators; ++i) {
    const double lam = fit.estimates.lambda[i];
    const double s2 = std::exp(fit.estimates.logvar[i]);
    fit.lambda2[i] = lam * lam;
    fit.sigma2[i] = s2;
    // Delta method.
    fit.lambda2_se[i] = fit.se_available ? 2.0 * std::abs(lam) * fit.std_errors(3 + i)
                                         : kNaN;
    fit.sigma2_se[i] = fit.se_available ? s2 * fit.std_errors(9 + i) : kNaN;
  }
}

}  // namespace

FitResult fit_mle(const MaskedSeries& series, const ParamVector& init,
                  const FitOptions& options) {
  const bool g21 = options.likelihood.free_gamma21;
  const LikelihoodProblem problem(series, options.likelihood);
  const Objective objective = [&problem](const Eigen::VectorXd& x,
                                         Eigen::VectorXd* grad) {
    if (grad) return problem.value_and_gradient(x, *grad);
    return problem.value(x);
  };

  BfgsOptions bo;
  bo.max_iter = options.max_iter;
  bo.rel_tol = options.rel_tol;
  bo.grad_tol = options.grad_tol;

  std::vector<Eigen::VectorXd> starts = {init.to_vector(g21)};
  if (options.multistart) {
    // Deterministic perturbations of the dynamics block.
    for (double shift : {-0.3, 0.3}) {
      ParamVector p = init;
      p.alpha11 = std::clamp(init.alpha11 + shift, -0.9, 0.9);
      p.alpha22 = std::clamp(init.alpha22 + shift, -0.9, 0.9);
      starts.push_back(p.to_vector(g21));
    }
  }

  BfgsResult best;
  bool have = false;
  int total_iter = 0;
  for (const Eigen::VectorXd& x0 : starts) {
    BfgsResult r = minimize_bfgs(objective, x0, bo);
    if (!r.converged && r.f < kPenalty) polish_newton(objective, r, bo);
    total_iter += r.iterations;
    if (!have || r.f < best.f) {
      best = std::move(r);
      have = true;
    }
  }

  FitResult fit;
  fit.names = ParamVector::names(g21);
  fit.n_iter = total_iter;
  fit.converged = best.converged && best.f < kPenalty;
  fit.loglik = -best.f;
  fit.estimates = ParamVector::from_vector(best.x, g21).sign_normalized();
  fit.nonstationary =
      detail::spectral_radius2(fit.estimates.alpha11, fit.estimates.gamma12,
                               fit.estimates.gamma21, fit.estimates.alpha22) >= 1.0;
  if (options.compute_se) {
    fill_standard_errors(fit, problem, objective);
  } else {
    fit.std_errors = Eigen::VectorXd::Constant(problem.dimension(), kNaN);
  }
  fill_derived(fit);
  return fit;
}

FitResult fit_mle(const MaskedSeries& series, const FitOptions& options) {
  return fit_mle(series, default_init(series), options);
}

std::vector<ReportedParameter> reported_parameters(const FitResult& fit,
                                                   bool free_gamma21) {
  const auto se = [&](int i) {
    return fit.se_available ? fit.std_errors(i) : kNaN;
  };
  std::vector<ReportedParameter> out;
  out.push_back({"alpha11", fit.estimates.alpha11, se(0)});
  out.push_back({"alpha22", fit.estimates.alpha22, se(1)});
  out.push_back({"gamma12", fit.estimates.gamma12, se(2)});
  if (free_gamma21) out.push_back({"gamma21", fit.estimates.gamma21, se(15)});
  for (int i = 0; i < kIndicators; ++i) {
    out.push_back({"lambda2_" + std::to_string(i + 1), fit.lambda2[i], fit.lambda2_se[i]});
  }
  for (int i = 0; i < kIndicators; ++i) {
    out.push_back({"sigma2_" + std::to_string(i + 1), fit.sigma2[i], fit.sigma2_se[i]});
  }
  return out;
}

std::vector<ReportedParameter> reported_truth(const ModelParams& params,
                                              bool free_gamma21) {
  const ParamVector p = ParamVector::from_model(params);
  std::vector<ReportedParameter> out;
  out.push_back({"alpha11", p.alpha11, 0.0});
  out.push_back({"alpha22", p.alpha22, 0.0});
  out.push_back({"gamma12", p.gamma12, 0.0});
  if (free_gamma21) out.push_back({"gamma21", p.gamma21, 0.0});
  for (int i = 0; i < kIndicators; ++i) {
    out.push_back({"lambda2_" + std::to_string(i + 1), p.lambda[i] * p.lambda[i], 0.0});
  }
  for (int i = 0; i < kIndicators; ++i) {
    out.push_back({"sigma2_" + std::to_string(i + 1), params.R(i, i), 0.0});
  }
  return out;
}

}  // namespace ssmiss
