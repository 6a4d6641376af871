#pragma once

#include <functional>

#include <Eigen/Dense>

namespace ssmiss {

/// Objective returning f(x) and, when `grad` is non-null, its gradient.
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  int max_iter = 1000;
  double rel_tol = 1e-9;   // relative change in f
  double grad_tol = 1e-5;  // infinity norm of the gradient
};

struct BfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  int iterations = 0;
  int evaluations = 0;
  bool converged = false;
};

/// Quasi-Newton minimisation with an inverse-Hessian BFGS update and a
/// backtracking line search on the Armijo condition. Converged means both the
/// relative change in f and the gradient norm fell below tolerance.
BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0,
                         const BfgsOptions& options = {});

/// Central differences of an analytic gradient, symmetrised.
Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x,
                                  double rel_step = 1e-4);

struct NewtonPolish {
  int steps = 0;
  int evaluations = 0;
};

/// Newton steps with the numerical Hessian from a BFGS end point, accepted
/// while they reduce the gradient norm. Used where BFGS stalls on rounding
/// noise in f just short of the gradient tolerance. Updates `state` in place
/// and recomputes its converged flag from the gradient.
NewtonPolish polish_newton(const Objective& f, BfgsResult& state,
                           const BfgsOptions& options, int max_steps = 5);

}  // namespace ssmiss
