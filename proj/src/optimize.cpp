#include "ssmiss/optimize.hpp"

#include <algorithm>
#include <cmath>

namespace ssmiss {

namespace {

constexpr double kArmijo = 1e-4;
constexpr int kMaxBacktracks = 50;
constexpr double kMaxStep = 1.0;  // infinity-norm cap on a single step

}  // namespace

BfgsResult minimize_bfgs(const Objective& f, Eigen::VectorXd x0,
                         const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  BfgsResult res;
  res.x = std::move(x0);
  res.grad.resize(n);
  res.f = f(res.x, &res.grad);
  res.evaluations = 1;
  if (!std::isfinite(res.f)) return res;

  Eigen::MatrixXd Hinv = Eigen::MatrixXd::Identity(n, n);
  bool fresh = true;  // Hinv has not been updated yet
  Eigen::VectorXd g_new(n);
  int stalls = 0;

  for (res.iterations = 0; res.iterations < options.max_iter; ++res.iterations) {
    Eigen::VectorXd p = -Hinv * res.grad;
    double slope = res.grad.dot(p);
    if (!(slope < 0.0)) {
      Hinv.setIdentity();
      fresh = true;
      p = -res.grad;
      slope = res.grad.dot(p);
    }
    const double pmax = p.cwiseAbs().maxCoeff();
    double t = pmax > kMaxStep ? kMaxStep / pmax : 1.0;

    bool accepted = false;
    double f_new = 0.0;
    Eigen::VectorXd x_new(n);
    for (int k = 0; k < kMaxBacktracks; ++k) {
      x_new = res.x + t * p;
      f_new = f(x_new, nullptr);
      ++res.evaluations;
      if (std::isfinite(f_new) && f_new <= res.f + kArmijo * t * slope) {
        accepted = true;
        break;
      }
      t *= 0.5;
    }
    if (!accepted) {
      if (!fresh) {
        Hinv.setIdentity();
        fresh = true;
        continue;
      }
      res.converged = res.grad.cwiseAbs().maxCoeff() < options.grad_tol;
      break;
    }

    f_new = f(x_new, &g_new);
    ++res.evaluations;
    // Steps that no longer change f (rounding-level noise) end the search.
    stalls = (res.f - f_new) <= 1e-3 * options.rel_tol * std::max(1.0, std::abs(f_new))
                 ? stalls + 1
                 : 0;
    const Eigen::VectorXd s = x_new - res.x;
    const Eigen::VectorXd y = g_new - res.grad;
    const double rel_change = std::abs(res.f - f_new) / std::max(1.0, std::abs(f_new));
    res.x = x_new;
    res.f = f_new;
    res.grad = g_new;

    if (rel_change < options.rel_tol &&
        res.grad.cwiseAbs().maxCoeff() < options.grad_tol) {
      res.converged = true;
      ++res.iterations;
      break;
    }

    if (stalls >= 3) break;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      if (fresh) {
        Hinv *= sy / y.squaredNorm();
        fresh = false;
      }
      const double rho = 1.0 / sy;
      const Eigen::VectorXd Hy = Hinv * y;
      // Inverse BFGS update, expanded to avoid forming (I - rho s y').
      Hinv += (rho * rho * y.dot(Hy) + rho) * (s * s.transpose()) -
              rho * (Hy * s.transpose() + s * Hy.transpose());
    }
  }
  return res;
}

Eigen::MatrixXd numerical_hessian(const Objective& f, const Eigen::VectorXd& x,
                                  double rel_step) {
  const Eigen::Index n = x.size();
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd gp(n);
  Eigen::VectorXd gm(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double h = rel_step * std::max(1.0, std::abs(x(i)));
    Eigen::VectorXd xp = x;
    Eigen::VectorXd xm = x;
    xp(i) += h;
    xm(i) -= h;
    f(xp, &gp);
    f(xm, &gm);
    H.col(i) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

NewtonPolish polish_newton(const Objective& f, BfgsResult& state,
                           const BfgsOptions& options, int max_steps) {
  NewtonPolish out;
  const Eigen::Index n = state.x.size();
  Eigen::VectorXd g(n);
  for (int k = 0; k < max_steps; ++k) {
    if (state.grad.cwiseAbs().maxCoeff() < options.grad_tol) break;
    const Eigen::MatrixXd H = numerical_hessian(f, state.x);
    out.evaluations += 2 * static_cast<int>(n);
    Eigen::LLT<Eigen::MatrixXd> llt(H);
    if (llt.info() != Eigen::Success) break;
    const Eigen::VectorXd step = llt.solve(state.grad);
    const Eigen::VectorXd x_new = state.x - step;
    const double f_new = f(x_new, &g);
    ++out.evaluations;
    // Accept on gradient reduction; f is flat to rounding here.
    if (!std::isfinite(f_new) ||
        f_new > state.f + 1e-10 * std::max(1.0, std::abs(state.f)) ||
        g.cwiseAbs().maxCoeff() >= state.grad.cwiseAbs().maxCoeff()) {
      break;
    }
    state.x = x_new;
    state.f = f_new;
    state.grad = g;
    ++out.steps;
  }
  state.converged = state.grad.cwiseAbs().maxCoeff() < options.grad_tol;
  return out;
}

}  // namespace ssmiss
