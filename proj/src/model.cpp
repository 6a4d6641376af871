#include "ssmiss/model.hpp"

#include <cmath>
#include <random>
#include <string>

#include <Eigen/Eigenvalues>

#include "ssmiss/rng.hpp"

namespace ssmiss {

namespace {

bool near(double a, double b) { return std::abs(a - b) < 1e-12; }

Eigen::VectorXi cycling_days(int T) {
  Eigen::VectorXi days(T);
  for (int t = 0; t < T; ++t) days(t) = t % kBeepsPerDay + 1;
  return days;
}

}  // namespace

MaskedSeries MaskedSeries::unmasked() const {
  MaskedSeries out = *this;
  out.mask.setConstant(false);
  return out;
}

MaskedSeries make_series(Eigen::MatrixXd z) {
  MaskedSeries s;
  const int T = static_cast<int>(z.rows());
  s.mask = MaskMatrix::Constant(T, z.cols(), false);
  s.z = std::move(z);
  s.day_index = cycling_days(T);
  return s;
}

double spectral_radius(const Eigen::MatrixXd& A) {
  if (A.size() == 0) return 0.0;
  Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

void validate(const ModelParams& p) {
  const int n = p.states();
  const int m = p.indicators();
  if (p.A.cols() != n || p.H.cols() != n || p.Q.rows() != n ||
      p.Q.cols() != n || p.R.rows() != m || p.R.cols() != m) {
    throw std::invalid_argument("ModelParams: inconsistent matrix sizes");
  }
  if (spectral_radius(p.A) >= 1.0) {
    throw NonStationaryError("ModelParams: spectral radius of A must be < 1");
  }
  if ((p.Q - p.Q.transpose()).cwiseAbs().maxCoeff() > 1e-12) {
    throw std::invalid_argument("ModelParams: Q must be symmetric");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> qs(p.Q);
  if (qs.eigenvalues().minCoeff() < -1e-10) {
    throw std::invalid_argument("ModelParams: Q must be PSD");
  }
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      if (i != j && p.R(i, j) != 0.0) {
        throw std::invalid_argument("ModelParams: R must be diagonal");
      }
    }
    if (p.R(i, i) < 0.0) {
      throw std::invalid_argument("ModelParams: R must be nonnegative");
    }
  }
}

ModelParams make_condition(double sigma2, double alpha, double gamma) {
  if (!(sigma2 > 0.0 && sigma2 < 1.0)) {
    throw std::invalid_argument("invalid condition: sigma2 must lie in (0,1), got " +
                                std::to_string(sigma2));
  }
  const double lambda = std::sqrt(1.0 - sigma2);
  ModelParams p;
  p.A.resize(kStates, kStates);
  p.A << alpha, gamma, 0.0, alpha;
  p.Q = Eigen::MatrixXd::Identity(kStates, kStates);
  p.R = sigma2 * Eigen::MatrixXd::Identity(kIndicators, kIndicators);
  p.H = Eigen::MatrixXd::Zero(kIndicators, kStates);
  p.H.block(0, 0, 3, 1).setConstant(lambda);
  p.H.block(3, 1, 3, 1).setConstant(lambda);
  return p;
}

bool is_paper_condition(double sigma2, double alpha, double gamma) {
  const bool s = near(sigma2, 0.25) || near(sigma2, 0.75);
  const bool a = near(alpha, 0.2) || near(alpha, 0.7);
  const bool g = near(gamma, 0.0) || near(gamma, 0.15) || near(gamma, 0.3);
  return s && a && g;
}

Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& Q) {
  const int n = static_cast<int>(A.rows());
  if (spectral_radius(A) >= 1.0) {
    throw NonStationaryError("stationary_covariance: A is not stable");
  }
  // vec(Sigma) = vec(Q) + (A kron A) vec(Sigma), column-major vec.
  const int nn = n * n;
  Eigen::MatrixXd system = Eigen::MatrixXd::Identity(nn, nn);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      for (int k = 0; k < n; ++k) {
        for (int l = 0; l < n; ++l) {
          // (A Sigma A')_{ij} = sum_{kl} A_ik Sigma_kl A_jl
          system(i + j * n, k + l * n) -= A(i, k) * A(j, l);
        }
      }
    }
  }
  const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(Q.data(), nn);
  const Eigen::VectorXd sol = system.partialPivLu().solve(rhs);
  Eigen::MatrixXd sigma = Eigen::Map<const Eigen::MatrixXd>(sol.data(), n, n);
  return 0.5 * (sigma + sigma.transpose());
}

Eigen::MatrixXd stationary_covariance(const ModelParams& params) {
  return stationary_covariance(params.A, params.Q);
}

MaskedSeries simulate(const ModelParams& params, int T, std::uint64_t seed,
                      int burn_in) {
  if (T < 1) throw std::invalid_argument("simulate: T must be >= 1");
  if (burn_in < 0) throw std::invalid_argument("simulate: burn_in must be >= 0");
  validate(params);

  const int n = params.states();
  const int m = params.indicators();
  Rng rng = make_rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  auto draw = [&](int k) {
    Eigen::VectorXd v(k);
    for (int i = 0; i < k; ++i) v(i) = normal(rng);
    return v;
  };

  const Eigen::MatrixXd sigma0 = stationary_covariance(params);
  // LDLT square roots tolerate singular (PSD) covariances.
  auto factor = [](const Eigen::MatrixXd& S) {
    Eigen::LDLT<Eigen::MatrixXd> f(S);
    Eigen::MatrixXd L = f.matrixL();
    Eigen::VectorXd d = f.vectorD().cwiseMax(0.0).cwiseSqrt();
    return Eigen::MatrixXd(f.transpositionsP().transpose() * L * d.asDiagonal());
  };
  const Eigen::MatrixXd root0 = factor(sigma0);
  const Eigen::MatrixXd root_q = factor(params.Q);
  const Eigen::VectorXd r_sd = params.R.diagonal().cwiseMax(0.0).cwiseSqrt();

  Eigen::VectorXd x = root0 * draw(n);
  for (int b = 0; b < burn_in; ++b) x = params.A * x + root_q * draw(n);

  MaskedSeries out;
  out.z.resize(T, m);
  LatentTrajectory truth;
  truth.x.resize(T, n);
  for (int t = 0; t < T; ++t) {
    x = params.A * x + root_q * draw(n);
    truth.x.row(t) = x.transpose();
    const Eigen::VectorXd w = r_sd.cwiseProduct(draw(m));
    out.z.row(t) = (params.H * x + w).transpose();
  }
  out.mask = MaskMatrix::Constant(T, m, false);
  out.truth = std::move(truth);
  out.day_index = cycling_days(T);
  return out;
}

}  // namespace ssmiss
