#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ssmiss/kalman.hpp"
#include "ssmiss/model.hpp"

using namespace ssmiss;

namespace {

MaskedSeries random_series(std::mt19937_64& rng, int T, int l) {
  std::normal_distribution<double> g;
  return make_series(Eigen::MatrixXd::NullaryExpr(T, l, [&] { return g(rng); }));
}

double rel_err(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

}  // namespace

TEST_CASE("time update") {
  ModelParams p;
  p.A = Eigen::MatrixXd::Identity(2, 2);
  p.Q = Eigen::MatrixXd::Identity(2, 2);
  p.H = Eigen::MatrixXd::Identity(6, 2);
  p.R = Eigen::MatrixXd::Identity(6, 6);
  FilterState s{Eigen::Vector2d(1, 2), Eigen::MatrixXd::Identity(2, 2)};
  FilterState out = time_update(s, p);
  CHECK(out.x.isApprox(Eigen::Vector2d(1, 2)));
  CHECK(out.P.isApprox(2.0 * Eigen::MatrixXd::Identity(2, 2)));

  p.A.setZero();
  out = time_update(s, p);
  CHECK(out.x.isZero());
  CHECK(out.P.isApprox(p.Q));

  p.A << 0.7, 0.3, 0.0, 0.7;
  s.x = Eigen::Vector2d(1, 0);
  out = time_update(s, p);
  Eigen::Matrix2d expected;
  expected << 1.58, 0.21, 0.21, 1.49;
  CHECK(out.x.isApprox(Eigen::Vector2d(0.7, 0.0)));
  CHECK((out.P - expected).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("measurement update") {
  SUBCASE("scalar conjugate update") {
    ModelParams p;
    p.A = Eigen::MatrixXd::Zero(1, 1);
    p.Q = Eigen::MatrixXd::Identity(1, 1);
    p.H = Eigen::MatrixXd::Identity(1, 1);
    p.R = Eigen::MatrixXd::Identity(1, 1);
    const FilterState pred{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    const UpdateResult u =
        measurement_update(pred, Eigen::VectorXd::Constant(1, 2.0), MissingRow::Constant(1, false), p);
    CHECK(u.state.x(0) == doctest::Approx(1.0));
    CHECK(u.state.P(0, 0) == doctest::Approx(0.5));
    // log N(2 | 0, 2)
    CHECK(u.loglik_increment == doctest::Approx(-0.5 * (std::log(2 * std::numbers::pi * 2.0) + 2.0)));
  }

  SUBCASE("fully masked row is a no-op") {
    const ModelParams p = make_condition(0.25, 0.7, 0.3);
    const FilterState pred{Eigen::Vector2d(0.3, -0.1), stationary_covariance(p)};
    const UpdateResult u =
        measurement_update(pred, Eigen::VectorXd::Ones(6), MissingRow::Constant(6, true), p);
    CHECK(u.state.x == pred.x);
    CHECK(u.state.P == pred.P);
    CHECK(u.loglik_increment == 0.0);
  }

  SUBCASE("partial mask matches joint Gaussian conditioning") {
    std::mt19937_64 rng(17);
    for (int k = 0; k < 20; ++k) {
      const ModelParams p = oracle::random_params(rng);
      const Eigen::MatrixXd P = oracle::random_spd(rng, 2);
      std::normal_distribution<double> g;
      const Eigen::Vector2d xbar(g(rng), g(rng));
      const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); });
      MissingRow miss = MissingRow::Constant(6, false);
      miss.head(3).setConstant(true);

      // Joint of (x, z4..z6).
      Eigen::VectorXd mu(5);
      mu.head(2) = xbar;
      mu.tail(3) = p.H.bottomRows(3) * xbar;
      Eigen::MatrixXd S(5, 5);
      S.topLeftCorner(2, 2) = P;
      S.topRightCorner(2, 3) = P * p.H.bottomRows(3).transpose();
      S.bottomLeftCorner(3, 2) = S.topRightCorner(2, 3).transpose();
      S.bottomRightCorner(3, 3) =
          p.H.bottomRows(3) * P * p.H.bottomRows(3).transpose() + p.R.bottomRightCorner(3, 3);
      const auto c = oracle::condition(mu, S, {0, 1}, {2, 3, 4}, z.tail(3));

      const UpdateResult u = measurement_update({xbar, P}, z, miss, p);
      CHECK((u.state.x - c.mean).cwiseAbs().maxCoeff() < 1e-10);
      CHECK((u.state.P - c.cov).cwiseAbs().maxCoeff() < 1e-10);
      const double ll = oracle::mvn_logpdf(z.tail(3), mu.tail(3), S.bottomRightCorner(3, 3));
      CHECK(rel_err(u.loglik_increment, ll) < 1e-10);
    }
  }

  SUBCASE("information form agrees with the covariance form") {
    std::mt19937_64 rng(23);
    std::bernoulli_distribution coin(0.4);
    std::normal_distribution<double> g;
    for (int k = 0; k < 100; ++k) {
      const ModelParams p = oracle::random_params(rng);
      const FilterState pred{Eigen::Vector2d(g(rng), g(rng)), oracle::random_spd(rng, 2)};
      const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); });
      MissingRow miss(6);
      for (int i = 0; i < 6; ++i) miss(i) = coin(rng);
      const UpdateResult a = measurement_update(pred, z, miss, p);
      const UpdateResult b = measurement_update_information(pred, z, miss, p);
      CHECK((a.state.x - b.state.x).cwiseAbs().maxCoeff() < 1e-9);
      CHECK((a.state.P - b.state.P).cwiseAbs().maxCoeff() < 1e-9);
      CHECK(rel_err(a.loglik_increment, b.loglik_increment) < 1e-10);
    }
  }

  SUBCASE("singular innovation covariance") {
    ModelParams p;
    p.A = Eigen::MatrixXd::Zero(1, 1);
    p.Q = Eigen::MatrixXd::Identity(1, 1);
    p.H = Eigen::MatrixXd::Zero(1, 1);
    p.R = Eigen::MatrixXd::Zero(1, 1);
    const FilterState pred{Eigen::VectorXd::Zero(1), Eigen::MatrixXd::Identity(1, 1)};
    CHECK_THROWS_AS(
        measurement_update(pred, Eigen::VectorXd::Ones(1), MissingRow::Constant(1, false), p),
        FilterError);
  }
}

TEST_CASE("filter log-likelihood equals the stacked joint density") {
  std::mt19937_64 rng(5);
  std::bernoulli_distribution coin(0.3);
  std::normal_distribution<double> g;
  for (int k = 0; k < 100; ++k) {
    const ModelParams p = oracle::random_params(rng);
    const int T = 1 + k % 5;
    MaskedSeries s = random_series(rng, T, 6);
    if (k % 2 == 1) {
      for (int t = 0; t < T; ++t)
        for (int i = 0; i < 6; ++i) s.mask(t, i) = coin(rng);
    }
    const FilterState init = k % 3 == 0
                                 ? stationary_init(p)
                                 : FilterState{Eigen::Vector2d(g(rng), g(rng)), oracle::random_spd(rng, 2)};
    const double ll = filter_series(s, p, init).loglik;
    CHECK(rel_err(ll, oracle::joint_loglik(s, p, init)) <= 1e-8);
  }
}

TEST_CASE("study-grid examples against the joint density") {
  std::mt19937_64 rng(8);
  const ModelParams p = make_condition(0.25, 0.7, 0.3);
  MaskedSeries s3 = random_series(rng, 3, 6);
  CHECK(rel_err(filter_series(s3, p, stationary_init(p)).loglik,
                oracle::joint_loglik(s3, p, stationary_init(p))) <= 1e-8);

  MaskedSeries s5 = simulate(p, 5, 12);
  for (int j = 0; j < 3; ++j) {
    s5.mask(1, j) = true;
    s5.mask(3, j) = true;
  }
  CHECK(rel_err(filter_series(s5, p, stationary_init(p)).loglik,
                oracle::joint_loglik(s5, p, stationary_init(p))) <= 1e-8);
}

TEST_CASE("fully masked series only predicts") {
  const ModelParams p = make_condition(0.75, 0.7, 0.0);
  MaskedSeries s = simulate(p, 60, 4);
  s.mask.setConstant(true);
  const FilterOutput out = filter_series(s, p, {Eigen::Vector2d::Zero(), Eigen::Matrix2d::Zero()});
  CHECK(out.loglik == 0.0);
  const Eigen::MatrixXd S = stationary_covariance(p);
  double prev = 0.0;
  for (int t = 0; t < 60; ++t) {
    CHECK(out.predicted_covs[t](0, 0) >= prev);
    prev = out.predicted_covs[t](0, 0);
  }
  CHECK((out.predicted_covs.back() - S).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("vanishing measurement error recovers the loading projection") {
  ModelParams p = make_condition(0.25, 0.7, 0.0);
  p.R *= 1e-8;
  const MaskedSeries s = simulate(make_condition(0.25, 0.7, 0.0), 40, 3);
  const FilterOutput out = filter_series(s, p, stationary_init(p));
  const double lam = std::sqrt(0.75);
  for (int t = 0; t < 40; ++t) {
    const double proj = s.z.row(t).head(3).sum() / (3.0 * lam);
    CHECK(std::abs(out.filtered_means(t, 0) - proj) < 1e-5);
  }
}

TEST_CASE("diffuse and stationary initial states") {
  const FilterState d = diffuse_init(2);
  CHECK(d.x.isZero());
  CHECK(d.P.isApprox(kDiffuseScale * Eigen::MatrixXd::Identity(2, 2)));
  const ModelParams p = make_condition(0.25, 0.2, 0.15);
  CHECK(stationary_init(p).P.isApprox(stationary_covariance(p)));
}
