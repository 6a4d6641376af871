#include <algorithm>
#include <cmath>
#include <random>

#include "doctest.h"
#include "oracles.hpp"
#include "ssmiss/em_impute.hpp"
#include "ssmiss/levels.hpp"
#include "ssmiss/missingness.hpp"
#include "ssmiss/model.hpp"

using namespace ssmiss;

namespace {

const LevelModel kModels[] = {LevelModel::kArima, LevelModel::kSpline, LevelModel::kRegression};

Eigen::VectorXd ar1(int T, double phi, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Eigen::VectorXd y(T);
  double x = g(rng) / std::sqrt(1.0 - phi * phi);
  for (int t = 0; t < T; ++t) {
    x = phi * x + g(rng);
    y(t) = x;
  }
  return y;
}

// Least-squares AR(1) slope of y_t on (1, y_{t-1}).
double ar1_cls(const Eigen::VectorXd& y) {
  const Eigen::Index n = y.size() - 1;
  const Eigen::VectorXd a = y.tail(n);
  const Eigen::VectorXd b = y.head(n);
  const double ma = a.mean(), mb = b.mean();
  return ((a.array() - ma) * (b.array() - mb)).sum() / (b.array() - mb).square().sum();
}

}  // namespace

TEST_CASE("level models") {
  SUBCASE("constant columns") {
    Eigen::MatrixXd z(120, 6);
    for (int j = 0; j < 6; ++j) z.col(j).setConstant(0.5 * j - 1.0);
    for (LevelModel m : kModels) {
      EmConfig c;
      c.level_model = m;
      const Eigen::MatrixXd mu = estimate_levels(z, c);
      CHECK((mu - z).cwiseAbs().maxCoeff() < 1e-10);
    }
  }
  SUBCASE("spline reproduces a straight line") {
    Eigen::MatrixXd z(500, 6);
    for (int t = 0; t < 500; ++t) z.row(t).setConstant(0.1 * t);
    EmConfig c;
    c.level_model = LevelModel::kSpline;
    const Eigen::MatrixXd mu = estimate_levels(z, c);
    CHECK((mu - z).cwiseAbs().maxCoeff() < 1e-8);
  }
  SUBCASE("AR(1) coefficient") {
    const Eigen::VectorXd y = ar1(500, 0.7, 3);
    const ArimaFit f = fit_arima(y, {1, 0, 0});
    REQUIRE(f.ar.size() == 1);
    CHECK(std::abs(f.ar(0) - 0.7) <= 0.1);
    CHECK(f.ar(0) == doctest::Approx(ar1_cls(y)).epsilon(1e-10));
    const Eigen::VectorXd pred = arima_one_step(y, f);
    for (int t = 1; t < 500; ++t)
      CHECK(pred(t) == doctest::Approx(f.intercept + f.ar(0) * y(t - 1)).epsilon(1e-12));
  }
  SUBCASE("regression fallback on a singular design") {
    Eigen::MatrixXd z = Eigen::MatrixXd::Random(100, 6);
    z.col(1) = z.col(0);
    EmConfig c;
    c.level_model = LevelModel::kRegression;
    LevelDiagnostics d;
    const Eigen::MatrixXd mu = estimate_levels(z, c, &d);
    CHECK(d.regression_fallbacks > 0);
    CHECK(mu.allFinite());
  }
  CHECK(default_spline_df(500) == 10);
  CHECK(default_spline_df(10) == 2);
}

TEST_CASE("conditional fill") {
  using Mask = Eigen::Array<bool, Eigen::Dynamic, 1>;
  SUBCASE("nothing missing") {
    const Eigen::VectorXd z = Eigen::VectorXd::LinSpaced(6, -1, 1);
    CHECK(em_conditional_fill(z, Mask::Constant(6, false), Eigen::VectorXd::Zero(6),
                              Eigen::MatrixXd::Identity(6, 6)) == z);
  }
  SUBCASE("bivariate") {
    Eigen::Matrix2d S;
    S << 1.0, 0.5, 0.5, 1.0;
    Mask miss(2);
    miss << true, false;
    const Eigen::VectorXd out =
        em_conditional_fill(Eigen::Vector2d(0.0, 2.0), miss, Eigen::Vector2d::Zero(), S);
    CHECK(out(0) == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(out(1) == 2.0);
  }
  SUBCASE("six-dimensional partitioned oracle") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> g;
    for (int k = 0; k < 20; ++k) {
      const Eigen::MatrixXd S = oracle::random_spd(rng, 6);
      const Eigen::VectorXd mu = Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); });
      const Eigen::VectorXd z = Eigen::VectorXd::NullaryExpr(6, [&] { return g(rng); });
      std::vector<int> idx{0, 1, 2, 3, 4, 5};
      std::shuffle(idx.begin(), idx.end(), rng);
      const std::vector<int> target(idx.begin(), idx.begin() + 3);
      const std::vector<int> given(idx.begin() + 3, idx.end());
      Mask miss = Mask::Constant(6, false);
      Eigen::VectorXd vals(3);
      for (int i = 0; i < 3; ++i) {
        miss(target[i]) = true;
        vals(i) = z(given[i]);
      }
      const auto c = oracle::condition(mu, S, target, given, vals);
      bool ridged = true;
      const Eigen::VectorXd out = em_conditional_fill(z, miss, mu, S, &ridged);
      CHECK_FALSE(ridged);
      for (int i = 0; i < 3; ++i) {
        CHECK(std::abs(out(target[i]) - c.mean(i)) < 1e-10);
        CHECK(out(given[i]) == z(given[i]));
      }
    }
  }
  SUBCASE("singular observed block is ridged") {
    Eigen::MatrixXd S = Eigen::MatrixXd::Ones(3, 3);
    Mask miss(3);
    miss << true, false, false;
    bool ridged = false;
    const Eigen::VectorXd out =
        em_conditional_fill(Eigen::Vector3d(0, 1, 1), miss, Eigen::Vector3d::Zero(), S, &ridged);
    CHECK(ridged);
    CHECK(out.allFinite());
  }
  SUBCASE("all missing takes the mean") {
    const Eigen::Vector3d mu(1, 2, 3);
    const Eigen::VectorXd out = em_conditional_fill(Eigen::Vector3d::Zero(), Mask::Constant(3, true),
                                                    mu, Eigen::MatrixXd::Identity(3, 3));
    CHECK(out == Eigen::VectorXd(mu));
  }
}

TEST_CASE("em_impute") {
  const ModelParams p = make_condition(0.25, 0.7, 0.0);

  SUBCASE("complete input is returned after one iteration") {
    const MaskedSeries s = simulate(p, 200, 5);
    for (LevelModel m : kModels) {
      EmConfig c;
      c.level_model = m;
      const EmResult r = em_impute(s, c);
      CHECK(r.completed == s.z);
      CHECK(r.iterations == 1);
      CHECK(r.converged);
    }
  }

  SUBCASE("one masked cell sits at the conditional-mean fixed point") {
    std::mt19937_64 rng(12);
    std::normal_distribution<double> g;
    const int T = 300;
    Eigen::MatrixXd z(T, 2);
    for (int t = 0; t < T; ++t) {
      const double a = g(rng);
      z(t, 0) = a;
      z(t, 1) = 0.9 * a + std::sqrt(1.0 - 0.81) * g(rng);
    }
    MaskedSeries s = make_series(z);
    s.mask(137, 0) = true;
    for (LevelModel m : kModels) {
      EmConfig c;
      c.level_model = m;
      c.tol = 1e-12;
      c.max_iter = 1000;
      const EmResult r = em_impute(s, c);
      REQUIRE(r.converged);
      const Eigen::MatrixXd mu = estimate_levels(r.completed, c);
      const Eigen::MatrixXd resid = r.completed - mu;
      const Eigen::MatrixXd S = resid.transpose() * resid / T;
      const auto cond = oracle::condition(mu.row(137).transpose(), S, {0}, {1},
                                          Eigen::VectorXd::Constant(1, z(137, 1)));
      CHECK(std::abs(r.completed(137, 0) - cond.mean(0)) < 1e-6);
    }
  }

  SUBCASE("observed entries are untouched and the objective does not fall") {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
      const MaskedSeries raw = simulate(p, 300, seed);
      const MaskedSeries s = apply_mcar(raw, 0.3, seed + 100);
      for (LevelModel m : kModels) {
        EmConfig c;
        c.level_model = m;
        const EmResult r = em_impute(s, c);
        bool same = true;
        for (int t = 0; t < s.length(); ++t)
          for (int j = 0; j < 6; ++j)
            if (!s.mask(t, j) && r.completed(t, j) != s.z(t, j)) same = false;
        CHECK(same);
        CHECK(r.completed.allFinite());
        // Only the spline level is a pure function of time, so only there is each step an EM ascent.
        if (m != LevelModel::kSpline) continue;
        for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
          CHECK(r.objective_trace[i] >= r.objective_trace[i - 1] - 1e-9 * std::abs(r.objective_trace[i - 1]));
      }
    }
  }

  SUBCASE("too few observed values") {
    MaskedSeries s = simulate(p, 50, 3);
    for (int t = 0; t < 45; ++t) s.mask(t, 0) = true;
    CHECK_THROWS_AS(em_impute(s, {}), std::invalid_argument);
  }
}
