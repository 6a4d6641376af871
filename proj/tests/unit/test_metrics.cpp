#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "ssmiss/metrics.hpp"

using namespace ssmiss;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

TEST_CASE("median bias") {
  CHECK(median_bias(0.7, {0.6, 0.65, 0.75}) == doctest::Approx(0.05));
  CHECK(median_bias(0.7, {0.7, 0.7, 0.7, 0.7}) == 0.0);
  CHECK(median({0.1, 0.2}) == doctest::Approx(0.15));
  CHECK(median({3.0, 1.0, 2.0}) == 2.0);
  CHECK_THROWS_AS(median_bias(0.7, {}), std::invalid_argument);
  CHECK_THROWS_AS(median({}), std::invalid_argument);
}

TEST_CASE("median absolute relative bias") {
  CHECK(median_abs_rel_bias(0.2, {0.25}).value() == doctest::Approx(0.25));
  CHECK(median_abs_rel_bias(0.2, {0.2, 0.2}).value() == 0.0);
  CHECK(median_abs_rel_bias(0.2, {0.1, 0.3}).value() == doctest::Approx(0.5));
  CHECK_FALSE(median_abs_rel_bias(0.0, {0.1, 0.3}).has_value());
}

TEST_CASE("coverage") {
  CoverageResult c = coverage(0.75, {0.7}, {0.05});
  CHECK(c.percent == 100.0);
  CHECK(c.n_used == 1);
  c = coverage(0.75, {0.7}, {0.0});
  CHECK(c.percent == 0.0);
  c = coverage(0.7, {0.7}, {0.0});
  CHECK(c.percent == 100.0);
  c = coverage(0.75, {0.7, 0.7, 2.0}, {0.05, kNaN, 0.01});
  CHECK(c.n_used == 2);
  CHECK(c.n_missing_se == 1);
  CHECK(c.percent == doctest::Approx(50.0));
  c = coverage(0.75, {0.7}, {kNaN});
  CHECK(std::isnan(c.percent));
  CHECK_THROWS_AS(coverage(0.75, {0.7}, {}), std::invalid_argument);

  std::mt19937_64 rng(1);
  std::normal_distribution<double> g(0.0, 0.3);
  std::vector<double> est, se;
  for (int i = 0; i < 10000; ++i) {
    est.push_back(1.0 + g(rng));
    se.push_back(0.3);
  }
  c = coverage(1.0, est, se);
  CHECK(std::abs(c.percent - 95.0) <= 1.0);
}

TEST_CASE("quantiles and box statistics") {
  std::vector<double> v;
  for (int i = 1; i <= 100; ++i) v.push_back(i / 100.0);
  const BoxStats b = box_stats(v);
  CHECK(b.q1 == doctest::Approx(0.2525).epsilon(1e-12));
  CHECK(b.median == doctest::Approx(0.505).epsilon(1e-12));
  CHECK(b.q3 == doctest::Approx(0.7575).epsilon(1e-12));
  CHECK(b.lower_whisker == 0.01);
  CHECK(b.upper_whisker == 1.0);
  CHECK(b.outliers.empty());
  CHECK(b.n == 100);

  const BoxStats o = box_stats({0.0, 0.1, 0.2, 0.3, 0.4, 5.0});
  CHECK(o.outliers == std::vector<double>{5.0});
  CHECK(o.upper_whisker == 0.4);

  const BoxStats e = box_stats({});
  CHECK(e.n == 0);
  CHECK(std::isnan(e.median));

  CHECK(quantile({1.0, 2.0, 3.0}, 0.0) == 1.0);
  CHECK(quantile({1.0, 2.0, 3.0}, 1.0) == 3.0);
  CHECK(quantile({1.0, 2.0, 3.0}, 0.5) == 2.0);
}

TEST_CASE("parameter summaries") {
  const ParameterSummary s = summarize_parameter("alpha11", 0.7, {0.6, -4.3, 0.75}, {0.1, 0.1, kNaN});
  CHECK(s.median_bias == doctest::Approx(0.025));
  CHECK(s.n_outliers_excluded == 1);
  CHECK(s.n_replications == 3);
  CHECK(s.n_missing_se == 1);
  CHECK(s.mean_se == doctest::Approx(0.1));
  CHECK(s.coverage_pct == doctest::Approx(50.0));
  CHECK(s.median_abs_rel_bias.has_value());
  CHECK(s.n_outliers_excluded <= s.n_replications);

  const ParameterSummary z = summarize_parameter("gamma12", 0.0, {0.1, -0.1}, {0.2, 0.2});
  CHECK_FALSE(z.median_abs_rel_bias.has_value());
  CHECK(z.coverage_pct == 100.0);
}

TEST_CASE("cell summaries pool the block families") {
  auto fit = [](double a, double l1, double l2, double l3) {
    ReplicationFit f;
    f.estimates = {{"alpha11", a, 0.1},   {"gamma12", 0.01, 0.1}, {"lambda2_1", l1, 0.1},
                   {"lambda2_2", l2, 0.1}, {"lambda2_3", l3, 0.1}, {"lambda2_4", 0.75, 0.1},
                   {"sigma2_1", 0.25, 0.1}, {"sigma2_2", 0.25, 0.1}, {"sigma2_3", 0.25, 0.1}};
    f.truth = {{"alpha11", 0.7, 0},   {"gamma12", 0.0, 0},   {"lambda2_1", 0.75, 0},
               {"lambda2_2", 0.75, 0}, {"lambda2_3", 0.75, 0}, {"lambda2_4", 0.75, 0},
               {"sigma2_1", 0.25, 0}, {"sigma2_2", 0.25, 0}, {"sigma2_3", 0.25, 0}};
    return f;
  };
  const CellId id{"TMAR", "K", 0.25, 0.7, 0.0, 0.3};
  std::vector<ReplicationFit> fits{fit(0.6, 0.7, 0.8, 0.9), fit(0.65, 0.75, 0.75, 0.75),
                                   fit(0.75, 0.6, 0.5, 0.4)};
  const CellSummary c = summarize_cell(id, fits);
  CHECK(c.id.lambda2() == doctest::Approx(0.75));
  REQUIRE(c.find("alpha") != nullptr);
  CHECK(c.find("alpha")->median_bias == doctest::Approx(0.05));
  REQUIRE(c.find("lambda2") != nullptr);
  CHECK(c.find("lambda2")->n_replications == 9);
  CHECK(c.find("lambda2")->median_bias == doctest::Approx(0.0));
  REQUIRE(c.find("lambda2_3") != nullptr);
  CHECK(c.find("lambda2_3")->median_bias == doctest::Approx(0.0));
  CHECK(c.find("nothing") == nullptr);
  for (const auto& p : c.parameters) {
    CHECK(p.coverage_pct >= 0.0);
    CHECK(p.coverage_pct <= 100.0);
  }
  std::swap(fits[0], fits[2]);
  const CellSummary d = summarize_cell(id, fits);
  REQUIRE(d.parameters.size() == c.parameters.size());
  for (std::size_t i = 0; i < c.parameters.size(); ++i) {
    CHECK(d.parameters[i].name == c.parameters[i].name);
    CHECK(d.parameters[i].median_bias == c.parameters[i].median_bias);
    CHECK(d.parameters[i].coverage_pct == c.parameters[i].coverage_pct);
  }

  std::vector<ReplicationFit> mixed{fit(0.6, 0.7, 0.8, 0.9), fit(0.2, 0.75, 0.75, 0.75)};
  mixed[1].converged = false;
  SummaryOptions opts;
  opts.exclude_nonconverged = true;
  CHECK(summarize_cell(id, mixed, opts).find("alpha")->n_replications == 1);
  CHECK(parameter_members("sigma2") == std::vector<std::string>{"sigma2_1", "sigma2_2", "sigma2_3"});
}
