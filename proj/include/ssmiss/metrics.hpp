#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ssmiss/estimator.hpp"

namespace ssmiss {

/// Median with the midpoint rule for even counts. Throws on empty input.
double median(std::vector<double> values);

/// Median over replications of (truth - estimate).
double median_bias(double truth, const std::vector<double>& estimates);

/// Median of |truth - estimate| / truth; empty when truth is 0.
std::optional<double> median_abs_rel_bias(double truth,
                                          const std::vector<double>& estimates);

struct CoverageResult {
  double percent = 0.0;  // NaN when no replication has an SE
  int n_used = 0;
  int n_missing_se = 0;
};

inline constexpr double kCoverageZ = 1.96;

/// Share of replications whose [est - 1.96 se, est + 1.96 se] contains the
/// truth (inclusive). Non-finite SEs leave the denominator and are counted.
CoverageResult coverage(double truth, const std::vector<double>& estimates,
                        const std::vector<double>& ses);

/// Quantile by linear interpolation at position (n + 1) p of the sorted
/// sample, clamped to the extremes.
double quantile(std::vector<double> values, double p);

struct BoxStats {
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double lower_whisker = 0.0;  // most extreme values within 1.5 IQR
  double upper_whisker = 0.0;
  std::vector<double> outliers;
  int n = 0;
};

BoxStats box_stats(const std::vector<double>& values);

struct CellId {
  std::string mechanism;  // "Complete" for the unmasked fit
  std::string method;
  double sigma2 = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;
  double rate = 0.0;
  double lambda2() const { return 1.0 - sigma2; }
};

/// One fitted replication: reported estimates and the truth on the same scale.
struct ReplicationFit {
  std::vector<ReportedParameter> estimates;
  std::vector<ReportedParameter> truth;
  bool converged = true;
};

struct ParameterSummary {
  std::string name;
  double truth = 0.0;
  double median_bias = 0.0;
  std::optional<double> median_abs_rel_bias;
  double mean_se = 0.0;  // over finite SEs; NaN when none
  double coverage_pct = 0.0;
  int n_replications = 0;
  int n_outliers_excluded = 0;
  int n_missing_se = 0;
};

struct CellSummary {
  CellId id;
  std::vector<ParameterSummary> parameters;
  const ParameterSummary* find(const std::string& name) const;
};

struct SummaryOptions {
  double outlier_cutoff = 1.0;
  bool exclude_nonconverged = false;
};

/// Names of the pooled summaries: "alpha" (alpha11), "gamma" (gamma12),
/// "lambda2" and "sigma2" (indicators 1-3 treated as one variable). Every
/// individual parameter is summarized as well.
std::vector<std::string> parameter_members(const std::string& family);

/// Bias medians drop replications with |bias| > cutoff; SE means and coverage
/// use every replication.
ParameterSummary summarize_parameter(const std::string& name, double truth,
                                     const std::vector<double>& estimates,
                                     const std::vector<double>& ses,
                                     double outlier_cutoff = 1.0);

CellSummary summarize_cell(const CellId& id, const std::vector<ReplicationFit>& fits,
                           const SummaryOptions& options = {});

}  // namespace ssmiss
