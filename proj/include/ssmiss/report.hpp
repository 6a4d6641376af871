#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ssmiss/metrics.hpp"
#include "ssmiss/study.hpp"

namespace ssmiss {

struct ReportOptions {
  double outlier_cutoff = 1.0;
  bool exclude_nonconverged = false;
};

/// Groups records by (mechanism, rate, method, sigma2, alpha, gamma) and
/// summarizes each group. Squared loadings and variances are also reported
/// on the unsquared scale (lambda_i, sigma_i) with delta-method SEs.
std::vector<CellSummary> summarize_records(const std::vector<FitRecord>& records,
                                           const ReportOptions& options = {});

/// Pooled median bias of a parameter family over the records matching the
/// filter; biases beyond the outlier cutoff are dropped. NaN when empty.
double overall_median_bias(const std::vector<FitRecord>& records, const std::string& family,
                           const std::function<bool(const FitRecord&)>& filter,
                           const ReportOptions& options = {});

/// Writes the CSV tables into `dir` (3-decimal files plus `_full` twins):
///   table1_overall_median_bias
///   median_bias_by_cell_gamma_<g>_rate_<r>, coverage_by_cell_..., se_by_cell_...,
///   marb_by_cell_...
/// Columns: missingness, imputation, true_alpha, true_lambda2, parameter, value.
/// Returns the written paths.
std::vector<std::filesystem::path> emit_tables(const std::vector<FitRecord>& records,
                                               const std::filesystem::path& dir,
                                               const ReportOptions& options = {});

struct PlotOptions {
  double y_limit = 0.5;  // biases outside [-y_limit, y_limit] are dropped and counted
};

struct PlotGroupStats {
  std::string label;
  BoxStats box;
  int clamped = 0;
};

/// Box statistics of bias for one panel group, after dropping out-of-range
/// points (counted in `clamped`).
PlotGroupStats plot_group(const std::string& label, const std::vector<double>& biases,
                          const PlotOptions& options = {});

/// SVG box plots of bias per parameter family and (gamma, rate) slice, with a
/// caption side-file counting the points outside the y range.
std::vector<std::filesystem::path> emit_plots(const std::vector<FitRecord>& records,
                                              const std::filesystem::path& dir,
                                              const PlotOptions& options = {});

}  // namespace ssmiss
