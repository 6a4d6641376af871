#include "ssmiss/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <stdexcept>

namespace ssmiss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

// Order-independent mean.
double sorted_mean(std::vector<double> v) {
  if (v.empty()) return kNaN;
  std::sort(v.begin(), v.end());
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median: empty sample");
  const std::size_t n = values.size();
  const std::size_t mid = n / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

double median_bias(double truth, const std::vector<double>& estimates) {
  if (estimates.empty()) throw std::invalid_argument("median_bias: no estimates");
  std::vector<double> b;
  b.reserve(estimates.size());
  for (double e : estimates) b.push_back(truth - e);
  return median(std::move(b));
}

std::optional<double> median_abs_rel_bias(double truth,
                                          const std::vector<double>& estimates) {
  if (truth == 0.0) return std::nullopt;
  if (estimates.empty()) throw std::invalid_argument("median_abs_rel_bias: no estimates");
  std::vector<double> b;
  b.reserve(estimates.size());
  for (double e : estimates) b.push_back(std::abs(truth - e) / truth);
  return median(std::move(b));
}

CoverageResult coverage(double truth, const std::vector<double>& estimates,
                        const std::vector<double>& ses) {
  if (estimates.size() != ses.size()) {
    throw std::invalid_argument("coverage: estimates and ses differ in length");
  }
  CoverageResult r;
  int hit = 0;
  for (std::size_t i = 0; i < estimates.size(); ++i) {
    if (!std::isfinite(ses[i]) || !std::isfinite(estimates[i])) {
      ++r.n_missing_se;
      continue;
    }
    if (ses[i] < 0.0) throw std::invalid_argument("coverage: negative standard error");
    ++r.n_used;
    const double half = kCoverageZ * ses[i];
    if (estimates[i] - half <= truth && truth <= estimates[i] + half) ++hit;
  }
  r.percent = r.n_used > 0 ? 100.0 * hit / r.n_used : kNaN;
  return r;
}

double quantile(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile: empty sample");
  std::sort(values.begin(), values.end());
  const double n = static_cast<double>(values.size());
  const double h = std::clamp((n + 1.0) * p, 1.0, n);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const double frac = h - static_cast<double>(lo);
  if (lo >= values.size()) return values.back();
  return values[lo - 1] + frac * (values[lo] - values[lo - 1]);
}

BoxStats box_stats(const std::vector<double>& values) {
  BoxStats s;
  s.n = static_cast<int>(values.size());
  if (values.empty()) {
    s.q1 = s.median = s.q3 = s.lower_whisker = s.upper_whisker = kNaN;
    return s;
  }
  s.q1 = quantile(values, 0.25);
  s.median = quantile(values, 0.5);
  s.q3 = quantile(values, 0.75);
  const double iqr = s.q3 - s.q1;
  const double lo_fence = s.q1 - 1.5 * iqr;
  const double hi_fence = s.q3 + 1.5 * iqr;
  s.lower_whisker = std::numeric_limits<double>::infinity();
  s.upper_whisker = -std::numeric_limits<double>::infinity();
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      s.outliers.push_back(v);
    } else {
      s.lower_whisker = std::min(s.lower_whisker, v);
      s.upper_whisker = std::max(s.upper_whisker, v);
    }
  }
  std::sort(s.outliers.begin(), s.outliers.end());
  return s;
}

const ParameterSummary* CellSummary::find(const std::string& name) const {
  for (const auto& p : parameters) {
    if (p.name == name) return &p;
  }
  return nullptr;
}

std::vector<std::string> parameter_members(const std::string& family) {
  if (family == "alpha") return {"alpha11"};
  if (family == "gamma") return {"gamma12"};
  if (family == "lambda2") return {"lambda2_1", "lambda2_2", "lambda2_3"};
  if (family == "sigma2") return {"sigma2_1", "sigma2_2", "sigma2_3"};
  return {};
}

ParameterSummary summarize_parameter(const std::string& name, double truth,
                                     const std::vector<double>& estimates,
                                     const std::vector<double>& ses,
                                     double outlier_cutoff) {
  ParameterSummary s;
  s.name = name;
  s.truth = truth;
  s.n_replications = static_cast<int>(estimates.size());
  std::vector<double> kept;
  for (double e : estimates) {
    const double b = truth - e;
    if (std::isfinite(b) && std::abs(b) <= outlier_cutoff) {
      kept.push_back(e);
    } else {
      ++s.n_outliers_excluded;
    }
  }
  s.median_bias = kept.empty() ? kNaN : median_bias(truth, kept);
  s.median_abs_rel_bias = kept.empty() ? std::nullopt : median_abs_rel_bias(truth, kept);
  std::vector<double> finite_se;
  for (double v : ses) {
    if (std::isfinite(v)) finite_se.push_back(v);
  }
  s.mean_se = sorted_mean(finite_se);
  const CoverageResult c = coverage(truth, estimates, ses);
  s.coverage_pct = c.percent;
  s.n_missing_se = c.n_missing_se;
  return s;
}

CellSummary summarize_cell(const CellId& id, const std::vector<ReplicationFit>& fits,
                           const SummaryOptions& options) {
  CellSummary out;
  out.id = id;
  struct Samples {
    double truth = 0.0;
    std::vector<double> est;
    std::vector<double> se;
  };
  std::vector<std::string> order;
  std::map<std::string, Samples> by_name;
  for (const auto& f : fits) {
    if (options.exclude_nonconverged && !f.converged) continue;
    if (f.estimates.size() != f.truth.size()) {
      throw std::invalid_argument("summarize_cell: estimates and truth differ in length");
    }
    for (std::size_t i = 0; i < f.estimates.size(); ++i) {
      const auto& name = f.estimates[i].name;
      auto [it, inserted] = by_name.try_emplace(name);
      if (inserted) order.push_back(name);
      it->second.truth = f.truth[i].estimate;
      it->second.est.push_back(f.estimates[i].estimate);
      it->second.se.push_back(f.estimates[i].se);
    }
  }
  // Sorting each sample makes the summary independent of replication order.
  auto sorted_pairs = [](Samples& s) {
    std::vector<std::size_t> idx(s.est.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
      return s.est[a] < s.est[b] || (s.est[a] == s.est[b] && s.se[a] < s.se[b]);
    });
    Samples r{s.truth, {}, {}};
    for (std::size_t i : idx) {
      r.est.push_back(s.est[i]);
      r.se.push_back(s.se[i]);
    }
    return r;
  };

  for (const char* family : {"alpha", "gamma", "lambda2", "sigma2"}) {
    Samples pooled;
    bool any = false;
    for (const auto& member : parameter_members(family)) {
      const auto it = by_name.find(member);
      if (it == by_name.end()) continue;
      any = true;
      pooled.truth = it->second.truth;
      pooled.est.insert(pooled.est.end(), it->second.est.begin(), it->second.est.end());
      pooled.se.insert(pooled.se.end(), it->second.se.begin(), it->second.se.end());
    }
    if (!any) continue;
    const Samples s = sorted_pairs(pooled);
    out.parameters.push_back(
        summarize_parameter(family, s.truth, s.est, s.se, options.outlier_cutoff));
  }
  for (const auto& name : order) {
    const Samples s = sorted_pairs(by_name[name]);
    out.parameters.push_back(
        summarize_parameter(name, s.truth, s.est, s.se, options.outlier_cutoff));
  }
  return out;
}

}  // namespace ssmiss
