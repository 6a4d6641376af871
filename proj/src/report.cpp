#include "ssmiss/report.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

namespace ssmiss {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr const char* kNoImputation = "None";
constexpr const char* kAll = "all";

std::string shortest(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, r.ptr);
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  std::string s(buf);
  if (s.find_first_not_of("-0.") == std::string::npos && s[0] == '-') s.erase(0, 1);
  return s;
}

std::string value_text(double v, bool full) {
  if (!std::isfinite(v)) return "NA";
  return full ? shortest(v) : fixed(v, 3);
}

int mechanism_rank(const std::string& m) {
  if (m == kCompleteMechanism) return 0;
  int i = 1;
  for (Mechanism mech : all_mechanisms()) {
    if (m == to_string(mech)) return i;
    ++i;
  }
  return 100;
}

int method_rank(const std::string& m) {
  int i = 0;
  for (Method method : all_methods()) {
    if (m == to_string(method)) return i;
    ++i;
  }
  return 100;
}

bool is_complete(const FitRecord& r) { return r.mechanism == kCompleteMechanism; }

bool usable(const FitRecord& r, const ReportOptions& options) {
  if (!r.error.empty()) return false;
  if (options.exclude_nonconverged && !r.converged) return false;
  return true;
}

struct GroupKey {
  std::string mechanism;
  std::string method;
  double rate = 0.0;
  double sigma2 = 0.0;
  double alpha = 0.0;
  double gamma = 0.0;

  auto tie() const {
    return std::make_tuple(mechanism_rank(mechanism), mechanism, rate, method_rank(method),
                           method, gamma, alpha, 1.0 - sigma2);
  }
  bool operator<(const GroupKey& o) const { return tie() < o.tie(); }
};

GroupKey key_of(const FitRecord& r) {
  return {r.mechanism, r.method, r.rate, r.sigma2, r.alpha, r.gamma};
}

void add_unsquared(ReplicationFit& fit) {
  const std::size_t n = fit.estimates.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::string& name = fit.estimates[i].name;
    std::string root;
    if (name.rfind("sigma2_", 0) == 0) {
      root = "sigma_" + name.substr(7);
    } else if (name.rfind("lambda2_", 0) == 0) {
      root = "lambda_" + name.substr(8);
    } else {
      continue;
    }
    const double e = fit.estimates[i].estimate;
    const double s = e > 0.0 ? std::sqrt(e) : kNaN;
    fit.estimates.push_back({root, s, fit.estimates[i].se / (2.0 * s)});
    fit.truth.push_back({root, std::sqrt(fit.truth[i].estimate), 0.0});
  }
}

std::map<GroupKey, std::vector<ReplicationFit>> group_fits(const std::vector<FitRecord>& records,
                                                           const ReportOptions& options) {
  // (group, cell, replication) -> fit, in record order.
  std::map<GroupKey, std::map<std::pair<int, int>, ReplicationFit>> staged;
  for (const auto& r : records) {
    if (r.parameter.empty() || !usable(r, options)) continue;
    auto& fit = staged[key_of(r)][{r.cell, r.replication}];
    if (fit.estimates.empty()) fit.converged = r.converged;
    fit.estimates.push_back({r.parameter, r.estimate, r.se});
    fit.truth.push_back({r.parameter, r.truth, 0.0});
  }
  std::map<GroupKey, std::vector<ReplicationFit>> out;
  for (auto& [key, reps] : staged) {
    auto& v = out[key];
    for (auto& [id, fit] : reps) {
      add_unsquared(fit);
      v.push_back(std::move(fit));
    }
  }
  return out;
}

const std::vector<std::string> kFamilies{"alpha", "gamma", "lambda2", "sigma2"};

std::vector<std::string> members(const std::string& family) {
  auto m = parameter_members(family);
  return m.empty() ? std::vector<std::string>{family} : m;
}

struct CsvRow {
  std::string missingness;
  std::string imputation;
  std::string true_alpha;
  std::string true_lambda2;
  std::string parameter;
  double value = kNaN;
};

std::filesystem::path write_csv(const std::filesystem::path& path, const std::vector<CsvRow>& rows,
                                bool full) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "missingness,imputation,true_alpha,true_lambda2,parameter,value\n";
  for (const auto& r : rows) {
    out << r.missingness << ',' << r.imputation << ',' << r.true_alpha << ','
        << r.true_lambda2 << ',' << r.parameter << ',' << value_text(r.value, full) << '\n';
  }
  return path;
}

void write_pair(std::vector<std::filesystem::path>& written, const std::filesystem::path& dir,
                const std::string& stem, const std::vector<CsvRow>& rows) {
  written.push_back(write_csv(dir / (stem + ".csv"), rows, false));
  written.push_back(write_csv(dir / (stem + "_full.csv"), rows, true));
}

std::string imputation_label(const std::string& method) {
  return method == to_string(Method::kComplete) ? kNoImputation : method;
}

}  // namespace

std::vector<CellSummary> summarize_records(const std::vector<FitRecord>& records,
                                           const ReportOptions& options) {
  std::vector<CellSummary> out;
  SummaryOptions so;
  so.outlier_cutoff = options.outlier_cutoff;
  so.exclude_nonconverged = options.exclude_nonconverged;
  for (const auto& [key, fits] : group_fits(records, options)) {
    CellId id{key.mechanism, key.method, key.sigma2, key.alpha, key.gamma, key.rate};
    out.push_back(summarize_cell(id, fits, so));
  }
  return out;
}

double overall_median_bias(const std::vector<FitRecord>& records, const std::string& family,
                           const std::function<bool(const FitRecord&)>& filter,
                           const ReportOptions& options) {
  const auto names = members(family);
  std::vector<double> biases;
  for (const auto& r : records) {
    if (!usable(r, options) || !std::isfinite(r.estimate)) continue;
    if (std::find(names.begin(), names.end(), r.parameter) == names.end()) continue;
    if (!filter(r)) continue;
    const double b = r.truth - r.estimate;
    if (std::abs(b) <= options.outlier_cutoff) biases.push_back(b);
  }
  if (biases.empty()) return kNaN;
  return median(std::move(biases));
}

std::vector<std::filesystem::path> emit_tables(const std::vector<FitRecord>& records,
                                               const std::filesystem::path& dir,
                                               const ReportOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;

  std::set<double> alphas, gammas, sigma2s, rates;
  std::set<std::string> mechanisms_seen, methods_seen;
  for (const auto& r : records) {
    alphas.insert(r.alpha);
    gammas.insert(r.gamma);
    sigma2s.insert(r.sigma2);
    if (!is_complete(r)) {
      rates.insert(r.rate);
      mechanisms_seen.insert(r.mechanism);
      methods_seen.insert(r.method);
    }
  }
  auto by_rank = [](std::set<std::string> s, auto rank) {
    std::vector<std::string> v(s.begin(), s.end());
    std::stable_sort(v.begin(), v.end(),
                     [&](const auto& a, const auto& b) { return rank(a) < rank(b); });
    return v;
  };
  const auto mechs = by_rank(mechanisms_seen, mechanism_rank);
  const auto methods = by_rank(methods_seen, method_rank);
  const bool any_complete =
      std::any_of(records.begin(), records.end(), [](const FitRecord& r) { return is_complete(r); });

  // Table 1: one row per level of each design variable, marginal over the rest.
  std::vector<CsvRow> t1;
  auto add = [&](CsvRow base, const std::function<bool(const FitRecord&)>& filter) {
    for (const auto& f : kFamilies) {
      CsvRow row = base;
      row.parameter = f;
      row.value = overall_median_bias(records, f, filter, options);
      t1.push_back(row);
    }
  };
  for (double a : alphas) {
    add({kAll, kAll, shortest(a), kAll, "", kNaN}, [a](const FitRecord& r) { return r.alpha == a; });
  }
  for (double g : gammas) {
    add({"gamma=" + shortest(g), kAll, kAll, kAll, "", kNaN},
        [g](const FitRecord& r) { return r.gamma == g; });
  }
  if (any_complete) {
    add({kCompleteMechanism, kNoImputation, kAll, kAll, "", kNaN},
        [](const FitRecord& r) { return is_complete(r); });
  }
  for (const auto& m : mechs) {
    add({m, kAll, kAll, kAll, "", kNaN},
        [m](const FitRecord& r) { return r.mechanism == m; });
  }
  if (any_complete) {
    add({kAll, kNoImputation, kAll, kAll, "", kNaN},
        [](const FitRecord& r) { return is_complete(r); });
  }
  for (const auto& m : methods) {
    add({kAll, imputation_label(m), kAll, kAll, "", kNaN},
        [m](const FitRecord& r) { return !is_complete(r) && r.method == m; });
  }
  for (double rate : rates) {
    add({"rate=" + shortest(rate), kAll, kAll, kAll, "", kNaN},
        [rate](const FitRecord& r) { return !is_complete(r) && r.rate == rate; });
  }
  for (double s : sigma2s) {
    add({"sigma2=" + shortest(s), kAll, kAll, kAll, "", kNaN},
        [s](const FitRecord& r) { return r.sigma2 == s; });
  }
  for (double s : sigma2s) {
    add({kAll, kAll, kAll, shortest(1.0 - s), "", kNaN},
        [s](const FitRecord& r) { return r.sigma2 == s; });
  }
  write_pair(written, dir, "table1_overall_median_bias", t1);

  // By-cell tables, one file per (gamma, rate) slice; complete-data rows are
  // repeated in every rate slice.
  const std::vector<CellSummary> summaries = summarize_records(records, options);
  struct Metric {
    std::string stem;
    std::function<double(const ParameterSummary&)> value;
  };
  const std::vector<Metric> metrics{
      {"median_bias_by_cell", [](const ParameterSummary& p) { return p.median_bias; }},
      {"coverage_by_cell", [](const ParameterSummary& p) { return p.coverage_pct; }},
      {"se_by_cell", [](const ParameterSummary& p) { return p.mean_se; }},
      {"marb_by_cell",
       [](const ParameterSummary& p) { return p.median_abs_rel_bias.value_or(kNaN); }},
  };
  std::set<double> slice_rates = rates;
  if (slice_rates.empty() && any_complete) slice_rates.insert(0.0);
  for (const auto& metric : metrics) {
    if (gammas.empty()) {
      write_pair(written, dir, metric.stem, {});
      continue;
    }
    for (double g : gammas) {
      for (double rate : slice_rates) {
        std::vector<CsvRow> rows;
        for (const auto& s : summaries) {
          if (s.id.gamma != g) continue;
          const bool complete = s.id.mechanism == kCompleteMechanism;
          if (!complete && s.id.rate != rate) continue;
          for (const auto& p : s.parameters) {
            // Unsquared loadings and SDs only feed the SE table.
            const bool unsquared =
                p.name.rfind("sigma_", 0) == 0 || p.name.rfind("lambda_", 0) == 0;
            if (unsquared && metric.stem != "se_by_cell") continue;
            rows.push_back({s.id.mechanism, imputation_label(s.id.method),
                            shortest(s.id.alpha), shortest(s.id.lambda2()), p.name,
                            metric.value(p)});
          }
        }
        write_pair(written, dir,
                   metric.stem + "_gamma_" + fixed(g, 2) + "_rate_" + fixed(rate, 2), rows);
      }
    }
  }
  return written;
}

PlotGroupStats plot_group(const std::string& label, const std::vector<double>& biases,
                          const PlotOptions& options) {
  PlotGroupStats g;
  g.label = label;
  std::vector<double> kept;
  for (double b : biases) {
    if (!std::isfinite(b)) continue;
    if (std::abs(b) > options.y_limit) {
      ++g.clamped;
    } else {
      kept.push_back(b);
    }
  }
  g.box = box_stats(kept);
  return g;
}

namespace {

struct Panel {
  std::string title;
  std::vector<PlotGroupStats> groups;
  std::vector<bool> dark;  // high-loading outline
};

std::string esc(const std::string& s) {
  std::string o;
  for (char c : s) {
    if (c == '<') o += "&lt;";
    else if (c == '>') o += "&gt;";
    else if (c == '&') o += "&amp;";
    else o += c;
  }
  return o;
}

void write_svg(const std::filesystem::path& path, const std::string& title,
               const std::vector<Panel>& panels, const PlotOptions& options) {
  const double panel_h = 220.0;
  const double left = 60.0;
  const double top = 40.0;
  const double box_w = 14.0;
  const double gap = 8.0;
  std::size_t max_groups = 1;
  for (const auto& p : panels) max_groups = std::max(max_groups, p.groups.size());
  const double plot_w = static_cast<double>(max_groups) * (box_w + gap) + gap;
  const double width = left + plot_w + 20.0;
  const double height = top + static_cast<double>(panels.size()) * (panel_h + 70.0) + 20.0;
  const double lim = options.y_limit;

  std::ofstream o(path, std::ios::trunc);
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fixed(width, 0)
    << "\" height=\"" << fixed(height, 0) << "\" font-family=\"sans-serif\" font-size=\"10\">\n";
  o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  o << "<text x=\"" << fixed(left, 1) << "\" y=\"20\" font-size=\"13\">" << esc(title)
    << "</text>\n";
  for (std::size_t pi = 0; pi < panels.size(); ++pi) {
    const Panel& p = panels[pi];
    const double y0 = top + static_cast<double>(pi) * (panel_h + 70.0) + 15.0;
    auto ymap = [&](double v) { return y0 + (lim - v) / (2.0 * lim) * panel_h; };
    o << "<text x=\"" << fixed(left, 1) << "\" y=\"" << fixed(y0 - 4.0, 1) << "\">"
      << esc(p.title) << "</text>\n";
    o << "<rect x=\"" << fixed(left, 1) << "\" y=\"" << fixed(y0, 1) << "\" width=\""
      << fixed(plot_w, 1) << "\" height=\"" << fixed(panel_h, 1)
      << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (double tick : {-lim, -lim / 2, 0.0, lim / 2, lim}) {
      o << "<line x1=\"" << fixed(left - 4, 1) << "\" x2=\"" << fixed(left + plot_w, 1)
        << "\" y1=\"" << fixed(ymap(tick), 1) << "\" y2=\"" << fixed(ymap(tick), 1)
        << "\" stroke=\"" << (tick == 0.0 ? "#999" : "#eee") << "\"/>\n";
      o << "<text x=\"" << fixed(left - 6, 1) << "\" y=\"" << fixed(ymap(tick) + 3, 1)
        << "\" text-anchor=\"end\">" << fixed(tick, 2) << "</text>\n";
    }
    for (std::size_t gi = 0; gi < p.groups.size(); ++gi) {
      const auto& g = p.groups[gi];
      const double x = left + gap + static_cast<double>(gi) * (box_w + gap);
      const double cx = x + box_w / 2;
      const std::string stroke = p.dark[gi] ? "#000" : "#aaa";
      if (g.box.n > 0) {
        o << "<line x1=\"" << fixed(cx, 1) << "\" x2=\"" << fixed(cx, 1) << "\" y1=\""
          << fixed(ymap(g.box.upper_whisker), 1) << "\" y2=\"" << fixed(ymap(g.box.lower_whisker), 1)
          << "\" stroke=\"" << stroke << "\"/>\n";
        o << "<rect x=\"" << fixed(x, 1) << "\" y=\"" << fixed(ymap(g.box.q3), 1)
          << "\" width=\"" << fixed(box_w, 1) << "\" height=\""
          << fixed(std::max(0.5, ymap(g.box.q1) - ymap(g.box.q3)), 1)
          << "\" fill=\"#cfe3f3\" stroke=\"" << stroke << "\"/>\n";
        o << "<line x1=\"" << fixed(x, 1) << "\" x2=\"" << fixed(x + box_w, 1) << "\" y1=\""
          << fixed(ymap(g.box.median), 1) << "\" y2=\"" << fixed(ymap(g.box.median), 1)
          << "\" stroke=\"" << stroke << "\" stroke-width=\"2\"/>\n";
        for (double v : g.box.outliers) {
          o << "<circle cx=\"" << fixed(cx, 1) << "\" cy=\"" << fixed(ymap(v), 1)
            << "\" r=\"1.5\" fill=\"" << stroke << "\"/>\n";
        }
      }
      o << "<text transform=\"translate(" << fixed(cx + 3, 1) << ',' << fixed(y0 + panel_h + 6, 1)
        << ") rotate(60)\" font-size=\"8\">" << esc(g.label) << "</text>\n";
    }
  }
  o << "</svg>\n";
}

std::string family_title(const std::string& f) {
  if (f == "alpha") return "alpha11";
  if (f == "gamma") return "gamma12";
  if (f == "lambda2") return "lambda2 (indicators 1-3)";
  return "sigma2 (indicators 1-3)";
}

}  // namespace

std::vector<std::filesystem::path> emit_plots(const std::vector<FitRecord>& records,
                                              const std::filesystem::path& dir,
                                              const PlotOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  std::set<double> gammas, rates;
  for (const auto& r : records) {
    gammas.insert(r.gamma);
    if (!is_complete(r)) rates.insert(r.rate);
  }
  if (rates.empty()) rates.insert(0.0);

  for (const auto& family : kFamilies) {
    const auto names = members(family);
    for (double g : gammas) {
      for (double rate : rates) {
        // mechanism -> (method, alpha, lambda2) -> biases
        std::map<std::pair<int, std::string>,
                 std::map<std::tuple<int, double, double>, std::pair<std::string, std::vector<double>>>>
            data;
        for (const auto& r : records) {
          if (r.gamma != g || !r.error.empty()) continue;
          if (!is_complete(r) && r.rate != rate) continue;
          if (std::find(names.begin(), names.end(), r.parameter) == names.end()) continue;
          auto& slot = data[{mechanism_rank(r.mechanism), r.mechanism}]
                           [{method_rank(r.method), r.alpha, 1.0 - r.sigma2}];
          if (slot.first.empty()) {
            slot.first = imputation_label(r.method) + " a=" + shortest(r.alpha) +
                         " l2=" + shortest(1.0 - r.sigma2);
          }
          slot.second.push_back(r.truth - r.estimate);
        }
        std::vector<Panel> panels;
        std::ostringstream caption;
        int total = 0;
        caption << "Bias of " << family_title(family) << ", gamma = " << shortest(g)
                << ", missingness rate = " << shortest(rate) << ".\n"
                << "Box: first quartile, median, third quartile (linear interpolation at"
                << " (n+1)p); whiskers extend to the most extreme points within 1.5 IQR;"
                << " dots beyond the whiskers are outliers. Grey outline: lambda2 = 0.25,"
                << " black outline: lambda2 = 0.75.\n";
        for (auto& [mkey, groups] : data) {
          Panel p;
          p.title = mkey.second;
          int panel_clamped = 0;
          for (auto& [gkey, slot] : groups) {
            PlotGroupStats s = plot_group(slot.first, slot.second, options);
            panel_clamped += s.clamped;
            p.groups.push_back(std::move(s));
            p.dark.push_back(std::get<2>(gkey) > 0.5);
          }
          caption << mkey.second << ": " << panel_clamped << " points outside [-"
                  << shortest(options.y_limit) << ", " << shortest(options.y_limit)
                  << "] removed\n";
          total += panel_clamped;
          panels.push_back(std::move(p));
        }
        caption << "Total removed: " << total << "\n";
        const std::string stem =
            "box_" + family + "_gamma_" + fixed(g, 2) + "_rate_" + fixed(rate, 2);
        write_svg(dir / (stem + ".svg"),
                  family_title(family) + " bias, gamma = " + shortest(g) + ", rate = " +
                      shortest(rate),
                  panels, options);
        std::ofstream(dir / (stem + ".caption.txt"), std::ios::trunc) << caption.str();
        written.push_back(dir / (stem + ".svg"));
        written.push_back(dir / (stem + ".caption.txt"));
      }
    }
  }
  return written;
}

}  // namespace ssmiss
