#include "ssmiss/missingness.hpp"

#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>
#include <vector>

#include "ssmiss/rng.hpp"

namespace ssmiss {

std::string_view to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kMcar: return "MCAR";
    case Mechanism::kMar: return "MAR";
    case Mechanism::kTmar: return "TMAR";
    case Mechanism::kAtmar: return "ATMAR";
    case Mechanism::kMnar: return "MNAR";
  }
  return "?";
}

Mechanism parse_mechanism(std::string_view name) {
  for (Mechanism m : {Mechanism::kMcar, Mechanism::kMar, Mechanism::kTmar,
                      Mechanism::kAtmar, Mechanism::kMnar}) {
    if (name == to_string(m)) return m;
  }
  throw std::invalid_argument("unknown missingness mechanism '" +
                              std::string(name) + "'");
}

MissingnessSpec paper_spec(Mechanism mechanism, double target_rate) {
  MissingnessSpec s;
  s.mechanism = mechanism;
  s.target_rate = target_rate;
  const bool low = target_rate < 0.225;
  switch (mechanism) {
    case Mechanism::kMcar:
      break;
    case Mechanism::kTmar:
      s.beta0 = low ? 3.0 : 2.0;
      s.beta_slope = -0.2;
      break;
    case Mechanism::kMar:
    case Mechanism::kAtmar:
    case Mechanism::kMnar:
      s.beta0 = low ? 4.0 : 1.5;
      s.beta_slope = low ? -3.5 : -3.0;
      break;
  }
  return s;
}

namespace {

void require_clean(const MaskedSeries& series) {
  if (series.mask.any()) {
    throw std::invalid_argument(
        "missingness: input series is already masked; mechanisms do not compose");
  }
  if (series.width() < kMaskedColumns) {
    throw std::invalid_argument("missingness: series has fewer than 3 indicators");
  }
}

void mask_row(MaskedSeries& s, int t) {
  for (int j = 0; j < kMaskedColumns; ++j) s.mask(t, j) = true;
}

}  // namespace

MaskedSeries apply_mcar(const MaskedSeries& series, double rate,
                        std::uint64_t seed) {
  if (!(rate >= 0.0 && rate < 1.0)) {
    throw std::invalid_argument("apply_mcar: rate must lie in [0, 1)");
  }
  require_clean(series);
  MaskedSeries out = series;
  const int T = series.length();
  const int k = static_cast<int>(std::lround(rate * T));
  std::vector<int> idx(T);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng = make_rng(seed);
  // Partial Fisher-Yates: the first k entries are a uniform sample.
  for (int i = 0; i < k; ++i) {
    std::uniform_int_distribution<int> pick(i, T - 1);
    std::swap(idx[i], idx[pick(rng)]);
    mask_row(out, idx[i]);
  }
  return out;
}

double missingness_probability(const MissingnessSpec& spec, double driver) {
  const double eta = spec.beta0 + spec.beta_slope * driver;
  // Numerically stable logistic of -eta.
  if (eta >= 0.0) {
    const double e = std::exp(-eta);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(eta));
}

Eigen::VectorXd mechanism_drivers(const MaskedSeries& series,
                                  Mechanism mechanism) {
  const int T = series.length();
  Eigen::VectorXd d(T);
  if (mechanism == Mechanism::kTmar) {
    return series.day_index.cast<double>();
  }
  if (mechanism == Mechanism::kMcar) {
    throw std::invalid_argument("mechanism_drivers: MCAR has no driver");
  }
  if (!series.truth) {
    throw std::invalid_argument(
        "apply_mechanism: latent truth is required for state-driven mechanisms");
  }
  const Eigen::MatrixXd& x = series.truth->x;
  for (int t = 0; t < T; ++t) {
    switch (mechanism) {
      case Mechanism::kMar: d(t) = x(t, 1); break;
      case Mechanism::kMnar: d(t) = x(t, 0); break;
      case Mechanism::kAtmar:
        d(t) = t == 0 ? std::numeric_limits<double>::quiet_NaN() : x(t - 1, 0);
        break;
      default: break;
    }
  }
  return d;
}

MaskedSeries apply_mechanism(const MaskedSeries& series,
                             const MissingnessSpec& spec, std::uint64_t seed) {
  if (spec.mechanism == Mechanism::kMcar) {
    throw std::invalid_argument("apply_mechanism: use apply_mcar for MCAR");
  }
  if (spec.mechanism != Mechanism::kTmar && !series.truth) {
    throw std::invalid_argument("apply_mechanism: series has no latent truth");
  }
  require_clean(series);
  const Eigen::VectorXd d = mechanism_drivers(series, spec.mechanism);
  MaskedSeries out = series;
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (int t = 0; t < series.length(); ++t) {
    // One uniform per timepoint keeps streams aligned across mechanisms.
    const double u = unif(rng);
    if (std::isnan(d(t))) continue;
    if (u < missingness_probability(spec, d(t))) mask_row(out, t);
  }
  return out;
}

MaskedSeries apply_missingness(const MaskedSeries& series,
                               const MissingnessSpec& spec, std::uint64_t seed) {
  if (spec.mechanism == Mechanism::kMcar) {
    return apply_mcar(series, spec.target_rate, seed);
  }
  return apply_mechanism(series, spec, seed);
}

Calibration calibrate_intercept(Mechanism mechanism, const ModelParams& params,
                                double target_rate, double slope,
                                std::uint64_t seed, int timepoints, double lo,
                                double hi) {
  if (mechanism == Mechanism::kMcar) {
    throw std::invalid_argument("calibrate_intercept: MCAR needs no calibration");
  }
  if (!(target_rate > 0.0 && target_rate < 1.0)) {
    throw std::invalid_argument("calibrate_intercept: target must lie in (0,1)");
  }
  if (timepoints < kCalibrationTimepoints) {
    throw std::invalid_argument("calibrate_intercept: need >= 200000 timepoints");
  }

  MaskedSeries drivers_src;
  if (mechanism == Mechanism::kTmar) {
    drivers_src = make_series(Eigen::MatrixXd::Zero(timepoints, 1));
  } else {
    drivers_src = simulate(params, timepoints, seed);
  }
  Eigen::VectorXd d = mechanism_drivers(drivers_src, mechanism);
  std::vector<double> drivers;
  drivers.reserve(d.size());
  for (double v : d) {
    if (!std::isnan(v)) drivers.push_back(v);
  }

  MissingnessSpec spec;
  spec.mechanism = mechanism;
  spec.beta_slope = slope;
  auto rate_at = [&](double b0) {
    spec.beta0 = b0;
    double acc = 0.0;
    for (double v : drivers) acc += missingness_probability(spec, v);
    return acc / static_cast<double>(drivers.size());
  };

  const double r_lo = rate_at(lo);
  const double r_hi = rate_at(hi);
  // rate is decreasing in beta0.
  if (!(r_lo >= target_rate && r_hi <= target_rate)) {
    std::ostringstream os;
    os << "calibrate_intercept: range [" << lo << ", " << hi
       << "] does not bracket target " << target_rate << " (rates " << r_lo
       << " .. " << r_hi << ", mechanism " << to_string(mechanism)
       << ", slope " << slope << ")";
    throw CalibrationError(os.str());
  }

  Calibration out;
  double a = lo;
  double b = hi;
  double mid = 0.5 * (a + b);
  double r = rate_at(mid);
  for (out.iterations = 1; out.iterations <= 200; ++out.iterations) {
    mid = 0.5 * (a + b);
    r = rate_at(mid);
    if (std::abs(r - target_rate) <= 5e-4 || b - a < 1e-12) break;
    if (r > target_rate) {
      a = mid;
    } else {
      b = mid;
    }
  }
  out.beta0 = mid;
  out.achieved_rate = r;
  return out;
}

MissingnessSpec calibrated(const MissingnessSpec& spec,
                           const ModelParams& params, std::uint64_t seed) {
  if (spec.mechanism == Mechanism::kMcar) {
    MissingnessSpec out = spec;
    out.calibrated = true;
    return out;
  }
  const Calibration c = calibrate_intercept(spec.mechanism, params,
                                            spec.target_rate, spec.beta_slope,
                                            seed);
  MissingnessSpec out = spec;
  out.beta0 = c.beta0;
  out.calibrated = true;
  return out;
}

double masked_row_fraction(const MaskedSeries& series) {
  if (series.length() == 0) return 0.0;
  int n = 0;
  for (int t = 0; t < series.length(); ++t) n += series.mask(t, 0) ? 1 : 0;
  return static_cast<double>(n) / series.length();
}

}  // namespace ssmiss
