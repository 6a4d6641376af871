#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "ssmiss/model.hpp"

namespace ssmiss {

enum class Mechanism { kMcar, kMar, kTmar, kAtmar, kMnar };

std::string_view to_string(Mechanism m);
Mechanism parse_mechanism(std::string_view name);

/// Logistic missingness model p = 1 / (1 + exp(beta0 + beta_slope * d)).
/// The driver d is chosen by the mechanism: x2_t (MAR), day index (TMAR),
/// x1_{t-1} (ATMAR), x1_t (MNAR). MCAR ignores the coefficients.
struct MissingnessSpec {
  Mechanism mechanism = Mechanism::kMcar;
  double target_rate = 0.15;
  double beta0 = 0.0;
  double beta_slope = 0.0;
  bool calibrated = false;
};

/// Preloaded coefficients for the study's mechanisms at 15% / 30% targets.
MissingnessSpec paper_spec(Mechanism mechanism, double target_rate);

/// Indicators masked jointly by every mechanism (the first state's block).
inline constexpr int kMaskedColumns = 3;

MaskedSeries apply_mcar(const MaskedSeries& series, double rate,
                        std::uint64_t seed);

double missingness_probability(const MissingnessSpec& spec, double driver);

MaskedSeries apply_mechanism(const MaskedSeries& series,
                             const MissingnessSpec& spec, std::uint64_t seed);

/// Dispatches to apply_mcar or apply_mechanism.
MaskedSeries apply_missingness(const MaskedSeries& series,
                               const MissingnessSpec& spec, std::uint64_t seed);

/// Driver value of the mechanism at each timepoint; NaN where undefined
/// (ATMAR at t = 0).
Eigen::VectorXd mechanism_drivers(const MaskedSeries& series,
                                  Mechanism mechanism);

class CalibrationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Calibration {
  double beta0 = 0.0;
  double achieved_rate = 0.0;
  int iterations = 0;
};

inline constexpr int kCalibrationTimepoints = 200000;

/// Bisection on the intercept with the slope held fixed, so that the mean
/// masking probability over a long simulated series matches target_rate to
/// within 5e-4. The simulated drivers are held fixed across the search.
Calibration calibrate_intercept(Mechanism mechanism, const ModelParams& params,
                                double target_rate, double slope,
                                std::uint64_t seed,
                                int timepoints = kCalibrationTimepoints,
                                double lo = -40.0, double hi = 40.0);

/// Returns `spec` with beta0 replaced by the calibrated intercept.
MissingnessSpec calibrated(const MissingnessSpec& spec,
                           const ModelParams& params, std::uint64_t seed);

/// Fraction of rows whose masked block is missing.
double masked_row_fraction(const MaskedSeries& series);

}  // namespace ssmiss
