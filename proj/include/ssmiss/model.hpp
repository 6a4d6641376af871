#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>

#include <Eigen/Dense>

namespace ssmiss {

inline constexpr int kStates = 2;
inline constexpr int kIndicators = 6;
inline constexpr int kBeepsPerDay = 10;

using MaskMatrix = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

class NonStationaryError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Linear Gaussian state-space model
///   x_t = A x_{t-1} + v_t,  v_t ~ N(0, Q)
///   z_t = H x_t + w_t,      w_t ~ N(0, R)
/// Sizes are generic; the study uses 2 states and 6 indicators with a block
/// loading pattern and diagonal R.
struct ModelParams {
  Eigen::MatrixXd A;
  Eigen::MatrixXd H;
  Eigen::MatrixXd Q;
  Eigen::MatrixXd R;

  int states() const { return static_cast<int>(A.rows()); }
  int indicators() const { return static_cast<int>(H.rows()); }
};

struct LatentTrajectory {
  Eigen::MatrixXd x;  // T x states
};

/// Observations with their missingness mask (true = missing).
struct MaskedSeries {
  Eigen::MatrixXd z;                      // T x indicators
  MaskMatrix mask;                        // T x indicators
  std::optional<LatentTrajectory> truth;  // simulation ground truth
  Eigen::VectorXi day_index;              // beep within day, 1..10

  int length() const { return static_cast<int>(z.rows()); }
  int width() const { return static_cast<int>(z.cols()); }
  bool any_missing() const { return mask.any(); }

  /// Same observations with the mask cleared.
  MaskedSeries unmasked() const;
};

/// Builds a MaskedSeries from an observation matrix with no missing values.
MaskedSeries make_series(Eigen::MatrixXd z);

double spectral_radius(const Eigen::MatrixXd& A);

/// Throws std::invalid_argument when the structural invariants are violated:
/// spectral radius of A < 1, symmetric PSD Q, diagonal nonnegative R.
void validate(const ModelParams& params);

/// One cell of the study's condition grid. Q = I, R = sigma2 I,
/// block loadings sqrt(1 - sigma2), A = [[alpha, gamma], [0, alpha]].
ModelParams make_condition(double sigma2, double alpha, double gamma);

/// True when (sigma2, alpha, gamma) lies on the study's published grid.
bool is_paper_condition(double sigma2, double alpha, double gamma);

/// Solves Sigma = A Sigma A' + Q by vectorisation.
Eigen::MatrixXd stationary_covariance(const ModelParams& params);
Eigen::MatrixXd stationary_covariance(const Eigen::MatrixXd& A,
                                      const Eigen::MatrixXd& Q);

inline constexpr int kDefaultBurnIn = 100;

/// Simulates T timepoints. The initial state is drawn from the stationary
/// distribution and `burn_in` transitions are discarded before recording.
MaskedSeries simulate(const ModelParams& params, int T, std::uint64_t seed,
                      int burn_in = kDefaultBurnIn);

}  // namespace ssmiss
