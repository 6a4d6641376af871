#pragma once

// Scalar-generic information-form Kalman log-likelihood for the two-state,
// six-indicator block model. Instantiated with double for line searches and
// with a forward-mode autodiff scalar for gradients.

#include <array>
#include <cmath>
#include <vector>

#include "ssmiss/estimator.hpp"
#include "ssmiss/kalman.hpp"

namespace ssmiss::detail {

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline double value_of(double v) { return v; }
template <typename S>
double value_of(const S& v) {
  return v.value();
}

/// Spectral radius of a real 2x2 matrix.
inline double spectral_radius2(double a, double b, double c, double d) {
  const double tr = a + d;
  const double det = a * d - b * c;
  const double disc = tr * tr - 4.0 * det;
  if (disc >= 0.0) {
    const double r = std::sqrt(disc);
    return std::max(std::abs(0.5 * (tr + r)), std::abs(0.5 * (tr - r)));
  }
  return std::sqrt(std::max(det, 0.0));
}

template <typename S>
S det3(const S& a00, const S& a01, const S& a02, const S& a10, const S& a11,
       const S& a12, const S& a20, const S& a21, const S& a22) {
  return a00 * (a11 * a22 - a12 * a21) - a01 * (a10 * a22 - a12 * a20) +
         a02 * (a10 * a21 - a11 * a20);
}

/// theta layout: alpha11, alpha22, gamma12, lambda1..6, logvar1..6[, gamma21].
template <typename S>
S info_loglik(const S* theta, const LikelihoodOptions& opt, int T,
              const std::vector<std::array<double, kIndicators>>& z,
              const std::vector<unsigned>& observed, bool& failed) {
  using std::exp;
  using std::log;
  failed = false;
  const S& a11 = theta[0];
  const S& a22 = theta[1];
  const S& g12 = theta[2];
  const S g21 = opt.free_gamma21 ? theta[15] : S(0.0);
  std::array<S, kIndicators> lam;
  std::array<S, kIndicators> rinv;
  std::array<S, kIndicators> logr;
  for (int i = 0; i < kIndicators; ++i) {
    lam[i] = theta[3 + i];
    logr[i] = theta[9 + i];
    rinv[i] = exp(-logr[i]);
  }

  // Initial state covariance.
  S p11, p12, p22;
  const double rho = spectral_radius2(value_of(a11), value_of(g12),
                                      value_of(g21), value_of(a22));
  if (opt.init == InitMode::kStationary && rho < 1.0 - 1e-9) {
    // Sigma = A Sigma A' + I written as a 3x3 system in (s11, s12, s22).
    const S m00 = 1.0 - a11 * a11, m01 = -2.0 * a11 * g12, m02 = -g12 * g12;
    const S m10 = -a11 * g21, m11 = 1.0 - (a11 * a22 + g12 * g21),
            m12 = -g12 * a22;
    const S m20 = -g21 * g21, m21 = -2.0 * g21 * a22, m22 = 1.0 - a22 * a22;
    const S det = det3(m00, m01, m02, m10, m11, m12, m20, m21, m22);
    // rhs = (1, 0, 1); Cramer's rule.
    const S one(1.0), zero(0.0);
    p11 = det3(one, m01, m02, zero, m11, m12, one, m21, m22) / det;
    p12 = det3(m00, one, m02, m10, zero, m12, m20, one, m22) / det;
    p22 = det3(m00, m01, one, m10, m11, zero, m20, m21, one) / det;
  } else {
    p11 = S(kDiffuseScale);
    p12 = S(0.0);
    p22 = S(kDiffuseScale);
  }

  S x1(0.0), x2(0.0);
  S ll(0.0);
  for (int t = 0; t < T; ++t) {
    // Time update.
    const S xb1 = a11 * x1 + g12 * x2;
    const S xb2 = g21 * x1 + a22 * x2;
    const S ap11 = a11 * p11 + g12 * p12;
    const S ap12 = a11 * p12 + g12 * p22;
    const S ap21 = g21 * p11 + a22 * p12;
    const S ap22 = g21 * p12 + a22 * p22;
    const S pb11 = ap11 * a11 + ap12 * g12 + 1.0;
    const S pb12 = ap11 * g21 + ap12 * a22;
    const S pb22 = ap21 * g21 + ap22 * a22 + 1.0;

    const unsigned bits = observed[t];
    if (bits == 0u) {
      x1 = xb1;
      x2 = xb2;
      p11 = pb11;
      p12 = pb12;
      p22 = pb22;
      continue;
    }

    // Accumulate H' R^-1 H (diagonal under the block pattern), H' R^-1 e.
    S j11(0.0), j22(0.0), b1(0.0), b2(0.0), quad(0.0), lr(0.0);
    int n_obs = 0;
    const auto& zt = z[t];
    for (int i = 0; i < kIndicators; ++i) {
      if (!(bits & (1u << i))) continue;
      ++n_obs;
      const bool first = i < 3;
      const S e = zt[i] - lam[i] * (first ? xb1 : xb2);
      const S le = lam[i] * rinv[i];
      if (first) {
        j11 += le * lam[i];
        b1 += le * e;
      } else {
        j22 += le * lam[i];
        b2 += le * e;
      }
      quad += e * e * rinv[i];
      lr += logr[i];
    }

    const S det_pb = pb11 * pb22 - pb12 * pb12;
    if (!(value_of(det_pb) > 0.0)) {
      failed = true;
      return S(0.0);
    }
    const S m11 = pb22 / det_pb + j11;
    const S m12 = -pb12 / det_pb;
    const S m22 = pb11 / det_pb + j22;
    const S det_m = m11 * m22 - m12 * m12;
    if (!(value_of(det_m) > 0.0)) {
      failed = true;
      return S(0.0);
    }
    p11 = m22 / det_m;
    p12 = -m12 / det_m;
    p22 = m11 / det_m;
    const S pb_1 = p11 * b1 + p12 * b2;
    const S pb_2 = p12 * b1 + p22 * b2;
    x1 = xb1 + pb_1;
    x2 = xb2 + pb_2;
    ll -= 0.5 * (n_obs * kLog2Pi + lr + log(det_pb) + log(det_m) + quad -
                 (b1 * pb_1 + b2 * pb_2));
  }
  if (!std::isfinite(value_of(ll))) failed = true;
  return ll;
}

}  // namespace ssmiss::detail
