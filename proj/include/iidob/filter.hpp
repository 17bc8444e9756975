#pragma once

// First-order filter on the disturbance estimate. Its derivative is built
// from known signals only, so barrier conditions can use it directly.

#include <cmath>

#include "iidob/numerics.hpp"
#include "iidob/observer.hpp"

namespace iidob {

struct FilterParams {
  double T1 = 50.0;
  double T2 = 1.0;
};

struct FilterState {
  Vec dhat_f;
};

/// Frobenius norm of the diagonal d beta / dx from its diagonal entries.
inline double dbeta_dx_norm(const Vec& diagonal) { return diagonal.norm(); }

/// T1 + T2 r^2 |d beta/dx|_F^2
inline double filter_gain(const FilterParams& p, double dbeta_norm, double r) {
  return p.T1 + p.T2 * r * r * dbeta_norm * dbeta_norm;
}

/// -(T1 + T2 r^2 |d beta/dx|_F^2) (dhat_f - dhat)
inline Vec filter_rhs(const FilterState& s, const FilterParams& p, const Vec& dhat, double dbeta_norm, double r) {
  require(r >= 1.0 - 1e-12, "filter_rhs: r must be >= 1");
  require_dim(s.dhat_f, dhat.size(), "filter_rhs: dhat_f");
  return -filter_gain(p, dbeta_norm, r) * (s.dhat_f - dhat);
}

struct FilterEnvelope {
  double zeta = 0.0;
  double omega = 0.0;
  double z0_sq = 0.0;

  /// sqrt((|z(0)|^2 - 2 omega / zeta) e^{-zeta t} + 2 omega / zeta)
  double rho_f(double t) const {
    const double floor = 2.0 * omega / zeta;
    return std::sqrt(std::max(0.0, (z0_sq - floor) * std::exp(-zeta * t) + floor));
  }
};

inline double filter_zeta(const FilterParams& p, double kappa) {
  return std::min(2.0 * p.T1, 2.0 * kappa - 1.0 / (2.0 * p.T2));
}

/// zeta = min{2 T1, 2 kappa - 1/(2 T2)} and the filtering-error envelope.
inline FilterEnvelope zeta_and_rho_f(const FilterParams& p, const BoundReport& rep, double z0norm) {
  if (!(p.T1 > 0.0) || !(p.T2 > 0.0)) throw ConfigError("filter gains must be positive", "T1, T2 > 0");
  const double threshold = 1.0 / (4.0 * rep.kappa);
  if (!(p.T2 > threshold)) {
    throw ConfigError("filter gain T2 = " + std::to_string(p.T2) + " must exceed 1/(4 kappa) = " +
                          std::to_string(threshold),
                      "T2 > 1/(4 kappa)");
  }
  return FilterEnvelope{filter_zeta(p, rep.kappa), rep.omega, z0norm * z0norm};
}

}  // namespace iidob
