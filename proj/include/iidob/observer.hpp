#pragma once

// Immersion-and-invariance disturbance observer (IIDOB).
//
// The estimate of the total disturbance d = p(x) w is  dhat = xi + beta(x, xhat, u)
// where beta integrates the gain function psi along each coordinate with the
// remaining slots frozen at the state estimate. The mismatch between
// d beta / dx and psi(x, u) I is compensated by the scaling factor r whose
// growth is driven by the divided-difference coefficients Delta_j.

#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "iidob/numerics.hpp"
#include "iidob/system_model.hpp"

namespace iidob {

struct ObserverGains {
  double gamma = 100.0;
  double eta = 1.0;
  double c = 0.5;
  double theta = 10.0;
  double k1 = 10.0;
  double k2 = 10.0;
};

/// Declared disturbance bounds; used for bound reports only, never by the
/// observer dynamics.
struct DisturbanceBounds {
  double omega0 = 0.0;
  double omega1 = 0.0;
  int l = 1;
};

struct ObserverState {
  Vec xhat;
  Vec xi;
  double r = 1.001;
};

struct Violation {
  std::string inequality;
  double lhs = 0.0;
  double rhs = 0.0;
};

/// Constants of the ultimate-boundedness argument.
struct BoundReport {
  int n = 0;
  double gamma = 0.0;
  double theta = 0.0;
  double kappa = 0.0;          ///< gamma - n/(2c) - theta
  double omega = 0.0;          ///< (omega1^2 + l omega0^2 + l omega0^4) / (2 eta)
  double chi = 0.0;            ///< min{2 kappa - 1/(2 k2), 2 k1, theta}
  double k2_threshold = 0.0;   ///< 1 / (4 gamma - 2n/c - 4 theta)
  double ultimate_bound = 0.0; ///< sqrt(omega (theta + 2 omega) / (kappa chi))
};

struct GainValidation {
  std::optional<BoundReport> report;
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
};

inline double disturbance_omega(const DisturbanceBounds& b, double eta) {
  const double l = b.l;
  const double w0sq = b.omega0 * b.omega0;
  return (b.omega1 * b.omega1 + l * w0sq + l * w0sq * w0sq) / (2.0 * eta);
}

inline GainValidation validate_gains(const ObserverGains& g, int n, double r0, const DisturbanceBounds& bounds) {
  GainValidation out;
  auto positive = [&](const char* name, double v) {
    if (!(v > 0.0)) out.violations.push_back({std::string(name) + " > 0", v, 0.0});
  };
  positive("gamma", g.gamma);
  positive("eta", g.eta);
  positive("c", g.c);
  positive("theta", g.theta);
  positive("k1", g.k1);
  positive("k2", g.k2);
  if (!out.violations.empty()) return out;

  const double kappa = g.gamma - n / (2.0 * g.c) - g.theta;
  if (!(kappa > 0.0)) {
    out.violations.push_back({"gamma > n/(2c) + theta", g.gamma, n / (2.0 * g.c) + g.theta});
  }
  const double denom = 4.0 * g.gamma - 2.0 * n / g.c - 4.0 * g.theta;
  const double k2_min = denom > 0.0 ? 1.0 / denom : std::numeric_limits<double>::infinity();
  if (!(g.k2 > k2_min)) out.violations.push_back({"k2 > 1/(4 gamma - 2n/c - 4 theta)", g.k2, k2_min});
  if (!(r0 > 1.0)) out.violations.push_back({"r(0) > 1", r0, 1.0});
  if (!out.violations.empty()) return out;

  BoundReport rep;
  rep.n = n;
  rep.gamma = g.gamma;
  rep.theta = g.theta;
  rep.kappa = kappa;
  rep.omega = disturbance_omega(bounds, g.eta);
  rep.chi = std::min({2.0 * kappa - 1.0 / (2.0 * g.k2), 2.0 * g.k1, g.theta});
  rep.k2_threshold = k2_min;
  rep.ultimate_bound = std::sqrt(rep.omega * (g.theta + 2.0 * rep.omega) / (kappa * rep.chi));
  out.report = rep;
  return out;
}

// ---------------------------------------------------------------------------
// psi and beta
// ---------------------------------------------------------------------------

/// psi from precomputed model terms at x.
inline double psi_from_terms(const ModelTerms& t, const ObserverGains& gains, const Vec& u) {
  const Vec drift = t.f + t.g * u;
  double s = t.p.squaredNorm();
  for (const Mat& d : t.dp) s += (d * drift).squaredNorm() + (d * t.p).squaredNorm();
  return 0.5 * gains.eta * s + gains.gamma;
}

inline double psi(const SystemModel& model, const ObserverGains& gains, const Vec& x, const Vec& u) {
  require_dim(x, model.n, "psi: x");
  require_dim(u, model.m, "psi: u");
  return psi_from_terms(model.terms(x), gains, u);
}

/// xhat with slot i replaced by x_i.
inline Vec mixed_point(const Vec& x, const Vec& xhat, Eigen::Index i) {
  Vec y = xhat;
  y[i] = x[i];
  return y;
}

inline Vec beta(const SystemModel& model, const ObserverGains& gains, const Vec& x, const Vec& xhat,
                const Vec& u, const QuadRule& rule) {
  require_dim(x, model.n, "beta: x");
  require_dim(xhat, model.n, "beta: xhat");
  require_dim(u, model.m, "beta: u");
  Vec out(model.n);
  Vec y = xhat;
  for (int i = 0; i < model.n; ++i) {
    y = xhat;
    out[i] = quad_gl(
        [&](double tau) {
          y[i] = tau;
          return psi_from_terms(model.terms(y), gains, u);
        },
        0.0, x[i], rule);
  }
  return out;
}

/// Diagonal of d beta / dx: psi evaluated at each mixed point.
inline Vec dbeta_dx_diagonal(const SystemModel& model, const ObserverGains& gains, const Vec& x,
                             const Vec& xhat, const Vec& u) {
  Vec d(model.n);
  for (int i = 0; i < model.n; ++i) d[i] = psi(model, gains, mixed_point(x, xhat, i), u);
  return d;
}

inline Mat dbeta_dx(const SystemModel& model, const ObserverGains& gains, const Vec& x, const Vec& xhat,
                    const Vec& u) {
  return dbeta_dx_diagonal(model, gains, x, xhat, u).asDiagonal();
}

struct BetaJacobians {
  Mat dxhat;  ///< n x n, zero diagonal
  Mat du;     ///< n x m
};

/// Jacobians of beta with respect to xhat and u by the Leibniz rule: the
/// slot partials of psi (central differences) are integrated along tau.
inline BetaJacobians beta_jacobians(const SystemModel& model, const ObserverGains& gains, const Vec& x,
                                    const Vec& xhat, const Vec& u, const QuadRule& rule) {
  const int n = model.n;
  const int m = model.m;
  BetaJacobians out{Mat::Zero(n, n), Mat::Zero(n, m)};
  for (int i = 0; i < n; ++i) {
    Vec integral = quad_gl(
        [&](double tau) {
          Vec y = xhat;
          y[i] = tau;
          Vec grad(n + m);
          for (int j = 0; j < n; ++j) {
            if (j == i) {
              grad[j] = 0.0;
              continue;
            }
            grad[j] = central_diff([&](const Vec& yy) { return psi(model, gains, yy, u); }, y, j, fd_step(y[j]));
          }
          for (int k = 0; k < m; ++k) {
            grad[n + k] = central_diff([&](const Vec& uu) { return psi(model, gains, y, uu); }, u, k, fd_step(u[k]));
          }
          return grad;
        },
        0.0, x[i], rule);
    out.dxhat.row(i) = integral.head(n).transpose();
    out.du.row(i) = integral.tail(m).transpose();
  }
  return out;
}

inline Mat dbeta_dxhat(const SystemModel& model, const ObserverGains& gains, const Vec& x, const Vec& xhat,
                       const Vec& u, const QuadRule& rule) {
  return beta_jacobians(model, gains, x, xhat, u, rule).dxhat;
}

inline Mat dbeta_du(const SystemModel& model, const ObserverGains& gains, const Vec& x, const Vec& xhat,
                    const Vec& u, const QuadRule& rule) {
  return beta_jacobians(model, gains, x, xhat, u, rule).du;
}

// ---------------------------------------------------------------------------
// Divided-difference coefficients
// ---------------------------------------------------------------------------

/// delta(i, j) = delta_ij; Delta_j = diag(delta.col(j)).
struct DeltaCoeffs {
  Mat delta;
  double norm_sq(Eigen::Index j) const { return delta.col(j).squaredNorm(); }
};

inline constexpr double kDeltaFallback = 1e-8;

/// Telescoping construction for an arbitrary scalar function of the state:
/// row i walks from x to the i-th mixed point switching slots j != i in
/// ascending order. A switch across |e_j| <= 1e-8 uses -d psi / d x_j.
template <typename PsiOfX>
DeltaCoeffs delta_coeffs_for(PsiOfX&& psi_of_x, const Vec& x, const Vec& xhat) {
  const Eigen::Index n = x.size();
  DeltaCoeffs out{Mat::Zero(n, n)};
  const double psi_x = psi_of_x(x);
  for (Eigen::Index i = 0; i < n; ++i) {
    Vec cur = x;
    double before = psi_x;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (j == i) continue;
      const double e_j = xhat[j] - x[j];
      if (std::abs(e_j) > kDeltaFallback) {
        cur[j] = xhat[j];
        const double after = psi_of_x(cur);
        out.delta(i, j) = -(after - before) / e_j;
        before = after;
      } else {
        out.delta(i, j) = -central_diff(psi_of_x, cur, j, fd_step(cur[j]));
        cur[j] = xhat[j];
        if (e_j != 0.0) before = psi_of_x(cur);
      }
    }
  }
  return out;
}

inline DeltaCoeffs delta_coeffs(const SystemModel& model, const ObserverGains& gains, const Vec& x,
                                const Vec& xhat, const Vec& u) {
  return delta_coeffs_for([&](const Vec& y) { return psi(model, gains, y, u); }, x, xhat);
}

/// Per-row residual of psi(mixed_i) - psi(x) + sum_j delta_ij e_j.
template <typename PsiOfX>
Vec delta_residual_for(PsiOfX&& psi_of_x, const Vec& x, const Vec& xhat, const DeltaCoeffs& d) {
  const Vec e = xhat - x;
  const double psi_x = psi_of_x(x);
  Vec res(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    res[i] = psi_of_x(mixed_point(x, xhat, i)) - psi_x + d.delta.row(i).dot(e);
  }
  return res;
}

inline Vec lambda_diagonal(const ObserverGains& g, double r, const DeltaCoeffs& d) {
  const Eigen::Index n = d.delta.cols();
  Vec diag(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    diag[j] = g.k1 + g.k2 * r * r + 0.5 * g.c * r * r * d.norm_sq(j);
  }
  return diag;
}

/// Lambda = (k1 + k2 r^2) I + (c r^2 / 2) diag(|Delta_1|^2, ..., |Delta_n|^2).
inline Mat lambda_gain(const ObserverGains& g, double r, const DeltaCoeffs& d) {
  require(r >= 1.0, "lambda_gain: r must be >= 1");
  return lambda_diagonal(g, r, d).asDiagonal();
}

inline double r_rate(const ObserverGains& g, double r, const Vec& e, const DeltaCoeffs& d) {
  double s = 0.0;
  for (Eigen::Index j = 0; j < e.size(); ++j) s += e[j] * e[j] * d.norm_sq(j);
  return -g.theta * (r - 1.0) + 0.5 * g.c * r * s;
}

// ---------------------------------------------------------------------------
// Observer right-hand side
// ---------------------------------------------------------------------------

/// Signals that do not need beta itself: everything the closed loop uses
/// once dhat is known.
struct ObserverAlgebra {
  ModelTerms terms;      ///< f, g, p, dp at x
  double psi_x = 0.0;    ///< psi(x, u)
  Vec dbeta_dx;          ///< diagonal of d beta / dx
  DeltaCoeffs deltas;
  Vec lambda;            ///< diagonal of Lambda
  Vec xhat_dot;
  double r_dot = 0.0;
};

inline ObserverAlgebra observer_algebra(const SystemModel& model, const ObserverGains& gains, const Vec& x,
                                        const Vec& xhat, const Vec& u, const Vec& dhat, double r) {
  ObserverAlgebra a;
  a.terms = model.terms(x);
  a.psi_x = psi_from_terms(a.terms, gains, u);
  auto psi_at = [&](const Vec& y) { return psi(model, gains, y, u); };
  a.dbeta_dx.resize(model.n);
  for (int i = 0; i < model.n; ++i) a.dbeta_dx[i] = psi_at(mixed_point(x, xhat, i));
  a.deltas = delta_coeffs_for(psi_at, x, xhat);
  a.lambda = lambda_diagonal(gains, r, a.deltas);
  const Vec e = xhat - x;
  a.xhat_dot = a.terms.f + a.terms.g * u + dhat - a.lambda.cwiseProduct(e);
  a.r_dot = r_rate(gains, r, e, a.deltas);
  return a;
}

struct ObserverRates {
  Vec xhat_dot;
  Vec xi_dot;
  double r_dot = 0.0;
  Vec dhat;
};

/// Full observer vector field in its own coordinates (xhat, xi, r).
/// Evaluation order: beta, dhat, Delta, Lambda, xhat', xi', r'.
inline ObserverRates observer_rhs(const ObserverState& s, const SystemModel& model, const ObserverGains& gains,
                                  const Vec& x, const Vec& u, const Vec& v, const QuadRule& rule) {
  require(s.r >= 1.0 - 1e-12, "observer_rhs: r must be >= 1");
  require_dim(s.xhat, model.n, "observer_rhs: xhat");
  require_dim(s.xi, model.n, "observer_rhs: xi");
  require_dim(v, model.m, "observer_rhs: v");
  ObserverRates out;
  const Vec b = beta(model, gains, x, s.xhat, u, rule);
  out.dhat = s.xi + b;
  const ObserverAlgebra a = observer_algebra(model, gains, x, s.xhat, u, out.dhat, s.r);
  const BetaJacobians jac = beta_jacobians(model, gains, x, s.xhat, u, rule);
  out.xhat_dot = a.xhat_dot;
  out.xi_dot = -a.dbeta_dx.cwiseProduct(a.terms.f + a.terms.g * u + out.dhat) - jac.du * v - jac.dxhat * out.xhat_dot;
  out.r_dot = a.r_dot;
  return out;
}

/// Initial observer state: xhat(0) = x(0), xi(0) = -beta so that dhat(0) = 0.
inline ObserverState initial_observer_state(const SystemModel& model, const ObserverGains& gains, const Vec& x0,
                                            const Vec& u0, double r0, const QuadRule& rule) {
  ObserverState s;
  s.xhat = x0;
  s.xi = -beta(model, gains, x0, x0, u0, rule);
  s.r = r0;
  return s;
}

// ---------------------------------------------------------------------------
// Oracle diagnostics and bound envelopes
// ---------------------------------------------------------------------------

/// Scaled estimation error; requires the true total disturbance (oracle only).
struct ScaledErrorDiag {
  Vec z;    ///< (dhat - d) / r
  Vec e;    ///< xhat - x
  Vec e_d;  ///< r z
};

inline ScaledErrorDiag scaled_error(const Vec& dhat, const Vec& d_true, double r, const Vec& xhat, const Vec& x) {
  ScaledErrorDiag s;
  s.z = (dhat - d_true) / r;
  s.e = xhat - x;
  s.e_d = r * s.z;
  return s;
}

struct BoundEnvelopes {
  double kappa = 0.0;
  double omega = 0.0;
  double chi = 0.0;
  double theta = 0.0;
  double z0_sq = 0.0;
  double w0 = 0.0;

  /// sqrt(|z(0)|^2 e^{-2 kappa t} + omega / kappa)
  double rho_z(double t) const { return std::sqrt(z0_sq * std::exp(-2.0 * kappa * t) + omega / kappa); }
  /// sqrt(2 W(0) e^{-chi t} + (theta + 2 omega) / chi)
  double rho_r(double t) const { return std::sqrt(2.0 * w0 * std::exp(-chi * t) + (theta + 2.0 * omega) / chi); }
};

inline BoundEnvelopes bound_envelopes(const BoundReport& rep, const Vec& z0, double w0) {
  require(rep.kappa > 0.0 && rep.chi > 0.0, "bound_envelopes: kappa and chi must be positive");
  return BoundEnvelopes{rep.kappa, rep.omega, rep.chi, rep.theta, z0.squaredNorm(), w0};
}

/// W(0) = |z(0)|^2 / 2 + |e(0)|^2 / 2 + r(0)^2 / 2.
inline double lyapunov_w0(const Vec& z0, const Vec& e0, double r0) {
  return 0.5 * z0.squaredNorm() + 0.5 * e0.squaredNorm() + 0.5 * r0 * r0;
}

}  // namespace iidob
