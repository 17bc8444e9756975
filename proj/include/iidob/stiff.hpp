#pragma once

// Fixed-step three-stage Radau IIA (order 5, L-stable, stiffly accurate) with
// Newton iterations on finite-difference Jacobians. A step whose Newton
// iteration fails is split in two halves, recursively.

#include <cmath>
#include <exception>
#include <limits>

#include "iidob/numerics.hpp"

namespace iidob {

struct RadauOptions {
  double atol = 1e-12;
  double rtol = 1e-10;
  int max_newton = 16;
  int max_halvings = 8;
  /// Finite-difference perturbation is sqrt(eps) * max(|y_k|, fd_floor).
  double fd_floor = 1.0;
};

struct RadauStats {
  long rhs_evals = 0;
  long jacobians = 0;
  long newton_iterations = 0;
  long halvings = 0;
};

namespace detail {

struct RadauTableau {
  double c[3];
  double a[3][3];
};

inline const RadauTableau& radau_tableau() {
  static const RadauTableau tab = [] {
    const double s6 = std::sqrt(6.0);
    RadauTableau t{};
    t.c[0] = (4.0 - s6) / 10.0;
    t.c[1] = (4.0 + s6) / 10.0;
    t.c[2] = 1.0;
    t.a[0][0] = (88.0 - 7.0 * s6) / 360.0;
    t.a[0][1] = (296.0 - 169.0 * s6) / 1800.0;
    t.a[0][2] = (-2.0 + 3.0 * s6) / 225.0;
    t.a[1][0] = (296.0 + 169.0 * s6) / 1800.0;
    t.a[1][1] = (88.0 + 7.0 * s6) / 360.0;
    t.a[1][2] = (-2.0 - 3.0 * s6) / 225.0;
    t.a[2][0] = (16.0 - s6) / 36.0;
    t.a[2][1] = (16.0 + s6) / 36.0;
    t.a[2][2] = 1.0 / 9.0;
    return t;
  }();
  return tab;
}

template <typename Field>
bool fd_jacobian(Field& rhs, double t, const Vec& y, const Vec& fy, const RadauOptions& opt, RadauStats& stats,
                 Mat& jac) {
  const Eigen::Index n = y.size();
  jac.resize(n, n);
  Vec yp = y;
  const double sq = std::sqrt(std::numeric_limits<double>::epsilon());
  for (Eigen::Index k = 0; k < n; ++k) {
    const double d = sq * std::max(std::abs(y[k]), opt.fd_floor);
    yp[k] = y[k] + d;
    jac.col(k) = (rhs(t, yp) - fy) / d;
    yp[k] = y[k];
  }
  stats.rhs_evals += n;
  ++stats.jacobians;
  return jac.allFinite();
}

// Simplified Newton on the Jacobian at the step start; if it contracts
// poorly the iteration switches to exact Newton with a Jacobian per stage.
template <typename Field>
bool radau_attempt(Field& rhs, double t, const Vec& y, double h, const RadauOptions& opt,
                   RadauStats& stats, Vec& out) {
  const auto& tab = radau_tableau();
  const Eigen::Index n = y.size();
  const Vec f0 = rhs(t, y);
  ++stats.rhs_evals;
  if (!f0.allFinite()) return false;

  Mat jac[3];
  if (!fd_jacobian(rhs, t, y, f0, opt, stats, jac[0])) return false;
  jac[1] = jac[0];
  jac[2] = jac[0];

  Mat sys(3 * n, 3 * n);
  Eigen::PartialPivLU<Mat> lu;
  auto factor = [&] {
    sys.setIdentity();
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) sys.block(i * n, j * n, n, n) -= (h * tab.a[i][j]) * jac[j];
    lu.compute(sys);
  };
  factor();

  Vec weights(n);
  for (Eigen::Index k = 0; k < n; ++k) weights[k] = opt.atol + opt.rtol * std::abs(y[k]);

  Vec z(3 * n);
  for (int i = 0; i < 3; ++i) z.segment(i * n, n) = (tab.c[i] * h) * f0;

  Vec fz(3 * n);
  bool exact = false;
  double prev = std::numeric_limits<double>::infinity();
  for (int it = 0; it < opt.max_newton; ++it) {
    ++stats.newton_iterations;
    for (int i = 0; i < 3; ++i) {
      fz.segment(i * n, n) = rhs(t + tab.c[i] * h, y + z.segment(i * n, n));
    }
    stats.rhs_evals += 3;
    if (!fz.allFinite()) return false;
    if (exact) {
      for (int i = 0; i < 3; ++i) {
        const Vec fi = fz.segment(i * n, n);
        if (!fd_jacobian(rhs, t + tab.c[i] * h, y + z.segment(i * n, n), fi, opt, stats, jac[i])) return false;
      }
      factor();
    }
    Vec res = -z;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) res.segment(i * n, n) += (h * tab.a[i][j]) * fz.segment(j * n, n);
    const Vec dz = lu.solve(res);
    if (!dz.allFinite()) return false;
    z += dz;
    double acc = 0.0;
    for (int i = 0; i < 3; ++i) acc += dz.segment(i * n, n).cwiseQuotient(weights).squaredNorm();
    const double norm = std::sqrt(acc / static_cast<double>(3 * n));
    if (norm <= 1.0) {
      out = y + z.segment(2 * n, n);
      return out.allFinite();
    }
    if (!exact && it >= 1 && norm > 0.5 * prev) {
      exact = true;
    } else if (exact && norm > 2.0 * prev) {
      return false;
    }
    prev = norm;
  }
  return false;
}

template <typename Field>
Vec radau_recursive(Field& rhs, double t, const Vec& y, double h, const RadauOptions& opt,
                    RadauStats& stats, int depth) {
  Vec out;
  std::exception_ptr failure;
  try {
    if (radau_attempt(rhs, t, y, h, opt, stats, out)) return out;
  } catch (const Error&) {
    failure = std::current_exception();
  }
  if (depth >= opt.max_halvings) {
    if (failure) std::rethrow_exception(failure);
    throw StepError("radau_step: Newton iteration failed at t=" + std::to_string(t), depth);
  }
  ++stats.halvings;
  const Vec mid = radau_recursive(rhs, t, y, 0.5 * h, opt, stats, depth + 1);
  return radau_recursive(rhs, t + 0.5 * h, mid, 0.5 * h, opt, stats, depth + 1);
}

}  // namespace detail

/// One Radau IIA step of y' = rhs(t, y) over [t, t + h].
template <typename Field>
Vec radau_step(Field&& rhs, double t, const Vec& y, double h, const RadauOptions& opt = {},
               RadauStats* stats = nullptr) {
  require(h > 0.0, "radau_step: h must be positive");
  RadauStats local;
  RadauStats& s = stats ? *stats : local;
  return detail::radau_recursive(rhs, t, y, h, opt, s, 0);
}

}  // namespace iidob
