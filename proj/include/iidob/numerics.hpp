#pragma once

// Dense arithmetic aliases, fixed-step integrators, Gauss-Legendre quadrature
// and central differences shared by every other header.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace iidob {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using RowVec = Eigen::RowVectorXd;

/// Base of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dimension or precondition mismatch at an API boundary.
class ContractError : public Error {
 public:
  using Error::Error;
};

/// Non-finite derivative inside an integrator stage.
class StepError : public Error {
 public:
  StepError(const std::string& what, int stage) : Error(what), stage_(stage) {}
  int stage() const { return stage_; }

 private:
  int stage_;
};

class QuadratureError : public Error {
 public:
  QuadratureError(const std::string& what, double where) : Error(what), where_(where) {}
  double where() const { return where_; }

 private:
  double where_;
};

class DifferentiationError : public Error {
 public:
  using Error::Error;
};

/// A configuration that violates a named inequality or structural condition.
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& what, std::string inequality = {})
      : Error(what), inequality_(std::move(inequality)) {}
  const std::string& inequality() const { return inequality_; }

 private:
  std::string inequality_;
};

inline void require(bool ok, const std::string& what) {
  if (!ok) throw ContractError(what);
}

inline void require_dim(const Vec& v, Eigen::Index n, const char* name) {
  if (v.size() != n) {
    std::ostringstream os;
    os << name << ": expected length " << n << ", got " << v.size();
    throw ContractError(os.str());
  }
}

inline void require_dim(const Mat& a, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (a.rows() != rows || a.cols() != cols) {
    std::ostringstream os;
    os << name << ": expected " << rows << "x" << cols << ", got " << a.rows() << "x" << a.cols();
    throw ContractError(os.str());
  }
}

template <typename Derived>
bool all_finite(const Eigen::MatrixBase<Derived>& a) {
  return a.allFinite();
}

/// Frobenius norm; equals the 2-norm of the flattened matrix.
inline double frobenius(const Mat& a) { return a.norm(); }

// ---------------------------------------------------------------------------
// Runge-Kutta
// ---------------------------------------------------------------------------

/// Classical 4th-order Runge-Kutta step of x' = deriv(t, x).
template <typename Field>
Vec rk4_step(Field&& deriv, double t, const Vec& state, double dt) {
  require(dt > 0.0, "rk4_step: dt must be positive");
  auto stage = [&](int k, double tk, const Vec& xk) {
    Vec d = deriv(tk, xk);
    if (d.size() != state.size()) throw ContractError("rk4_step: derivative has wrong length");
    if (!d.allFinite()) {
      throw StepError("rk4_step: non-finite derivative at stage " + std::to_string(k), k);
    }
    return d;
  };
  const double h2 = 0.5 * dt;
  const Vec k1 = stage(1, t, state);
  const Vec k2 = stage(2, t + h2, state + h2 * k1);
  const Vec k3 = stage(3, t + h2, state + h2 * k2);
  const Vec k4 = stage(4, t + dt, state + dt * k3);
  return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// ---------------------------------------------------------------------------
// Gauss-Legendre quadrature
// ---------------------------------------------------------------------------

/// Composite Gauss-Legendre rule: `nodes` points per segment, segments of at
/// most `segment_length` (at least one segment per integral).
class QuadRule {
 public:
  explicit QuadRule(int nodes = 16, double segment_length = 1.0)
      : nodes_(nodes), segment_length_(segment_length) {
    require(nodes >= 2, "QuadRule: node count must be >= 2");
    require(segment_length > 0.0 && std::isfinite(segment_length),
            "QuadRule: segment length must be positive");
    compute_nodes();
  }

  int nodes() const { return nodes_; }
  double segment_length() const { return segment_length_; }
  /// Abscissae on [-1, 1], ascending.
  const std::vector<double>& abscissae() const { return x_; }
  const std::vector<double>& weights() const { return w_; }

  int segments_for(double a, double b) const {
    const double len = std::abs(b - a);
    return std::max(1, static_cast<int>(std::ceil(len / segment_length_ - 1e-12)));
  }

 private:
  // Newton iteration on P_n from the Chebyshev-like initial guess.
  void compute_nodes() {
    const int n = nodes_;
    x_.assign(n, 0.0);
    w_.assign(n, 0.0);
    const int half = (n + 1) / 2;
    for (int i = 0; i < half; ++i) {
      double z = std::cos(std::numbers::pi * (i + 0.75) / (n + 0.5));
      double dp = 0.0;
      for (int iter = 0; iter < 100; ++iter) {
        double p0 = 1.0, p1 = 0.0;
        for (int j = 1; j <= n; ++j) {
          const double p2 = p1;
          p1 = p0;
          p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
        }
        dp = n * (z * p0 - p1) / (z * z - 1.0);
        const double dz = p0 / dp;
        z -= dz;
        if (std::abs(dz) < 1e-16) break;
      }
      // recompute derivative at the converged root
      double p0 = 1.0, p1 = 0.0;
      for (int j = 1; j <= n; ++j) {
        const double p2 = p1;
        p1 = p0;
        p0 = ((2.0 * j - 1.0) * z * p1 - (j - 1.0) * p2) / j;
      }
      dp = n * (z * p0 - p1) / (z * z - 1.0);
      x_[i] = -z;
      x_[n - 1 - i] = z;
      w_[i] = w_[n - 1 - i] = 2.0 / ((1.0 - z * z) * dp * dp);
    }
  }

  int nodes_;
  double segment_length_;
  std::vector<double> x_;
  std::vector<double> w_;
};

namespace detail {
inline bool finite_value(double v) { return std::isfinite(v); }
inline bool finite_value(const Vec& v) { return v.allFinite(); }
}  // namespace detail

/// Oriented composite Gauss-Legendre integral of fn over [a, b]; fn may
/// return a scalar or a Vec.
template <typename Fn>
auto quad_gl(Fn&& fn, double a, double b, const QuadRule& rule) {
  using R = std::decay_t<decltype(fn(a))>;
  const int segs = rule.segments_for(a, b);
  const double h = (b - a) / segs;
  const auto& xs = rule.abscissae();
  const auto& ws = rule.weights();
  bool first = true;
  R acc{};
  for (int s = 0; s < segs; ++s) {
    const double lo = a + s * h;
    const double mid = lo + 0.5 * h;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double tau = mid + 0.5 * h * xs[k];
      R val = fn(tau);
      if (!detail::finite_value(val)) {
        std::ostringstream os;
        os << "quad_gl: non-finite integrand at " << tau;
        throw QuadratureError(os.str(), tau);
      }
      if (first) {
        acc = (0.5 * h * ws[k]) * val;
        first = false;
      } else {
        acc += (0.5 * h * ws[k]) * val;
      }
    }
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Finite differences
// ---------------------------------------------------------------------------

/// Default central-difference step for a coordinate of magnitude |x|.
inline double fd_step(double x) { return 1e-6 * (1.0 + std::abs(x)); }

/// (fn(p + h e_i) - fn(p - h e_i)) / (2h).
template <typename Fn>
double central_diff(Fn&& fn, const Vec& point, Eigen::Index index, double step) {
  require(step > 0.0, "central_diff: step must be positive");
  require(index >= 0 && index < point.size(), "central_diff: index out of range");
  Vec p = point;
  p[index] = point[index] + step;
  const double fp = fn(p);
  p[index] = point[index] - step;
  const double fm = fn(p);
  if (!std::isfinite(fp) || !std::isfinite(fm)) {
    throw DifferentiationError("central_diff: non-finite sample at coordinate " +
                               std::to_string(index));
  }
  return (fp - fm) / (2.0 * step);
}

/// Gradient (as a row) by central differences with the default step.
template <typename Fn>
RowVec central_gradient(Fn&& fn, const Vec& point) {
  RowVec g(point.size());
  for (Eigen::Index i = 0; i < point.size(); ++i) g[i] = central_diff(fn, point, i, fd_step(point[i]));
  return g;
}

/// Jacobian of a vector map by central differences with the default step.
template <typename Fn>
Mat central_jacobian(Fn&& fn, const Vec& point) {
  const Vec f0 = fn(point);
  Mat jac(f0.size(), point.size());
  Vec p = point;
  for (Eigen::Index j = 0; j < point.size(); ++j) {
    const double h = fd_step(point[j]);
    p[j] = point[j] + h;
    const Vec fp = fn(p);
    p[j] = point[j] - h;
    const Vec fm = fn(p);
    p[j] = point[j];
    jac.col(j) = (fp - fm) / (2.0 * h);
  }
  if (!jac.allFinite()) throw DifferentiationError("central_jacobian: non-finite sample");
  return jac;
}

}  // namespace iidob
