#pragma once

// Nominal tracking law on the augmented system: a desired input from the
// disturbance-compensated plant, a first-order surface filter replacing its
// analytic derivative, and the integrator-level command v_nom.

#include <sstream>

#include "iidob/numerics.hpp"

namespace iidob {

class ControllerError : public Error {
 public:
  ControllerError(const std::string& what, double condition) : Error(what), condition_(condition) {}
  double condition() const { return condition_; }

 private:
  double condition_;
};

struct TrackingParams {
  double alpha1 = 50.0;
  double alpha2 = 50.0;
  double epsilon = 0.001;
};

struct SurfaceState {
  Vec ud_f;
};

inline constexpr double kConditionLimit = 1e8;

/// Least-squares pseudo-inverse of g. For a wide or square full-rank g this
/// is a right inverse; for a tall g it is the left inverse (g^T g)^-1 g^T.
inline Mat pseudo_inverse(const Mat& g, double condition_limit = kConditionLimit) {
  Eigen::JacobiSVD<Mat> svd(g, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Vec& s = svd.singularValues();
  const double smax = s.size() ? s[0] : 0.0;
  const double smin = s.size() ? s[s.size() - 1] : 0.0;
  const double cond = smin > 0.0 ? smax / smin : std::numeric_limits<double>::infinity();
  if (!(cond <= condition_limit)) {
    std::ostringstream os;
    os << "input matrix is rank deficient (condition number " << cond << ")";
    throw ControllerError(os.str(), cond);
  }
  return svd.matrixV() * s.cwiseInverse().asDiagonal() * svd.matrixU().transpose();
}

/// u_d = -g^+ (f + (alpha1 + r^2/2) e_x + dhat - xd_dot), e_x = x - x_d.
inline Vec desired_input(const Vec& f, const Mat& g, const Vec& x, const Vec& x_d, const Vec& xd_dot, double r,
                         const Vec& dhat, const TrackingParams& p) {
  const Vec e_x = x - x_d;
  return -pseudo_inverse(g) * (f + (p.alpha1 + 0.5 * r * r) * e_x + dhat - xd_dot);
}

/// epsilon ud_f' = ud - ud_f
inline Vec surface_rhs(const SurfaceState& s, const Vec& ud, double epsilon) {
  require(epsilon > 0.0, "surface_rhs: epsilon must be positive");
  return (ud - s.ud_f) / epsilon;
}

/// v_nom = -alpha2 (u - ud_f) + ud_f' - g^T e_x
inline Vec nominal_v(const Mat& g, const Vec& x, const Vec& x_d, const Vec& u, const SurfaceState& s, const Vec& ud,
                     const TrackingParams& p) {
  return -p.alpha2 * (u - s.ud_f) + surface_rhs(s, ud, p.epsilon) - g.transpose() * (x - x_d);
}

}  // namespace iidob
