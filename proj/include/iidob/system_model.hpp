#pragma once

// Disturbed control-affine plant  x' = f(x) + g(x) u + p(x) w(t)  and its
// augmentation with an input integrator  u' = v.

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "iidob/numerics.hpp"

namespace iidob {

class ModelError : public Error {
 public:
  using Error::Error;
};

/// Everything the observer needs at one state: f, g, p and the Jacobians of
/// the columns of p (dp[i] = d p_i / dx, n x n).
struct ModelTerms {
  Vec f;
  Mat g;
  Mat p;
  std::vector<Mat> dp;
};

struct SystemModel {
  int n = 0;  ///< state dimension
  int m = 0;  ///< input dimension
  int l = 0;  ///< disturbance dimension

  std::function<Vec(const Vec&)> f;
  std::function<Mat(const Vec&)> g;
  std::function<Mat(const Vec&)> p;
  std::function<std::vector<Mat>(const Vec&)> dp;
  /// Optional fused evaluator; models with expensive shared subexpressions
  /// (an inertia inverse, say) provide it.
  std::function<ModelTerms(const Vec&)> fused;

  ModelTerms terms(const Vec& x) const {
    if (fused) return fused(x);
    return ModelTerms{f(x), g(x), p(x), dp(x)};
  }

  /// Throws ContractError if any evaluator output disagrees with (n, m, l).
  void check_dimensions(const Vec& x) const {
    require_dim(x, n, "state");
    const ModelTerms t = terms(x);
    require_dim(t.f, n, "f(x)");
    require_dim(t.g, n, m, "g(x)");
    require_dim(t.p, n, l, "p(x)");
    require(static_cast<int>(t.dp.size()) == l, "dp(x): expected one Jacobian per disturbance channel");
    for (const Mat& d : t.dp) require_dim(d, n, n, "dp_i(x)");
  }
};

/// Disturbance w(t) with declared bounds |w| <= omega0, |w'| <= omega1.
/// The derivative is only ever evaluated by oracle diagnostics.
struct DisturbanceSignal {
  int l = 0;
  std::function<Vec(double)> w;
  std::function<Vec(double)> wdot;
  double omega0 = 0.0;
  double omega1 = 0.0;
};

inline std::pair<Vec, Vec> eval_disturbance(const DisturbanceSignal& sig, double t) {
  require(t >= 0.0, "eval_disturbance: t must be nonnegative");
  return {sig.w(t), sig.wdot(t)};
}

/// Sampled maxima of |w| and |w'| on a uniform grid over [0, horizon].
struct DisturbanceSample {
  double max_w = 0.0;
  double max_wdot = 0.0;
};

inline DisturbanceSample sample_disturbance(const DisturbanceSignal& sig, double horizon, double step) {
  DisturbanceSample s;
  const long count = static_cast<long>(std::floor(horizon / step + 0.5));
  for (long k = 0; k <= count; ++k) {
    const double t = static_cast<double>(k) * step;
    s.max_w = std::max(s.max_w, sig.w(t).norm());
    s.max_wdot = std::max(s.max_wdot, sig.wdot(t).norm());
  }
  return s;
}

/// d(x, t) = p(x) w(t).
inline Vec total_disturbance(const SystemModel& model, const Vec& x, const Vec& w) {
  require_dim(w, model.l, "w");
  return model.p(x) * w;
}

inline Vec eval_plant(const SystemModel& model, const Vec& x, const Vec& u, const Vec& w) {
  require_dim(x, model.n, "x");
  require_dim(u, model.m, "u");
  require_dim(w, model.l, "w");
  const Mat g = model.g(x);
  const Mat p = model.p(x);
  require_dim(g, model.n, model.m, "g(x)");
  require_dim(p, model.n, model.l, "p(x)");
  return model.f(x) + g * u + p * w;
}

/// Stacks the plant over u' = v.
inline Vec eval_augmented(const SystemModel& model, const Vec& x, const Vec& u, const Vec& v, const Vec& w) {
  require_dim(v, model.m, "v");
  Vec out(model.n + model.m);
  out.head(model.n) = eval_plant(model, x, u, w);
  out.tail(model.m) = v;
  return out;
}

}  // namespace iidob
