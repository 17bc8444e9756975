#pragma once

// Barrier chains, the disturbance-observer based barrier constraint on the
// integrator input v, minimum-norm QP safety filters and a worst-case robust
// barrier baseline.

#include <cmath>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "iidob/filter.hpp"
#include "iidob/numerics.hpp"
#include "iidob/observer.hpp"
#include "iidob/system_model.hpp"

namespace iidob {

using ScalarField = std::function<double(const Vec&)>;
using GradientField = std::function<RowVec(const Vec&)>;

struct CbfSpec {
  std::string name;
  ScalarField h;
  GradientField grad;
  int relative_degree = 1;
  /// lambda_0 ... lambda_iota
  std::vector<double> rates;
  double rho = 1.0;
  double rho_tilde = 1.0;
  /// Optional closed forms of h_{iota-1} and its gradient. Without them the
  /// chain is composed numerically.
  ScalarField top;
  GradientField top_grad;

  int iota() const { return relative_degree; }
  double rate(int i) const { return rates.at(static_cast<std::size_t>(i)); }
};

/// h_0 ... h_{iota-1} as functions of x.
struct BarrierChain {
  std::vector<ScalarField> h;
  std::vector<GradientField> grad;

  const ScalarField& top() const { return h.back(); }
  const GradientField& top_grad() const { return grad.back(); }
};

inline void check_cbf_spec(const CbfSpec& s) {
  if (!s.h || !s.grad) throw ConfigError("barrier " + s.name + ": h and its gradient are required");
  if (s.relative_degree < 1) throw ConfigError("barrier " + s.name + ": relative degree must be >= 1");
  if (static_cast<int>(s.rates.size()) != s.relative_degree + 1) {
    std::ostringstream os;
    os << "barrier " << s.name << ": expected " << s.relative_degree + 1 << " rates, got " << s.rates.size();
    throw ConfigError(os.str());
  }
  for (double r : s.rates)
    if (!(r > 0.0)) throw ConfigError("barrier " + s.name + ": rates must be positive", "lambda_i > 0");
  if (!(s.rho > 0.0) || !(s.rho_tilde > 0.0)) {
    throw ConfigError("barrier " + s.name + ": margins must be positive", "rho, rho_tilde > 0");
  }
}

/// h_i = L_f h_{i-1} + lambda_{i-1} h_{i-1}. Samples, if given, are used to
/// check that u and w do not enter below the top level and that u enters at
/// the top level somewhere.
inline BarrierChain build_chain(const CbfSpec& spec, const SystemModel& model, const std::vector<Vec>& samples = {}) {
  check_cbf_spec(spec);
  BarrierChain c;
  c.h.push_back(spec.h);
  c.grad.push_back(spec.grad);
  for (int i = 1; i < spec.iota(); ++i) {
    const bool last = i == spec.iota() - 1;
    if (last && spec.top && spec.top_grad) {
      c.h.push_back(spec.top);
      c.grad.push_back(spec.top_grad);
      break;
    }
    ScalarField prev = c.h.back();
    GradientField prev_grad = c.grad.back();
    const double lam = spec.rate(i - 1);
    ScalarField next = [model, prev, prev_grad, lam](const Vec& x) {
      return prev_grad(x).dot(model.f(x)) + lam * prev(x);
    };
    c.h.push_back(next);
    c.grad.push_back([next](const Vec& x) { return central_gradient(next, x); });
  }

  if (!samples.empty()) {
    bool enters = false;
    for (const Vec& x : samples) {
      const Mat g = model.g(x);
      const Mat p = model.p(x);
      for (int i = 0; i + 1 < spec.iota(); ++i) {
        const RowVec gr = c.grad[static_cast<std::size_t>(i)](x);
        const double scale = 1e-6 * (1.0 + gr.norm() * (g.norm() + p.norm()));
        if ((gr * g).norm() > scale || (gr * p).norm() > scale) {
          std::ostringstream os;
          os << "barrier " << spec.name << ": input or disturbance enters at level " << i
             << ", below the declared relative degree " << spec.iota();
          throw ConfigError(os.str(), "relative degree");
        }
      }
      if ((c.top_grad()(x) * g).norm() > 1e-9) enters = true;
    }
    if (!enters) {
      throw ConfigError("barrier " + spec.name + ": input never enters at the declared relative degree",
                        "relative degree");
    }
  }
  return c;
}

/// Constants shared by every barrier constraint of a run.
struct ConstraintConstants {
  double kappa = 0.0;
  double zeta = 0.0;
  double omega = 0.0;
};

inline void check_rates(const CbfSpec& spec, const ConstraintConstants& k) {
  const double lam_top = spec.rate(spec.iota());
  const double lam_prev = spec.rate(spec.iota() - 1);
  if (!(lam_top < 2.0 * k.kappa)) {
    throw ConfigError("barrier " + spec.name + ": lambda_iota must be below 2 kappa", "lambda_iota < 2 kappa");
  }
  if (!(lam_prev < k.zeta)) {
    throw ConfigError("barrier " + spec.name + ": lambda_{iota-1} must be below zeta", "lambda_{iota-1} < zeta");
  }
}

/// grad h_{iota-1} (f + g u + dhat_f) - (1 + r^2) |grad|^2 / (2 rho~ (zeta - lambda_{iota-1}))
///   - rho~ omega + lambda_{iota-1} h_{iota-1}
inline double eval_h_iota_terms(const CbfSpec& spec, const BarrierChain& chain, const Vec& x, const Vec& f,
                                const Mat& g, const Vec& u, double r, const Vec& dhat_f,
                                const ConstraintConstants& k) {
  const double lam = spec.rate(spec.iota() - 1);
  if (!(k.zeta > lam)) {
    throw ConfigError("barrier " + spec.name + ": zeta must exceed lambda_{iota-1}", "lambda_{iota-1} < zeta");
  }
  const RowVec gr = chain.top_grad()(x);
  return gr.dot(f + g * u + dhat_f) - (1.0 + r * r) * gr.squaredNorm() / (2.0 * spec.rho_tilde * (k.zeta - lam)) -
         spec.rho_tilde * k.omega + lam * chain.top()(x);
}

inline double eval_h_iota(const CbfSpec& spec, const BarrierChain& chain, const SystemModel& model, const Vec& x,
                          const Vec& u, double r, const Vec& dhat_f, const ConstraintConstants& k) {
  return eval_h_iota_terms(spec, chain, x, model.f(x), model.g(x), u, r, dhat_f, k);
}

/// Known signals the barrier constraint may use.
struct ConstraintSignals {
  Vec x;
  Vec u;
  double r = 1.0;
  Vec dhat;
  Vec dhat_f;
  double r_dot = 0.0;
  Vec dhat_f_dot;
};

/// psi0 + psi1 v >= 0
struct ConstraintPair {
  double psi0 = 0.0;
  RowVec psi1;
  double h_iota = 0.0;
};

inline ConstraintPair constraint_pair(const CbfSpec& spec, const BarrierChain& chain, const SystemModel& model,
                                      const ConstraintSignals& s, const ConstraintConstants& k) {
  const double lam_top = spec.rate(spec.iota());
  const double lam_prev = spec.rate(spec.iota() - 1);
  if (!(4.0 * k.kappa - 2.0 * lam_top > 0.0)) {
    throw ConfigError("barrier " + spec.name + ": lambda_iota must be below 2 kappa", "lambda_iota < 2 kappa");
  }
  const Vec f = model.f(s.x);
  const Mat g = model.g(s.x);
  ConstraintPair out;
  out.h_iota = eval_h_iota_terms(spec, chain, s.x, f, g, s.u, s.r, s.dhat_f, k);
  const RowVec dh_dx = central_gradient(
      [&](const Vec& y) { return eval_h_iota(spec, chain, model, y, s.u, s.r, s.dhat_f, k); }, s.x);
  const RowVec gr = chain.top_grad()(s.x);
  const double dh_dr = -s.r * gr.squaredNorm() / (spec.rho_tilde * (k.zeta - lam_prev));
  out.psi0 = dh_dx.dot(f + g * s.u + s.dhat) + dh_dr * s.r_dot + gr.dot(s.dhat_f_dot) -
             s.r * s.r * dh_dx.squaredNorm() / (spec.rho * (4.0 * k.kappa - 2.0 * lam_top)) - spec.rho * k.omega +
             lam_top * out.h_iota;
  out.psi1 = gr * g;
  return out;
}

// ---------------------------------------------------------------------------
// Theorem-level hypothesis checks
// ---------------------------------------------------------------------------

struct HypothesisCheck {
  std::string name;
  double lhs = 0.0;
  double rhs = 0.0;
  bool pass = false;
  /// lhs <= rhs instead of lhs >= rhs.
  bool upper = false;
  double margin() const { return upper ? rhs - lhs : lhs - rhs; }
};

struct InitialSignals {
  Vec x0;
  Vec u0;
  double r0 = 1.001;
  Vec dhat0;
  Vec dhat_f0;
  /// Exact |z(0)| in oracle mode, otherwise a user-supplied bound.
  double z0_norm = 0.0;
};

inline std::vector<HypothesisCheck> validate_theorem2(const CbfSpec& spec, const BarrierChain& chain,
                                                      const SystemModel& model, const ConstraintConstants& k,
                                                      const InitialSignals& init) {
  std::vector<HypothesisCheck> out;
  const std::string tag = spec.name.empty() ? std::string() : spec.name + ": ";
  auto add = [&](std::string name, double lhs, double rhs) {
    out.push_back({tag + std::move(name), lhs, rhs, lhs > rhs});
  };
  const int iota = spec.iota();
  add("2 kappa > lambda_iota", 2.0 * k.kappa, spec.rate(iota));
  add("zeta > lambda_{iota-1}", k.zeta, spec.rate(iota - 1));
  for (int i = 0; i + 2 <= iota; ++i) {
    add("h_" + std::to_string(i) + "(x0) > 0", chain.h[static_cast<std::size_t>(i)](init.x0), 0.0);
  }
  const double z0sq = init.z0_norm * init.z0_norm;
  const double vf0 = 0.5 * (init.dhat_f0 - init.dhat0).squaredNorm() + 0.5 * z0sq;
  add("h_{iota-1}(x0) - rho~ V_f(0) > 0", chain.top()(init.x0) - spec.rho_tilde * vf0, 0.0);
  if (k.zeta > spec.rate(iota - 1)) {
    const double hi = eval_h_iota(spec, chain, model, init.x0, init.u0, init.r0, init.dhat_f0, k);
    add("h_iota(0) - (rho/2)|z(0)|^2 > 0", hi - 0.5 * spec.rho * z0sq, 0.0);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Quadratic programs
// ---------------------------------------------------------------------------

struct QpResult {
  Vec v;
  std::vector<bool> active;
  Vec multipliers;
  double objective = 0.0;
};

/// Farkas certificate: y >= 0 on the listed rows with A^T y = 0 and b^T y < 0.
struct InfeasibilityCertificate {
  std::vector<int> rows;
  Vec y;
  double value = 0.0;
};

class InfeasibleQp : public Error {
 public:
  InfeasibleQp(const std::string& what, InfeasibilityCertificate cert) : Error(what), cert_(std::move(cert)) {}
  const InfeasibilityCertificate& certificate() const { return cert_; }

 private:
  InfeasibilityCertificate cert_;
};

/// min |v - v_nom|^2 s.t. psi0 + psi1 v >= 0, in closed form.
inline QpResult solve_qp_single(double psi0, const RowVec& psi1, const Vec& v_nom) {
  require(psi1.size() == v_nom.size(), "solve_qp_single: psi1 and v_nom differ in length");
  QpResult res;
  res.active = {false};
  res.multipliers = Vec::Zero(1);
  const double slack = psi0 + psi1.dot(v_nom);
  if (slack >= 0.0) {
    res.v = v_nom;
    return res;
  }
  const double nsq = psi1.squaredNorm();
  if (!(nsq > 0.0)) {
    InfeasibilityCertificate cert{{0}, Vec::Ones(1), psi0};
    throw InfeasibleQp("barrier constraint has zero input gain and is violated (psi0 = " + std::to_string(psi0) + ")",
                       std::move(cert));
  }
  const double mu = -slack / nsq;
  res.v = v_nom + mu * psi1.transpose();
  res.active = {true};
  res.multipliers[0] = mu;
  res.objective = (res.v - v_nom).squaredNorm();
  return res;
}

namespace detail {

inline std::optional<InfeasibilityCertificate> farkas_certificate(const Mat& a, const Vec& b) {
  const int k = static_cast<int>(a.rows());
  const int m = static_cast<int>(a.cols());
  const int max_size = std::min(k, m + 1);
  for (int size = 1; size <= max_size; ++size) {
    std::vector<int> idx(static_cast<std::size_t>(size));
    for (unsigned mask = 0; mask < (1u << k); ++mask) {
      if (__builtin_popcount(mask) != size) continue;
      int pos = 0;
      for (int i = 0; i < k; ++i)
        if (mask & (1u << i)) idx[static_cast<std::size_t>(pos++)] = i;
      Mat at(m, size);
      Vec bs(size);
      for (int j = 0; j < size; ++j) {
        at.col(j) = a.row(idx[static_cast<std::size_t>(j)]).transpose();
        bs[j] = b[idx[static_cast<std::size_t>(j)]];
      }
      Eigen::FullPivLU<Mat> lu(at);
      lu.setThreshold(1e-10);
      const Mat ker = lu.kernel();
      if (ker.cols() != 1 || lu.rank() != size - 1) continue;
      Vec y = ker.col(0);
      if (y.sum() < 0.0) y = -y;
      if (y.minCoeff() < -1e-12) continue;
      y /= y.sum();
      const double val = bs.dot(y);
      if (val < 0.0) return InfeasibilityCertificate{idx, y, val};
    }
  }
  return std::nullopt;
}

}  // namespace detail

inline constexpr int kMaxQpConstraints = 16;

/// min |v - v_nom|^2 s.t. psi0_k + psi1_k v >= 0 for every pair, by
/// enumeration of active sets in order of increasing size. The first KKT
/// point found is the unique minimizer.
inline QpResult solve_qp_multi(const std::vector<ConstraintPair>& pairs, const Vec& v_nom, double tol = 1e-10) {
  const int k = static_cast<int>(pairs.size());
  const int m = static_cast<int>(v_nom.size());
  require(k <= kMaxQpConstraints, "solve_qp_multi: too many constraints");
  QpResult res;
  res.active.assign(static_cast<std::size_t>(k), false);
  res.multipliers = Vec::Zero(k);
  if (k == 0) {
    res.v = v_nom;
    return res;
  }
  Mat a(k, m);
  Vec b(k);
  for (int i = 0; i < k; ++i) {
    require(pairs[static_cast<std::size_t>(i)].psi1.size() == m, "solve_qp_multi: psi1 length mismatch");
    a.row(i) = pairs[static_cast<std::size_t>(i)].psi1;
    b[i] = pairs[static_cast<std::size_t>(i)].psi0;
  }
  const Vec slack0 = b + a * v_nom;
  if (slack0.minCoeff() >= 0.0) {
    res.v = v_nom;
    return res;
  }
  const double scale = 1.0 + b.cwiseAbs().maxCoeff() + (a * v_nom).cwiseAbs().maxCoeff();

  std::vector<unsigned> masks;
  for (unsigned mask = 1; mask < (1u << k); ++mask) masks.push_back(mask);
  std::stable_sort(masks.begin(), masks.end(),
                   [](unsigned x, unsigned y) { return __builtin_popcount(x) < __builtin_popcount(y); });

  for (unsigned mask : masks) {
    const int size = __builtin_popcount(mask);
    if (size > m) break;
    std::vector<int> idx;
    for (int i = 0; i < k; ++i)
      if (mask & (1u << i)) idx.push_back(i);
    Mat as(size, m);
    Vec bs(size);
    for (int j = 0; j < size; ++j) {
      as.row(j) = a.row(idx[static_cast<std::size_t>(j)]);
      bs[j] = b[idx[static_cast<std::size_t>(j)]];
    }
    const Mat gram = as * as.transpose();
    Eigen::FullPivLU<Mat> lu(gram);
    lu.setThreshold(1e-12);
    if (!lu.isInvertible()) continue;
    const Vec mu = lu.solve(-(bs + as * v_nom));
    if (mu.minCoeff() < -tol) continue;
    const Vec v = v_nom + as.transpose() * mu;
    const Vec slack = b + a * v;
    if (slack.minCoeff() < -tol * scale) continue;
    res.v = v;
    for (int j = 0; j < size; ++j) {
      const int i = idx[static_cast<std::size_t>(j)];
      res.multipliers[i] = std::max(0.0, mu[j]);
      res.active[static_cast<std::size_t>(i)] = mu[j] > 0.0;
    }
    res.objective = (v - v_nom).squaredNorm();
    return res;
  }
  auto cert = detail::farkas_certificate(a, b);
  throw InfeasibleQp("barrier constraints are jointly infeasible",
                     cert ? *cert : InfeasibilityCertificate{});
}

// ---------------------------------------------------------------------------
// Worst-case robust barrier baseline
// ---------------------------------------------------------------------------

/// psi0 = L_f h - |grad h p| omega0 + rate h, psi1 = grad h g (input level).
inline ConstraintPair robust_cbf_constraint(const ScalarField& h, const GradientField& grad, const SystemModel& model,
                                            const Vec& x, double omega0, double rate) {
  const RowVec gr = grad(x);
  ConstraintPair out;
  out.psi0 = gr.dot(model.f(x)) - (gr * model.p(x)).norm() * omega0 + rate * h(x);
  out.psi1 = gr * model.g(x);
  out.h_iota = h(x);
  return out;
}

/// The input-level robust condition H(x, u) = psi0 + psi1 u >= 0 enforced
/// through the integrator: dH/dx (f + g u) - |dH/dx p| omega0 + dH/du v + rate_v H >= 0.
inline ConstraintPair robust_lifted_constraint(const CbfSpec& spec, const SystemModel& model, const Vec& x,
                                               const Vec& u, double omega0) {
  if (spec.iota() != 1) throw ConfigError("robust barrier baseline requires relative degree 1", "relative degree 1");
  const double rate_u = spec.rate(0);
  const double rate_v = spec.rate(1);
  auto big_h = [&](const Vec& y) {
    const ConstraintPair c = robust_cbf_constraint(spec.h, spec.grad, model, y, omega0, rate_u);
    return c.psi0 + c.psi1.dot(u);
  };
  const ConstraintPair base = robust_cbf_constraint(spec.h, spec.grad, model, x, omega0, rate_u);
  const double hval = base.psi0 + base.psi1.dot(u);
  const RowVec dh_dx = central_gradient(big_h, x);
  ConstraintPair out;
  out.psi0 = dh_dx.dot(model.f(x) + model.g(x) * u) - (dh_dx * model.p(x)).norm() * omega0 + rate_v * hval;
  out.psi1 = base.psi1;
  out.h_iota = hval;
  return out;
}

}  // namespace iidob
