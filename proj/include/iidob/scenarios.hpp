#pragma once

// Built-in plants: a two-state polynomial system with a scalar disturbance
// entering through p(x) = x, and a planar two-link manipulator with an
// end-effector force disturbance.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "iidob/filter.hpp"
#include "iidob/numerics.hpp"
#include "iidob/observer.hpp"
#include "iidob/safe_control.hpp"
#include "iidob/system_model.hpp"
#include "iidob/tracking.hpp"

namespace iidob {

/// Reference (x_d, x_d') at time t; may depend on the measured state.
using ReferenceField = std::function<std::pair<Vec, Vec>(double, const Vec&)>;

/// Zeroth-level barrier with an optional closed form of its top chain level
/// (needed for relative degree >= 2).
struct BarrierDef {
  std::string name;
  ScalarField h;
  GradientField grad;
  int relative_degree = 1;
  std::function<std::pair<ScalarField, GradientField>(const std::vector<double>&)> top;
};

struct ScenarioDefaults {
  ObserverGains gains;
  FilterParams filter;
  TrackingParams tracking;
  std::vector<double> rates;
  double rho = 1.0;
  double rho_tilde = 1.0;
  double horizon = 20.0;
  double dt = 1e-3;
};

struct Scenario {
  std::string name;
  SystemModel model;
  DisturbanceSignal disturbance;
  Vec x0;
  Vec u0;
  ReferenceField reference;
  std::vector<BarrierDef> barriers;
  ScenarioDefaults defaults;
};

inline CbfSpec make_cbf(const BarrierDef& b, const std::vector<double>& rates, double rho, double rho_tilde) {
  CbfSpec s;
  s.name = b.name;
  s.h = b.h;
  s.grad = b.grad;
  s.relative_degree = b.relative_degree;
  s.rates = rates;
  s.rho = rho;
  s.rho_tilde = rho_tilde;
  if (b.top && b.relative_degree >= 2) {
    auto [top, top_grad] = b.top(rates);
    s.top = std::move(top);
    s.top_grad = std::move(top_grad);
  }
  return s;
}

/// w(t) = 5 sin t + 2 cos 2t + 4 sin 3t + 3 cos 4t
inline double multisine(double t) {
  return 5.0 * std::sin(t) + 2.0 * std::cos(2.0 * t) + 4.0 * std::sin(3.0 * t) + 3.0 * std::cos(4.0 * t);
}

inline double multisine_rate(double t) {
  return 5.0 * std::cos(t) - 4.0 * std::sin(2.0 * t) + 12.0 * std::cos(3.0 * t) - 12.0 * std::sin(4.0 * t);
}

// ---------------------------------------------------------------------------
// Two-state polynomial system
// ---------------------------------------------------------------------------

inline SystemModel polynomial_model() {
  SystemModel m;
  m.n = 2;
  m.m = 2;
  m.l = 1;
  m.f = [](const Vec& x) {
    Vec out(2);
    out << x[1], x[0] * x[1];
    return out;
  };
  m.g = [](const Vec& x) {
    Mat g = Mat::Identity(2, 2);
    const double s = std::sin(x[0]);
    g(1, 1) = 1.0 + s * s;
    return g;
  };
  m.p = [](const Vec& x) {
    Mat p(2, 1);
    p << x[0], x[1];
    return p;
  };
  m.dp = [](const Vec&) { return std::vector<Mat>{Mat::Identity(2, 2)}; };
  return m;
}

inline Scenario make_example1() {
  Scenario s;
  s.name = "example1";
  s.model = polynomial_model();
  s.disturbance.l = 1;
  s.disturbance.w = [](double t) { return Vec::Constant(1, multisine(t)); };
  s.disturbance.wdot = [](double t) { return Vec::Constant(1, multisine_rate(t)); };
  s.disturbance.omega0 = 8.0;
  s.disturbance.omega1 = 26.0;
  s.x0 = Vec::Constant(2, -0.5);
  s.u0 = Vec::Zero(2);
  s.reference = [](double t, const Vec&) {
    Vec xd(2), xd_dot(2);
    xd << 2.0 * std::sin(t), 2.0 * std::cos(t);
    xd_dot << 2.0 * std::cos(t), -2.0 * std::sin(t);
    return std::make_pair(xd, xd_dot);
  };
  BarrierDef lower{"x1 >= -1", [](const Vec& x) { return x[0] + 1.0; },
                   [](const Vec&) {
                     RowVec g(2);
                     g << 1.0, 0.0;
                     return g;
                   },
                   1, {}};
  BarrierDef upper{"x2 <= 1", [](const Vec& x) { return 1.0 - x[1]; },
                   [](const Vec&) {
                     RowVec g(2);
                     g << 0.0, -1.0;
                     return g;
                   },
                   1, {}};
  s.barriers = {lower, upper};
  s.defaults.gains = ObserverGains{100.0, 100.0, 0.5, 10.0, 10.0, 10.0};
  s.defaults.filter = FilterParams{50.0, 1.0};
  s.defaults.tracking = TrackingParams{50.0, 50.0, 0.001};
  s.defaults.rates = {50.0, 50.0};
  s.defaults.horizon = 20.0;
  s.defaults.dt = 1e-3;
  return s;
}

// ---------------------------------------------------------------------------
// Two-link planar manipulator, point masses at the link tips
// ---------------------------------------------------------------------------

struct ManipulatorParams {
  double m1 = 1.0;
  double m2 = 1.0;
  double l1 = 1.0;
  double l2 = 1.0;
  double grav = 9.8;
  /// Gain of the velocity reference qd' - kp (q - qd).
  double kp = 10.0;
};

struct ManipulatorTerms {
  Eigen::Matrix2d M;
  Eigen::Matrix2d C;
  Eigen::Vector2d G;
  Eigen::Matrix2d J;
};

inline ManipulatorTerms manipulator_terms(const ManipulatorParams& p, const Vec& x) {
  const double c1 = std::cos(x[0]), s1 = std::sin(x[0]);
  const double c2 = std::cos(x[1]), s2 = std::sin(x[1]);
  const double c12 = std::cos(x[0] + x[1]), s12 = std::sin(x[0] + x[1]);
  const double b = p.m2 * p.l1 * p.l2;
  ManipulatorTerms t;
  t.M << (p.m1 + p.m2) * p.l1 * p.l1 + p.m2 * p.l2 * p.l2 + 2.0 * b * c2, p.m2 * p.l2 * p.l2 + b * c2,
      p.m2 * p.l2 * p.l2 + b * c2, p.m2 * p.l2 * p.l2;
  t.C << -b * s2 * x[3], -b * s2 * (x[2] + x[3]), b * s2 * x[2], 0.0;
  t.G << (p.m1 + p.m2) * p.grav * p.l1 * c1 + p.m2 * p.grav * p.l2 * c12, p.m2 * p.grav * p.l2 * c12;
  t.J << -p.l1 * s1 - p.l2 * s12, -p.l2 * s12, p.l1 * c1 + p.l2 * c12, p.l2 * c12;
  return t;
}

/// Kinetic plus potential energy (potential zero with both links horizontal).
inline double manipulator_energy(const ManipulatorParams& p, const Vec& x) {
  const ManipulatorTerms t = manipulator_terms(p, x);
  const Eigen::Vector2d qd(x[2], x[3]);
  const double pot = (p.m1 + p.m2) * p.grav * p.l1 * std::sin(x[0]) + p.m2 * p.grav * p.l2 * std::sin(x[0] + x[1]);
  return 0.5 * qd.dot(t.M * qd) + pot;
}

inline ModelTerms manipulator_model_terms(const ManipulatorParams& p, const Vec& x) {
  const ManipulatorTerms t = manipulator_terms(p, x);
  const Eigen::Matrix2d minv = t.M.inverse();
  const Eigen::Vector2d qd(x[2], x[3]);
  ModelTerms out;
  out.f = Vec::Zero(4);
  out.f.head(2) = qd;
  out.f.tail(2) = -minv * (t.C * qd + t.G);
  out.g = Mat::Zero(4, 2);
  out.g.bottomRows(2) = minv;
  out.p = Mat::Zero(4, 2);
  out.p.bottomRows(2) = minv * t.J.transpose();

  const double s2 = std::sin(x[1]);
  const double c12 = std::cos(x[0] + x[1]), s12 = std::sin(x[0] + x[1]);
  const double c1 = std::cos(x[0]), s1 = std::sin(x[0]);
  const double b = p.m2 * p.l1 * p.l2;
  Eigen::Matrix2d dj[2];
  dj[0] << -p.l1 * c1 - p.l2 * c12, -p.l2 * c12, -p.l1 * s1 - p.l2 * s12, -p.l2 * s12;
  dj[1] << -p.l2 * c12, -p.l2 * c12, -p.l2 * s12, -p.l2 * s12;
  Eigen::Matrix2d dm[2];
  dm[0].setZero();
  dm[1] << -2.0 * b * s2, -b * s2, -b * s2, 0.0;
  const Eigen::Matrix2d jt = t.J.transpose();
  out.dp.assign(2, Mat::Zero(4, 4));
  for (int i = 0; i < 2; ++i) {
    const Eigen::Vector2d a = jt.col(i);
    const Eigen::Vector2d minv_a = minv * a;
    for (int k = 0; k < 2; ++k) {
      const Eigen::Vector2d da = dj[k].transpose().col(i);
      out.dp[static_cast<std::size_t>(i)].block(2, k, 2, 1) = minv * (da - dm[k] * minv_a);
    }
  }
  return out;
}

inline SystemModel manipulator_model(const ManipulatorParams& p = {}) {
  SystemModel m;
  m.n = 4;
  m.m = 2;
  m.l = 2;
  m.fused = [p](const Vec& x) { return manipulator_model_terms(p, x); };
  m.f = [p](const Vec& x) {
    const ManipulatorTerms t = manipulator_terms(p, x);
    const Eigen::Vector2d qd(x[2], x[3]);
    Vec out(4);
    out.head(2) = qd;
    out.tail(2) = -t.M.inverse() * (t.C * qd + t.G);
    return out;
  };
  m.g = [p](const Vec& x) {
    Mat g = Mat::Zero(4, 2);
    g.bottomRows(2) = manipulator_terms(p, x).M.inverse();
    return g;
  };
  m.p = [p](const Vec& x) {
    const ManipulatorTerms t = manipulator_terms(p, x);
    Mat out = Mat::Zero(4, 2);
    out.bottomRows(2) = t.M.inverse() * t.J.transpose();
    return out;
  };
  m.dp = [p](const Vec& x) { return manipulator_model_terms(p, x).dp; };
  return m;
}

/// Barrier a q_j + b on one joint angle; relative degree two, with
/// h_1 = a q_j' + lambda_0 (a q_j + b).
inline BarrierDef joint_barrier(std::string name, int joint, double a, double b) {
  BarrierDef d;
  d.name = std::move(name);
  d.h = [=](const Vec& x) { return a * x[joint] + b; };
  d.grad = [=](const Vec& x) {
    RowVec g = RowVec::Zero(x.size());
    g[joint] = a;
    return g;
  };
  d.relative_degree = 2;
  d.top = [=](const std::vector<double>& rates) {
    const double lam0 = rates.at(0);
    ScalarField h1 = [=](const Vec& x) { return a * x[2 + joint] + lam0 * (a * x[joint] + b); };
    GradientField g1 = [=](const Vec& x) {
      RowVec g = RowVec::Zero(x.size());
      g[joint] = lam0 * a;
      g[2 + joint] = a;
      return g;
    };
    return std::make_pair(h1, g1);
  };
  return d;
}

inline Scenario make_manipulator(const ManipulatorParams& p = {}) {
  Scenario s;
  s.name = "manipulator";
  s.model = manipulator_model(p);
  s.disturbance.l = 2;
  s.disturbance.w = [](double t) { return Vec::Constant(2, multisine(t)); };
  s.disturbance.wdot = [](double t) { return Vec::Constant(2, multisine_rate(t)); };
  s.disturbance.omega0 = 11.0;
  s.disturbance.omega1 = 37.0;
  s.x0 = Vec::Zero(4);
  s.u0 = manipulator_terms(p, s.x0).G;
  const double kp = p.kp;
  s.reference = [kp](double t, const Vec& x) {
    const double qd = 2.0 * std::sin(t), qd_dot = 2.0 * std::cos(t), qd_ddot = -2.0 * std::sin(t);
    Vec xd(4), xd_dot(4);
    xd << qd, qd, qd_dot - kp * (x[0] - qd), qd_dot - kp * (x[1] - qd);
    xd_dot << qd_dot, qd_dot, qd_ddot - kp * (x[2] - qd_dot), qd_ddot - kp * (x[3] - qd_dot);
    return std::make_pair(xd, xd_dot);
  };
  s.barriers = {joint_barrier("q1 >= -1", 0, 1.0, 1.0), joint_barrier("q1 <= 1.5", 0, -1.0, 1.5),
                joint_barrier("q2 >= -1.2", 1, 1.0, 1.2), joint_barrier("q2 <= 1", 1, -1.0, 1.0)};
  s.defaults.gains = ObserverGains{250.0, 100.0, 5.0, 50.0, 20.0, 20.0};
  s.defaults.filter = FilterParams{250.0, 1.0};
  s.defaults.tracking = TrackingParams{50.0, 50.0, 0.001};
  s.defaults.rates = {25.0, 30.0, 50.0};
  s.defaults.horizon = 10.0;
  s.defaults.dt = 5e-4;
  return s;
}

inline Scenario make_scenario(const std::string& name) {
  if (name == "example1") return make_example1();
  if (name == "manipulator") return make_manipulator();
  throw ConfigError("unknown scenario '" + name + "'");
}

}  // namespace iidob
