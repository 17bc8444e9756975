#pragma once

// Closed-loop simulation: plant, observer, filter, tracking law and safety
// filter integrated together on a uniform grid.
//
// The observer is integrated in error coordinates (x, u, e, dhat, r, dhat_f,
// ud_f) with e = xhat - x. Along solutions dhat = xi + beta satisfies
// dhat' = D (x' - f - g u - dhat) with D = d beta / dx, which is the chain
// rule applied to the xi update; xi is recovered as dhat - beta when logged.

#include <chrono>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iidob/config.hpp"
#include "iidob/filter.hpp"
#include "iidob/numerics.hpp"
#include "iidob/observer.hpp"
#include "iidob/safe_control.hpp"
#include "iidob/scenarios.hpp"
#include "iidob/stiff.hpp"
#include "iidob/system_model.hpp"
#include "iidob/tracking.hpp"

namespace iidob {

struct LoopState {
  Vec x;
  Vec u;
  Vec e;
  Vec dhat;
  double r = 1.0;
  Vec dhat_f;
  Vec ud_f;
};

inline Vec pack(const LoopState& s) {
  const Eigen::Index n = s.x.size(), m = s.u.size();
  Vec y(4 * n + 2 * m + 1);
  Eigen::Index k = 0;
  y.segment(k, n) = s.x, k += n;
  y.segment(k, m) = s.u, k += m;
  y.segment(k, n) = s.e, k += n;
  y.segment(k, n) = s.dhat, k += n;
  y[k++] = s.r;
  y.segment(k, n) = s.dhat_f, k += n;
  y.segment(k, m) = s.ud_f;
  return y;
}

inline LoopState unpack(const Vec& y, int n, int m) {
  LoopState s;
  Eigen::Index k = 0;
  s.x = y.segment(k, n), k += n;
  s.u = y.segment(k, m), k += m;
  s.e = y.segment(k, n), k += n;
  s.dhat = y.segment(k, n), k += n;
  s.r = y[k++];
  s.dhat_f = y.segment(k, n), k += n;
  s.ud_f = y.segment(k, m);
  return s;
}

/// Everything fixed for the duration of one run.
struct RunContext {
  SimConfig cfg;
  Scenario scenario;
  QuadRule rule;
  BoundReport report;
  ConstraintConstants constants;
  std::vector<CbfSpec> specs;
  std::vector<BarrierChain> chains;
};

struct ValidationReport {
  std::vector<HypothesisCheck> checks;    ///< must hold for the run to start
  std::vector<HypothesisCheck> advisory;  ///< reported, never blocking
  std::optional<BoundReport> report;
  double zeta = 0.0;
  bool ok() const {
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

inline std::vector<Vec> state_samples(const Scenario& s, unsigned seed, int count) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  std::vector<Vec> out;
  for (int i = 0; i < count; ++i) {
    Vec x = s.x0;
    for (Eigen::Index j = 0; j < x.size(); ++j) x[j] += dist(rng);
    out.push_back(x);
  }
  return out;
}

}  // namespace detail

/// Initial observer signals: e(0) = 0, dhat(0) = 0 (xi(0) = -beta), r(0).
inline LoopState initial_loop_state(const RunContext& ctx) {
  const Scenario& sc = ctx.scenario;
  const int n = sc.model.n;
  LoopState s;
  s.x = sc.x0;
  s.u = sc.u0;
  s.e = Vec::Zero(n);
  s.dhat = Vec::Zero(n);
  s.r = ctx.cfg.r0;
  s.dhat_f = s.dhat;
  const auto [xd, xd_dot] = sc.reference(0.0, s.x);
  s.ud_f = desired_input(sc.model.f(s.x), sc.model.g(s.x), s.x, xd, xd_dot, s.r, s.dhat, ctx.cfg.tracking);
  return s;
}

/// Inequality checks of a configuration; throws ConfigError only for
/// structural problems (unknown scenario, wrong dimensions, rate counts).
inline ValidationReport validate_config(const SimConfig& cfg) {
  ValidationReport rep;
  const Scenario sc = resolve_scenario(cfg);
  const int n = sc.model.n;
  auto hard = [&](std::string name, double lhs, double rhs) { rep.checks.push_back({std::move(name), lhs, rhs, lhs > rhs}); };
  auto soft = [&](std::string name, double lhs, double rhs) {
    rep.advisory.push_back({std::move(name), lhs, rhs, lhs > rhs});
  };

  hard("dt > 0", cfg.dt, 0.0);
  hard("horizon > 0", cfg.horizon, 0.0);
  hard("log_stride >= 1", cfg.log_stride, 0.5);
  hard("quad_nodes >= 2", cfg.quad_nodes, 1.5);
  hard("quad_segment > 0", cfg.quad_segment, 0.0);
  hard("alpha1 > 0", cfg.tracking.alpha1, 0.0);
  hard("alpha2 > 0", cfg.tracking.alpha2, 0.0);
  hard("epsilon > 0", cfg.tracking.epsilon, 0.0);

  const DisturbanceBounds bounds{sc.disturbance.omega0, sc.disturbance.omega1, sc.disturbance.l};
  const GainValidation gv = validate_gains(cfg.gains, n, cfg.r0, bounds);
  for (const Violation& v : gv.violations) rep.checks.push_back({v.inequality, v.lhs, v.rhs, false});
  if (!gv.report) return rep;
  const BoundReport& br = *gv.report;
  rep.report = br;
  hard("gamma > n/(2c) + theta", cfg.gains.gamma, n / (2.0 * cfg.gains.c) + cfg.gains.theta);
  hard("k2 > 1/(4 gamma - 2n/c - 4 theta)", cfg.gains.k2, br.k2_threshold);
  hard("r(0) > 1", cfg.r0, 1.0);
  hard("T1 > 0", cfg.filter.T1, 0.0);
  hard("T2 > 1/(4 kappa)", cfg.filter.T2, 1.0 / (4.0 * br.kappa));
  rep.zeta = filter_zeta(cfg.filter, br.kappa);
  soft("kappa > 1 (tracking law)", br.kappa, 1.0);
  soft("1/alpha2 > 10 epsilon (surface filter)", 1.0 / cfg.tracking.alpha2, 10.0 * cfg.tracking.epsilon);

  if (cfg.oracle) {
    const DisturbanceSample ds = sample_disturbance(sc.disturbance, cfg.horizon, 1e-4);
    soft("omega0 >= sampled max |w|", sc.disturbance.omega0, ds.max_w);
    soft("omega1 >= sampled max |w'|", sc.disturbance.omega1, ds.max_wdot);
  }

  if (cfg.controller == ControllerMode::NominalOnly) return rep;
  const ConstraintConstants k{br.kappa, rep.zeta, br.omega};
  const auto samples = detail::state_samples(sc, cfg.seed, 20);
  RunContext ctx{cfg, sc, QuadRule(std::max(2, cfg.quad_nodes), cfg.quad_segment > 0 ? cfg.quad_segment : 1.0), br, k,
                 {}, {}};
  const LoopState init = initial_loop_state(ctx);
  for (const BarrierDef& b : sc.barriers) {
    const CbfSpec spec = make_cbf(b, cfg.rates, cfg.rho, cfg.rho_tilde);
    const BarrierChain chain = build_chain(spec, sc.model, samples);
    if (cfg.controller == ControllerMode::RobustCbf) {
      if (spec.iota() != 1) throw ConfigError("robust-cbf baseline supports relative-degree-1 barriers only");
      soft(spec.name + ": h(x0) > 0", spec.h(sc.x0), 0.0);
      continue;
    }
    hard(spec.name + ": 2 kappa > lambda_iota", 2.0 * k.kappa, spec.rate(spec.iota()));
    hard(spec.name + ": zeta > lambda_{iota-1}", k.zeta, spec.rate(spec.iota() - 1));
    std::optional<double> z0;
    if (cfg.oracle) {
      const Vec d0 = total_disturbance(sc.model, sc.x0, sc.disturbance.w(0.0));
      z0 = (init.dhat - d0).norm() / cfg.r0;
    } else if (cfg.z0_bound) {
      z0 = *cfg.z0_bound;
    }
    if (!z0) continue;
    const InitialSignals is{sc.x0, sc.u0, cfg.r0, init.dhat, init.dhat_f, *z0};
    for (const HypothesisCheck& c : validate_theorem2(spec, chain, sc.model, k, is)) {
      if (c.name.find("kappa") != std::string::npos || c.name.find("zeta") != std::string::npos) continue;
      rep.advisory.push_back(c);
    }
  }
  return rep;
}

/// Builds the run context; throws ConfigError naming the first violated
/// inequality.
inline RunContext prepare_run(const SimConfig& cfg) {
  const ValidationReport v = validate_config(cfg);
  for (const auto& c : v.checks) {
    if (!c.pass) {
      std::ostringstream os;
      os << "configuration violates " << c.name << " (" << c.lhs << " vs " << c.rhs << ")";
      throw ConfigError(os.str(), c.name);
    }
  }
  RunContext ctx{cfg, resolve_scenario(cfg), QuadRule(cfg.quad_nodes, cfg.quad_segment), *v.report,
                 ConstraintConstants{v.report->kappa, v.zeta, v.report->omega}, {}, {}};
  if (cfg.controller != ControllerMode::NominalOnly) {
    for (const BarrierDef& b : ctx.scenario.barriers) {
      ctx.specs.push_back(make_cbf(b, cfg.rates, cfg.rho, cfg.rho_tilde));
      ctx.chains.push_back(build_chain(ctx.specs.back(), ctx.scenario.model));
    }
  }
  return ctx;
}

/// Controller-side signals at one state; uses measured x, u and observer
/// states only.
struct ControlEval {
  ObserverAlgebra obs;
  Vec dhat_f_dot;
  Vec x_d;
  Vec xd_dot;
  Vec u_d;
  Vec ud_f_dot;
  Vec v_nom;
  std::vector<ConstraintPair> pairs;
  QpResult qp;
};

inline void observer_part(const RunContext& ctx, double t, const LoopState& s, ControlEval& ev) {
  const SystemModel& model = ctx.scenario.model;
  const Vec xhat = s.x + s.e;
  ev.obs = observer_algebra(model, ctx.cfg.gains, s.x, xhat, s.u, s.dhat, s.r);
  // Newton iterates may visit r < 1, so the gain is applied directly.
  ev.dhat_f_dot = -filter_gain(ctx.cfg.filter, dbeta_dx_norm(ev.obs.dbeta_dx), s.r) * (s.dhat_f - s.dhat);
  std::tie(ev.x_d, ev.xd_dot) = ctx.scenario.reference(t, s.x);
  ev.u_d = desired_input(ev.obs.terms.f, ev.obs.terms.g, s.x, ev.x_d, ev.xd_dot, s.r, s.dhat, ctx.cfg.tracking);
  ev.ud_f_dot = surface_rhs(SurfaceState{s.ud_f}, ev.u_d, ctx.cfg.tracking.epsilon);
}

inline ControlEval evaluate_control(const RunContext& ctx, double t, const LoopState& s) {
  ControlEval ev;
  observer_part(ctx, t, s, ev);
  const SystemModel& model = ctx.scenario.model;
  ev.v_nom = nominal_v(ev.obs.terms.g, s.x, ev.x_d, s.u, SurfaceState{s.ud_f}, ev.u_d, ctx.cfg.tracking);
  if (ctx.cfg.controller == ControllerMode::NominalOnly) {
    ev.qp.v = ev.v_nom;
    return ev;
  }
  for (std::size_t i = 0; i < ctx.specs.size(); ++i) {
    if (ctx.cfg.controller == ControllerMode::RobustCbf) {
      ev.pairs.push_back(robust_lifted_constraint(ctx.specs[i], model, s.x, s.u, ctx.scenario.disturbance.omega0));
    } else {
      const ConstraintSignals sig{s.x, s.u, s.r, s.dhat, s.dhat_f, ev.obs.r_dot, ev.dhat_f_dot};
      ev.pairs.push_back(constraint_pair(ctx.specs[i], ctx.chains[i], model, sig, ctx.constants));
    }
  }
  ev.qp = ev.pairs.size() == 1 ? solve_qp_single(ev.pairs[0].psi0, ev.pairs[0].psi1, ev.v_nom)
                               : solve_qp_multi(ev.pairs, ev.v_nom);
  return ev;
}

/// Closed-loop vector field. With `held` the input rate v is frozen, else the
/// controller is evaluated at the stage point.
inline Vec loop_rhs(const RunContext& ctx, double t, const Vec& y, const Vec* held) {
  const int n = ctx.scenario.model.n, m = ctx.scenario.model.m;
  const LoopState s = unpack(y, n, m);
  ControlEval ev;
  Vec v;
  if (held) {
    observer_part(ctx, t, s, ev);
    v = *held;
  } else {
    ev = evaluate_control(ctx, t, s);
    v = ev.qp.v;
  }
  const ModelTerms& tm = ev.obs.terms;
  const Vec w = ctx.scenario.disturbance.w(t);
  const Vec drift = tm.f + tm.g * s.u;
  const Vec xdot = drift + tm.p * w;
  LoopState d;
  d.x = xdot;
  d.u = v;
  d.e = ev.obs.xhat_dot - xdot;
  d.dhat = ev.obs.dbeta_dx.cwiseProduct(xdot - drift - s.dhat);
  d.r = ev.obs.r_dot;
  d.dhat_f = ev.dhat_f_dot;
  d.ud_f = ev.ud_f_dot;
  return pack(d);
}

// ---------------------------------------------------------------------------
// Trajectory log
// ---------------------------------------------------------------------------

struct LogRecord {
  double t = 0.0;
  Vec x, xhat, u, dhat, dhat_f, ud_f, xi, x_d, v;
  double r = 1.0;
  Vec h;        ///< zeroth-level barrier values
  Vec psi0;
  Mat psi1;     ///< one row per barrier
  std::vector<bool> active;
  // oracle only
  Vec d_true, z;
  double rho_z = 0.0, rho_r = 0.0, rho_f = 0.0;
};

struct TrajectoryLog {
  int n = 0, m = 0, barriers = 0;
  bool oracle = false;
  std::vector<LogRecord> rows;
};

struct RunMetrics {
  double mean_tracking = 0.0;           ///< mean |x - x_d| over all logged steps
  double mean_tracking_inactive = 0.0;  ///< same, restricted to steps with no active constraint
  long inactive_steps = 0;
  double mean_tracking_late = 0.0;      ///< mean |x - x_d| over t in [horizon/2, horizon]
  double mean_estimation = 0.0;         ///< mean |d - dhat| over t in [horizon/4, horizon] (oracle)
  std::vector<double> min_h;
  Vec final_state;
};

struct RunResult {
  TrajectoryLog log;
  std::vector<HypothesisCheck> checks;    ///< post-run bound and safety checks
  std::vector<HypothesisCheck> advisory;  ///< pre-run advisory checks
  RunMetrics metrics;
  std::optional<std::string> failure;
  long failed_step = -1;
  RadauStats stats;
  double seconds = 0.0;
  bool ok() const {
    if (failure) return false;
    for (const auto& c : checks)
      if (!c.pass) return false;
    return true;
  }
};

namespace detail {

struct OracleSetup {
  BoundEnvelopes env;
  FilterEnvelope filt;
};

inline LogRecord make_record(const RunContext& ctx, double t, const LoopState& s, const ControlEval& ev,
                             const std::optional<OracleSetup>& oracle) {
  const SystemModel& model = ctx.scenario.model;
  LogRecord rec;
  rec.t = t;
  rec.x = s.x;
  rec.xhat = s.x + s.e;
  rec.u = s.u;
  rec.r = s.r;
  rec.dhat = s.dhat;
  rec.dhat_f = s.dhat_f;
  rec.ud_f = s.ud_f;
  rec.xi = s.dhat - beta(model, ctx.cfg.gains, s.x, rec.xhat, s.u, ctx.rule);
  rec.x_d = ev.x_d;
  rec.v = ev.qp.v;
  const auto k = static_cast<Eigen::Index>(ctx.scenario.barriers.size());
  rec.h.resize(k);
  for (Eigen::Index i = 0; i < k; ++i) rec.h[i] = ctx.scenario.barriers[static_cast<std::size_t>(i)].h(s.x);
  rec.psi0 = Vec::Zero(k);
  rec.psi1 = Mat::Zero(k, model.m);
  rec.active.assign(static_cast<std::size_t>(k), false);
  for (std::size_t i = 0; i < ev.pairs.size(); ++i) {
    rec.psi0[static_cast<Eigen::Index>(i)] = ev.pairs[i].psi0;
    rec.psi1.row(static_cast<Eigen::Index>(i)) = ev.pairs[i].psi1;
    if (i < ev.qp.active.size()) rec.active[i] = ev.qp.active[i];
  }
  if (oracle) {
    rec.d_true = total_disturbance(model, s.x, ctx.scenario.disturbance.w(t));
    rec.z = (s.dhat - rec.d_true) / s.r;
    rec.rho_z = oracle->env.rho_z(t);
    rec.rho_r = oracle->env.rho_r(t);
    rec.rho_f = oracle->filt.rho_f(t);
  }
  return rec;
}

}  // namespace detail

inline RunMetrics compute_metrics(const TrajectoryLog& log, double horizon) {
  RunMetrics m;
  m.min_h.assign(static_cast<std::size_t>(log.barriers), std::numeric_limits<double>::infinity());
  double sum = 0.0, sum_in = 0.0, sum_late = 0.0, sum_est = 0.0;
  long cnt_late = 0, cnt_est = 0;
  for (const LogRecord& r : log.rows) {
    const double err = (r.x - r.x_d).norm();
    sum += err;
    bool any = false;
    for (bool a : r.active) any = any || a;
    if (!any) {
      sum_in += err;
      ++m.inactive_steps;
    }
    if (r.t >= 0.5 * horizon - 1e-12) {
      sum_late += err;
      ++cnt_late;
    }
    if (log.oracle && r.t >= 0.25 * horizon - 1e-12) {
      sum_est += (r.d_true - r.dhat).norm();
      ++cnt_est;
    }
    for (int i = 0; i < log.barriers; ++i)
      m.min_h[static_cast<std::size_t>(i)] = std::min(m.min_h[static_cast<std::size_t>(i)], r.h[i]);
  }
  const double cnt = std::max<std::size_t>(1, log.rows.size());
  m.mean_tracking = sum / cnt;
  m.mean_tracking_inactive = m.inactive_steps ? sum_in / m.inactive_steps : 0.0;
  m.mean_tracking_late = cnt_late ? sum_late / cnt_late : 0.0;
  m.mean_estimation = cnt_est ? sum_est / cnt_est : 0.0;
  if (!log.rows.empty()) m.final_state = log.rows.back().x;
  return m;
}

/// Post-run envelope and safety checks.
inline std::vector<HypothesisCheck> check_bounds(const RunContext& ctx, const TrajectoryLog& log) {
  std::vector<HypothesisCheck> out;
  if (log.rows.empty()) return out;
  double min_r = std::numeric_limits<double>::infinity();
  for (const auto& r : log.rows) min_r = std::min(min_r, r.r);
  out.push_back({"r(t) >= 1 - 1e-9", min_r, 1.0 - 1e-9, min_r >= 1.0 - 1e-9});

  if (log.oracle) {
    double z_gap = -std::numeric_limits<double>::infinity(), r_gap = z_gap, f_gap = z_gap, ed_late = 0.0;
    const double t_end = log.rows.back().t;
    for (const auto& r : log.rows) {
      z_gap = std::max(z_gap, r.z.norm() - r.rho_z);
      r_gap = std::max(r_gap, r.r - r.rho_r);
      f_gap = std::max(f_gap, (r.dhat_f - r.dhat).norm() - r.rho_f);
      if (r.t >= 0.75 * t_end - 1e-12) ed_late = std::max(ed_late, (r.dhat - r.d_true).norm());
    }
    out.push_back({"max |z(t)| - rho_z(t) <= 1e-6", z_gap, 1e-6, z_gap <= 1e-6, true});
    out.push_back({"max r(t) - rho_r(t) <= 1e-6", r_gap, 1e-6, r_gap <= 1e-6, true});
    out.push_back({"sup |e_d| on final quarter <= ultimate bound", ed_late, ctx.report.ultimate_bound,
                   ed_late <= ctx.report.ultimate_bound, true});
    out.push_back({"max |dhat_f - dhat| - rho_f(t) <= 1e-6", f_gap, 1e-6, f_gap <= 1e-6, true});
  }
  if (ctx.cfg.controller != ControllerMode::NominalOnly) {
    for (int i = 0; i < log.barriers; ++i) {
      double mn = std::numeric_limits<double>::infinity();
      for (const auto& r : log.rows) mn = std::min(mn, r.h[i]);
      out.push_back({"min h[" + ctx.scenario.barriers[static_cast<std::size_t>(i)].name + "] >= -1e-6", mn, -1e-6,
                     mn >= -1e-6});
    }
  }
  return out;
}

/// Runs a prepared context. Runtime failures are captured in the result
/// with the log up to the failing step.
inline RunResult run(const RunContext& ctx, const std::vector<HypothesisCheck>& advisory = {}) {
  const auto start = std::chrono::steady_clock::now();
  const SimConfig& cfg = ctx.cfg;
  const Scenario& sc = ctx.scenario;
  const int n = sc.model.n, m = sc.model.m;
  RunResult res;
  res.advisory = advisory;
  res.log.n = n;
  res.log.m = m;
  res.log.barriers = static_cast<int>(sc.barriers.size());
  res.log.oracle = cfg.oracle;

  LoopState s = initial_loop_state(ctx);
  std::optional<detail::OracleSetup> oracle;
  if (cfg.oracle) {
    const Vec d0 = total_disturbance(sc.model, s.x, sc.disturbance.w(0.0));
    const Vec z0 = (s.dhat - d0) / s.r;
    const double w0 = lyapunov_w0(z0, s.e, s.r);
    oracle = detail::OracleSetup{bound_envelopes(ctx.report, z0, w0), zeta_and_rho_f(cfg.filter, ctx.report, z0.norm())};
  }

  const long steps = static_cast<long>(std::llround(cfg.horizon / cfg.dt));
  Vec y = pack(s);
  long k = 0;
  try {
    for (k = 0; k <= steps; ++k) {
      const double t = static_cast<double>(k) * cfg.dt;
      s = unpack(y, n, m);
      const ControlEval ev = evaluate_control(ctx, t, s);
      if (k % cfg.log_stride == 0 || k == steps) res.log.rows.push_back(detail::make_record(ctx, t, s, ev, oracle));
      if (k == steps) break;
      const Vec v = ev.qp.v;
      const Vec* held = cfg.hold == ControlHold::ZeroOrder ? &v : nullptr;
      auto rhs = [&](double tt, const Vec& yy) { return loop_rhs(ctx, tt, yy, held); };
      y = cfg.integrator == Integrator::Radau ? radau_step(rhs, t, y, cfg.dt, RadauOptions{}, &res.stats)
                                              : rk4_step(rhs, t, y, cfg.dt);
      if (!y.allFinite()) throw StepError("non-finite state", 0);
    }
  } catch (const Error& e) {
    res.failure = "step " + std::to_string(k) + " (t = " + std::to_string(static_cast<double>(k) * cfg.dt) +
                  "): " + e.what();
    res.failed_step = k;
  }
  res.metrics = compute_metrics(res.log, cfg.horizon);
  res.checks = check_bounds(ctx, res.log);
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return res;
}

inline RunResult run(const SimConfig& cfg) {
  const ValidationReport v = validate_config(cfg);
  return run(prepare_run(cfg), v.advisory);
}

}  // namespace iidob
