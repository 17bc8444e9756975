// Acceptance checks: one PASS/FAIL line per criterion. Exit status is
// 1 when any criterion fails.

#include <chrono>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>

#include "iidob.hpp"
#include "qp_oracle.hpp"

using namespace iidob;

namespace {

const std::string kSource = IIDOB_SOURCE_DIR;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

int failures = 0;

void report(int id, const std::string& title, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::printf("%s %2d %s: %s\n", pass ? "PASS" : "FAIL", id, title.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

SimConfig config(const std::string& name) { return load_config(kSource + "/configs/" + name + ".json"); }

std::string csv_text(const TrajectoryLog& log) {
  std::ostringstream os;
  write_csv(log_to_table(log), os);
  return os.str();
}

double min_barrier(const RunResult& r) {
  double mn = std::numeric_limits<double>::infinity();
  for (double h : r.metrics.min_h) mn = std::min(mn, h);
  return mn;
}

const HypothesisCheck* find_check(const RunResult& r, const std::string& prefix) {
  for (const auto& c : r.checks)
    if (c.name.rfind(prefix, 0) == 0) return &c;
  return nullptr;
}

struct Point {
  Vec x, xhat, u;
};

std::vector<Point> random_points(const SystemModel& m, int count, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<double> state(-2.0, 2.0), offset(-1.0, 1.0), input(-3.0, 3.0);
  std::vector<Point> out;
  for (int k = 0; k < count; ++k) {
    Point p{Vec(m.n), Vec(m.n), Vec(m.m)};
    for (int i = 0; i < m.n; ++i) {
      p.x[i] = state(rng);
      p.xhat[i] = p.x[i] + offset(rng);
    }
    for (int j = 0; j < m.m; ++j) p.u[j] = input(rng);
    out.push_back(p);
  }
  return out;
}

void gain_arithmetic() {
  const auto t0 = Clock::now();
  const GainValidation a = validate_gains(ObserverGains{100, 1, 0.5, 10, 10, 10}, 2, 1.001, {8, 26, 1});
  const GainValidation b = validate_gains(ObserverGains{250, 1, 5, 50, 20, 20}, 4, 1.001, {11, 37, 2});
  const double dt = seconds_since(t0);
  const bool pass = a.ok() && b.ok() && std::abs(a.report->kappa - 88.0) <= 1e-12 &&
                    std::abs(a.report->k2_threshold - 1.0 / 352.0) <= 1e-12 &&
                    std::abs(b.report->kappa - 199.6) <= 1e-12 && dt < 1e-3;
  std::ostringstream os;
  os << "kappa1=" << format_double(a.ok() ? a.report->kappa : NAN)
     << " k2_threshold=" << format_double(a.ok() ? a.report->k2_threshold : NAN)
     << " kappa2=" << format_double(b.ok() ? b.report->kappa : NAN) << " time=" << dt << "s";
  report(1, "gain arithmetic", pass, os.str());
}

void divided_differences() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (const std::string name : {"example1", "manipulator"}) {
    const Scenario s = make_scenario(name);
    const ObserverGains g = s.defaults.gains;
    for (const Point& p : random_points(s.model, 1000, 101)) {
      auto f = [&](const Vec& y) { return psi(s.model, g, y, p.u); };
      const DeltaCoeffs d = delta_coeffs_for(f, p.x, p.xhat);
      const Vec res = delta_residual_for(f, p.x, p.xhat, d);
      worst = std::max(worst, res.cwiseAbs().maxCoeff() / (1.0 + std::abs(f(p.x))));
    }
  }
  const double dt = seconds_since(t0);
  report(2, "divided-difference identity", worst <= 1e-6 && dt < 5.0,
         "max residual/(1+|psi|)=" + format_double(worst) + fmt(" time=%.3gs", dt));
}

void beta_jacobians_check() {
  const auto t0 = Clock::now();
  const QuadRule rule(16);
  double worst_diag = 0.0, worst_jac = 0.0;
  auto rel = [](double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); };
  for (const std::string name : {"example1", "manipulator"}) {
    const Scenario s = make_scenario(name);
    const ObserverGains g = s.defaults.gains;
    for (const Point& p : random_points(s.model, 100, 202)) {
      const Vec d = dbeta_dx_diagonal(s.model, g, p.x, p.xhat, p.u);
      for (int i = 0; i < s.model.n; ++i) {
        const double num = central_diff([&](const Vec& y) { return beta(s.model, g, y, p.xhat, p.u, rule)[i]; }, p.x,
                                        i, fd_step(p.x[i]));
        worst_diag = std::max(worst_diag, rel(d[i], num));
      }
      const BetaJacobians j = beta_jacobians(s.model, g, p.x, p.xhat, p.u, rule);
      const Mat nx = central_jacobian([&](const Vec& y) { return beta(s.model, g, p.x, y, p.u, rule); }, p.xhat);
      const Mat nu = central_jacobian([&](const Vec& y) { return beta(s.model, g, p.x, p.xhat, y, rule); }, p.u);
      for (Eigen::Index a = 0; a < nx.rows(); ++a) {
        for (Eigen::Index b = 0; b < nx.cols(); ++b) worst_jac = std::max(worst_jac, rel(j.dxhat(a, b), nx(a, b)));
        for (Eigen::Index b = 0; b < nu.cols(); ++b) worst_jac = std::max(worst_jac, rel(j.du(a, b), nu(a, b)));
      }
    }
  }
  const double dt = seconds_since(t0);
  report(3, "beta Jacobian consistency", worst_diag <= 1e-4 && worst_jac <= 1e-4 && dt < 30.0,
         "max rel err diag=" + format_double(worst_diag) + " xhat/u=" + format_double(worst_jac) +
             fmt(" time=%.3gs", dt));
}

void qp_equivalence() {
  const auto t0 = Clock::now();
  std::mt19937 rng(303);
  std::normal_distribution<double> nd;
  double worst = 0.0, worst_slack = 0.0;
  bool solved = true;
  for (int k = 0; k < 1000; ++k) {
    const int m = 1 + k % 3;
    const Vec vn = Vec::NullaryExpr(m, [&](Eigen::Index) { return 3.0 * nd(rng); });
    const RowVec a = RowVec::NullaryExpr(m, [&](Eigen::Index) { return nd(rng); });
    const double b = 3.0 * nd(rng);
    const QpResult r = solve_qp_single(b, a, vn);
    const auto ref = qp_oracle::solve(Mat(a), Vec::Constant(1, b), vn);
    if (!ref) {
      solved = false;
      continue;
    }
    worst = std::max(worst, (r.v - *ref).norm());
    worst_slack = std::min(worst_slack, b + a.dot(r.v));
  }
  for (int k = 0; k < 1000; ++k) {
    const int m = 2 + k % 3;
    const int c = 1 + (k / 3) % 5;
    const Vec vn = Vec::NullaryExpr(m, [&](Eigen::Index) { return 3.0 * nd(rng); });
    const Vec feasible = Vec::NullaryExpr(m, [&](Eigen::Index) { return nd(rng); });
    Mat a(c, m);
    Vec b(c);
    std::vector<ConstraintPair> pairs;
    for (int i = 0; i < c; ++i) {
      a.row(i) = RowVec::NullaryExpr(m, [&](Eigen::Index) { return nd(rng); });
      b[i] = -a.row(i).dot(feasible) + std::abs(nd(rng));
      pairs.push_back(ConstraintPair{b[i], a.row(i), 0.0});
    }
    try {
      const QpResult r = solve_qp_multi(pairs, vn);
      const auto ref = qp_oracle::solve(a, b, vn);
      if (!ref) {
        solved = false;
        continue;
      }
      worst = std::max(worst, (r.v - *ref).norm());
      worst_slack = std::min(worst_slack, (b + a * r.v).minCoeff());
    } catch (const InfeasibleQp&) {
      solved = false;
    }
  }
  const double dt = seconds_since(t0);
  report(4, "QP oracle equivalence", solved && worst <= 1e-8 && worst_slack >= -1e-9 && dt < 10.0,
         "max |dv|=" + format_double(worst) + " min slack=" + format_double(worst_slack) + fmt(" time=%.3gs", dt));
}

}  // namespace

int main() {
  gain_arithmetic();
  divided_differences();
  beta_jacobians_check();
  qp_equivalence();

  // Example 1 in oracle mode feeds criteria 5, 6 and 7.
  SimConfig ex1 = config("example1");
  ex1.oracle = true;
  const RunResult oracle_run = run(ex1);
  {
    const HypothesisCheck* r_min = find_check(oracle_run, "r(t) >= 1");
    const HypothesisCheck* z = find_check(oracle_run, "max |z(t)|");
    const HypothesisCheck* rr = find_check(oracle_run, "max r(t)");
    const HypothesisCheck* ed = find_check(oracle_run, "sup |e_d|");
    const bool pass = !oracle_run.failure && r_min && z && rr && ed && r_min->pass && z->pass && rr->pass &&
                      ed->pass && oracle_run.seconds < 60.0;
    std::ostringstream os;
    if (oracle_run.failure) os << "run failed: " << *oracle_run.failure << " ";
    if (r_min) os << "min r=" << format_double(r_min->lhs);
    if (z) os << " max(|z|-rho_z)=" << format_double(z->lhs);
    if (rr) os << " max(r-rho_r)=" << format_double(rr->lhs);
    if (ed) os << " sup|e_d|[15,20]=" << format_double(ed->lhs) << " bound=" << format_double(ed->rhs);
    os << fmt(" time=%.3gs", oracle_run.seconds);
    report(5, "observer envelopes", pass, os.str());
  }
  {
    const HypothesisCheck* f = find_check(oracle_run, "max |dhat_f - dhat|");
    const bool pass = !oracle_run.failure && f && f->pass;
    report(6, "filter envelope", pass, f ? "max(|dhat_f-dhat|-rho_f)=" + format_double(f->lhs) : "missing check");
  }
  RunResult robust_run;
  {
    const auto t0 = Clock::now();
    const SimConfig mc = config("manipulator");
    const RunResult manip = run(mc);
    const double h1 = min_barrier(oracle_run), h2 = min_barrier(manip);
    const double dt = oracle_run.seconds + seconds_since(t0);
    const bool pass = !oracle_run.failure && !manip.failure && h1 >= -1e-6 && h2 >= -1e-6 &&
                      manip.log.rows.size() == static_cast<std::size_t>(std::llround(mc.horizon / mc.dt)) + 1 &&
                      dt < 300.0;
    std::ostringstream os;
    os << "example1 min h=" << format_double(h1) << " manipulator min h=" << format_double(h2);
    if (manip.failure) os << " manipulator failed: " << *manip.failure;
    os << fmt(" time=%.3gs", dt);
    report(7, "safety", pass, os.str());
  }
  {
    SimConfig c = config("example1");
    c.controller = ControllerMode::RobustCbf;
    robust_run = run(c);
    const double a = oracle_run.metrics.mean_tracking_inactive, b = robust_run.metrics.mean_tracking_inactive;
    const bool safe = !robust_run.failure && min_barrier(oracle_run) >= -1e-6 && min_barrier(robust_run) >= -1e-6;
    std::ostringstream os;
    os << "inactive-step tracking iidob=" << format_double(a) << " (" << oracle_run.metrics.inactive_steps
       << " rows) robust=" << format_double(b) << " (" << robust_run.metrics.inactive_steps
       << " rows) both safe=" << (safe ? "yes" : "no");
    report(8, "comparison ordering", safe && a < b, os.str());
  }
  {
    const SimConfig c = config("example1");
    const RunResult a = run(c), b = run(c);
    SimConfig half = c;
    half.dt = c.dt / 2.0;
    const RunResult h = run(half);
    const bool identical = csv_text(a.log) == csv_text(b.log);
    const double diff = (a.log.rows.back().x - h.log.rows.back().x).norm();
    const bool pass = !a.failure && !h.failure && identical && diff <= 1e-5;
    std::ostringstream os;
    os << "byte-identical=" << (identical ? "yes" : "no") << " |x_dt(T)-x_dt/2(T)|=" << format_double(diff);
    report(9, "determinism and convergence", pass, os.str());
  }
  {
    SimConfig c = config("example1");
    c.oracle = false;
    RunContext ctx = prepare_run(c);
    ctx.scenario.disturbance.wdot = [](double) { return Vec::Constant(1, std::numeric_limits<double>::quiet_NaN()); };
    const RunResult r = run(ctx);
    const bool finite = !r.log.rows.empty() && r.log.rows.back().x.allFinite() && r.log.rows.back().dhat.allFinite();
    const bool pass = !r.failure && finite && r.log.rows.size() == oracle_run.log.rows.size();
    std::ostringstream os;
    os << "rows=" << r.log.rows.size() << " final dhat finite=" << (finite ? "yes" : "no");
    if (r.failure) os << " failure: " << *r.failure;
    report(10, "oracle isolation", pass, os.str());
  }
  std::printf("%d of 10 criteria failed\n", failures);
  return failures ? 1 : 0;
}
