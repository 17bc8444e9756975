#pragma once

// CSV, SVG and text report emitters for trajectory logs.

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "iidob/simulation.hpp"

namespace iidob {

class IoError : public Error {
 public:
  using Error::Error;
};

/// Column-major view of a log: one header row, rows of doubles.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;

  int column(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return static_cast<int>(i);
    return -1;
  }
};

inline std::vector<std::string> log_columns(const TrajectoryLog& log) {
  std::vector<std::string> h{"t"};
  auto add = [&](const std::string& prefix, int count) {
    for (int i = 1; i <= count; ++i) h.push_back(prefix + std::to_string(i));
  };
  add("x", log.n);
  add("xhat", log.n);
  add("u", log.m);
  h.push_back("r");
  add("dhat", log.n);
  add("dhatf", log.n);
  add("h", log.barriers);
  add("psi0_", log.barriers);
  for (int k = 1; k <= log.barriers; ++k)
    for (int j = 1; j <= log.m; ++j) h.push_back("psi1_" + std::to_string(k) + "_" + std::to_string(j));
  add("active_", log.barriers);
  add("v", log.m);
  add("udf", log.m);
  add("xi", log.n);
  add("xd", log.n);
  if (log.oracle) {
    add("d", log.n);
    add("z", log.n);
    h.push_back("rho_z");
    h.push_back("rho_r");
    h.push_back("rho_f");
  }
  return h;
}

inline CsvTable log_to_table(const TrajectoryLog& log) {
  CsvTable t;
  t.header = log_columns(log);
  for (const LogRecord& r : log.rows) {
    std::vector<double> row;
    row.reserve(t.header.size());
    auto put = [&](const Vec& v) { row.insert(row.end(), v.data(), v.data() + v.size()); };
    row.push_back(r.t);
    put(r.x);
    put(r.xhat);
    put(r.u);
    row.push_back(r.r);
    put(r.dhat);
    put(r.dhat_f);
    put(r.h);
    put(r.psi0);
    for (Eigen::Index k = 0; k < r.psi1.rows(); ++k)
      for (Eigen::Index j = 0; j < r.psi1.cols(); ++j) row.push_back(r.psi1(k, j));
    for (bool a : r.active) row.push_back(a ? 1.0 : 0.0);
    put(r.v);
    put(r.ud_f);
    put(r.xi);
    put(r.x_d);
    if (log.oracle) {
      put(r.d_true);
      put(r.z);
      row.push_back(r.rho_z);
      row.push_back(r.rho_r);
      row.push_back(r.rho_f);
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline void write_csv(const CsvTable& t, std::ostream& os) {
  for (std::size_t i = 0; i < t.header.size(); ++i) os << (i ? "," : "") << t.header[i];
  os << '\n';
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << format_double(row[i]);
    os << '\n';
  }
}

inline void emit_csv(const TrajectoryLog& log, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  write_csv(log_to_table(log), out);
  if (!out) throw IoError("write failed for " + path);
}

inline CsvTable read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path);
  CsvTable t;
  std::string line;
  if (!std::getline(in, line)) throw IoError(path + ": empty file");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) t.header.push_back(cell);
  }
  long lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str()) throw IoError(path + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
      row.push_back(v);
    }
    if (row.size() != t.header.size()) throw IoError(path + ":" + std::to_string(lineno) + ": wrong column count");
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Line plot of the named channels against the "t" column.
inline std::string render_svg(const CsvTable& t, const std::vector<std::string>& channels) {
  const double width = 800, height = 450, left = 70, right = 20, top = 20, bottom = 50;
  const int tc = t.column("t");
  if (tc < 0) throw IoError("plot: table has no 't' column");
  std::vector<int> cols;
  for (const auto& c : channels) {
    const int idx = t.column(c);
    if (idx < 0) throw IoError("plot: unknown channel '" + c + "'");
    cols.push_back(idx);
  }
  double t0 = 0.0, t1 = 1.0, y0 = -1.0, y1 = 1.0;
  if (!t.rows.empty()) {
    t0 = t.rows.front()[static_cast<std::size_t>(tc)];
    t1 = t.rows.back()[static_cast<std::size_t>(tc)];
    if (!cols.empty()) {
      y0 = std::numeric_limits<double>::infinity();
      y1 = -y0;
      for (const auto& row : t.rows)
        for (int c : cols) {
          y0 = std::min(y0, row[static_cast<std::size_t>(c)]);
          y1 = std::max(y1, row[static_cast<std::size_t>(c)]);
        }
    }
  }
  if (!(t1 > t0)) t1 = t0 + 1.0;
  if (!(y1 > y0)) {
    y0 -= 1.0;
    y1 += 1.0;
  }
  const double pad = 0.05 * (y1 - y0);
  y0 -= pad;
  y1 += pad;
  auto px = [&](double v) { return left + (v - t0) / (t1 - t0) * (width - left - right); };
  auto py = [&](double v) { return height - bottom - (v - y0) / (y1 - y0) * (height - top - bottom); };

  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << height - bottom << "\" x2=\"" << width - right << "\" y2=\""
     << height - bottom << "\" stroke=\"black\"/>\n";
  os << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << height - bottom
     << "\" stroke=\"black\"/>\n";
  for (int i = 0; i <= 4; ++i) {
    const double tv = t0 + (t1 - t0) * i / 4.0;
    const double yv = y0 + (y1 - y0) * i / 4.0;
    os << "<text x=\"" << px(tv) << "\" y=\"" << height - bottom + 18 << "\" font-size=\"12\" text-anchor=\"middle\">"
       << format_double(std::round(tv * 1000.0) / 1000.0) << "</text>\n";
    os << "<text x=\"" << left - 6 << "\" y=\"" << py(yv) + 4 << "\" font-size=\"12\" text-anchor=\"end\">"
       << format_double(std::round(yv * 1000.0) / 1000.0) << "</text>\n";
  }
  os << "<text x=\"" << (left + width - right) / 2 << "\" y=\"" << height - 10
     << "\" font-size=\"13\" text-anchor=\"middle\">t</text>\n";
  for (std::size_t k = 0; k < cols.size(); ++k) {
    const char* colour = palette[k % 8];
    os << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"1.2\" points=\"";
    for (const auto& row : t.rows) {
      os << px(row[static_cast<std::size_t>(tc)]) << "," << py(row[static_cast<std::size_t>(cols[k])]) << " ";
    }
    os << "\"/>\n";
    os << "<text x=\"" << width - right - 5 << "\" y=\"" << top + 15 * (k + 1) << "\" font-size=\"12\" fill=\""
       << colour << "\" text-anchor=\"end\">" << channels[k] << "</text>\n";
  }
  os << "</svg>\n";
  return os.str();
}

inline void emit_svg(const CsvTable& t, const std::vector<std::string>& channels, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << render_svg(t, channels);
}

inline void emit_svg(const TrajectoryLog& log, const std::vector<std::string>& channels, const std::string& path) {
  emit_svg(log_to_table(log), channels, path);
}

inline std::string check_line(const HypothesisCheck& c) {
  std::ostringstream os;
  os << (c.pass ? "PASS " : "FAIL ") << c.name << "  lhs=" << format_double(c.lhs)
     << " rhs=" << format_double(c.rhs) << " margin=" << format_double(c.margin());
  return os.str();
}

inline std::string render_validation(const ValidationReport& v) {
  std::ostringstream os;
  if (v.report) {
    const BoundReport& b = *v.report;
    os << "kappa = " << format_double(b.kappa) << "\nomega = " << format_double(b.omega)
       << "\nchi = " << format_double(b.chi) << "\nzeta = " << format_double(v.zeta)
       << "\nultimate bound on |e_d| = " << format_double(b.ultimate_bound) << "\n";
  }
  os << "-- required\n";
  for (const auto& c : v.checks) os << check_line(c) << "\n";
  os << "-- advisory\n";
  for (const auto& c : v.advisory) os << (c.pass ? "" : "WARN ") << check_line(c) << "\n";
  return os.str();
}

inline std::string render_report(const RunContext& ctx, const RunResult& r) {
  std::ostringstream os;
  os << "scenario " << ctx.scenario.name << ", controller " << to_string(ctx.cfg.controller) << ", hold "
     << to_string(ctx.cfg.hold) << ", integrator " << to_string(ctx.cfg.integrator) << "\n";
  os << "dt = " << format_double(ctx.cfg.dt) << ", horizon = " << format_double(ctx.cfg.horizon)
     << ", logged rows = " << r.log.rows.size() << ", wall time = " << r.seconds << " s\n";
  os << "kappa = " << format_double(ctx.report.kappa) << ", omega = " << format_double(ctx.report.omega)
     << ", chi = " << format_double(ctx.report.chi) << ", zeta = " << format_double(ctx.constants.zeta)
     << ", ultimate bound = " << format_double(ctx.report.ultimate_bound) << "\n";
  if (r.failure) os << "RUNTIME FAILURE " << *r.failure << "\n";
  os << "-- advisory\n";
  for (const auto& c : r.advisory) os << (c.pass ? "" : "WARN ") << check_line(c) << "\n";
  os << "-- checks\n";
  for (const auto& c : r.checks) os << check_line(c) << "\n";
  os << "-- metrics\n";
  os << "mean |x - x_d| = " << format_double(r.metrics.mean_tracking) << "\n";
  os << "mean |x - x_d| with no active constraint = " << format_double(r.metrics.mean_tracking_inactive) << " over "
     << r.metrics.inactive_steps << " rows\n";
  os << "mean |x - x_d| on second half = " << format_double(r.metrics.mean_tracking_late) << "\n";
  if (r.log.oracle) os << "mean |d - dhat| after first quarter = " << format_double(r.metrics.mean_estimation) << "\n";
  for (std::size_t i = 0; i < r.metrics.min_h.size(); ++i) {
    os << "min h[" << ctx.scenario.barriers[i].name << "] = " << format_double(r.metrics.min_h[i]) << "\n";
  }
  return os.str();
}

inline void emit_report(const std::string& text, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << text;
}

}  // namespace iidob
