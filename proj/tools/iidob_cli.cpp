// Command-line driver: simulate, validate, compare, plot.
//
// Exit codes: 0 success, 1 configuration or inequality violation,
// 2 runtime failure.

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "iidob.hpp"

namespace fs = std::filesystem;
using namespace iidob;

namespace {

constexpr int kOk = 0;
constexpr int kViolation = 1;
constexpr int kRuntime = 2;

struct Overrides {
  std::string out;
  bool oracle = false;
  std::string controller;
  std::string hold;
  std::optional<double> dt;
  std::optional<double> horizon;
};

SimConfig load_with(const std::string& path, const Overrides& o) {
  SimConfig cfg = load_config(path);
  if (!o.out.empty()) cfg.output_dir = o.out;
  if (o.oracle) cfg.oracle = true;
  nlohmann::json patch = nlohmann::json::object();
  if (!o.controller.empty()) {
    patch["controller"] = o.controller;
  }
  if (!o.hold.empty()) patch["control_hold"] = o.hold;
  if (!patch.empty()) {
    const SimConfig p = parse_config(patch);
    if (!o.controller.empty()) cfg.controller = p.controller;
    if (!o.hold.empty()) cfg.hold = p.hold;
  }
  if (o.dt) cfg.dt = *o.dt;
  if (o.horizon) cfg.horizon = *o.horizon;
  return cfg;
}

int cmd_validate(const std::string& path) {
  const SimConfig cfg = load_config(path);
  const ValidationReport v = validate_config(cfg);
  std::cout << render_validation(v);
  return v.ok() ? kOk : kViolation;
}

int cmd_simulate(const std::string& path, const Overrides& o) {
  const SimConfig cfg = load_with(path, o);
  const ValidationReport v = validate_config(cfg);
  if (!v.ok()) {
    std::cerr << render_validation(v);
    return kViolation;
  }
  const RunContext ctx = prepare_run(cfg);
  const RunResult r = run(ctx, v.advisory);
  fs::create_directories(cfg.output_dir);
  const std::string csv = (fs::path(cfg.output_dir) / "trajectory.csv").string();
  emit_csv(r.log, csv);
  const std::string report = render_report(ctx, r);
  emit_report(report, (fs::path(cfg.output_dir) / "report.txt").string());
  std::vector<std::string> states;
  for (int i = 1; i <= r.log.n; ++i) states.push_back("x" + std::to_string(i));
  for (int i = 1; i <= r.log.n; ++i) states.push_back("xd" + std::to_string(i));
  emit_svg(r.log, states, (fs::path(cfg.output_dir) / "states.svg").string());
  std::cout << report << "wrote " << csv << "\n";
  if (r.failure) return kRuntime;
  return r.ok() ? kOk : kViolation;
}

int cmd_compare(const std::string& path, const Overrides& o) {
  const SimConfig base = load_with(path, o);
  fs::create_directories(base.output_dir);
  std::ostringstream table;
  table << "controller,status,mean_tracking,mean_tracking_inactive,inactive_rows,min_h,seconds\n";
  int code = kOk;
  for (ControllerMode mode : {ControllerMode::IidobCbfQp, ControllerMode::RobustCbf, ControllerMode::NominalOnly}) {
    SimConfig cfg = base;
    cfg.controller = mode;
    std::string status;
    try {
      const ValidationReport v = validate_config(cfg);
      if (!v.ok()) {
        table << to_string(mode) << ",invalid,,,,,\n";
        code = std::max(code, kViolation);
        continue;
      }
      const RunContext ctx = prepare_run(cfg);
      const RunResult r = run(ctx, v.advisory);
      emit_csv(r.log, (fs::path(cfg.output_dir) / ("trajectory_" + to_string(mode) + ".csv")).string());
      double min_h = std::numeric_limits<double>::infinity();
      for (double h : r.metrics.min_h) min_h = std::min(min_h, h);
      status = r.failure ? "failed" : (min_h >= -1e-6 ? "safe" : "unsafe");
      if (r.failure) code = kRuntime;
      table << to_string(mode) << "," << status << "," << format_double(r.metrics.mean_tracking) << ","
            << format_double(r.metrics.mean_tracking_inactive) << "," << r.metrics.inactive_steps << ","
            << format_double(min_h) << "," << r.seconds << "\n";
    } catch (const ConfigError& e) {
      table << to_string(mode) << ",unsupported,,,,,\n";
      std::cerr << to_string(mode) << ": " << e.what() << "\n";
    }
  }
  std::cout << table.str();
  emit_report(table.str(), (fs::path(base.output_dir) / "comparison.csv").string());
  return code;
}

std::vector<std::string> split(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Disturbance-observer based safe control simulator"};
  app.require_subcommand(1);

  std::string config;
  Overrides o;
  auto add_overrides = [&](CLI::App* sub) {
    sub->add_option("--config", config, "JSON configuration")->required();
    sub->add_option("--out", o.out, "output directory");
    sub->add_option("--controller", o.controller, "iidob-cbf-qp | robust-cbf | nominal-only");
    sub->add_option("--hold", o.hold, "zoh | continuous");
    sub->add_option("--dt", o.dt, "step size");
    sub->add_option("--horizon", o.horizon, "final time");
  };

  auto* sim = app.add_subcommand("simulate", "run one closed-loop simulation");
  add_overrides(sim);
  sim->add_flag("--oracle", o.oracle, "log ground-truth disturbance diagnostics and envelopes");

  auto* val = app.add_subcommand("validate", "report the configuration's inequalities");
  val->add_option("--config", config, "JSON configuration")->required();

  auto* cmp = app.add_subcommand("compare", "run every controller on one configuration");
  add_overrides(cmp);

  std::string csv, channels, svg;
  auto* plot = app.add_subcommand("plot", "plot CSV channels against time");
  plot->add_option("--csv", csv, "trajectory CSV")->required();
  plot->add_option("--channels", channels, "comma-separated column names")->required();
  plot->add_option("--out", svg, "output SVG")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kViolation;
  }

  try {
    if (*sim) return cmd_simulate(config, o);
    if (*val) return cmd_validate(config);
    if (*cmp) return cmd_compare(config, o);
    if (*plot) {
      emit_svg(read_csv(csv), split(channels), svg);
      return kOk;
    }
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kViolation;
  } catch (const ContractError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kViolation;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return kRuntime;
  }
  return kOk;
}
