#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>

#include <gtest/gtest.h>

#include "iidob.hpp"

using namespace iidob;
namespace fs = std::filesystem;

namespace {

const std::string kSource = IIDOB_SOURCE_DIR;

SimConfig example1(double horizon) {
  SimConfig c = load_config(kSource + "/configs/example1.json");
  c.horizon = horizon;
  return c;
}

std::string csv_text(const TrajectoryLog& log) {
  std::ostringstream os;
  write_csv(log_to_table(log), os);
  return os.str();
}

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("iidob_tests_" + std::to_string(::getpid()));
  fs::create_directories(dir);
  return dir / name;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(IIDOB_CLI) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Config, ScenarioDefaultsAndOverrides) {
  const SimConfig c = parse_config(nlohmann::json::parse(R"({"scenario": "example1", "observer": {"gamma": 120}})"));
  EXPECT_EQ(c.gains.gamma, 120.0);
  EXPECT_EQ(c.gains.k1, 10.0);
  EXPECT_EQ(c.filter.T1, 50.0);
  EXPECT_EQ(c.rates, (std::vector<double>{50.0, 50.0}));
  EXPECT_EQ(c.dt, 1e-3);
  EXPECT_EQ(c.r0, 1.001);
  EXPECT_EQ(c.tracking.epsilon, 1e-3);
  EXPECT_EQ(c.hold, ControlHold::ZeroOrder);
}

TEST(Config, UnknownKeysAreRejected) {
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"horizn": 3})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"observer": {"gama": 3}})")), ConfigError);
}

TEST(Config, BadValuesAreConfigErrors) {
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"controller": "pid"})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"dt": "small"})")), ConfigError);
  EXPECT_THROW(parse_config(nlohmann::json::parse(R"({"scenario": "pendulum"})")), ConfigError);
  SimConfig c = example1(1.0);
  c.x0 = Vec::Zero(3);
  EXPECT_THROW(resolve_scenario(c), ContractError);
}

TEST(Config, RoundTripsThroughJson) {
  const SimConfig a = example1(3.0);
  const SimConfig b = parse_config(config_to_json(a));
  EXPECT_EQ(config_to_json(a), config_to_json(b));
}

TEST(Validation, Example1DefaultsPass) {
  SimConfig c = example1(20.0);
  c.oracle = true;
  const ValidationReport v = validate_config(c);
  EXPECT_TRUE(v.ok());
  EXPECT_NEAR(v.report->kappa, 88.0, 1e-12);
  EXPECT_NEAR(v.report->omega, 24.18, 1e-12);
  EXPECT_NEAR(v.zeta, 100.0, 1e-12);
  int initial = 0;
  for (const auto& a : v.advisory)
    if (a.name.find("V_f(0)") != std::string::npos || a.name.find("|z(0)|") != std::string::npos) ++initial;
  EXPECT_EQ(initial, 4);
}

TEST(Validation, SmallFilterGainNamesLemma) {
  SimConfig c = example1(1.0);
  c.filter.T2 = 1e-3;
  const ValidationReport v = validate_config(c);
  ASSERT_FALSE(v.ok());
  bool named = false;
  for (const auto& ch : v.checks) named = named || (!ch.pass && ch.name == "T2 > 1/(4 kappa)");
  EXPECT_TRUE(named);
  EXPECT_THROW(prepare_run(c), ConfigError);
}

TEST(Validation, FastTopRateIsRejected) {
  SimConfig c = example1(1.0);
  c.rates = {50.0, 200.0};
  EXPECT_FALSE(validate_config(c).ok());
}

TEST(Validation, RobustBaselineNeedsRelativeDegreeOne) {
  SimConfig c = load_config(kSource + "/configs/manipulator.json");
  c.controller = ControllerMode::RobustCbf;
  EXPECT_THROW(validate_config(c), ConfigError);
}

TEST(Csv, HeaderOrder) {
  SimConfig c = example1(0.01);
  const RunResult r = run(c);
  const auto h = log_columns(r.log);
  const std::vector<std::string> lead{"t",      "x1",     "x2",     "xhat1",  "xhat2", "u1", "u2",     "r",
                                      "dhat1",  "dhat2",  "dhatf1", "dhatf2", "h1",    "h2", "psi0_1", "psi0_2"};
  ASSERT_GE(h.size(), lead.size());
  EXPECT_EQ(std::vector<std::string>(h.begin(), h.begin() + static_cast<long>(lead.size())), lead);
  EXPECT_EQ(std::find(h.begin(), h.end(), "z1"), h.end());
  EXPECT_EQ(std::find(h.begin(), h.end(), "rho_z"), h.end());
}

TEST(Csv, OracleColumnsOnlyInOracleMode) {
  SimConfig c = example1(0.01);
  c.oracle = true;
  const RunResult r = run(c);
  const auto h = log_columns(r.log);
  EXPECT_NE(std::find(h.begin(), h.end(), "z1"), h.end());
  EXPECT_NE(std::find(h.begin(), h.end(), "rho_z"), h.end());
  EXPECT_EQ(r.log.rows.size(), 11u);
}

TEST(Csv, RoundTripIsExact) {
  SimConfig c = example1(0.05);
  c.oracle = true;
  const RunResult r = run(c);
  const fs::path path = scratch("roundtrip.csv");
  emit_csv(r.log, path.string());
  const CsvTable back = read_csv(path.string());
  const CsvTable orig = log_to_table(r.log);
  ASSERT_EQ(back.header, orig.header);
  ASSERT_EQ(back.rows.size(), orig.rows.size());
  for (std::size_t i = 0; i < orig.rows.size(); ++i)
    for (std::size_t j = 0; j < orig.rows[i].size(); ++j)
      ASSERT_EQ(back.rows[i][j], orig.rows[i][j]) << "row " << i << " column " << orig.header[j];
  std::ifstream in(path);
  const std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(text.back(), '\n');
}

TEST(Csv, FormatHasSeventeenDigits) {
  EXPECT_EQ(format_double(0.1), "0.10000000000000001");
  EXPECT_EQ(format_double(2.0), "2");
}

TEST(Csv, ReadErrorsCarryPath) {
  try {
    read_csv("/nonexistent/trajectory.csv");
    FAIL() << "expected IoError";
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent/trajectory.csv"), std::string::npos);
  }
}

TEST(Svg, EmptyChannelListDrawsAxesOnly) {
  CsvTable t;
  t.header = {"t", "a"};
  t.rows = {{0.0, 1.0}, {1.0, 2.0}};
  const std::string svg = render_svg(t, {});
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("<line"), std::string::npos);
  EXPECT_EQ(svg.find("<polyline"), std::string::npos);
  EXPECT_NE(render_svg(t, {"a"}).find("<polyline"), std::string::npos);
  EXPECT_THROW(render_svg(t, {"b"}), IoError);
}

TEST(Runner, Deterministic) {
  const SimConfig c = example1(0.5);
  EXPECT_EQ(csv_text(run(c).log), csv_text(run(c).log));
}

TEST(Runner, PoisonedDisturbanceRateIsNeverRead) {
  for (const std::string name : {"example1", "manipulator"}) {
    SimConfig c = load_config(kSource + "/configs/" + name + ".json");
    c.horizon = 0.2;
    RunContext ctx = prepare_run(c);
    const int l = ctx.scenario.disturbance.l;
    ctx.scenario.disturbance.wdot = [l](double) { return Vec::Constant(l, std::numeric_limits<double>::quiet_NaN()); };
    const RunResult r = run(ctx);
    EXPECT_FALSE(r.failure.has_value()) << name << ": " << r.failure.value_or("");
    EXPECT_EQ(r.log.rows.size(), static_cast<std::size_t>(std::llround(0.2 / c.dt)) + 1);
  }
}

TEST(Runner, ZeroInputZeroDisturbanceKeepsEstimateNearZero) {
  SimConfig c = example1(2.0);
  c.zero_disturbance = true;
  c.controller = ControllerMode::NominalOnly;
  const RunContext ctx = prepare_run(c);
  LoopState s = initial_loop_state(ctx);
  s.u = Vec::Zero(2);
  s.e << 0.1, -0.05;
  Vec y = pack(s);
  const Vec hold = Vec::Zero(2);
  const double e0 = s.e.norm();
  for (int k = 0; k < 2000; ++k) {
    const double t = k * c.dt;
    y = radau_step([&](double tt, const Vec& yy) { return loop_rhs(ctx, tt, yy, &hold); }, t, y, c.dt);
    const LoopState cur = unpack(y, 2, 2);
    ASSERT_LE(cur.dhat.norm(), ctx.report.ultimate_bound);
    ASSERT_LE(cur.e.norm(), e0 * std::exp(-ctx.cfg.gains.k1 * (t + c.dt)) + 1e-12);
  }
}

TEST(Runner, RuntimeFailureKeepsLogPrefix) {
  SimConfig c = example1(1.0);
  c.gains.eta = 1.0;
  const RunResult r = run(c);
  ASSERT_TRUE(r.failure.has_value());
  EXPECT_GT(r.failed_step, 0);
  EXPECT_GE(r.log.rows.size(), static_cast<std::size_t>(r.failed_step));
  EXPECT_LE(r.log.rows.size(), static_cast<std::size_t>(r.failed_step) + 1);
}

TEST(Regression, Example1GoldenMetrics) {
  std::ifstream in(kSource + "/tests/golden/example1.json");
  const nlohmann::json g = nlohmann::json::parse(in);
  SimConfig c = load_config(kSource + "/" + g.at("config").get<std::string>());
  c.oracle = true;
  const RunResult r = run(c);
  ASSERT_TRUE(r.ok());
  const double tol = g.at("tolerance").get<double>();
  const double track = g.at("mean_tracking_10_20").get<double>();
  const double est = g.at("mean_estimation_5_20").get<double>();
  EXPECT_NEAR(r.metrics.mean_tracking_late, track, tol * track);
  EXPECT_NEAR(r.metrics.mean_estimation, est, tol * est);
}

TEST(Cli, ExitCodes) {
  const fs::path out = scratch("cli");
  const std::string cfg = kSource + "/configs/example1.json";
  EXPECT_EQ(run_cli("validate --config " + cfg), 0);
  EXPECT_EQ(run_cli("simulate --config " + cfg + " --horizon 0.05 --out " + out.string()), 0);
  EXPECT_TRUE(fs::exists(out / "trajectory.csv"));
  EXPECT_TRUE(fs::exists(out / "report.txt"));
  EXPECT_EQ(run_cli("plot --csv " + (out / "trajectory.csv").string() + " --channels x1,h1 --out " +
                    (out / "p.svg").string()),
            0);
  EXPECT_TRUE(fs::exists(out / "p.svg"));

  const fs::path bad = scratch("bad.json");
  std::ofstream(bad) << R"({"scenario": "example1", "filter": {"T2": 0.001}})";
  EXPECT_EQ(run_cli("validate --config " + bad.string()), 1);
  EXPECT_EQ(run_cli("simulate --config " + bad.string()), 1);
  const fs::path unknown = scratch("unknown.json");
  std::ofstream(unknown) << R"({"scenario": "example1", "speed": 3})";
  EXPECT_EQ(run_cli("simulate --config " + unknown.string()), 1);
  EXPECT_EQ(run_cli("validate --config /nonexistent.json"), 1);

  const fs::path unstable = scratch("unstable.json");
  std::ofstream(unstable) << R"({"scenario": "example1", "observer": {"eta": 1}, "horizon": 0.5, "output_dir": ")"
                          << (out / "unstable").string() << R"("})";
  EXPECT_EQ(run_cli("simulate --config " + unstable.string()), 2);
  EXPECT_EQ(run_cli("plot --csv /nonexistent.csv --channels x1 --out " + (out / "q.svg").string()), 2);
}
