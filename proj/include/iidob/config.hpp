#pragma once

// Run configuration: scenario defaults overlaid with JSON overrides.

#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "iidob/scenarios.hpp"

namespace iidob {

enum class ControllerMode { IidobCbfQp, RobustCbf, NominalOnly };
enum class ControlHold { ZeroOrder, Continuous };
enum class Integrator { Radau, Rk4 };

inline std::string to_string(ControllerMode m) {
  switch (m) {
    case ControllerMode::IidobCbfQp: return "iidob-cbf-qp";
    case ControllerMode::RobustCbf: return "robust-cbf";
    case ControllerMode::NominalOnly: return "nominal-only";
  }
  return "?";
}

inline std::string to_string(ControlHold h) { return h == ControlHold::ZeroOrder ? "zoh" : "continuous"; }
inline std::string to_string(Integrator i) { return i == Integrator::Radau ? "radau" : "rk4"; }

struct SimConfig {
  std::string scenario = "example1";
  std::optional<Vec> x0;
  std::optional<Vec> u0;
  std::optional<double> omega0;
  std::optional<double> omega1;
  /// Replace w(t) by zero (consistency runs).
  bool zero_disturbance = false;

  ObserverGains gains;
  double r0 = 1.001;
  int quad_nodes = 16;
  double quad_segment = 1.0;
  FilterParams filter;
  TrackingParams tracking;
  std::vector<double> rates;
  double rho = 1.0;
  double rho_tilde = 1.0;

  double dt = 1e-3;
  double horizon = 20.0;
  ControllerMode controller = ControllerMode::IidobCbfQp;
  ControlHold hold = ControlHold::ZeroOrder;
  Integrator integrator = Integrator::Radau;
  int log_stride = 1;
  bool oracle = false;
  /// Bound on |z(0)| for initial-condition checks without the oracle.
  std::optional<double> z0_bound;
  std::string output_dir = "out";
  unsigned seed = 1;
};

inline SimConfig default_config(const Scenario& s) {
  SimConfig c;
  c.scenario = s.name;
  c.gains = s.defaults.gains;
  c.filter = s.defaults.filter;
  c.tracking = s.defaults.tracking;
  c.rates = s.defaults.rates;
  c.rho = s.defaults.rho;
  c.rho_tilde = s.defaults.rho_tilde;
  c.dt = s.defaults.dt;
  c.horizon = s.defaults.horizon;
  return c;
}

/// Scenario with the configuration's overrides applied.
inline Scenario resolve_scenario(const SimConfig& c) {
  Scenario s = make_scenario(c.scenario);
  if (c.x0) {
    require_dim(*c.x0, s.model.n, "initial_state");
    s.x0 = *c.x0;
  }
  if (c.u0) {
    require_dim(*c.u0, s.model.m, "initial_input");
    s.u0 = *c.u0;
  }
  if (c.omega0) s.disturbance.omega0 = *c.omega0;
  if (c.omega1) s.disturbance.omega1 = *c.omega1;
  if (c.zero_disturbance) {
    const int l = s.disturbance.l;
    s.disturbance.w = [l](double) { return Vec::Zero(l); };
    s.disturbance.wdot = [l](double) { return Vec::Zero(l); };
  }
  return s;
}

namespace detail {

inline Vec json_vec(const nlohmann::json& j, const char* key) {
  if (!j.is_array()) throw ConfigError(std::string(key) + ": expected an array of numbers");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  return v;
}

template <typename T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ConfigError("unknown key '" + it.key() + "' in " + where);
    }
  }
}

}  // namespace detail

inline SimConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  if (!j.is_object()) throw ConfigError("configuration must be a JSON object");
  detail::reject_unknown(j,
                         {"scenario", "scenario_overrides", "observer", "filter", "cbf", "tracking", "dt", "horizon",
                          "controller", "control_hold", "integrator", "log_stride", "oracle", "z0_bound",
                          "output_dir", "seed"},
                         "configuration");
  try {
    const std::string name = j.value("scenario", std::string("example1"));
    SimConfig c = default_config(make_scenario(name));

    if (j.contains("scenario_overrides")) {
      const auto& o = j.at("scenario_overrides");
      detail::reject_unknown(o, {"initial_state", "initial_input", "omega0", "omega1", "zero_disturbance"},
                             "scenario_overrides");
      if (o.contains("initial_state")) c.x0 = detail::json_vec(o.at("initial_state"), "initial_state");
      if (o.contains("initial_input")) c.u0 = detail::json_vec(o.at("initial_input"), "initial_input");
      if (o.contains("omega0")) c.omega0 = o.at("omega0").get<double>();
      if (o.contains("omega1")) c.omega1 = o.at("omega1").get<double>();
      read(o, "zero_disturbance", c.zero_disturbance);
    }
    if (j.contains("observer")) {
      const auto& o = j.at("observer");
      detail::reject_unknown(o, {"gamma", "eta", "c", "theta", "k1", "k2", "r0", "quad_nodes", "quad_segment"},
                             "observer");
      read(o, "gamma", c.gains.gamma);
      read(o, "eta", c.gains.eta);
      read(o, "c", c.gains.c);
      read(o, "theta", c.gains.theta);
      read(o, "k1", c.gains.k1);
      read(o, "k2", c.gains.k2);
      read(o, "r0", c.r0);
      read(o, "quad_nodes", c.quad_nodes);
      read(o, "quad_segment", c.quad_segment);
    }
    if (j.contains("filter")) {
      const auto& o = j.at("filter");
      detail::reject_unknown(o, {"T1", "T2"}, "filter");
      read(o, "T1", c.filter.T1);
      read(o, "T2", c.filter.T2);
    }
    if (j.contains("cbf")) {
      const auto& o = j.at("cbf");
      detail::reject_unknown(o, {"rates", "rho", "rho_tilde"}, "cbf");
      read(o, "rates", c.rates);
      read(o, "rho", c.rho);
      read(o, "rho_tilde", c.rho_tilde);
    }
    if (j.contains("tracking")) {
      const auto& o = j.at("tracking");
      detail::reject_unknown(o, {"alpha1", "alpha2", "epsilon"}, "tracking");
      read(o, "alpha1", c.tracking.alpha1);
      read(o, "alpha2", c.tracking.alpha2);
      read(o, "epsilon", c.tracking.epsilon);
    }
    read(j, "dt", c.dt);
    read(j, "horizon", c.horizon);
    read(j, "log_stride", c.log_stride);
    read(j, "oracle", c.oracle);
    read(j, "output_dir", c.output_dir);
    read(j, "seed", c.seed);
    if (j.contains("z0_bound")) c.z0_bound = j.at("z0_bound").get<double>();
    if (j.contains("controller")) {
      const std::string m = j.at("controller").get<std::string>();
      if (m == "iidob-cbf-qp") c.controller = ControllerMode::IidobCbfQp;
      else if (m == "robust-cbf") c.controller = ControllerMode::RobustCbf;
      else if (m == "nominal-only") c.controller = ControllerMode::NominalOnly;
      else throw ConfigError("controller: unknown mode '" + m + "'");
    }
    if (j.contains("control_hold")) {
      const std::string h = j.at("control_hold").get<std::string>();
      if (h == "zoh") c.hold = ControlHold::ZeroOrder;
      else if (h == "continuous") c.hold = ControlHold::Continuous;
      else throw ConfigError("control_hold: expected 'zoh' or 'continuous'");
    }
    if (j.contains("integrator")) {
      const std::string h = j.at("integrator").get<std::string>();
      if (h == "radau") c.integrator = Integrator::Radau;
      else if (h == "rk4") c.integrator = Integrator::Rk4;
      else throw ConfigError("integrator: expected 'radau' or 'rk4'");
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("configuration: ") + e.what());
  }
}

inline SimConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": " + e.what());
  }
  return parse_config(j);
}

inline nlohmann::json config_to_json(const SimConfig& c) {
  nlohmann::json j;
  j["scenario"] = c.scenario;
  j["observer"] = {{"gamma", c.gains.gamma}, {"eta", c.gains.eta},   {"c", c.gains.c},
                   {"theta", c.gains.theta}, {"k1", c.gains.k1},     {"k2", c.gains.k2},
                   {"r0", c.r0},             {"quad_nodes", c.quad_nodes}, {"quad_segment", c.quad_segment}};
  j["filter"] = {{"T1", c.filter.T1}, {"T2", c.filter.T2}};
  j["cbf"] = {{"rates", c.rates}, {"rho", c.rho}, {"rho_tilde", c.rho_tilde}};
  j["tracking"] = {{"alpha1", c.tracking.alpha1}, {"alpha2", c.tracking.alpha2}, {"epsilon", c.tracking.epsilon}};
  j["dt"] = c.dt;
  j["horizon"] = c.horizon;
  j["controller"] = to_string(c.controller);
  j["control_hold"] = to_string(c.hold);
  j["integrator"] = to_string(c.integrator);
  j["log_stride"] = c.log_stride;
  j["oracle"] = c.oracle;
  j["output_dir"] = c.output_dir;
  j["seed"] = c.seed;
  return j;
}

}  // namespace iidob
