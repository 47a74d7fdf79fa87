#pragma once

// JSON run configuration for the simulation grid.
//
// A config names only what it varies; everything else carries a default.
// Mode-dependent defaults:
//   primary          effect sizes {1.25, 1.5, 2} (trend) or {2, 2.5, 3}
//                    (level), fit order = generating order
//   sensitivity      groups differ at baseline: control level 8, treated
//                    level change 2, treated post trend 2
//   misspecification null effect, fit orders {1, 2}, each at or below the
//                    generating order
// Unknown keys are rejected so typos fail loudly instead of running the
// default they masked.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <istream>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "itsa/dgp.hpp"
#include "itsa/errors.hpp"
#include "itsa/simulate.hpp"

namespace itsa {

struct ScenarioDef {
  std::string name;
  Eigen::VectorXd rho;
};

struct RunConfig {
  Mode mode = Mode::Primary;
  EffectKind effect_kind = EffectKind::Trend;
  int ar_order = 2;
  std::vector<ScenarioDef> scenarios;
  std::vector<int> periods;
  std::vector<double> effect_sizes;
  std::vector<int> fit_orders;
  long replications = 2000;
  double alpha = 0.05;
  int n_controls = 4;
  double sigma = 1.0;
  std::uint64_t seed = 20260816;
  MethodSet methods;
  int intervention_time = 0;  // 0 means the halfway rule

  double level_control = 10.0;
  double level_treated = 10.0;
  double trend_control = 1.0;
  double trend_treated = 1.0;
  double level_change_control = 0.0;
  double level_change_treated = 0.0;
  double post_trend_control = 1.0;
  double post_trend_treated = 1.0;
};

namespace detail {

inline void require_known_keys(const nlohmann::json& j,
                               const std::vector<std::string>& allowed,
                               const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
      throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
T get_as(const nlohmann::json& j, const std::string& key) {
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("bad value for '" + key + "': " + e.what());
  }
}

inline void check_scenario_name(const std::string& name) {
  if (name.empty()) throw ValidationError("scenario name must not be empty");
  for (char c : name) {
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_')
      throw ValidationError("scenario name '" + name +
                            "' may use only letters, digits and underscores");
  }
}

inline Eigen::VectorXd rho_from_json(const nlohmann::json& arr) {
  if (!arr.is_array()) throw ValidationError("'rho' must be an array of numbers");
  Eigen::VectorXd rho(arr.size());
  long i = 0;
  for (const auto& v : arr) {
    if (!v.is_number()) throw ValidationError("'rho' must be an array of numbers");
    rho[i++] = v.get<double>();
  }
  return rho;
}

}  // namespace detail

inline RunConfig parse_run_config(const nlohmann::json& j) {
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  detail::require_known_keys(
      j,
      {"schema", "mode", "effect_kind", "ar_order", "scenarios", "periods", "effect_sizes",
       "fit_orders", "replications", "alpha", "n_controls", "sigma", "seed", "methods",
       "intervention_time", "level_control", "level_treated", "trend_control",
       "trend_treated", "level_change_control", "level_change_treated",
       "post_trend_control", "post_trend_treated"},
      "config");
  if (j.contains("schema")) {
    const int schema = detail::get_as<int>(j, "schema");
    if (schema != 1)
      throw ValidationError("unsupported schema version " + std::to_string(schema));
  }

  RunConfig cfg;
  if (j.contains("mode")) {
    const std::string m = detail::get_as<std::string>(j, "mode");
    if (m == "primary") cfg.mode = Mode::Primary;
    else if (m == "sensitivity") cfg.mode = Mode::Sensitivity;
    else if (m == "misspecification") cfg.mode = Mode::Misspecification;
    else throw ValidationError("mode must be primary, sensitivity or misspecification");
  }
  if (j.contains("effect_kind")) {
    const std::string k = detail::get_as<std::string>(j, "effect_kind");
    if (k == "trend") cfg.effect_kind = EffectKind::Trend;
    else if (k == "level") cfg.effect_kind = EffectKind::Level;
    else throw ValidationError("effect_kind must be trend or level");
  }
  if (j.contains("ar_order")) cfg.ar_order = detail::get_as<int>(j, "ar_order");
  if (cfg.ar_order < 0) throw InvalidOrder("ar_order must be nonnegative");

  if (j.contains("scenarios")) {
    for (const auto& s : j.at("scenarios")) {
      ScenarioDef def;
      if (s.is_string()) {
        def.name = s.get<std::string>();
        def.rho = cfg.ar_order == 0 && def.name == "iid"
                      ? Eigen::VectorXd()
                      : scenario_rho(cfg.ar_order, def.name);
      } else if (s.is_object()) {
        detail::require_known_keys(s, {"name", "rho"}, "scenario entry");
        def.name = detail::get_as<std::string>(s, "name");
        if (!s.contains("rho"))
          throw ValidationError("scenario object '" + def.name + "' needs a rho array");
        def.rho = detail::rho_from_json(s.at("rho"));
      } else {
        throw ValidationError("scenario entries must be names or {name, rho} objects");
      }
      detail::check_scenario_name(def.name);
      if (def.rho.size() != cfg.ar_order)
        throw ValidationError("scenario '" + def.name + "' has " +
                              std::to_string(def.rho.size()) +
                              " coefficients but ar_order is " +
                              std::to_string(cfg.ar_order));
      if (cfg.ar_order > 0 && !is_stationary(def.rho))
        throw NonStationary("scenario '" + def.name + "' is not stationary");
      cfg.scenarios.push_back(std::move(def));
    }
    if (cfg.scenarios.empty()) throw ValidationError("scenarios must not be empty");
  } else if (cfg.ar_order == 0) {
    cfg.scenarios.push_back({"iid", Eigen::VectorXd()});
  } else if (cfg.ar_order == 2 || cfg.ar_order == 3) {
    for (const char* name : {"mild", "oscillatory", "high_persistent"})
      cfg.scenarios.push_back({name, scenario_rho(cfg.ar_order, name)});
  } else {
    throw ValidationError("no default scenarios for AR order " +
                          std::to_string(cfg.ar_order) + "; list them explicitly");
  }

  if (j.contains("periods")) {
    cfg.periods = detail::get_as<std::vector<int>>(j, "periods");
  } else {
    for (int t = 10; t <= 100; t += 10) cfg.periods.push_back(t);
  }
  if (cfg.periods.empty()) throw ValidationError("periods must not be empty");
  for (int t : cfg.periods)
    if (t < 4) throw ValidationError("each period count must be at least 4");

  if (j.contains("effect_sizes")) {
    cfg.effect_sizes = detail::get_as<std::vector<double>>(j, "effect_sizes");
  } else if (cfg.mode == Mode::Misspecification) {
    cfg.effect_sizes = {cfg.effect_kind == EffectKind::Trend ? 1.0 : 0.0};
  } else if (cfg.mode == Mode::Sensitivity) {
    cfg.effect_sizes = {2.0};
  } else {
    cfg.effect_sizes = cfg.effect_kind == EffectKind::Trend
                           ? std::vector<double>{1.25, 1.5, 2.0}
                           : std::vector<double>{2.0, 2.5, 3.0};
  }
  if (cfg.effect_sizes.empty()) throw ValidationError("effect_sizes must not be empty");

  if (j.contains("fit_orders")) {
    cfg.fit_orders = detail::get_as<std::vector<int>>(j, "fit_orders");
  } else if (cfg.mode == Mode::Misspecification) {
    cfg.fit_orders = {1, 2};
  } else {
    cfg.fit_orders = {std::max(1, cfg.ar_order)};
  }
  if (cfg.fit_orders.empty()) throw ValidationError("fit_orders must not be empty");
  for (int k : cfg.fit_orders) {
    if (k < 1) throw InvalidOrder("fit orders must be at least 1");
    if (cfg.mode == Mode::Misspecification && k > cfg.ar_order)
      throw InvalidOrder("fit order " + std::to_string(k) +
                         " exceeds the generating AR order " + std::to_string(cfg.ar_order));
  }

  if (j.contains("replications")) cfg.replications = detail::get_as<long>(j, "replications");
  if (cfg.replications < 2) throw ValidationError("replications must be at least 2");
  if (j.contains("alpha")) cfg.alpha = detail::get_as<double>(j, "alpha");
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0))
    throw ValidationError("alpha must be in (0, 1)");
  if (j.contains("n_controls")) cfg.n_controls = detail::get_as<int>(j, "n_controls");
  if (cfg.n_controls < 1) throw ValidationError("n_controls must be at least 1");
  if (j.contains("sigma")) cfg.sigma = detail::get_as<double>(j, "sigma");
  if (!(cfg.sigma >= 0.0)) throw ValidationError("sigma must be nonnegative");
  if (j.contains("seed")) cfg.seed = detail::get_as<std::uint64_t>(j, "seed");
  if (j.contains("intervention_time"))
    cfg.intervention_time = detail::get_as<int>(j, "intervention_time");

  if (j.contains("methods")) {
    cfg.methods.olsnw = false;
    cfg.methods.pw = false;
    for (const auto& m : detail::get_as<std::vector<std::string>>(j, "methods")) {
      if (m == "olsnw") cfg.methods.olsnw = true;
      else if (m == "pw") cfg.methods.pw = true;
      else throw ValidationError("unknown method '" + m + "'");
    }
    if (!cfg.methods.olsnw && !cfg.methods.pw)
      throw ValidationError("methods must not be empty");
  }

  // Baseline shape, with the sensitivity preset as that mode's default.
  const bool sens = cfg.mode == Mode::Sensitivity;
  cfg.level_control = sens ? 8.0 : 10.0;
  cfg.level_change_treated = sens ? 2.0 : 0.0;
  cfg.post_trend_treated = sens ? 2.0 : 1.0;
  if (j.contains("level_control")) cfg.level_control = detail::get_as<double>(j, "level_control");
  if (j.contains("level_treated")) cfg.level_treated = detail::get_as<double>(j, "level_treated");
  if (j.contains("trend_control")) cfg.trend_control = detail::get_as<double>(j, "trend_control");
  if (j.contains("trend_treated")) cfg.trend_treated = detail::get_as<double>(j, "trend_treated");
  if (j.contains("level_change_control"))
    cfg.level_change_control = detail::get_as<double>(j, "level_change_control");
  if (j.contains("level_change_treated"))
    cfg.level_change_treated = detail::get_as<double>(j, "level_change_treated");
  if (j.contains("post_trend_control"))
    cfg.post_trend_control = detail::get_as<double>(j, "post_trend_control");
  if (j.contains("post_trend_treated"))
    cfg.post_trend_treated = detail::get_as<double>(j, "post_trend_treated");
  return cfg;
}

inline RunConfig load_run_config(std::istream& in) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config file '" + path + "'");
  return load_run_config(in);
}

// Canonical resolved form: feeding it back through the parser reproduces
// the same run. Keys come out sorted, which makes the dump hashable.
inline nlohmann::json canonical_json(const RunConfig& cfg) {
  nlohmann::json j;
  j["schema"] = 1;
  j["mode"] = mode_name(cfg.mode);
  j["effect_kind"] = effect_kind_name(cfg.effect_kind);
  j["ar_order"] = cfg.ar_order;
  j["scenarios"] = nlohmann::json::array();
  for (const ScenarioDef& s : cfg.scenarios) {
    nlohmann::json e;
    e["name"] = s.name;
    e["rho"] = std::vector<double>(s.rho.data(), s.rho.data() + s.rho.size());
    j["scenarios"].push_back(e);
  }
  j["periods"] = cfg.periods;
  j["effect_sizes"] = cfg.effect_sizes;
  j["fit_orders"] = cfg.fit_orders;
  j["replications"] = cfg.replications;
  j["alpha"] = cfg.alpha;
  j["n_controls"] = cfg.n_controls;
  j["sigma"] = cfg.sigma;
  j["seed"] = cfg.seed;
  std::vector<std::string> methods;
  if (cfg.methods.olsnw) methods.push_back("olsnw");
  if (cfg.methods.pw) methods.push_back("pw");
  j["methods"] = methods;
  j["intervention_time"] = cfg.intervention_time;
  j["level_control"] = cfg.level_control;
  j["level_treated"] = cfg.level_treated;
  j["trend_control"] = cfg.trend_control;
  j["trend_treated"] = cfg.trend_treated;
  j["level_change_control"] = cfg.level_change_control;
  j["level_change_treated"] = cfg.level_change_treated;
  j["post_trend_control"] = cfg.post_trend_control;
  j["post_trend_treated"] = cfg.post_trend_treated;
  return j;
}

inline std::uint64_t config_hash(const RunConfig& cfg) {
  detail::KeyHasher h;
  h.add("config", canonical_json(cfg).dump());
  return h.value();
}

// Cartesian product of the grid axes, ordered scenario, fit order, effect
// size, then period count innermost. Replication seeds depend only on each
// condition's data-generating fields and the run seed.
inline std::vector<SimCondition> enumerate_conditions(const RunConfig& cfg) {
  std::vector<SimCondition> out;
  for (const ScenarioDef& s : cfg.scenarios) {
    for (int fit_order : cfg.fit_orders) {
      for (double effect : cfg.effect_sizes) {
        for (int T : cfg.periods) {
          SimCondition c;
          c.mode = cfg.mode;
          c.scenario_name = s.name;
          c.scenario.n_periods = T;
          c.scenario.n_controls = cfg.n_controls;
          c.scenario.intervention_time = cfg.intervention_time;
          c.scenario.level_control = cfg.level_control;
          c.scenario.level_treated = cfg.level_treated;
          c.scenario.trend_control = cfg.trend_control;
          c.scenario.trend_treated = cfg.trend_treated;
          c.scenario.level_change_control = cfg.level_change_control;
          c.scenario.level_change_treated = cfg.level_change_treated;
          c.scenario.post_trend_control = cfg.post_trend_control;
          c.scenario.post_trend_treated = cfg.post_trend_treated;
          c.scenario.ar.rho = s.rho;
          c.scenario.ar.sigma = cfg.sigma;
          c.effect_kind = cfg.effect_kind;
          c.effect_size = effect;
          if (cfg.effect_kind == EffectKind::Trend)
            c.scenario.post_trend_treated = effect;
          else
            c.scenario.level_change_treated = effect;
          c.true_effect = c.scenario.betas()[c.target_index()];
          c.fit_order = fit_order;
          c.methods = cfg.methods;
          c.replications = cfg.replications;
          c.alpha = cfg.alpha;
          c.resolve_seed(cfg.seed);
          c.validate();
          out.push_back(std::move(c));
        }
      }
    }
  }
  return out;
}

}  // namespace itsa
