#pragma once

// Data generation: AR(k) error processes and balanced two-group panels.
//
// Errors follow e_t = rho_1 e_{t-1} + ... + rho_k e_{t-k} + u_t with
// u_t ~ N(0, sigma^2). Stationarity is judged by the spectral radius of the
// companion matrix; generation starts from zeros and discards a burn-in
// prefix so the retained series is draws from the stationary distribution.

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "itsa/errors.hpp"
#include "itsa/model.hpp"
#include "itsa/panel.hpp"
#include "itsa/rng.hpp"

namespace itsa {

// Processes with radius >= 1 - kStationarityMargin are rejected; exact
// unit roots are useless to generate and nearly unit roots overflow the
// autocovariance solves downstream.
inline constexpr double kStationarityMargin = 1e-8;

inline constexpr long kDefaultBurnIn = 500;

struct ArSpec {
  Eigen::VectorXd rho;  // empty means iid errors
  double sigma = 1.0;

  int order() const { return static_cast<int>(rho.size()); }
};

// Companion form of the AR polynomial: coefficients across the first row,
// ones on the subdiagonal.
inline Eigen::MatrixXd companion_matrix(const Eigen::VectorXd& rho) {
  const int k = static_cast<int>(rho.size());
  if (k < 1) throw ValidationError("companion matrix needs at least one AR coefficient");
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(k, k);
  c.row(0) = rho.transpose();
  for (int i = 1; i < k; ++i) c(i, i - 1) = 1.0;
  return c;
}

inline double spectral_radius(const Eigen::VectorXd& rho) {
  if (rho.size() == 0) return 0.0;
  const Eigen::MatrixXd c = companion_matrix(rho);
  const Eigen::EigenSolver<Eigen::MatrixXd> solver(c, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

inline bool is_stationary(const Eigen::VectorXd& rho) {
  return spectral_radius(rho) < 1.0 - kStationarityMargin;
}

// Draws n consecutive values of the AR(k) process, after burn_in discarded
// steps started from zero initial conditions. sigma is the innovation
// standard deviation, so the process variance exceeds sigma^2 for k >= 1.
inline Eigen::VectorXd gen_ar_errors(const ArSpec& ar, long n, std::uint64_t seed,
                                     long burn_in = kDefaultBurnIn) {
  if (n < 0) throw ValidationError("negative sample size");
  if (burn_in < 0) throw ValidationError("negative burn-in");
  if (!(ar.sigma >= 0.0)) throw ValidationError("sigma must be nonnegative");
  const int k = ar.order();
  if (k > 0 && !is_stationary(ar.rho))
    throw NonStationary("AR coefficients have companion spectral radius >= 1");
  NormalSampler normal(seed);
  Eigen::VectorXd out(n);
  if (k == 0) {
    for (long t = 0; t < n; ++t) out[t] = ar.sigma * normal();
    return out;
  }
  std::vector<double> lags(static_cast<std::size_t>(k), 0.0);  // lags[j-1] = e_{t-j}
  const long total = burn_in + n;
  for (long t = 0; t < total; ++t) {
    double e = ar.sigma * normal();
    for (int j = 0; j < k; ++j) e += ar.rho[j] * lags[j];
    for (int j = k - 1; j > 0; --j) lags[j] = lags[j - 1];
    lags[0] = e;
    if (t >= burn_in) out[t - burn_in] = e;
  }
  return out;
}

// Group-level inputs for one simulated panel. The eight regression
// coefficients are resolved from these via betas(): level and trend
// contrasts map to the group terms, changes at the intervention map to the
// post terms.
struct ScenarioConfig {
  int n_periods = 100;
  int n_controls = 4;
  int intervention_time = 0;  // 0 means the halfway rule floor(T/2)+1

  double level_control = 10.0;
  double level_treated = 10.0;
  double trend_control = 1.0;
  double trend_treated = 1.0;
  double level_change_control = 0.0;
  double level_change_treated = 0.0;
  double post_trend_control = 1.0;
  double post_trend_treated = 1.0;

  ArSpec ar;
  std::uint64_t seed = 0;

  int resolved_intervention() const {
    return intervention_time > 0 ? intervention_time : n_periods / 2 + 1;
  }

  Eigen::Matrix<double, 8, 1> betas() const {
    Eigen::Matrix<double, 8, 1> b;
    b[kIntercept] = level_control;
    b[kTime] = trend_control;
    b[kPost] = level_change_control;
    b[kPostTime] = post_trend_control - trend_control;
    b[kGroup] = level_treated - level_control;
    b[kGroupTime] = trend_treated - trend_control;
    b[kGroupPost] = level_change_treated - level_change_control;
    b[kGroupPostTime] = (post_trend_treated - post_trend_control) -
                        (trend_treated - trend_control);
    return b;
  }

  void validate() const {
    if (n_periods < 2) throw ValidationError("n_periods must be at least 2");
    if (n_controls < 1) throw ValidationError("n_controls must be at least 1");
    const int t0 = resolved_intervention();
    if (t0 <= 1 || t0 > n_periods)
      throw ValidationError("intervention time " + std::to_string(t0) +
                            " is outside 2.." + std::to_string(n_periods));
    if (!(ar.sigma >= 0.0)) throw ValidationError("sigma must be nonnegative");
    if (ar.order() > 0 && !is_stationary(ar.rho))
      throw NonStationary("scenario AR coefficients are not stationary");
  }
};

// Generates the treated unit (unit_id 1) followed by the controls
// (unit_id 2..). Each unit consumes its own substream of cfg.seed, so
// panels are identical for identical (cfg, seed) regardless of how the
// units are later processed.
inline Panel gen_panel(const ScenarioConfig& cfg) {
  cfg.validate();
  const int T = cfg.n_periods;
  const int t0 = cfg.resolved_intervention();
  const int units = cfg.n_controls + 1;
  const Eigen::Matrix<double, 8, 1> b = cfg.betas();
  Panel panel;
  panel.rows.reserve(static_cast<std::size_t>(units) * T);
  for (int u = 0; u < units; ++u) {
    const bool treated = u == 0;
    const double z = treated ? 1.0 : 0.0;
    const Eigen::VectorXd e =
        gen_ar_errors(cfg.ar, T, substream(cfg.seed, static_cast<std::uint64_t>(u)));
    for (int t = 1; t <= T; ++t) {
      const double x = t >= t0 ? 1.0 : 0.0;
      const double mean = b[kIntercept] + b[kTime] * t + b[kPost] * x + b[kPostTime] * x * t +
                          z * (b[kGroup] + b[kGroupTime] * t + b[kGroupPost] * x +
                               b[kGroupPostTime] * x * t);
      Observation o;
      o.unit_id = u + 1;
      o.t = t;
      o.treated = treated;
      o.post = t >= t0;
      o.y = mean + e[t - 1];
      panel.rows.push_back(o);
    }
  }
  return panel;
}

// Named autocorrelation scenarios for AR orders 2 and 3.
inline Eigen::VectorXd scenario_rho(int order, const std::string& name) {
  auto vec = [](std::initializer_list<double> v) {
    Eigen::VectorXd r(static_cast<long>(v.size()));
    long i = 0;
    for (double x : v) r[i++] = x;
    return r;
  };
  if (order == 2) {
    if (name == "mild") return vec({0.4, 0.2});
    if (name == "oscillatory") return vec({0.5, -0.4});
    if (name == "high_persistent") return vec({0.7, 0.2});
  } else if (order == 3) {
    if (name == "mild") return vec({0.4, 0.2, 0.1});
    if (name == "oscillatory") return vec({0.7, -0.3, 0.15});
    if (name == "high_persistent") return vec({0.6, 0.25, 0.1});
  }
  throw ValidationError("unknown scenario '" + name + "' for AR order " +
                        std::to_string(order));
}

// Daily fasting blood glucose example: five clinics (one treated), 360
// days, intervention at day 181, a small shared upward drift, and a
// post-intervention trend reversal in the treated clinic only. The true
// trend difference-in-differences is -0.08 per day.
inline ScenarioConfig applied_example_config(int ar_order) {
  ScenarioConfig cfg;
  cfg.n_periods = 360;
  cfg.n_controls = 4;
  cfg.intervention_time = 181;
  cfg.level_control = 108.0;
  cfg.level_treated = 108.0;
  cfg.trend_control = 0.05;
  cfg.trend_treated = 0.05;
  cfg.level_change_control = 0.0;
  cfg.level_change_treated = 0.0;
  cfg.post_trend_control = 0.05;
  cfg.post_trend_treated = -0.03;
  cfg.ar.sigma = 3.0;
  cfg.seed = 77777;
  if (ar_order == 1) {
    cfg.ar.rho = Eigen::VectorXd::Constant(1, 0.7);
  } else if (ar_order == 2 || ar_order == 3) {
    cfg.ar.rho = scenario_rho(ar_order, "high_persistent");
  } else {
    throw ValidationError("applied example supports AR orders 1..3, got " +
                          std::to_string(ar_order));
  }
  return cfg;
}

}  // namespace itsa
