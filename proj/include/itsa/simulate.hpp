#pragma once

// Monte Carlo engine: runs both estimators over replicated panels and
// reduces the target coefficient's estimates to power, coverage, bias and
// error summaries.
//
// Determinism contract: the panel for replication r of a condition is
// seeded by substream(base_seed, r), and base_seed itself derives from the
// run seed and a key over the data-generating fields only. Results are
// therefore independent of thread count and execution order, and two
// conditions that generate identical data (for example a correctly
// specified fit and a lower-order fit of the same process) see identical
// panels replication by replication.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <mutex>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include "itsa/dgp.hpp"
#include "itsa/errors.hpp"
#include "itsa/fit_result.hpp"
#include "itsa/model.hpp"
#include "itsa/olsnw.hpp"
#include "itsa/panel.hpp"
#include "itsa/parallel.hpp"
#include "itsa/praisk.hpp"
#include "itsa/rng.hpp"

namespace itsa {

enum class EffectKind { Level, Trend };

inline const char* effect_kind_name(EffectKind k) {
  return k == EffectKind::Level ? "level" : "trend";
}

enum class Mode { Primary, Sensitivity, Misspecification };

inline const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Primary: return "primary";
    case Mode::Sensitivity: return "sensitivity";
    default: return "misspecification";
  }
}

struct MethodSet {
  bool olsnw = true;
  bool pw = true;
};

namespace detail {

// 64-bit FNV-1a over a canonical field serialization. Doubles are rendered
// with %.17g so the key survives re-parsing the same configuration.
class KeyHasher {
 public:
  void add(const char* name, const std::string& v) {
    feed(name);
    feed("=");
    feed(v);
    feed(";");
  }
  void add(const char* name, double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    add(name, std::string(buf));
  }
  void add(const char* name, long v) { add(name, std::to_string(v)); }
  void add(const char* name, int v) { add(name, std::to_string(v)); }
  void add(const char* name, bool v) { add(name, std::string(v ? "1" : "0")); }
  std::uint64_t value() const { return h_; }

 private:
  void feed(const std::string& s) {
    for (unsigned char c : s) {
      h_ ^= c;
      h_ *= 1099511628211ULL;
    }
  }
  std::uint64_t h_ = 14695981039346656037ULL;
};

inline std::string fmt_g10(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.10g", v);
  return buf;
}

}  // namespace detail

// One cell of the simulation design: a data-generating scenario, the
// coefficient under test, the fitting choices, and the replication budget.
struct SimCondition {
  Mode mode = Mode::Primary;
  std::string scenario_name;
  ScenarioConfig scenario;
  EffectKind effect_kind = EffectKind::Trend;
  double effect_size = 1.0;  // input knob: treated post trend, or level change
  double true_effect = 0.0;  // resolved coefficient value under test
  int fit_order = 1;         // AR order used by the GLS fit
  MethodSet methods;
  long replications = 2000;
  double alpha = 0.05;
  std::uint64_t base_seed = 0;

  int target_index() const {
    return effect_kind == EffectKind::Level ? kGroupPost : kGroupPostTime;
  }

  // Key over the data-generating fields only. Fit order, method set,
  // replication budget and labels are deliberately excluded so conditions
  // that draw the same data share replication seeds.
  std::uint64_t dgp_key() const {
    detail::KeyHasher h;
    h.add("n_periods", scenario.n_periods);
    h.add("n_controls", scenario.n_controls);
    h.add("intervention_time", scenario.intervention_time);
    h.add("level_control", scenario.level_control);
    h.add("level_treated", scenario.level_treated);
    h.add("trend_control", scenario.trend_control);
    h.add("trend_treated", scenario.trend_treated);
    h.add("level_change_control", scenario.level_change_control);
    h.add("level_change_treated", scenario.level_change_treated);
    h.add("post_trend_control", scenario.post_trend_control);
    h.add("post_trend_treated", scenario.post_trend_treated);
    h.add("ar_order", scenario.ar.order());
    for (int j = 0; j < scenario.ar.order(); ++j) h.add("rho", scenario.ar.rho[j]);
    h.add("sigma", scenario.ar.sigma);
    return h.value();
  }

  // Key over everything that determines this condition's output rows.
  std::uint64_t condition_key() const {
    detail::KeyHasher h;
    h.add("dgp", static_cast<long>(dgp_key()));
    h.add("mode", std::string(mode_name(mode)));
    h.add("scenario_name", scenario_name);
    h.add("effect_kind", std::string(effect_kind_name(effect_kind)));
    h.add("effect_size", effect_size);
    h.add("true_effect", true_effect);
    h.add("fit_order", fit_order);
    h.add("olsnw", methods.olsnw);
    h.add("pw", methods.pw);
    h.add("replications", replications);
    h.add("alpha", alpha);
    h.add("base_seed", static_cast<long>(base_seed));
    return h.value();
  }

  void resolve_seed(std::uint64_t run_seed) { base_seed = substream(run_seed, dgp_key()); }

  void validate() const {
    scenario.validate();
    if (scenario_name.empty()) throw ValidationError("condition needs a scenario name");
    if (replications < 2) throw ValidationError("replications must be at least 2");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ValidationError("alpha must be in (0, 1)");
    if (fit_order < 1) throw InvalidOrder("fit order must be at least 1");
    if (fit_order >= scenario.n_periods)
      throw InvalidOrder("fit order must be below the series length");
    if (scenario.ar.order() >= scenario.n_periods)
      throw InvalidOrder("AR order must be below the series length");
    if (!methods.olsnw && !methods.pw) throw ValidationError("no estimation method selected");
    const Eigen::Matrix<double, 8, 1> b = scenario.betas();
    const double resolved = b[target_index()];
    if (std::abs(resolved - true_effect) > 1e-12 * std::max(1.0, std::abs(resolved)))
      throw ValidationError("true_effect " + detail::fmt_g10(true_effect) +
                            " does not match the scenario's coefficient " +
                            detail::fmt_g10(resolved));
    const long n = static_cast<long>(scenario.n_controls + 1) * scenario.n_periods;
    if (n - kNumParams < 2) throw ValidationError("design leaves too few degrees of freedom");
  }
};

// Underspecified GLS fit of a higher-order process. The generated data are
// untouched, so results pair exactly with the correctly specified condition.
inline SimCondition misspec_condition(const SimCondition& correct, int fit_order) {
  if (fit_order < 1) throw InvalidOrder("fit order must be at least 1");
  if (fit_order > correct.scenario.ar.order())
    throw InvalidOrder("fit order " + std::to_string(fit_order) +
                       " exceeds the generating AR order " +
                       std::to_string(correct.scenario.ar.order()));
  SimCondition c = correct;
  c.mode = Mode::Misspecification;
  c.fit_order = fit_order;
  return c;
}

struct PerfSummary {
  double power_or_type1 = 0.0;  // rejection rate of the zero-coefficient test
  double coverage = 0.0;
  double pct_bias = 0.0;  // percent of truth, or absolute bias when truth is 0
  double rmse = 0.0;
  double empirical_se = 0.0;
  double mean_model_se = 0.0;
  long n_converged = 0;
  long n_failed = 0;
};

inline PerfSummary summarize(const std::vector<double>& estimates,
                             const std::vector<double>& ses, double truth, double alpha,
                             long df) {
  if (estimates.size() != ses.size())
    throw ValidationError("estimate and SE vectors differ in length");
  const long n = static_cast<long>(estimates.size());
  if (n < 2) throw EmptyInput("need at least 2 replications to summarize");
  const double crit = t_critical(df, alpha);
  long rejected = 0;
  long covered = 0;
  double sum_est = 0.0;
  double sum_sq_err = 0.0;
  double sum_se = 0.0;
  for (long i = 0; i < n; ++i) {
    const double est = estimates[i];
    const double se = ses[i];
    if (se > 0.0) {
      if (std::abs(est / se) > crit) ++rejected;
      if (std::abs(est - truth) <= crit * se) ++covered;
    } else {
      if (est != 0.0) ++rejected;
      if (est == truth) ++covered;
    }
    sum_est += est;
    sum_sq_err += (est - truth) * (est - truth);
    sum_se += se;
  }
  const double mean_est = sum_est / n;
  double ss_dev = 0.0;
  for (long i = 0; i < n; ++i) ss_dev += (estimates[i] - mean_est) * (estimates[i] - mean_est);
  PerfSummary s;
  s.power_or_type1 = static_cast<double>(rejected) / n;
  s.coverage = static_cast<double>(covered) / n;
  const double bias = mean_est - truth;
  s.pct_bias = truth != 0.0 ? 100.0 * bias / truth : bias;
  s.rmse = std::sqrt(sum_sq_err / n);
  s.empirical_se = std::sqrt(ss_dev / (n - 1));
  s.mean_model_se = sum_se / n;
  s.n_converged = n;
  return s;
}

struct ConditionResult {
  SimCondition condition;
  std::vector<std::pair<Method, PerfSummary>> summaries;
};

namespace detail {

struct RepBuffer {
  std::vector<double> est;
  std::vector<double> se;
  std::vector<char> ok;
  void resize(long r) {
    est.assign(r, 0.0);
    se.assign(r, 0.0);
    ok.assign(r, 0);
  }
};

struct CondBuffers {
  RepBuffer olsnw;
  RepBuffer pw;
};

// Runs one replication into the rep-indexed slots. Fit failures are
// recorded, never thrown; each method fails independently.
inline void run_replication(const SimCondition& cond, long rep, CondBuffers& buf) {
  ScenarioConfig scenario = cond.scenario;
  scenario.seed = substream(cond.base_seed, static_cast<std::uint64_t>(rep));
  const Panel panel = gen_panel(scenario);
  const int t0 = scenario.resolved_intervention();
  const int target = cond.target_index();
  if (cond.methods.olsnw) {
    try {
      HacConfig hac;
      hac.lag = scenario.ar.order();  // truncation matched to the generating order
      const FitResult r = fit_ols_nw(panel, t0, hac);
      buf.olsnw.est[rep] = r.beta[target];
      buf.olsnw.se[rep] = r.se[target];
      buf.olsnw.ok[rep] = 1;
    } catch (const Error&) {
    }
  }
  if (cond.methods.pw) {
    try {
      PwConfig pw;
      pw.order = cond.fit_order;
      const FitResult r = fit_pw(panel, t0, pw);
      if (r.converged) {
        buf.pw.est[rep] = r.beta[target];
        buf.pw.se[rep] = r.se[target];
        buf.pw.ok[rep] = 1;
      }
    } catch (const Error&) {
    }
  }
}

inline PerfSummary reduce_method(const RepBuffer& buf, const SimCondition& cond) {
  std::vector<double> est;
  std::vector<double> se;
  est.reserve(buf.ok.size());
  se.reserve(buf.ok.size());
  for (std::size_t i = 0; i < buf.ok.size(); ++i) {
    if (!buf.ok[i]) continue;
    est.push_back(buf.est[i]);
    se.push_back(buf.se[i]);
  }
  const long failed = cond.replications - static_cast<long>(est.size());
  if (failed * 20 > cond.replications)
    throw EstimationError("condition '" + cond.scenario_name + "' T=" +
                          std::to_string(cond.scenario.n_periods) + ": " +
                          std::to_string(failed) + " of " +
                          std::to_string(cond.replications) + " replications failed");
  const long n = static_cast<long>(cond.scenario.n_controls + 1) * cond.scenario.n_periods;
  PerfSummary s = summarize(est, se, cond.true_effect, cond.alpha, n - kNumParams);
  s.n_failed = failed;
  return s;
}

inline ConditionResult reduce_condition(const SimCondition& cond, const CondBuffers& buf) {
  ConditionResult out;
  out.condition = cond;
  if (cond.methods.olsnw) out.summaries.emplace_back(Method::OlsNw, reduce_method(buf.olsnw, cond));
  if (cond.methods.pw) out.summaries.emplace_back(Method::PraisWinsten, reduce_method(buf.pw, cond));
  return out;
}

}  // namespace detail

inline ConditionResult run_condition(const SimCondition& cond, int threads = 1) {
  cond.validate();
  detail::CondBuffers buf;
  if (cond.methods.olsnw) buf.olsnw.resize(cond.replications);
  if (cond.methods.pw) buf.pw.resize(cond.replications);
  parallel_for(cond.replications, threads,
               [&](long rep) { detail::run_replication(cond, rep, buf); });
  return detail::reduce_condition(cond, buf);
}

using ProgressFn = std::function<void(long completed, long total, const ConditionResult&)>;

// Runs every condition, stealing work from one flat queue spanning all
// replications of all conditions. Results come back in input order; each
// condition is reduced as soon as its last replication finishes, and the
// progress callback fires right after, so callers can persist finished
// conditions while the rest are still running.
inline std::vector<ConditionResult> run_grid(const std::vector<SimCondition>& conditions,
                                             int threads = 1,
                                             const ProgressFn& progress = nullptr) {
  if (conditions.empty()) throw EmptyInput("empty condition grid");
  const long n_cond = static_cast<long>(conditions.size());
  std::vector<detail::CondBuffers> buffers(n_cond);
  std::vector<ConditionResult> results(n_cond);
  std::vector<long> offset(n_cond + 1, 0);
  for (long c = 0; c < n_cond; ++c) {
    conditions[c].validate();
    if (conditions[c].methods.olsnw) buffers[c].olsnw.resize(conditions[c].replications);
    if (conditions[c].methods.pw) buffers[c].pw.resize(conditions[c].replications);
    offset[c + 1] = offset[c] + conditions[c].replications;
  }
  std::vector<std::atomic<long>> remaining(n_cond);
  for (long c = 0; c < n_cond; ++c)
    remaining[c].store(conditions[c].replications, std::memory_order_relaxed);
  std::atomic<long> completed{0};
  std::mutex progress_mu;
  parallel_for(offset[n_cond], threads, [&](long flat) {
    const long c = static_cast<long>(
        std::upper_bound(offset.begin(), offset.end(), flat) - offset.begin() - 1);
    detail::run_replication(conditions[c], flat - offset[c], buffers[c]);
    if (remaining[c].fetch_sub(1, std::memory_order_acq_rel) == 1) {
      results[c] = detail::reduce_condition(conditions[c], buffers[c]);
      const long done = completed.fetch_add(1, std::memory_order_relaxed) + 1;
      if (progress) {
        std::lock_guard<std::mutex> lock(progress_mu);
        progress(done, n_cond, results[c]);
      }
    }
  });
  return results;
}

inline constexpr const char* kResultsHeader =
    "mode,ar_order,scenario,effect_kind,effect_size,T,method,fit_order,replications,"
    "power,coverage,type1_applicable,pct_bias,rmse,empirical_se,mean_model_se,n_failed";

inline std::string result_rows_csv(const ConditionResult& r) {
  const SimCondition& c = r.condition;
  std::string out;
  for (const auto& [method, s] : r.summaries) {
    out += mode_name(c.mode);
    out += ',';
    out += std::to_string(c.scenario.ar.order());
    out += ',';
    out += c.scenario_name;
    out += ',';
    out += effect_kind_name(c.effect_kind);
    out += ',';
    out += detail::fmt_g10(c.effect_size);
    out += ',';
    out += std::to_string(c.scenario.n_periods);
    out += ',';
    out += method_name(method);
    out += ',';
    out += std::to_string(c.fit_order);
    out += ',';
    out += std::to_string(c.replications);
    out += ',';
    out += detail::fmt_g10(s.power_or_type1);
    out += ',';
    out += detail::fmt_g10(s.coverage);
    out += ',';
    out += c.true_effect == 0.0 ? '1' : '0';
    out += ',';
    out += detail::fmt_g10(s.pct_bias);
    out += ',';
    out += detail::fmt_g10(s.rmse);
    out += ',';
    out += detail::fmt_g10(s.empirical_se);
    out += ',';
    out += detail::fmt_g10(s.mean_model_se);
    out += ',';
    out += std::to_string(s.n_failed);
    out += '\n';
  }
  return out;
}

inline void write_results_csv(std::ostream& os, const std::vector<ConditionResult>& results) {
  os << kResultsHeader << '\n';
  for (const ConditionResult& r : results) os << result_rows_csv(r);
}

}  // namespace itsa
