#pragma once

// Two-group interrupted time series regression:
//
//   Y_t = b0 + b1 T_t + b2 X_t + b3 X_t T_t
//       + b4 Z + b5 Z T_t + b6 Z X_t + b7 Z X_t T_t + e_t
//
// T_t is the period index 1..T, X_t the post-intervention indicator
// (1 iff t >= intervention time), Z the treated-group dummy. b6 is the
// difference-in-differences in level at the intervention, b7 the
// difference-in-differences in trend.

#include <cmath>
#include <string>

#include <Eigen/Dense>
#include <boost/math/distributions/students_t.hpp>

#include "itsa/errors.hpp"
#include "itsa/fit_result.hpp"
#include "itsa/panel.hpp"

namespace itsa {

inline constexpr int kNumParams = 8;

// Column order of the design matrix.
enum Column {
  kIntercept = 0,
  kTime = 1,
  kPost = 2,
  kPostTime = 3,
  kGroup = 4,
  kGroupTime = 5,
  kGroupPost = 6,      // level difference-in-differences
  kGroupPostTime = 7,  // trend difference-in-differences
};

inline const char* column_name(int j) {
  static constexpr const char* names[kNumParams] = {
      "intercept",  "time",       "post",       "post_time",
      "group",      "group_time", "group_post", "group_post_time"};
  return names[j];
}

// Builds the stacked N x 8 design matrix in panel row order. The post
// indicator is derived from intervention_time; the rows' own post flags are
// not consulted here.
inline Eigen::MatrixXd design_matrix(const Panel& panel, int intervention_time) {
  const int T = panel.n_periods();
  if (intervention_time <= 1 || intervention_time > T)
    throw DegenerateDesign("intervention time " + std::to_string(intervention_time) +
                           " leaves no pre or no post periods (T=" + std::to_string(T) + ")");
  Eigen::MatrixXd X(panel.n_rows(), kNumParams);
  for (long i = 0; i < panel.n_rows(); ++i) {
    const Observation& o = panel.rows[i];
    const double t = static_cast<double>(o.t);
    const double x = o.t >= intervention_time ? 1.0 : 0.0;
    const double z = o.treated ? 1.0 : 0.0;
    X(i, kIntercept) = 1.0;
    X(i, kTime) = t;
    X(i, kPost) = x;
    X(i, kPostTime) = x * t;
    X(i, kGroup) = z;
    X(i, kGroupTime) = z * t;
    X(i, kGroupPost) = z * x;
    X(i, kGroupPostTime) = z * x * t;
  }
  return X;
}

inline Eigen::VectorXd response(const Panel& panel) {
  Eigen::VectorXd y(panel.n_rows());
  for (long i = 0; i < panel.n_rows(); ++i) y[i] = panel.rows[i].y;
  return y;
}

struct WaldResult {
  double statistic = 0.0;
  double p_value = 1.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  bool rejected = false;
};

// Two-sided t test of H0: parameter = null_value, with the t reference
// distribution on df degrees of freedom.
inline WaldResult wald_test(double estimate, double se, long df, double null_value = 0.0,
                            double alpha = 0.05) {
  if (!(alpha > 0.0 && alpha < 1.0))
    throw ValidationError("alpha must be in (0, 1), got " + std::to_string(alpha));
  if (df <= 0) throw ValidationError("wald test needs positive degrees of freedom");
  if (!(se > 0.0)) throw ZeroVariance("standard error is not positive");
  const boost::math::students_t_distribution<double> dist(static_cast<double>(df));
  WaldResult r;
  r.statistic = (estimate - null_value) / se;
  r.p_value = 2.0 * boost::math::cdf(boost::math::complement(dist, std::fabs(r.statistic)));
  const double t_crit = boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
  r.ci_low = estimate - t_crit * se;
  r.ci_high = estimate + t_crit * se;
  r.rejected = r.p_value < alpha;
  return r;
}

inline WaldResult wald_test(const FitResult& fit, int index, double null_value = 0.0,
                            double alpha = 0.05) {
  if (index < 0 || index >= kNumParams)
    throw ValidationError("coefficient index out of range: " + std::to_string(index));
  return wald_test(fit.beta[index], fit.se[index], fit.df, null_value, alpha);
}

inline WaldResult did_level(const FitResult& fit, double alpha = 0.05) {
  return wald_test(fit, kGroupPost, 0.0, alpha);
}

inline WaldResult did_trend(const FitResult& fit, double alpha = 0.05) {
  return wald_test(fit, kGroupPostTime, 0.0, alpha);
}

// Upper alpha/2 t quantile, the critical value for two-sided tests and
// confidence intervals.
inline double t_critical(long df, double alpha = 0.05) {
  const boost::math::students_t_distribution<double> dist(static_cast<double>(df));
  return boost::math::quantile(boost::math::complement(dist, alpha / 2.0));
}

}  // namespace itsa
