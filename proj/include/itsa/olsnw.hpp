#pragma once

// OLS with heteroskedasticity and autocorrelation consistent standard
// errors. Covariance estimation uses Bartlett-weighted autocovariances of
// the score, accumulated within unit segments only so that no lag product
// crosses a unit boundary.

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "itsa/errors.hpp"
#include "itsa/fit_result.hpp"
#include "itsa/model.hpp"
#include "itsa/panel.hpp"

namespace itsa {

struct OlsFit {
  Eigen::VectorXd beta;
  Eigen::VectorXd residuals;
  Eigen::MatrixXd xtx_inv;
};

inline OlsFit ols_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  if (x.rows() != y.size()) throw ValidationError("design and response size mismatch");
  if (x.rows() < x.cols())
    throw RankDeficient("fewer observations than parameters: " + std::to_string(x.rows()) +
                        " < " + std::to_string(x.cols()));
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  if (qr.rank() < x.cols())
    throw RankDeficient("design matrix has rank " + std::to_string(qr.rank()) + " < " +
                        std::to_string(x.cols()));
  OlsFit fit;
  fit.beta = qr.solve(y);
  fit.residuals = y - x * fit.beta;
  const Eigen::MatrixXd xtx = x.transpose() * x;
  fit.xtx_inv = xtx.llt().solve(Eigen::MatrixXd::Identity(x.cols(), x.cols()));
  return fit;
}

// Automatic truncation lag floor(4 (T/100)^{2/9}) from the per-unit series
// length, capped at T - 1.
inline int nw_bandwidth(long n_periods) {
  if (n_periods < 2) throw ValidationError("need at least 2 periods for a bandwidth");
  const int lag = static_cast<int>(std::floor(4.0 * std::pow(n_periods / 100.0, 2.0 / 9.0)));
  return std::min<int>(lag, static_cast<int>(n_periods - 1));
}

inline double bartlett_weight(int j, int lag) { return 1.0 - static_cast<double>(j) / (lag + 1); }

// S = Gamma_0 + sum_j w_j (Gamma_j + Gamma_j'), with Gamma_j accumulated
// over within-segment pairs (t, t-j). Returns the sandwich
// (X'X)^{-1} S (X'X)^{-1}, optionally scaled by n/(n-p).
inline Eigen::MatrixXd nw_cov(const Eigen::MatrixXd& x, const Eigen::VectorXd& residuals,
                              int lag, const std::vector<Segment>& segments,
                              bool small_sample_adjust = true) {
  const long n = x.rows();
  const long p = x.cols();
  if (residuals.size() != n) throw ValidationError("residual length mismatch");
  if (lag < 0) throw ValidationError("negative lag");
  for (const Segment& seg : segments) {
    if (lag >= seg.length)
      throw BandwidthTooLarge("lag " + std::to_string(lag) +
                              " is not below the segment length " +
                              std::to_string(seg.length) + " of unit " +
                              std::to_string(seg.unit_id));
  }
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const Segment& seg : segments) {
    const Eigen::MatrixXd e = residuals.segment(seg.start, seg.length).asDiagonal() *
                              x.middleRows(seg.start, seg.length);
    s.noalias() += e.transpose() * e;
    for (int j = 1; j <= lag; ++j) {
      const long m = seg.length - j;
      const Eigen::MatrixXd gamma = e.bottomRows(m).transpose() * e.topRows(m);
      s.noalias() += bartlett_weight(j, lag) * (gamma + gamma.transpose());
    }
  }
  const Eigen::MatrixXd xtx_inv =
      (x.transpose() * x).llt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd cov = xtx_inv * s * xtx_inv;
  if (small_sample_adjust) {
    if (n <= p) throw RankDeficient("no residual degrees of freedom");
    cov *= static_cast<double>(n) / static_cast<double>(n - p);
  }
  return cov;
}

struct HacConfig {
  std::optional<int> lag;  // unset means the automatic rule from n_periods
  bool small_sample_adjust = true;
};

inline FitResult fit_ols_nw(const Panel& panel, int intervention_time,
                            const HacConfig& hac = {}) {
  const Eigen::MatrixXd x = design_matrix(panel, intervention_time);
  const Eigen::VectorXd y = response(panel);
  const std::vector<Segment> segments = panel.segments();
  const long T = panel.n_periods();
  const int lag = hac.lag ? *hac.lag : nw_bandwidth(T);
  OlsFit ols = ols_fit(x, y);
  FitResult r;
  r.method = Method::OlsNw;
  r.beta = ols.beta;
  r.cov = nw_cov(x, ols.residuals, lag, segments, hac.small_sample_adjust);
  r.se = r.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.n_obs = x.rows();
  r.df = x.rows() - kNumParams;
  r.lag_used = lag;
  return r;
}

}  // namespace itsa
