#pragma once

// Iterated Prais-Winsten estimation for AR(k) errors.
//
// The algorithm alternates two steps until the AR coefficients settle:
//   1. estimate rho from the current untransformed residuals via a pooled
//      Yule-Walker system (cross-products accumulated within unit segments),
//   2. whiten each segment with the exact AR(k) operator and refit by least
//      squares on the transformed data.
// The whitening operator keeps all N rows: the first k observations of each
// segment are scaled by an init block derived from the stationary
// autocovariances, the rest are quasi-differenced with the AR filter.

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "itsa/dgp.hpp"
#include "itsa/errors.hpp"
#include "itsa/fit_result.hpp"
#include "itsa/model.hpp"
#include "itsa/olsnw.hpp"
#include "itsa/panel.hpp"

namespace itsa {

struct PwConfig {
  int order = 1;
  double tol = 1e-6;
  int max_iter = 100;
  bool enforce_stationarity = true;
};

struct YwSystem {
  Eigen::MatrixXd a;  // k x k cross-product matrix, symmetric
  Eigen::VectorXd b;
};

// Pooled Yule-Walker estimate of the AR(k) coefficients from residuals.
// With 1-indexed time inside a segment of length n,
//   a[i][j] = sum_{t=max(i,j)+1..n} u_{t-i} u_{t-j}
//   b[j]    = sum_{t=j+1..n}        u_t     u_{t-j}
// summed over segments, so no product straddles a unit boundary.
inline std::pair<Eigen::VectorXd, YwSystem> yule_walker_pool(
    const Eigen::VectorXd& residuals, const std::vector<Segment>& segments, int k) {
  if (k < 1) throw InvalidOrder("AR order must be at least 1");
  bool any_usable = false;
  for (const Segment& seg : segments)
    if (seg.length > k) any_usable = true;
  if (!any_usable)
    throw AllSegmentsTooShort("no segment longer than the AR order " + std::to_string(k));
  YwSystem sys;
  sys.a = Eigen::MatrixXd::Zero(k, k);
  sys.b = Eigen::VectorXd::Zero(k);
  for (const Segment& seg : segments) {
    const auto u = residuals.segment(seg.start, seg.length);
    for (int i = 1; i <= k; ++i) {
      for (int j = i; j <= k; ++j) {
        double s = 0.0;
        for (long t = j; t < seg.length; ++t) s += u[t - i] * u[t - j];
        sys.a(i - 1, j - 1) += s;
        if (i != j) sys.a(j - 1, i - 1) += s;
      }
      double s = 0.0;
      for (long t = i; t < seg.length; ++t) s += u[t] * u[t - i];
      sys.b[i - 1] += s;
    }
  }
  const Eigen::FullPivLU<Eigen::MatrixXd> lu(sys.a);
  if (!lu.isInvertible())
    throw SingularSystem("pooled Yule-Walker matrix is singular at order " + std::to_string(k));
  return {lu.solve(sys.b), sys};
}

// Stationary autocovariances gamma(0..max_lag) of an AR(k) process with
// innovation standard deviation sigma. gamma(0..k) solve the linear system
//   gamma(0) - sum_j rho_j gamma(j)     = sigma^2
//   gamma(l) - sum_j rho_j gamma(|l-j|) = 0        l = 1..k
// and higher lags follow the recursion gamma(l) = sum_j rho_j gamma(l-j).
inline Eigen::VectorXd ar_autocovariances(const Eigen::VectorXd& rho, double sigma,
                                          int max_lag) {
  if (max_lag < 0) throw ValidationError("negative autocovariance lag");
  const int k = static_cast<int>(rho.size());
  const double s2 = sigma * sigma;
  Eigen::VectorXd gamma = Eigen::VectorXd::Zero(max_lag + 1);
  if (k == 0) {
    gamma[0] = s2;
    return gamma;
  }
  if (!is_stationary(rho))
    throw NonStationary("autocovariances require a stationary AR process");
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(k + 1, k + 1);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(k + 1);
  for (int l = 0; l <= k; ++l) {
    m(l, l) += 1.0;
    for (int j = 1; j <= k; ++j) m(l, std::abs(l - j)) -= rho[j - 1];
  }
  rhs[0] = s2;
  const Eigen::VectorXd head = m.partialPivLu().solve(rhs);
  for (int l = 0; l <= std::min(k, max_lag); ++l) gamma[l] = head[l];
  for (int l = k + 1; l <= max_lag; ++l) {
    double g = 0.0;
    for (int j = 1; j <= k; ++j) g += rho[j - 1] * gamma[l - j];
    gamma[l] = g;
  }
  return gamma;
}

// k x k scaling block for the first k observations of a segment. Built as
// the row- and column-reversed upper Cholesky factor of V_k^{-1}, where
// V_k[i][j] = gamma(|i-j|) with unit innovation variance. Reversal keeps
// the block lower-triangular; V_k^{-1} is persymmetric, so L0'L0 = V_k^{-1}
// still holds and applying L0 to AR(k) data whitens it to the innovation
// scale. For k = 1 this is the scalar sqrt(1 - p^2).
inline Eigen::MatrixXd init_block(const Eigen::VectorXd& rho) {
  const int k = static_cast<int>(rho.size());
  if (k < 1) throw InvalidOrder("init block needs AR order at least 1");
  const Eigen::VectorXd gamma = ar_autocovariances(rho, 1.0, k - 1);
  Eigen::MatrixXd v(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) v(i, j) = gamma[std::abs(i - j)];
  const Eigen::LLT<Eigen::MatrixXd> v_llt(v);
  if (v_llt.info() != Eigen::Success)
    throw CholeskyFailure("autocovariance matrix is not positive definite");
  const Eigen::MatrixXd v_inv = v_llt.solve(Eigen::MatrixXd::Identity(k, k));
  const Eigen::LLT<Eigen::MatrixXd> inv_llt(v_inv);
  if (inv_llt.info() != Eigen::Success)
    throw CholeskyFailure("inverse autocovariance matrix is not positive definite");
  const Eigen::MatrixXd u = inv_llt.matrixU();
  Eigen::MatrixXd l0(k, k);
  for (int i = 0; i < k; ++i)
    for (int j = 0; j < k; ++j) l0(i, j) = u(k - 1 - i, k - 1 - j);
  return l0;
}

// Applies the whitening operator of one segment to a response vector and a
// design block. Rows 1..k come from the init block; row t > k becomes
// value_t - sum_j rho_j value_{t-j}.
inline std::pair<Eigen::VectorXd, Eigen::MatrixXd> pw_transform(
    const Eigen::VectorXd& y, const Eigen::MatrixXd& x, const Eigen::VectorXd& rho) {
  const long n = y.size();
  if (x.rows() != n) throw ValidationError("segment design and response size mismatch");
  const int k = static_cast<int>(rho.size());
  if (n <= k)
    throw SegmentTooShort("segment length " + std::to_string(n) +
                          " does not exceed the AR order " + std::to_string(k));
  if (k == 0) return {y, x};
  Eigen::VectorXd y_r(n);
  Eigen::MatrixXd x_r(n, x.cols());
  const Eigen::MatrixXd l0 = init_block(rho);
  y_r.head(k) = l0 * y.head(k);
  x_r.topRows(k) = l0 * x.topRows(k);
  for (long t = k; t < n; ++t) {
    double yv = y[t];
    for (int j = 1; j <= k; ++j) yv -= rho[j - 1] * y[t - j];
    y_r[t] = yv;
    for (long c = 0; c < x.cols(); ++c) {
      double xv = x(t, c);
      for (int j = 1; j <= k; ++j) xv -= rho[j - 1] * x(t - j, c);
      x_r(t, c) = xv;
    }
  }
  return {y_r, x_r};
}

// Pulls a non-stationary iterate back inside the unit circle by repeated
// radial shrinkage of the coefficient vector.
inline Eigen::VectorXd enforce_stationary(Eigen::VectorXd rho) {
  while (!is_stationary(rho)) rho *= 0.998 / spectral_radius(rho);
  return rho;
}

inline FitResult fit_pw(const Panel& panel, int intervention_time, const PwConfig& cfg = {}) {
  if (cfg.order < 1) throw InvalidOrder("AR order must be at least 1");
  if (!(cfg.tol > 0.0)) throw ValidationError("tolerance must be positive");
  if (cfg.max_iter < 1) throw ValidationError("max_iter must be at least 1");
  const int k = cfg.order;
  const Eigen::MatrixXd x = design_matrix(panel, intervention_time);
  const Eigen::VectorXd y = response(panel);
  const std::vector<Segment> segments = panel.segments();
  for (const Segment& seg : segments) {
    if (seg.length <= k)
      throw SegmentTooShort("unit " + std::to_string(seg.unit_id) + " has " +
                            std::to_string(seg.length) +
                            " observations, not more than the AR order " + std::to_string(k));
  }
  const long n = x.rows();
  const long df = n - kNumParams;
  if (df < 1) throw RankDeficient("no residual degrees of freedom");

  OlsFit ols = ols_fit(x, y);
  FitResult r;
  r.method = Method::PraisWinsten;
  r.n_obs = n;
  r.df = df;

  // A perfect fit leaves nothing to estimate rho from.
  const double y_scale = 1.0 + y.cwiseAbs().maxCoeff();
  if (ols.residuals.cwiseAbs().maxCoeff() <= 1e-9 * y_scale) {
    const double s2 = ols.residuals.squaredNorm() / static_cast<double>(df);
    r.beta = ols.beta;
    r.cov = s2 * ols.xtx_inv;
    r.se = r.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
    r.rho_hat = Eigen::VectorXd::Zero(k);
    r.rho_cov = Eigen::MatrixXd::Zero(k, k);
    r.iterations = 0;
    r.converged = true;
    return r;
  }

  Eigen::VectorXd u = ols.residuals;
  Eigen::VectorXd rho_prev;
  Eigen::MatrixXd yw_a;
  Eigen::VectorXd beta;
  Eigen::MatrixXd xtx_r_inv;
  double ssr_transformed = 0.0;
  bool converged = false;
  int iterations = 0;

  for (int m = 1; m <= cfg.max_iter; ++m) {
    auto [rho, sys] = yule_walker_pool(u, segments, k);
    if (!is_stationary(rho)) {
      if (!cfg.enforce_stationarity)
        throw NonStationaryIterate("Yule-Walker iterate has spectral radius " +
                                   std::to_string(spectral_radius(rho)));
      rho = enforce_stationary(std::move(rho));
    }
    const bool settled = m >= 2 && (rho - rho_prev).cwiseAbs().maxCoeff() < cfg.tol;

    Eigen::VectorXd y_r(n);
    Eigen::MatrixXd x_r(n, x.cols());
    for (const Segment& seg : segments) {
      auto [ys, xs] = pw_transform(y.segment(seg.start, seg.length),
                                   x.middleRows(seg.start, seg.length), rho);
      y_r.segment(seg.start, seg.length) = ys;
      x_r.middleRows(seg.start, seg.length) = xs;
    }
    OlsFit refit = ols_fit(x_r, y_r);
    beta = refit.beta;
    xtx_r_inv = refit.xtx_inv;
    ssr_transformed = refit.residuals.squaredNorm();
    u = y - x * beta;
    yw_a = sys.a;
    rho_prev = rho;
    iterations = m;
    if (settled) {
      converged = true;
      break;
    }
  }

  const double s2 = ssr_transformed / static_cast<double>(df);
  r.beta = beta;
  r.cov = s2 * xtx_r_inv;
  r.se = r.cov.diagonal().cwiseMax(0.0).cwiseSqrt();
  r.rho_hat = rho_prev;
  r.rho_cov = s2 * yw_a.fullPivLu().solve(Eigen::MatrixXd::Identity(k, k));
  r.iterations = iterations;
  r.converged = converged;
  return r;
}

}  // namespace itsa
