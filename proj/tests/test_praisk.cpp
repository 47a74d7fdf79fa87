#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <utility>
#include <vector>

#include "itsa/dgp.hpp"
#include "itsa/errors.hpp"
#include "itsa/model.hpp"
#include "itsa/olsnw.hpp"
#include "itsa/panel.hpp"
#include "itsa/praisk.hpp"
#include "itsa/rng.hpp"

using namespace itsa;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd r(static_cast<long>(v.size()));
  long i = 0;
  for (double x : v) r[i++] = x;
  return r;
}

// Dense n x n form of the per-segment whitening operator: init block on the
// first k rows, AR filter below.
Eigen::MatrixXd whitening_operator(const Eigen::VectorXd& rho, long n) {
  const int k = static_cast<int>(rho.size());
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
  l.topLeftCorner(k, k) = init_block(rho);
  for (long t = k; t < n; ++t) {
    l(t, t) = 1.0;
    for (int j = 1; j <= k; ++j) l(t, t - j) = -rho[j - 1];
  }
  return l;
}

Eigen::MatrixXd toeplitz_cov(const Eigen::VectorXd& rho, double sigma, long n) {
  const Eigen::VectorXd gamma = ar_autocovariances(rho, sigma, static_cast<int>(n - 1));
  Eigen::MatrixXd omega(n, n);
  for (long i = 0; i < n; ++i)
    for (long j = 0; j < n; ++j) omega(i, j) = gamma[std::labs(i - j)];
  return omega;
}

}  // namespace

TEST_CASE("stationary autocovariances", "[praisk]") {
  const Eigen::VectorXd g1 = ar_autocovariances(vec({0.6}), 1.0, 3);
  CHECK(g1[0] == Catch::Approx(1.5625).epsilon(1e-12));
  CHECK(g1[1] == Catch::Approx(0.9375).epsilon(1e-12));
  CHECK(g1[2] == Catch::Approx(0.5625).epsilon(1e-12));
  CHECK(g1[3] == Catch::Approx(0.3375).epsilon(1e-12));

  const Eigen::VectorXd g2 = ar_autocovariances(vec({0.7, 0.2}), 1.0, 4);
  CHECK(g2[0] == Catch::Approx(4.444444444444).epsilon(1e-10));
  CHECK(g2[1] / g2[0] == Catch::Approx(0.875).epsilon(1e-12));
  CHECK(g2[2] / g2[0] == Catch::Approx(0.8125).epsilon(1e-12));
  // recursion holds past the solved head
  CHECK(g2[3] == Catch::Approx(0.7 * g2[2] + 0.2 * g2[1]).epsilon(1e-12));
  CHECK(g2[4] == Catch::Approx(0.7 * g2[3] + 0.2 * g2[2]).epsilon(1e-12));

  // sigma enters as a pure scale
  const Eigen::VectorXd gs = ar_autocovariances(vec({0.5}), 2.0, 2);
  CHECK(gs[0] == Catch::Approx(16.0 / 3.0).epsilon(1e-12));
  CHECK(gs[1] == Catch::Approx(8.0 / 3.0).epsilon(1e-12));

  // no AR part: white noise autocovariances
  const Eigen::VectorXd g0 = ar_autocovariances(Eigen::VectorXd(), 1.5, 3);
  CHECK(g0[0] == 2.25);
  CHECK(g0[1] == 0.0);
  CHECK(g0[3] == 0.0);

  CHECK_THROWS_AS(ar_autocovariances(vec({1.0}), 1.0, 2), NonStationary);
  CHECK_THROWS_AS(ar_autocovariances(vec({0.5}), 1.0, -1), ValidationError);
}

TEST_CASE("init block whitens the first observations", "[praisk]") {
  // order 1: the classic sqrt(1 - p^2) scaling
  const Eigen::MatrixXd l1 = init_block(vec({0.5}));
  REQUIRE(l1.rows() == 1);
  CHECK(l1(0, 0) == Catch::Approx(std::sqrt(0.75)).epsilon(1e-14));

  // order 2 with (0.7, 0.2): V2^{-1} has the closed form [[.96,-.84],[-.84,.96]]
  const Eigen::MatrixXd l2 = init_block(vec({0.7, 0.2}));
  const Eigen::MatrixXd v2_inv = l2.transpose() * l2;
  CHECK(v2_inv(0, 0) == Catch::Approx(0.96).margin(1e-10));
  CHECK(v2_inv(0, 1) == Catch::Approx(-0.84).margin(1e-10));
  CHECK(v2_inv(1, 0) == Catch::Approx(-0.84).margin(1e-10));
  CHECK(v2_inv(1, 1) == Catch::Approx(0.96).margin(1e-10));

  // the factor is lower triangular for every order
  const Eigen::MatrixXd l3 = init_block(vec({0.6, 0.25, 0.1}));
  for (int i = 0; i < 3; ++i)
    for (int j = i + 1; j < 3; ++j) CHECK(l3(i, j) == 0.0);

  // zero coefficients mean no correlation to remove
  const Eigen::MatrixXd lz = init_block(vec({0.0, 0.0}));
  CHECK((lz - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-14);

  CHECK_THROWS_AS(init_block(Eigen::VectorXd()), InvalidOrder);
}

TEST_CASE("whitening operator turns the AR covariance into the identity", "[praisk]") {
  std::vector<Eigen::VectorXd> processes = {
      scenario_rho(2, "mild"),          scenario_rho(2, "oscillatory"),
      scenario_rho(2, "high_persistent"), scenario_rho(3, "mild"),
      scenario_rho(3, "oscillatory"),   scenario_rho(3, "high_persistent"),
      vec({0.7})};
  const double sigma = 1.3;
  for (const Eigen::VectorXd& rho : processes) {
    for (long n : {6L, 12L}) {
      const Eigen::MatrixXd l = whitening_operator(rho, n);
      const Eigen::MatrixXd omega = toeplitz_cov(rho, sigma, n);
      const Eigen::MatrixXd white = l * omega * l.transpose();
      const Eigen::MatrixXd target = sigma * sigma * Eigen::MatrixXd::Identity(n, n);
      CHECK((white - target).cwiseAbs().maxCoeff() < 1e-9);
    }
  }
}

TEST_CASE("segment transform equals the dense operator", "[praisk]") {
  const Eigen::VectorXd rho = vec({0.6, 0.25, 0.1});
  const long n = 10;
  NormalSampler s(123);
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, 3);
  for (long i = 0; i < n; ++i) {
    y[i] = s();
    for (long c = 0; c < 3; ++c) x(i, c) = s();
  }
  const auto [y_r, x_r] = pw_transform(y, x, rho);
  const Eigen::MatrixXd l = whitening_operator(rho, n);
  CHECK((y_r - l * y).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((x_r - l * x).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("first order transform by hand", "[praisk]") {
  const Eigen::VectorXd rho = vec({0.5});
  Eigen::VectorXd y(3);
  y << 1.0, 1.0, 1.0;
  const Eigen::MatrixXd x = Eigen::MatrixXd::Ones(3, 1);
  const auto [y_r, x_r] = pw_transform(y, x, rho);
  CHECK(y_r[0] == Catch::Approx(std::sqrt(0.75)).epsilon(1e-14));
  CHECK(y_r[1] == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(y_r[2] == Catch::Approx(0.5).epsilon(1e-14));
  CHECK(x_r(0, 0) == Catch::Approx(std::sqrt(0.75)).epsilon(1e-14));
  CHECK(x_r(2, 0) == Catch::Approx(0.5).epsilon(1e-14));

  // order zero is the identity
  const auto [y_id, x_id] = pw_transform(y, x, Eigen::VectorXd());
  CHECK((y_id - y).cwiseAbs().maxCoeff() == 0.0);
  CHECK((x_id - x).cwiseAbs().maxCoeff() == 0.0);

  CHECK_THROWS_AS(pw_transform(y, x, vec({0.3, 0.2, 0.1})), SegmentTooShort);
}

TEST_CASE("pooled Yule-Walker sums stay inside segments", "[praisk]") {
  Eigen::VectorXd u(6);
  u << 1.0, 2.0, 4.0, 1.0, 2.0, 4.0;
  const std::vector<Segment> split = {{0, 3, 1, true}, {3, 3, 2, false}};
  const std::vector<Segment> merged = {{0, 6, 1, true}};

  // per segment: b = 1*2 + 2*4 = 10, a = 1 + 4 = 5; pooled ratio 2
  const auto [rho_split, sys_split] = yule_walker_pool(u, split, 1);
  CHECK(sys_split.a(0, 0) == 10.0);
  CHECK(sys_split.b[0] == 20.0);
  CHECK(rho_split[0] == Catch::Approx(2.0).epsilon(1e-15));

  // merged: the boundary product 4*1 enters both sums
  const auto [rho_merged, sys_merged] = yule_walker_pool(u, merged, 1);
  CHECK(sys_merged.a(0, 0) == 26.0);
  CHECK(sys_merged.b[0] == 24.0);
  CHECK(rho_merged[0] == Catch::Approx(24.0 / 26.0).epsilon(1e-15));
}

TEST_CASE("Yule-Walker recovers the generating coefficients", "[praisk]") {
  ArSpec ar;
  ar.rho = vec({0.7, 0.2});
  const Eigen::VectorXd e = gen_ar_errors(ar, 100000, 61);
  const std::vector<Segment> segs = {{0, e.size(), 1, true}};
  const auto [rho, sys] = yule_walker_pool(e, segs, 2);
  CHECK(rho[0] == Catch::Approx(0.7).margin(0.02));
  CHECK(rho[1] == Catch::Approx(0.2).margin(0.02));
}

TEST_CASE("Yule-Walker failure modes", "[praisk]") {
  Eigen::VectorXd u = Eigen::VectorXd::Ones(6);
  const std::vector<Segment> segs = {{0, 6, 1, true}};
  CHECK_THROWS_AS(yule_walker_pool(u, segs, 0), InvalidOrder);

  const std::vector<Segment> short_segs = {{0, 2, 1, true}, {2, 2, 2, false}};
  Eigen::VectorXd u4 = Eigen::VectorXd::Ones(4);
  CHECK_THROWS_AS(yule_walker_pool(u4, short_segs, 2), AllSegmentsTooShort);

  Eigen::VectorXd zeros = Eigen::VectorXd::Zero(6);
  CHECK_THROWS_AS(yule_walker_pool(zeros, segs, 1), SingularSystem);
}

TEST_CASE("non-stationary iterates are shrunk inside the unit circle", "[praisk]") {
  const Eigen::VectorXd pulled = enforce_stationary(vec({1.2}));
  CHECK(spectral_radius(pulled) < 1.0 - kStationarityMargin);
  CHECK(pulled[0] > 0.9);  // direction preserved, only the radius changes

  const Eigen::VectorXd kept = enforce_stationary(vec({0.5}));
  CHECK(kept[0] == 0.5);

  const Eigen::VectorXd boundary = enforce_stationary(vec({0.5, 0.5}));
  CHECK(spectral_radius(boundary) < 1.0 - kStationarityMargin);
}

TEST_CASE("estimation equals generalized least squares at the fitted rho", "[praisk]") {
  for (int k : {1, 2}) {
    ScenarioConfig cfg;
    cfg.n_periods = 12;
    cfg.n_controls = 1;
    cfg.seed = 900 + k;
    cfg.ar.rho = k == 1 ? vec({0.6}) : vec({0.5, 0.2});
    const Panel p = gen_panel(cfg);
    const int t0 = cfg.resolved_intervention();
    PwConfig pw;
    pw.order = k;
    const FitResult fit = fit_pw(p, t0, pw);
    REQUIRE(fit.converged);

    const Eigen::MatrixXd x = design_matrix(p, t0);
    const Eigen::VectorXd y = response(p);
    const long n = x.rows();
    Eigen::MatrixXd omega = Eigen::MatrixXd::Zero(n, n);
    for (const Segment& seg : p.segments())
      omega.block(seg.start, seg.start, seg.length, seg.length) =
          toeplitz_cov(fit.rho_hat, 1.0, seg.length);
    const Eigen::MatrixXd omega_inv = omega.llt().solve(Eigen::MatrixXd::Identity(n, n));
    const Eigen::VectorXd beta_gls =
        (x.transpose() * omega_inv * x).llt().solve(x.transpose() * omega_inv * y);
    CHECK((fit.beta - beta_gls).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("iterated fit recovers the error process", "[praisk]") {
  ScenarioConfig cfg;
  cfg.n_periods = 100;
  cfg.n_controls = 4;
  cfg.seed = 424242;
  cfg.ar.rho = vec({0.7});
  const Panel p = gen_panel(cfg);
  PwConfig pw;
  pw.order = 1;
  const FitResult fit = fit_pw(p, cfg.resolved_intervention(), pw);
  CHECK(fit.converged);
  CHECK(fit.iterations >= 2);
  CHECK(fit.iterations <= 100);
  CHECK(fit.rho_hat[0] == Catch::Approx(0.7).margin(0.15));
  CHECK(fit.df == 492);
  CHECK(fit.n_obs == 500);
  REQUIRE(fit.rho_cov.rows() == 1);
  CHECK(fit.rho_cov(0, 0) > 0.0);
  for (int j = 0; j < 8; ++j) CHECK(std::isfinite(fit.se[j]));
}

TEST_CASE("perfect fit short-circuits the iteration", "[praisk]") {
  ScenarioConfig cfg;
  cfg.n_periods = 20;
  cfg.n_controls = 1;
  cfg.ar.sigma = 0.0;
  cfg.level_change_treated = 2.0;
  const Panel p = gen_panel(cfg);
  PwConfig pw;
  pw.order = 2;
  const FitResult fit = fit_pw(p, cfg.resolved_intervention(), pw);
  CHECK(fit.converged);
  CHECK(fit.iterations == 0);
  CHECK(fit.rho_hat.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.rho_cov.cwiseAbs().maxCoeff() == 0.0);
  CHECK(fit.se.cwiseAbs().maxCoeff() < 1e-9);
  CHECK(fit.beta[kGroupPost] == Catch::Approx(2.0).margin(1e-8));
}

TEST_CASE("explosive iterates trip the stationarity guard", "[praisk]") {
  // this short, highly persistent draw puts the first Yule-Walker solve
  // outside the unit circle
  ScenarioConfig cfg;
  cfg.n_periods = 9;
  cfg.n_controls = 1;
  cfg.seed = 76;
  cfg.ar.rho = vec({0.95});
  const Panel p = gen_panel(cfg);
  const int t0 = cfg.resolved_intervention();

  PwConfig loose;
  loose.order = 1;
  loose.enforce_stationarity = false;
  CHECK_THROWS_AS(fit_pw(p, t0, loose), NonStationaryIterate);

  PwConfig strict;
  strict.order = 1;
  const FitResult fit = fit_pw(p, t0, strict);
  CHECK(spectral_radius(fit.rho_hat) < 1.0);
  CHECK(fit.converged);
}

TEST_CASE("estimates scale with the outcome", "[praisk]") {
  ScenarioConfig cfg;
  cfg.n_periods = 40;
  cfg.n_controls = 2;
  cfg.seed = 31;
  cfg.ar.rho = vec({0.5});
  Panel p = gen_panel(cfg);
  Panel scaled = p;
  for (Observation& o : scaled.rows) o.y *= 10.0;
  PwConfig pw;
  pw.order = 1;
  const FitResult a = fit_pw(p, cfg.resolved_intervention(), pw);
  const FitResult b = fit_pw(scaled, cfg.resolved_intervention(), pw);
  REQUIRE(a.converged);
  REQUIRE(b.converged);
  CHECK(a.iterations == b.iterations);
  CHECK((b.rho_hat - a.rho_hat).cwiseAbs().maxCoeff() < 1e-10);
  for (int j = 0; j < 8; ++j) {
    CHECK(b.beta[j] == Catch::Approx(10.0 * a.beta[j]).epsilon(1e-9).margin(1e-9));
    CHECK(b.se[j] == Catch::Approx(10.0 * a.se[j]).epsilon(1e-9).margin(1e-12));
  }
}

TEST_CASE("iteration cap reports no convergence instead of throwing", "[praisk]") {
  ScenarioConfig cfg;
  cfg.n_periods = 30;
  cfg.n_controls = 1;
  cfg.seed = 8;
  cfg.ar.rho = vec({0.6});
  const Panel p = gen_panel(cfg);
  PwConfig pw;
  pw.order = 1;
  pw.max_iter = 1;
  const FitResult fit = fit_pw(p, cfg.resolved_intervention(), pw);
  CHECK_FALSE(fit.converged);
  CHECK(fit.iterations == 1);
  CHECK(fit.beta.size() == 8);
  for (int j = 0; j < 8; ++j) CHECK(std::isfinite(fit.se[j]));
}

TEST_CASE("fit rejects invalid configurations", "[praisk]") {
  ScenarioConfig cfg;
  cfg.n_periods = 10;
  cfg.n_controls = 1;
  cfg.seed = 4;
  const Panel p = gen_panel(cfg);
  PwConfig bad;
  bad.order = 0;
  CHECK_THROWS_AS(fit_pw(p, 6, bad), InvalidOrder);
  bad.order = 1;
  bad.tol = 0.0;
  CHECK_THROWS_AS(fit_pw(p, 6, bad), ValidationError);
  bad.tol = 1e-6;
  bad.max_iter = 0;
  CHECK_THROWS_AS(fit_pw(p, 6, bad), ValidationError);

  PwConfig too_high;
  too_high.order = 10;
  CHECK_THROWS_AS(fit_pw(p, 6, too_high), SegmentTooShort);
}

TEST_CASE("white noise data yields a near-zero rho", "[praisk]") {
  ScenarioConfig cfg;
  cfg.n_periods = 200;
  cfg.n_controls = 2;
  cfg.seed = 5150;
  const Panel p = gen_panel(cfg);
  PwConfig pw;
  pw.order = 1;
  const FitResult fit = fit_pw(p, cfg.resolved_intervention(), pw);
  REQUIRE(fit.converged);
  CHECK(std::abs(fit.rho_hat[0]) < 0.12);
}
