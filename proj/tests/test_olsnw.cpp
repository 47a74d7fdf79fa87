#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdlib>
#include <vector>

#include "itsa/dgp.hpp"
#include "itsa/errors.hpp"
#include "itsa/model.hpp"
#include "itsa/olsnw.hpp"
#include "itsa/rng.hpp"

using namespace itsa;

namespace {

// Reference covariance from the O(n^2) definition: sum over all ordered
// within-segment pairs (t, u) with |t - u| <= lag, Bartlett weighted.
Eigen::MatrixXd naive_nw(const Eigen::MatrixXd& x, const Eigen::VectorXd& r, int lag,
                         const std::vector<Segment>& segs, bool adjust) {
  const long p = x.cols();
  Eigen::MatrixXd s = Eigen::MatrixXd::Zero(p, p);
  for (const Segment& seg : segs) {
    for (long t = 0; t < seg.length; ++t) {
      for (long u = 0; u < seg.length; ++u) {
        const long j = std::labs(t - u);
        if (j > lag) continue;
        const double w = 1.0 - static_cast<double>(j) / (lag + 1);
        s += w * r[seg.start + t] * r[seg.start + u] * x.row(seg.start + t).transpose() *
             x.row(seg.start + u);
      }
    }
  }
  const Eigen::MatrixXd xtx_inv =
      (x.transpose() * x).llt().solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::MatrixXd cov = xtx_inv * s * xtx_inv;
  if (adjust) cov *= static_cast<double>(x.rows()) / static_cast<double>(x.rows() - p);
  return cov;
}

double rel_err(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

}  // namespace

TEST_CASE("automatic truncation lag", "[olsnw]") {
  CHECK(nw_bandwidth(2) == 1);
  CHECK(nw_bandwidth(10) == 2);
  CHECK(nw_bandwidth(20) == 2);
  CHECK(nw_bandwidth(40) == 3);
  CHECK(nw_bandwidth(50) == 3);
  CHECK(nw_bandwidth(60) == 3);
  CHECK(nw_bandwidth(100) == 4);
  CHECK(nw_bandwidth(360) == 5);
  CHECK_THROWS_AS(nw_bandwidth(1), ValidationError);
}

TEST_CASE("bartlett weights decay linearly", "[olsnw]") {
  CHECK(bartlett_weight(1, 3) == Catch::Approx(0.75));
  CHECK(bartlett_weight(2, 3) == Catch::Approx(0.50));
  CHECK(bartlett_weight(3, 3) == Catch::Approx(0.25));
  CHECK(bartlett_weight(0, 5) == Catch::Approx(1.0));
  CHECK(bartlett_weight(1, 1) == Catch::Approx(0.5));
}

TEST_CASE("least squares rejects deficient designs", "[olsnw]") {
  Eigen::MatrixXd x(6, 3);
  NormalSampler s(3);
  for (long i = 0; i < x.size(); ++i) x.data()[i] = s();
  x.col(2) = 2.0 * x.col(1);  // exact collinearity
  const Eigen::VectorXd y = Eigen::VectorXd::Ones(6);
  CHECK_THROWS_AS(ols_fit(x, y), RankDeficient);

  Eigen::MatrixXd wide(2, 3);
  wide.setOnes();
  CHECK_THROWS_AS(ols_fit(wide, Eigen::VectorXd::Ones(2)), RankDeficient);

  CHECK_THROWS_AS(ols_fit(Eigen::MatrixXd::Ones(4, 2), Eigen::VectorXd::Ones(3)),
                  ValidationError);
}

TEST_CASE("covariance matches the quadratic-form definition", "[olsnw]") {
  NormalSampler s(515);
  const long p = 3;
  for (int rep = 0; rep < 20; ++rep) {
    const long n1 = 8, n2 = 7;
    Eigen::MatrixXd x(n1 + n2, p);
    Eigen::VectorXd r(n1 + n2);
    x.col(0).setOnes();
    for (long i = 0; i < x.rows(); ++i) {
      for (long c = 1; c < p; ++c) x(i, c) = s();
      r[i] = s();
    }
    const std::vector<Segment> segs = {{0, n1, 1, true}, {n1, n2, 2, false}};
    for (int lag = 0; lag <= 3; ++lag) {
      for (bool adjust : {true, false}) {
        const Eigen::MatrixXd got = nw_cov(x, r, lag, segs, adjust);
        const Eigen::MatrixXd want = naive_nw(x, r, lag, segs, adjust);
        CHECK(rel_err(got, want) < 1e-12);
      }
    }
  }
}

TEST_CASE("lag zero gives the heteroskedasticity-only sandwich", "[olsnw]") {
  NormalSampler s(21);
  Eigen::MatrixXd x(12, 2);
  Eigen::VectorXd r(12);
  x.col(0).setOnes();
  for (long i = 0; i < 12; ++i) {
    x(i, 1) = s();
    r[i] = s();
  }
  const std::vector<Segment> segs = {{0, 6, 1, true}, {6, 6, 2, false}};
  Eigen::MatrixXd meat = Eigen::MatrixXd::Zero(2, 2);
  for (long i = 0; i < 12; ++i)
    meat += r[i] * r[i] * x.row(i).transpose() * x.row(i);
  const Eigen::MatrixXd xtx_inv =
      (x.transpose() * x).llt().solve(Eigen::MatrixXd::Identity(2, 2));
  const Eigen::MatrixXd want = xtx_inv * meat * xtx_inv;
  CHECK(rel_err(nw_cov(x, r, 0, segs, false), want) < 1e-12);
}

TEST_CASE("lag products never cross a unit boundary", "[olsnw]") {
  // identical data, one segmentation coarser than the other
  NormalSampler s(77);
  Eigen::MatrixXd x(10, 2);
  Eigen::VectorXd r(10);
  x.col(0).setOnes();
  for (long i = 0; i < 10; ++i) {
    x(i, 1) = s();
    r[i] = s();
  }
  const std::vector<Segment> split = {{0, 5, 1, true}, {5, 5, 2, false}};
  const std::vector<Segment> merged = {{0, 10, 1, true}};
  const Eigen::MatrixXd a = nw_cov(x, r, 2, split, false);
  const Eigen::MatrixXd b = nw_cov(x, r, 2, merged, false);
  CHECK((a - b).cwiseAbs().maxCoeff() > 1e-12);
  CHECK(rel_err(a, naive_nw(x, r, 2, split, false)) < 1e-12);
  CHECK(rel_err(b, naive_nw(x, r, 2, merged, false)) < 1e-12);
}

TEST_CASE("truncation lag must stay below every segment length", "[olsnw]") {
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(12, 2);
  x.col(0).setOnes();
  const Eigen::VectorXd r = Eigen::VectorXd::Random(12);
  const std::vector<Segment> segs = {{0, 7, 1, true}, {7, 5, 2, false}};
  CHECK_NOTHROW(nw_cov(x, r, 4, segs, false));
  CHECK_THROWS_AS(nw_cov(x, r, 5, segs, false), BandwidthTooLarge);
  CHECK_THROWS_AS(nw_cov(x, r, -1, segs, false), ValidationError);
}

TEST_CASE("small-sample factor scales the covariance by n over n minus p", "[olsnw]") {
  NormalSampler s(9);
  Eigen::MatrixXd x(14, 3);
  Eigen::VectorXd r(14);
  x.col(0).setOnes();
  for (long i = 0; i < 14; ++i) {
    x(i, 1) = s();
    x(i, 2) = s();
    r[i] = s();
  }
  const std::vector<Segment> segs = {{0, 14, 1, true}};
  const Eigen::MatrixXd off = nw_cov(x, r, 2, segs, false);
  const Eigen::MatrixXd on = nw_cov(x, r, 2, segs, true);
  CHECK(rel_err(on, off * (14.0 / 11.0)) < 1e-13);
}

TEST_CASE("full fit wires the pieces together", "[olsnw]") {
  ScenarioConfig cfg;
  cfg.n_periods = 100;
  cfg.n_controls = 2;
  cfg.seed = 3131;
  cfg.ar.rho = scenario_rho(2, "mild");
  const Panel p = gen_panel(cfg);
  const int t0 = cfg.resolved_intervention();

  const FitResult automatic = fit_ols_nw(p, t0);
  CHECK(automatic.method == Method::OlsNw);
  CHECK(automatic.lag_used == 4);
  CHECK(automatic.n_obs == 300);
  CHECK(automatic.df == 292);
  CHECK(automatic.beta.size() == 8);
  for (int j = 0; j < 8; ++j)
    CHECK(automatic.se[j] == Catch::Approx(std::sqrt(automatic.cov(j, j))).epsilon(1e-12));

  HacConfig hac;
  hac.lag = 2;
  const FitResult manual = fit_ols_nw(p, t0, hac);
  CHECK(manual.lag_used == 2);
  CHECK((manual.beta - automatic.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((manual.cov - automatic.cov).cwiseAbs().maxCoeff() > 0.0);

  // end to end against the reference definition
  const Eigen::MatrixXd x = design_matrix(p, t0);
  const OlsFit ols = ols_fit(x, response(p));
  const Eigen::MatrixXd want = naive_nw(x, ols.residuals, 2, p.segments(), true);
  CHECK(rel_err(manual.cov, want) < 1e-10);
}

TEST_CASE("estimates are invariant to input row order", "[olsnw]") {
  ScenarioConfig cfg;
  cfg.n_periods = 12;
  cfg.n_controls = 1;
  cfg.seed = 5;
  Panel p = gen_panel(cfg);
  Panel shuffled = p;
  std::srand(42);
  for (std::size_t i = shuffled.rows.size(); i > 1; --i)
    std::swap(shuffled.rows[i - 1], shuffled.rows[std::rand() % i]);
  shuffled.validate();  // sorts back to (unit, t) order
  const FitResult a = fit_ols_nw(p, 7);
  const FitResult b = fit_ols_nw(shuffled, 7);
  CHECK((a.beta - b.beta).cwiseAbs().maxCoeff() == 0.0);
  CHECK((a.cov - b.cov).cwiseAbs().maxCoeff() == 0.0);
}
