#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/regress.hpp"
#include "exact_cr1.hpp"

using namespace fda;

namespace {

// A reproducible regression problem: y = 2 + 3x + cluster-correlated noise.
struct Problem {
  VectorXd y;
  MatrixXd X;  // [1, x]
  VectorXd w;
  std::vector<int> clusters;
  std::vector<std::string> names{"intercept", "x"};
};

Problem make_problem(int n, int n_clusters, std::uint64_t seed) {
  Rng rng(seed);
  Problem p;
  p.y.resize(n);
  p.X.resize(n, 2);
  p.w.resize(n);
  p.clusters.resize(static_cast<std::size_t>(n));
  std::vector<double> shock(static_cast<std::size_t>(n_clusters));
  for (double& s : shock) s = rng.normal();
  for (int i = 0; i < n; ++i) {
    const int c = i % n_clusters;
    const double x = rng.normal();
    p.X(i, 0) = 1.0;
    p.X(i, 1) = x;
    p.y[i] = 2.0 + 3.0 * x + 0.8 * shock[static_cast<std::size_t>(c)] +
             rng.normal();
    p.w[i] = rng.uniform(0.5, 2.0);
    p.clusters[static_cast<std::size_t>(i)] = c;
  }
  return p;
}

}  // namespace

TEST_CASE("exact fit recovered when the model is noiseless") {
  VectorXd y(6), w(6);
  MatrixXd X(6, 2);
  std::vector<int> cl{0, 0, 0, 1, 1, 1};
  for (int i = 0; i < 6; ++i) {
    const double x = i - 2.5;
    X(i, 0) = 1.0;
    X(i, 1) = x;
    y[i] = 4.0 - 1.5 * x;
    w[i] = 1.0 + (i % 3);
  }
  const RegressionFit fit = wls(y, X, w, cl, {"intercept", "x"});
  CHECK(fit.coef[0] == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(fit.coef[1] == doctest::Approx(-1.5).epsilon(1e-12));
  CHECK(fit.residuals.cwiseAbs().maxCoeff() < 1e-12);
  CHECK(fit.n_obs == 6);
  CHECK(fit.n_clusters == 2);
  CHECK(fit.rank == 2);
}

TEST_CASE("coefficients and variance invariant to a global weight rescale") {
  const Problem p = make_problem(200, 8, 11);
  const RegressionFit a = wls(p.y, p.X, p.w, p.clusters, p.names);
  const RegressionFit b = wls(p.y, p.X, 7.3 * p.w, p.clusters, p.names);
  CHECK((a.coef - b.coef).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((a.vcov - b.vcov).cwiseAbs().maxCoeff() <
        1e-10 * std::max(1.0, a.vcov.cwiseAbs().maxCoeff()));
}

TEST_CASE("slope unchanged by weighted demeaning when an intercept is kept") {
  const Problem p = make_problem(150, 6, 12);
  const RegressionFit joint = wls(p.y, p.X, p.w, p.clusters, p.names);

  const double my = weighted_mean(p.y, p.w);
  const double mx = weighted_mean(p.X.col(1), p.w);
  VectorXd yd = p.y.array() - my;
  MatrixXd Xd = p.X;
  Xd.col(1) = p.X.col(1).array() - mx;
  const RegressionFit demeaned = wls(yd, Xd, p.w, p.clusters, p.names);
  CHECK(std::abs(joint.coef[1] - demeaned.coef[1]) < 1e-10);
  CHECK(std::abs(joint.se(1) - demeaned.se(1)) < 1e-10);
}

TEST_CASE("singleton clusters reproduce the heteroskedasticity-robust variance") {
  // With every observation its own cluster, CR1 collapses to HC1:
  // N/(N-K) * Ainv (sum_i w_i^2 e_i^2 x_i x_i') Ainv.
  Problem p = make_problem(80, 8, 13);
  for (int i = 0; i < 80; ++i) p.clusters[static_cast<std::size_t>(i)] = i;
  const RegressionFit fit = wls(p.y, p.X, p.w, p.clusters, p.names);

  const MatrixXd WX = p.w.asDiagonal() * p.X;
  const MatrixXd A = p.X.transpose() * WX;
  const MatrixXd Ainv = A.inverse();
  MatrixXd meat = MatrixXd::Zero(2, 2);
  for (int i = 0; i < 80; ++i) {
    const VectorXd s = p.w[i] * fit.residuals[i] * p.X.row(i).transpose();
    meat += s * s.transpose();
  }
  const double n = 80, k = 2;
  const MatrixXd hc1 = (n / (n - k)) * Ainv * meat * Ainv;
  CHECK((fit.vcov - hc1).cwiseAbs().maxCoeff() <
        1e-10 * std::max(1.0, hc1.cwiseAbs().maxCoeff()));
}

TEST_CASE("clustered variance matches the exact-arithmetic reference") {
  const exact_cr1::Fixture f = exact_cr1::fixture();
  const exact_cr1::Reference ref =
      exact_cr1::compute(f.y, f.x, f.w, f.cluster);

  const auto n = static_cast<Eigen::Index>(f.y.size());
  VectorXd y(n), w(n);
  MatrixXd X(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto ii = static_cast<std::size_t>(i);
    y[i] = static_cast<double>(f.y[ii]);
    X(i, 0) = 1.0;
    X(i, 1) = static_cast<double>(f.x[ii]);
    w[i] = static_cast<double>(f.w[ii]);
  }
  const RegressionFit fit = wls(y, X, w, f.cluster, {"intercept", "x"});
  CHECK(std::abs(fit.coef[0] - ref.coef[0]) < 1e-10);
  CHECK(std::abs(fit.coef[1] - ref.coef[1]) < 1e-10);
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      CHECK(std::abs(fit.vcov(r, c) - ref.vcov[static_cast<std::size_t>(r)]
                                               [static_cast<std::size_t>(c)]) <
            1e-10);
    }
  }
}

TEST_CASE("CR0 drops the small-sample factor") {
  const Problem p = make_problem(120, 6, 14);
  const RegressionFit a = wls(p.y, p.X, p.w, p.clusters, p.names,
                              WlsOptions{VcovKind::CR1});
  const RegressionFit b = wls(p.y, p.X, p.w, p.clusters, p.names,
                              WlsOptions{VcovKind::CR0});
  CHECK((a.coef - b.coef).cwiseAbs().maxCoeff() == 0.0);
  const double c1 = (6.0 / 5.0) * (119.0 / 118.0);
  CHECK((a.vcov - c1 * b.vcov).cwiseAbs().maxCoeff() <
        1e-12 * a.vcov.cwiseAbs().maxCoeff());
  CHECK(a.dof_correction == doctest::Approx(c1).epsilon(1e-12));
  CHECK(b.dof_correction == 1.0);
}

TEST_CASE("two-step residualization equals the joint regression") {
  // Joint: y on [1, c1, c2, x]; two-step: residualize y and x on [1, c1, c2],
  // then regress residual on residual.
  Rng rng(21);
  const int n = 300;
  VectorXd y(n), w(n);
  MatrixXd C(n, 3), X(n, 4);
  std::vector<int> cl(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double c1 = rng.normal(), c2 = rng.uniform(-1, 1);
    const double x = 0.5 * c1 + rng.normal();
    C(i, 0) = 1.0;
    C(i, 1) = c1;
    C(i, 2) = c2;
    X(i, 0) = 1.0;
    X(i, 1) = c1;
    X(i, 2) = c2;
    X(i, 3) = x;
    y[i] = 1.0 + 2.0 * c1 - c2 + 0.7 * x + rng.normal();
    w[i] = rng.uniform(0.5, 1.5);
    cl[static_cast<std::size_t>(i)] = i % 10;
  }
  const RegressionFit joint =
      wls(y, X, w, cl, {"intercept", "c1", "c2", "x"});

  const VectorXd ry = fwl_residualize(y, C, w);
  const VectorXd rx = fwl_residualize(X.col(3), C, w);

  // Residuals are orthogonal to every control under the weight metric.
  for (int j = 0; j < 3; ++j) {
    CHECK(std::abs((rx.array() * C.col(j).array() * w.array()).sum()) < 1e-8);
  }
  // Residualizing a control on the controls annihilates it.
  CHECK(fwl_residualize(C.col(1), C, w).cwiseAbs().maxCoeff() < 1e-10);

  MatrixXd Xr(n, 1);
  Xr.col(0) = rx;
  const RegressionFit two_step = wls(ry, Xr, w, cl, {"x_resid"});
  CHECK(std::abs(two_step.coef[0] - joint.coef[3]) < 1e-10);
}

TEST_CASE("rank deficiency names the collinear column") {
  Rng rng(31);
  const int n = 40;
  VectorXd y(n), w = VectorXd::Ones(n);
  MatrixXd X(n, 3);
  std::vector<int> cl(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const double x = rng.normal();
    X(i, 0) = 1.0;
    X(i, 1) = x;
    // Exact copy up to scale; the smaller norm keeps it outside the pivot
    // set, so the redundant column is the one the error names.
    X(i, 2) = 0.5 * x;
    y[i] = rng.normal();
    cl[static_cast<std::size_t>(i)] = i % 4;
  }
  try {
    wls(y, X, w, cl, {"intercept", "x", "x_copy"});
    FAIL("expected numeric_error");
  } catch (const numeric_error& e) {
    CHECK(std::string(e.what()).find("x_copy") != std::string::npos);
  }
}

TEST_CASE("fewer than two clusters is rejected") {
  VectorXd y(4), w = VectorXd::Ones(4);
  MatrixXd X(4, 2);
  for (int i = 0; i < 4; ++i) {
    X(i, 0) = 1.0;
    X(i, 1) = i;
    y[i] = i;
  }
  CHECK_THROWS_AS(wls(y, X, w, {0, 0, 0, 0}, {"intercept", "x"}),
                  validation_error);
}

TEST_CASE("p-values reference t with clusters-minus-one degrees of freedom") {
  const Problem p = make_problem(400, 20, 15);
  const RegressionFit fit = wls(p.y, p.X, p.w, p.clusters, p.names);
  // The slope 3 is strongly significant; the p-value must be tiny and the
  // t-stat consistent with coef/se.
  CHECK(fit.tstat(1) == doctest::Approx(fit.coef[1] / fit.se(1)).epsilon(1e-12));
  CHECK(fit.pvalue(1) < 1e-6);
  CHECK(fit.pvalue(1) >= 0.0);
  CHECK(fit.pvalue(0) <= 1.0);
}

TEST_CASE("slope comparison: zero difference on identical problems") {
  const Problem p = make_problem(100, 5, 16);
  SlopeProblem s{p.y, p.X, p.w, p.clusters, p.names, 1};
  HausmanOptions o;
  o.bootstrap_reps = 50;
  o.seed = 5;
  const HausmanResult h = hausman(s, s, o);
  CHECK(h.difference == 0.0);
  CHECK(h.statistic == 0.0);
  CHECK(h.p_value == 1.0);
  CHECK(h.bootstrap_used > 0);
}

TEST_CASE("slope comparison is deterministic in the seed and strategy-stable") {
  const Problem p = make_problem(120, 6, 17);
  // Second specification: drop the true control structure by comparing the
  // same design against a demeaned variant (slopes equal, so the difference
  // distribution is centered near zero).
  SlopeProblem a{p.y, p.X, p.w, p.clusters, p.names, 1};
  MatrixXd X2 = p.X;
  X2.col(1) = p.X.col(1).array() - weighted_mean(p.X.col(1), p.w);
  SlopeProblem b{p.y, X2, p.w, p.clusters, p.names, 1};

  HausmanOptions o;
  o.bootstrap_reps = 99;
  o.seed = 77;
  const HausmanResult h1 = hausman(a, b, o);
  const HausmanResult h2 = hausman(a, b, o);
  CHECK(h1.difference == h2.difference);
  CHECK(h1.se_difference == h2.se_difference);
  CHECK(h1.p_value == h2.p_value);

  o.strategy = HausmanStrategy::InfluenceFunction;
  const HausmanResult h3 = hausman(a, b, o);
  CHECK(h3.bootstrap_used == 0);
  CHECK(std::isfinite(h3.p_value));
  // Identical slopes by FWL: demeaning does not move the focal coefficient,
  // so both strategies must report a zero difference.
  CHECK(std::abs(h1.difference) < 1e-12);
  CHECK(std::abs(h3.difference) < 1e-12);
}

TEST_CASE("slope comparison validates sample alignment") {
  const Problem p = make_problem(60, 4, 18);
  const Problem q = make_problem(61, 4, 18);
  SlopeProblem a{p.y, p.X, p.w, p.clusters, p.names, 1};
  SlopeProblem b{q.y, q.X, q.w, q.clusters, q.names, 1};
  CHECK_THROWS_AS(hausman(a, b), validation_error);

  SlopeProblem c{p.y, p.X, p.w, p.clusters, p.names, 5};
  CHECK_THROWS_AS(hausman(c, c), validation_error);
}
