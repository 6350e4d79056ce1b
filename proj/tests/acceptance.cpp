// Acceptance gate.  Prints exactly one PASS/FAIL/SKIP line per criterion and
// exits nonzero when any criterion that ran failed.  Criteria 1-8 are
// self-contained; criteria 9-14 replicate the published application and run
// only when the replication panel is supplied (FDAUDIT_ADH_DATA environment
// variable, or data/adh.csv relative to the working directory) with columns
// unit,period,y,d,z,weight,cluster.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "core/common.hpp"
#include "core/estimators.hpp"
#include "core/learners.hpp"
#include "core/panel.hpp"
#include "core/regress.hpp"
#include "core/simlab.hpp"
#include "exact_cr1.hpp"

namespace {

using namespace fda;

int g_passed = 0;
int g_failed = 0;
int g_skipped = 0;

std::string fmt(double v, int precision = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

void report(int n, bool ok, const std::string& detail) {
  std::cout << (ok ? "PASS" : "FAIL") << " criterion " << n << ": " << detail
            << "\n";
  ++(ok ? g_passed : g_failed);
}

void skip(int n, const std::string& why) {
  std::cout << "SKIP criterion " << n << ": " << why << "\n";
  ++g_skipped;
}

template <typename F>
void run_criterion(int n, F&& body) {
  try {
    body();
  } catch (const std::exception& e) {
    report(n, false, std::string("exception: ") + e.what());
  }
}

// ---------------------------------------------------------------------------
// 1. FD-OLS bias formula: constant slope change 1, cov(dD, D1) = 0.3,
//    V(dD) = 1  =>  population FD slope = E(S2) + 0.3 = 2.3.
// ---------------------------------------------------------------------------
void criterion_1() {
  DgpSpec spec;
  spec.n_units = 5000;
  spec.mode = AssumptionMode::RandomFd;
  spec.path = PathLaw::Ar1;
  spec.ar1_const = 0.0;
  spec.ar1_slope = 1.3;                 // dD = 0.3 D1 + eps
  spec.ar1_sd = std::sqrt(0.91);        // V(dD) = 0.09 + 0.91 = 1
  spec.s1 = SlopeParams{1.0, 0.0, 0.0, 0.0};
  spec.s2 = SlopeParams{2.0, 0.0, 0.0, 0.0};
  spec.seed = 101;

  OracleSettings st;
  st.n_reps = 500;
  st.tolerance = 0.02;

  const auto t0 = std::chrono::steady_clock::now();
  const MonteCarloReport rep = run_oracle(Theorem::Ovb, spec, st);
  const double secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  const OracleSeries& s = rep.series.at(0);
  const double band = std::max(0.02, 3.0 * s.mc_se);
  const bool target_ok = std::abs(s.target - 2.3) <= 1e-9;
  const bool mean_ok = std::abs(s.mean - 2.3) <= band;
  const bool time_ok = secs <= 120.0;
  report(1, target_ok && mean_ok && time_ok,
         "FD slope mean " + fmt(s.mean, 6) + " vs closed-form target " +
             fmt(s.target, 6) + ", band " + fmt(band, 3) + " (3 mc se = " +
             fmt(3.0 * s.mc_se, 3) + "), 500 reps of n=5000 in " +
             fmt(secs, 3) + "s (limit 120s)");
}

// ---------------------------------------------------------------------------
// 2. Path-weight decomposition: D2 = 0.9 D1 + eps, V(D1)=1, V(eps)=0.05,
//    E(S1)=1, E(S2)=2  =>  weights (5/3, -2/3), pooled slope 1/3.
// ---------------------------------------------------------------------------
void criterion_2() {
  DgpSpec spec;
  spec.n_units = 5000;
  spec.mode = AssumptionMode::RandomPaths;
  spec.path = PathLaw::Ar1;
  spec.ar1_const = 0.0;
  spec.ar1_slope = 0.9;
  spec.ar1_sd = std::sqrt(0.05);
  spec.s1 = SlopeParams{1.0, 0.0, 0.0, 0.0};
  spec.s2 = SlopeParams{2.0, 0.0, 0.0, 0.0};
  spec.seed = 202;

  OracleSettings st;
  st.n_reps = 500;
  st.tolerance = 0.05;

  const MonteCarloReport rep = run_oracle(Theorem::PathWeights, spec, st);
  const OracleSeries& w1 = rep.series.at(0);
  const OracleSeries& w2 = rep.series.at(1);
  const OracleSeries& b = rep.series.at(2);

  const bool targets_ok = std::abs(w1.target - 5.0 / 3.0) <= 1e-9 &&
                          std::abs(w2.target + 2.0 / 3.0) <= 1e-9 &&
                          std::abs(b.target - 1.0 / 3.0) <= 1e-9;
  const bool means_ok = std::abs(w1.mean - 5.0 / 3.0) <= 0.05 &&
                        std::abs(w2.mean + 2.0 / 3.0) <= 0.05 &&
                        std::abs(b.mean - 1.0 / 3.0) <= 0.05;
  const bool pathology_ok = w2.mean < 0.0;  // second weight is negative
  report(2, targets_ok && means_ok && pathology_ok,
         "weights mean (" + fmt(w1.mean, 5) + ", " + fmt(w2.mean, 5) +
             ") vs (5/3, -2/3) +/-0.05; pooled slope mean " + fmt(b.mean, 5) +
             " vs 1/3 +/-0.05; negative second weight shown");
}

// ---------------------------------------------------------------------------
// 3. Binary-treatment positivity: estimated path weights are nonnegative on
//    every binary design (up to rounding).
// ---------------------------------------------------------------------------
void criterion_3() {
  Rng rng(3003);
  int violations = 0;
  int degenerate = 0;
  double min_weight = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 1000; ++i) {
    DgpSpec spec;
    spec.n_units = 300;
    spec.mode = AssumptionMode::RandomPaths;
    spec.initial = InitialLaw::Bernoulli;
    spec.init_p = rng.uniform(0.1, 0.9);
    spec.path = PathLaw::Binary;
    spec.bin_p01 = rng.uniform(0.05, 0.95);
    spec.bin_p11 = rng.uniform(0.05, 0.95);
    spec.s1 = SlopeParams{1.0, 0.0, 0.0, 0.0};
    spec.s2 = SlopeParams{2.0, 0.0, 0.0, 0.0};
    spec.seed = derive_seed(3003, fnv1a("binary-positivity"),
                            static_cast<std::uint64_t>(i));
    try {
      const GeneratedPanel gp = generate(spec, spec.seed);
      const PathWeights pw = path_weights(gp.panel, 0, 1);
      min_weight = std::min({min_weight, pw.omega1, pw.omega2});
      if (pw.omega1 < -1e-10 || pw.omega2 < -1e-10) ++violations;
    } catch (const std::exception&) {
      ++degenerate;  // a draw with no treatment variance has no weights
    }
  }
  report(3, violations == 0 && degenerate <= 5,
         "1000 random binary designs (n=300): " + std::to_string(violations) +
             " weights below -1e-10 (minimum seen " + fmt(min_weight, 4) +
             "), " + std::to_string(degenerate) + " degenerate draws");
}

// ---------------------------------------------------------------------------
// 4. Level-adjusted slope: D2 = D1 + eps, S2 = 1 + D1^2, D1 standard normal
//    =>  beta_D1 = E(1 + D1^2) = 2, recovered by both learner families.
// ---------------------------------------------------------------------------
void criterion_4() {
  DgpSpec spec;
  spec.n_units = 20000;
  spec.mode = AssumptionMode::Sequential;
  spec.path = PathLaw::Ar1;
  spec.ar1_const = 0.0;
  spec.ar1_slope = 1.0;  // dD = eps, independent of D1
  spec.ar1_sd = 1.0;
  spec.s2 = SlopeParams{1.0, 0.0, 1.0, 0.0};  // S2 = 1 + D1^2
  spec.seed = 404;

  const bool target_ok = std::abs(target_beta_d1_closed(spec) - 2.0) <= 1e-9;

  OracleSettings st;
  st.n_reps = 200;
  st.tolerance = 0.05;
  st.folds = 5;

  st.learner = LearnerSpec{};  // penalized polynomial, degree 3, plug-in
  const MonteCarloReport lasso = run_oracle(Theorem::BetaD1, spec, st);

  LearnerSpec po;
  po.kind = LearnerKind::PolyOls;
  po.degree = 3;
  st.learner = po;
  const MonteCarloReport ols = run_oracle(Theorem::BetaD1, spec, st);

  const double m_lasso = lasso.series.at(0).mean;
  const double m_ols = ols.series.at(0).mean;
  const bool means_ok =
      std::abs(m_lasso - 2.0) <= 0.05 && std::abs(m_ols - 2.0) <= 0.05;
  report(4, target_ok && means_ok,
         "adjusted slope mean " + fmt(m_lasso, 5) + " (lasso) and " +
             fmt(m_ols, 5) +
             " (poly-ols) vs closed-form target 2.0 +/-0.05, 200 reps of "
             "n=20000");
}

// ---------------------------------------------------------------------------
// 5. Placebo size: under a design where the treatment change is as good as
//    random given the two earlier levels, the locally robust placebo test at
//    nominal 5% rejects in at most 7% of replications.
// ---------------------------------------------------------------------------
void criterion_5() {
  DgpSpec spec;
  spec.n_units = 2000;
  spec.n_periods = 3;
  spec.mode = AssumptionMode::Sequential3p;
  spec.path = PathLaw::Ar1;
  spec.ar1_const = 0.0;
  spec.ar1_slope = 0.8;
  spec.ar1_sd = 0.6;
  spec.s0 = SlopeParams{1.0, 0.0, 0.0, 0.0};
  spec.s1 = SlopeParams{1.0, 0.5, 0.0, 0.1};
  spec.s2 = SlopeParams{1.0, 0.3, 0.2, 0.1};
  spec.seed = 505;

  OracleSettings st;
  st.n_reps = 500;
  st.rejection_bound = 0.07;
  st.folds = 5;
  st.learner = LearnerSpec{};  // penalized polynomial nuisances

  const MonteCarloReport rep = run_oracle(Theorem::Placebo, spec, st);
  const OracleSeries& slope = rep.series.at(0);
  const OracleSeries& rate = rep.series.at(1);
  report(5, rate.mean <= 0.07,
         "locally robust placebo rejection rate " + fmt(rate.mean, 4) +
             " over 500 reps (bound 0.07); mean placebo slope " +
             fmt(slope.mean, 3));
}

// ---------------------------------------------------------------------------
// 6. Supplied-nuisance identity: the adjusted estimator fed the generating
//    process's exact conditional expectations equals the hand-rolled
//    residual-on-residual regression.
// ---------------------------------------------------------------------------
void criterion_6() {
  DgpSpec spec;
  spec.n_units = 3000;
  spec.mode = AssumptionMode::Sequential;
  spec.path = PathLaw::Ar1;
  spec.ar1_const = 0.1;
  spec.ar1_slope = 0.8;
  spec.ar1_sd = 0.7;
  spec.s1 = SlopeParams{1.0, 0.4, 0.0, 0.1};
  spec.s2 = SlopeParams{1.5, 0.2, 0.3, 0.1};
  spec.theta_sd = 0.5;
  spec.u_sd = 0.5;

  double worst = 0.0;
  for (const std::uint64_t seed :
       {std::uint64_t{1}, std::uint64_t{77}, std::uint64_t{2026},
        std::uint64_t{424242}, std::uint64_t{987654321}}) {
    const GeneratedPanel gp = generate(spec, seed);
    const FdView fd = first_differences(gp.panel);
    const int n = fd.n_rows();

    VectorXd eta(n);
    VectorXd gamma(n);
    for (int i = 0; i < n; ++i) {
      eta(i) = true_eta(spec, fd.rows[static_cast<std::size_t>(i)].d_lag);
      gamma(i) = true_gamma(spec, fd.rows[static_cast<std::size_t>(i)].d_lag);
    }

    EstimatorOptions opts;
    opts.with_hausman = false;
    const DdmlResult got = ddml_with_nuisances(fd, eta, gamma, opts);

    MatrixXd X(n, 2);
    X.col(0).setOnes();
    X.col(1) = fd.dd() - eta;
    const RegressionFit ref =
        wls(fd.dy() - gamma, X, fd.weights(), fd.clusters(),
            {"intercept", "delta_d_resid"});
    worst = std::max({worst, std::abs(got.beta_d1 - ref.coef(1)),
                      std::abs(got.se - ref.se(1))});
  }
  report(6, worst <= 1e-10,
         "adjusted estimator with exact nuisances vs direct residual "
         "regression over 5 seeds: max |difference| " +
             fmt(worst, 3) + " (limit 1e-10)");
}

// ---------------------------------------------------------------------------
// 7. Numerical infrastructure: network gradients, penalized-fit duality gap,
//    exact-arithmetic clustered variance fixture, two-step projection.
// ---------------------------------------------------------------------------
void criterion_7() {
  // (a) Analytic network gradients vs central finite differences.
  Rng rng(707);
  const int n = 20, p = 3;
  MatrixXd X(n, p);
  VectorXd y(n);
  VectorXd wn(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < p; ++j) X(i, j) = rng.normal();
    y(i) = std::sin(X(i, 0)) + 0.5 * X(i, 1) * X(i, 2) + 0.1 * rng.normal();
    wn(i) = rng.uniform(0.5, 1.5);
  }
  wn /= wn.sum();
  Mlp net = Mlp::init({p, 6, 4, 1}, rng);
  // init() zeroes the output layer; move every parameter to a generic point
  // so the backpropagated hidden-layer gradients are nonzero.
  for (auto& W : net.W) {
    for (Eigen::Index r = 0; r < W.rows(); ++r) {
      for (Eigen::Index c = 0; c < W.cols(); ++c) W(r, c) += rng.uniform(-0.3, 0.3);
    }
  }
  for (auto& b : net.b) {
    for (Eigen::Index r = 0; r < b.size(); ++r) b[r] += rng.uniform(-0.3, 0.3);
  }
  const Mlp::Gradients grad = net.gradient(X, y, wn);
  const double h = 1e-6;
  double worst_grad = 0.0;
  const int probes[5][3] = {
      {0, 0, 0}, {0, 5, 2}, {1, 3, 1}, {1, 0, 0}, {2, 0, 3}};
  for (const auto& pr : probes) {
    const int l = pr[0], r = pr[1], c = pr[2];
    const double save = net.W[static_cast<std::size_t>(l)](r, c);
    net.W[static_cast<std::size_t>(l)](r, c) = save + h;
    const double lp = net.loss(X, y, wn);
    net.W[static_cast<std::size_t>(l)](r, c) = save - h;
    const double lm = net.loss(X, y, wn);
    net.W[static_cast<std::size_t>(l)](r, c) = save;
    const double fd = (lp - lm) / (2.0 * h);
    const double a = grad.W[static_cast<std::size_t>(l)](r, c);
    worst_grad = std::max(
        worst_grad, std::abs(a - fd) / std::max(1e-8, std::abs(a) + std::abs(fd)));
  }
  const bool grad_ok = worst_grad <= 1e-5;

  // (b) Duality gap of the converged penalized fit.
  const int nl = 200, pl = 6;
  MatrixXd Xl(nl, pl);
  VectorXd yl(nl);
  VectorXd wl(nl);
  for (int i = 0; i < nl; ++i) {
    for (int j = 0; j < pl; ++j) Xl(i, j) = rng.normal();
    yl(i) = 1.5 * Xl(i, 0) - 0.8 * Xl(i, 3) + 0.5 * rng.normal();
    wl(i) = rng.uniform(0.5, 2.0);
  }
  LassoSettings ls;
  const LassoFit lf = fit_lasso(Xl, yl, wl, ls);
  const VectorXd wnorm = wl * (static_cast<double>(nl) / wl.sum());
  const double ybar = yl.dot(wnorm) / wnorm.sum();
  const double sst = (yl.array() - ybar).square().matrix().dot(wnorm);
  const bool gap_ok = lf.gap <= lf.gap_tolerance &&
                      lf.gap <= 1e-8 * std::max(1.0, sst) * (1.0 + 1e-12);

  // (c) Clustered sandwich variance vs the exact rational-arithmetic fixture.
  const exact_cr1::Fixture fx = exact_cr1::fixture();
  const exact_cr1::Reference ref =
      exact_cr1::compute(fx.y, fx.x, fx.w, fx.cluster);
  const int nf = static_cast<int>(fx.y.size());
  MatrixXd Xf(nf, 2);
  VectorXd yf(nf), wf(nf);
  std::vector<int> cf(fx.cluster.begin(), fx.cluster.end());
  for (int i = 0; i < nf; ++i) {
    Xf(i, 0) = 1.0;
    Xf(i, 1) = fx.x[static_cast<std::size_t>(i)];
    yf(i) = fx.y[static_cast<std::size_t>(i)];
    wf(i) = fx.w[static_cast<std::size_t>(i)];
  }
  const RegressionFit fit = wls(yf, Xf, wf, cf, {"intercept", "x"});
  double worst_cr1 = 0.0;
  for (int j = 0; j < 2; ++j) {
    worst_cr1 = std::max(worst_cr1, std::abs(fit.coef(j) - ref.coef[j]));
    for (int k = 0; k < 2; ++k) {
      worst_cr1 = std::max(
          worst_cr1,
          std::abs(fit.vcov(j, k) -
                   ref.vcov[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)]));
    }
  }
  const bool cr1_ok = worst_cr1 <= 1e-10;

  // (d) Two-step residualized slope vs the joint regression.
  const int ng = 150;
  MatrixXd C(ng, 3);
  VectorXd xg(ng), yg(ng), wg(ng);
  std::vector<int> cg(static_cast<std::size_t>(ng));
  for (int i = 0; i < ng; ++i) {
    C(i, 0) = 1.0;
    C(i, 1) = rng.normal();
    C(i, 2) = rng.uniform(-1.0, 1.0);
    xg(i) = 0.6 * C(i, 1) - 0.3 * C(i, 2) + rng.normal();
    yg(i) = 2.0 + 1.4 * xg(i) - 0.9 * C(i, 1) + 0.5 * C(i, 2) + rng.normal();
    wg(i) = rng.uniform(0.5, 1.5);
    cg[static_cast<std::size_t>(i)] = i / 5;
  }
  const VectorXd ry = fwl_residualize(yg, C, wg);
  const VectorXd rx = fwl_residualize(xg, C, wg);
  MatrixXd R(ng, 1);
  R.col(0) = rx;
  const RegressionFit two_step = wls(ry, R, wg, cg, {"x"});
  MatrixXd J(ng, 4);
  J.leftCols(3) = C;
  J.col(3) = xg;
  const RegressionFit joint =
      wls(yg, J, wg, cg, {"intercept", "c1", "c2", "x"});
  const double fwl_diff = std::abs(two_step.coef(0) - joint.coef(3));
  const bool fwl_ok = fwl_diff <= 1e-10;

  report(7, grad_ok && gap_ok && cr1_ok && fwl_ok,
         "network gradient max rel err " + fmt(worst_grad, 3) +
             " (limit 1e-5); duality gap " + fmt(lf.gap, 3) + " <= " +
             fmt(1e-8 * std::max(1.0, sst), 3) +
             "; clustered vcov vs exact fixture max diff " + fmt(worst_cr1, 3) +
             " (limit 1e-10); two-step vs joint slope diff " + fmt(fwl_diff, 3) +
             " (limit 1e-10)");
}

// ---------------------------------------------------------------------------
// 8. Cross-fitting leakage: adding 1000 to the held-out fold's targets must
//    leave that fold's predictions bit-identical, for every learner family.
// ---------------------------------------------------------------------------
void criterion_8() {
  Rng rng(808);
  const int n = 240, L = 4;
  MatrixXd vars(n, 1);
  VectorXd target(n), w(n);
  std::vector<int> fold_of_row(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    vars(i, 0) = rng.uniform(-2.0, 2.0);
    target(i) = std::sin(vars(i, 0)) + 0.4 * vars(i, 0) + 0.3 * rng.normal();
    w(i) = rng.uniform(0.5, 1.5);
    fold_of_row[static_cast<std::size_t>(i)] = i % L;
  }
  VectorXd perturbed = target;
  for (int i = 0; i < n; ++i) {
    if (fold_of_row[static_cast<std::size_t>(i)] == 2) perturbed(i) += 1000.0;
  }

  std::string failing;
  for (const LearnerKind kind :
       {LearnerKind::PolyLasso, LearnerKind::Mlp, LearnerKind::PolyOls}) {
    LearnerSpec spec;
    spec.kind = kind;
    spec.degree = 3;
    spec.mlp_iters = 300;
    spec.seed = 812;
    const CrossFitResult base =
        cross_fit(vars, {"d1"}, target, w, fold_of_row, L, spec, "eta");
    const CrossFitResult alt =
        cross_fit(vars, {"d1"}, perturbed, w, fold_of_row, L, spec, "eta");
    for (int i = 0; i < n; ++i) {
      if (fold_of_row[static_cast<std::size_t>(i)] != 2) continue;
      const double a = base.predictions(i);
      const double b = alt.predictions(i);
      if (std::memcmp(&a, &b, sizeof(double)) != 0) {
        failing += (failing.empty() ? "" : ", ") + spec.describe();
        break;
      }
    }
  }
  report(8, failing.empty(),
         failing.empty()
             ? "held-out predictions bit-identical under target perturbation "
               "for all three learner families"
             : "leakage detected for: " + failing);
}

// ---------------------------------------------------------------------------
// Replication criteria.  The panel: 392 industries x 3 periods, outcome and
// treatment changes weighted by start-of-sample employment, clustered on 135
// coarser industry codes, with an instrument column.
// ---------------------------------------------------------------------------

std::string locate_replication_data() {
  if (const char* env = std::getenv("FDAUDIT_ADH_DATA"); env && *env) {
    return env;
  }
  for (const char* cand : {"data/adh.csv", "../data/adh.csv"}) {
    if (std::ifstream probe(cand); probe.good()) return cand;
  }
  return {};
}

struct ReplicationData {
  PanelDataset panel;    // treatment = import-penetration change driver
  PanelDataset panel_z;  // same file with the instrument mapped as treatment
};

ReplicationData load_replication(const std::string& path) {
  ColumnMap cm;
  cm.z = "z";
  cm.weight = "weight";
  cm.cluster = "cluster";
  ColumnMap zm;
  zm.d = "z";  // reduced-form runs treat the instrument as the treatment
  zm.weight = "weight";
  zm.cluster = "cluster";
  return ReplicationData{load_panel_file(path, cm), load_panel_file(path, zm)};
}

bool band(double got, double want, double tol) {
  return std::abs(got - want) <= tol;
}

void criterion_9(const ReplicationData& data) {
  const FdView fd = first_differences(data.panel);
  const FdView last = fd.filter_pair(fd.n_pairs() - 1);
  const RegressionFit fit = fd_ols(last);
  const double slope = fit.coef(1);
  const double se = fit.se(1);
  const bool ok = band(slope, -0.78, 0.005) && band(se, 0.22, 0.01) &&
                  fit.n_obs == 392;
  report(9, ok,
         "final-pair FD slope " + fmt(slope, 4) + " (" + fmt(se, 4) +
             "), N=" + std::to_string(fit.n_obs) +
             " vs -0.78 (0.22), N=392 [+/-0.005 coef, +/-0.01 se]");
}

void criterion_10(const ReplicationData& data) {
  const FdView fd = first_differences(data.panel);
  const BalanceResult br = balance_test(fd.filter_pair(fd.n_pairs() - 1));
  const bool ok = band(br.slope, 0.74, 0.005) && band(br.se, 0.16, 0.01);
  report(10, ok,
         "balance slope " + fmt(br.slope, 4) + " (" + fmt(br.se, 4) +
             ") vs 0.74 (0.16) [+/-0.005 coef, +/-0.01 se]");
}

void criterion_11(const ReplicationData& data) {
  const int T = data.panel.n_periods();
  const PathWeights pw = path_weights(data.panel, T - 2, T - 1);
  const bool ok = band(pw.omega2, 1.3, 0.05) && band(pw.omega1, -0.3, 0.05);
  report(11, ok,
         "period weights " + fmt(pw.omega2, 4) + " (final) / " +
             fmt(pw.omega1, 4) + " (earlier) vs 1.3 / -0.3 [+/-0.05]");
}

void criterion_12(const ReplicationData& data) {
  const FdView fd = first_differences(data.panel);
  const RegressionFit fit = stacked_naive(fd);
  const double slope = fit.coef(1);
  const double se = fit.se(1);
  const bool ok = band(slope, -0.81, 0.005) && band(se, 0.16, 0.01) &&
                  fit.n_obs == 784;
  report(12, ok,
         "stacked FD slope " + fmt(slope, 4) + " (" + fmt(se, 4) +
             "), N=" + std::to_string(fit.n_obs) +
             " vs -0.81 (0.16), N=784 [+/-0.005 coef, +/-0.01 se]");
}

void criterion_13(const ReplicationData& data) {
  const FdView fd = first_differences(data.panel);
  const RegressionFit fit =
      fd_ols(fd.filter_pair(fd.n_pairs() - 1), /*use_instrument=*/true);
  const double slope = fit.coef(1);
  const double se = fit.se(1);
  const bool ok = band(slope, -1.40, 0.005) && band(se, 0.38, 0.01);
  report(13, ok,
         "reduced-form slope " + fmt(slope, 4) + " (" + fmt(se, 4) +
             ") vs -1.40 (0.38) [+/-0.005 coef, +/-0.01 se]");
}

// One learner-dependent row of the replication table.
struct Row {
  std::string label;
  double coef = 0;
  double se = 0;
  double p = 1;
  bool reject = false;       // significant at 5%
  bool has_hausman = false;
  double hausman_p = 1;
  std::string learner;
  double target = 0;
  bool expect_reject = false;
};

bool row_ok(const Row& r) {
  const bool sign_ok = r.coef < 0.0;
  const bool coef_ok = band(r.coef, r.target, 0.15);
  const bool sig_ok = r.reject == r.expect_reject;
  const bool hausman_ok = !r.has_hausman || r.hausman_p > 0.05;
  return sign_ok && coef_ok && sig_ok && hausman_ok;
}

void print_row(const Row& r) {
  std::ostringstream line;
  line << "  row " << r.label << ": " << fmt(r.coef, 4) << " (" << fmt(r.se, 4)
       << "), p " << fmt(r.p, 3) << (r.reject ? " [significant]"
                                              : " [insignificant]");
  if (r.has_hausman) line << ", naive-vs-adjusted p " << fmt(r.hausman_p, 3);
  line << ", target " << fmt(r.target, 3) << " -> "
       << (row_ok(r) ? "ok" : "OUT OF BAND") << "\n    learner: " << r.learner;
  std::cout << line.str() << "\n";
}

void criterion_14(const ReplicationData& data) {
  const FdView fd = first_differences(data.panel);
  const FdView last = fd.filter_pair(fd.n_pairs() - 1);
  const FdView fdz = first_differences(data.panel_z);
  const FdView lastz = fdz.filter_pair(fdz.n_pairs() - 1);

  const FoldAssignment folds = assign_folds(data.panel, 5, 7);
  const FoldAssignment folds_z = assign_folds(data.panel_z, 5, 7);

  LearnerSpec lasso;  // penalized degree-3 polynomial, plug-in penalty, refit
  LearnerSpec mlp;
  mlp.kind = LearnerKind::Mlp;  // one hidden layer of 10, 1000 steps, rate 1

  std::vector<Row> rows;
  auto add_ddml = [&rows](const std::string& label, const DdmlResult& r,
                          double target) {
    rows.push_back(Row{label, r.beta_d1, r.se, r.p_value,
                       r.p_value < 0.05, r.hausman_computed,
                       r.hausman.p_value, r.learner, target, false});
  };

  add_ddml("1 level-adjusted, penalized-poly",
           ddml_beta_d1(last, Conditioning::D1, lasso, folds), -0.60);
  add_ddml("2 level-adjusted, network",
           ddml_beta_d1(last, Conditioning::D1, mlp, folds), -0.61);

  const PlaceboResult pl = placebo_test(fd, lasso, folds);
  rows.push_back(Row{"3 placebo locally robust, penalized-poly", pl.lr_slope,
                     pl.lr_se, pl.lr_p, pl.lr_reject, false, 1.0, pl.learner,
                     -0.59, true});
  const PlaceboResult pn = placebo_test(fd, mlp, folds);
  rows.push_back(Row{"4 placebo locally robust, network", pn.lr_slope,
                     pn.lr_se, pn.lr_p, pn.lr_reject, false, 1.0, pn.learner,
                     -0.66, true});

  add_ddml("5 stacked adjusted, penalized-poly",
           stacked_ddml(fd, lasso, folds), -0.54);
  add_ddml("6 stacked adjusted, network", stacked_ddml(fd, mlp, folds), -0.52);

  add_ddml("7 reduced-form adjusted, penalized-poly",
           ddml_beta_d1(lastz, Conditioning::D1, lasso, folds_z), -0.86);
  add_ddml("8 reduced-form adjusted, network",
           ddml_beta_d1(lastz, Conditioning::D1, mlp, folds_z), -0.73);

  int ok_rows = 0;
  for (const Row& r : rows) {
    print_row(r);
    if (row_ok(r)) ++ok_rows;
  }
  report(14, ok_rows == 8,
         std::to_string(ok_rows) +
             "/8 learner-dependent rows match sign, significance pattern, "
             "and coefficient band +/-0.15 (learner specs above)");
}

}  // namespace

int main() {
  run_criterion(1, criterion_1);
  run_criterion(2, criterion_2);
  run_criterion(3, criterion_3);
  run_criterion(4, criterion_4);
  run_criterion(5, criterion_5);
  run_criterion(6, criterion_6);
  run_criterion(7, criterion_7);
  run_criterion(8, criterion_8);

  const std::string data_path = locate_replication_data();
  if (data_path.empty()) {
    for (int n = 9; n <= 14; ++n) {
      skip(n,
           "replication dataset not supplied (set FDAUDIT_ADH_DATA or place "
           "data/adh.csv)");
    }
  } else {
    try {
      const ReplicationData data = load_replication(data_path);
      run_criterion(9, [&] { criterion_9(data); });
      run_criterion(10, [&] { criterion_10(data); });
      run_criterion(11, [&] { criterion_11(data); });
      run_criterion(12, [&] { criterion_12(data); });
      run_criterion(13, [&] { criterion_13(data); });
      run_criterion(14, [&] { criterion_14(data); });
    } catch (const std::exception& e) {
      for (int n = 9; n <= 14; ++n) {
        report(n, false,
               std::string("replication dataset failed to load: ") + e.what());
      }
    }
  }

  std::cout << "acceptance: " << g_passed << " passed, " << g_failed
            << " failed, " << g_skipped << " skipped\n";
  return g_failed == 0 ? 0 : 1;
}
