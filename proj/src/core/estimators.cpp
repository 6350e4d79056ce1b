#include "estimators.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace fda {

namespace {

void ensure_rows(const FdView& fd) {
  if (fd.rows.empty()) {
    throw validation_error("no first-difference rows to estimate on");
  }
}

void ensure_variation(const std::string& what, const VectorXd& x,
                      const VectorXd& w) {
  const double m = weighted_mean(x, w);
  const double v = weighted_var(x, w);
  if (v <= 1e-14 * std::max(1.0, m * m)) {
    throw validation_error(what + " has (numerically) zero variance");
  }
}

std::vector<int> row_folds(const FdView& fd, const FoldAssignment& fa) {
  if (fa.fold_of_unit.size() != fd.units.size()) {
    throw validation_error(
        "fold assignment does not match the panel the FD rows came from");
  }
  std::vector<int> folds(fd.rows.size());
  for (std::size_t i = 0; i < fd.rows.size(); ++i) {
    folds[i] = fa.fold_of_unit[static_cast<std::size_t>(fd.rows[i].unit)];
  }
  return folds;
}

MatrixXd with_intercept(const VectorXd& x) {
  MatrixXd X(x.size(), 2);
  X.col(0) = VectorXd::Ones(x.size());
  X.col(1) = x;
  return X;
}

// Second-stage residual-on-residual regression shared by the cross-fitted
// estimators.  Guards against a treatment change fully absorbed by the
// nuisance.
RegressionFit residual_regression(const VectorXd& dy_r, const VectorXd& dd_r,
                                  const VectorXd& dd_raw, const VectorXd& w,
                                  const std::vector<int>& clusters,
                                  VcovKind vcov) {
  const double v_raw = weighted_var(dd_raw, w);
  const double v_res = weighted_var(dd_r, w);
  if (v_res < 1e-12 * v_raw) {
    throw numeric_error(
        "treatment change is fully explained by the conditioning variables; "
        "the adjusted slope is unidentified");
  }
  return wls(dy_r, with_intercept(dd_r), w, clusters,
             {"intercept", "delta_d_resid"}, WlsOptions{vcov});
}

std::string pair_label(const FdView& fd, int pair) {
  return std::to_string(fd.periods[static_cast<std::size_t>(pair)]) + "-" +
         std::to_string(fd.periods[static_cast<std::size_t>(pair) + 1]);
}

// Design for the pooled (stacked) regression: intercept, slope column,
// and an indicator per FD period beyond the first.
std::pair<MatrixXd, std::vector<std::string>> stacked_design(
    const FdView& fd, const VectorXd& slope_col) {
  const int R = fd.n_pairs();
  const auto n = slope_col.size();
  MatrixXd X(n, 2 + std::max(0, R - 1));
  std::vector<std::string> names{"intercept", "delta_d"};
  X.col(0) = VectorXd::Ones(n);
  X.col(1) = slope_col;
  for (int p = 1; p < R; ++p) {
    VectorXd ind = VectorXd::Zero(n);
    for (std::size_t i = 0; i < fd.rows.size(); ++i) {
      if (fd.rows[i].pair == p) ind[static_cast<Eigen::Index>(i)] = 1.0;
    }
    X.col(1 + p) = ind;
    names.push_back("fd:" + pair_label(fd, p));
  }
  return {X, names};
}

}  // namespace

BalanceResult balance_test(const FdView& fd, double alpha, VcovKind vcov) {
  ensure_rows(fd);
  const VectorXd d1 = fd.d_lag();
  const VectorXd w = fd.weights();
  const double v = weighted_var(d1, w);
  if (v <= 1e-14 * std::max(1.0, std::pow(weighted_mean(d1, w), 2))) {
    throw validation_error(
        "baseline treatment has no variation; the balance diagnostic is "
        "vacuous");
  }
  BalanceResult out;
  out.alpha = alpha;
  out.fit = wls(fd.dd(), with_intercept(d1), w, fd.clusters(),
                {"intercept", "d1"}, WlsOptions{vcov});
  out.slope = out.fit.coef[1];
  out.se = out.fit.se(1);
  out.p_value = out.fit.pvalue(1);
  out.correlated = out.p_value < alpha;
  return out;
}

RegressionFit fd_ols(const FdView& fd, bool use_instrument, VcovKind vcov) {
  ensure_rows(fd);
  if (use_instrument && !fd.has_z) {
    throw validation_error(
        "reduced form requested but the panel has no instrument column");
  }
  const VectorXd x = use_instrument ? fd.dz() : fd.dd();
  const VectorXd w = fd.weights();
  ensure_variation(use_instrument ? "instrument change" : "treatment change",
                   x, w);
  return wls(fd.dy(), with_intercept(x), w, fd.clusters(),
             {"intercept", use_instrument ? "delta_z" : "delta_d"},
             WlsOptions{vcov});
}

PathWeights path_weights(const PanelDataset& panel, int t1, int t2) {
  if (t1 < 0 || t1 >= panel.n_periods() || t2 < 0 ||
      t2 >= panel.n_periods() || t1 == t2) {
    throw validation_error("path weights need two distinct valid periods");
  }
  const int G = panel.n_units();
  VectorXd d1(G), d2(G), w(G);
  for (int g = 0; g < G; ++g) {
    d1[g] = panel.dv(g, t1);
    d2[g] = panel.dv(g, t2);
    w[g] = panel.unit_weight[g];
  }
  PathWeights out;
  out.period1 = panel.periods[static_cast<std::size_t>(t1)];
  out.period2 = panel.periods[static_cast<std::size_t>(t2)];
  out.var_d1 = weighted_var(d1, w);
  out.var_d2 = weighted_var(d2, w);
  out.cov_d12 = weighted_cov(d1, d2, w);
  const double denom = out.var_d1 + out.var_d2 - 2.0 * out.cov_d12;
  if (denom <= 1e-12 * std::max({out.var_d1, out.var_d2, 1e-300})) {
    throw validation_error(
        "treatment change between the two periods has no variance; "
        "decomposition weights undefined");
  }
  out.omega1 = (out.var_d1 - out.cov_d12) / denom;
  out.omega2 = 1.0 - out.omega1;  // exact complement by construction
  out.any_negative = out.omega1 < 0.0 || out.omega2 < 0.0;
  return out;
}

DdmlResult ddml_beta_d1(const FdView& fd, Conditioning conditioning,
                        const LearnerSpec& spec, const FoldAssignment& folds,
                        const EstimatorOptions& options) {
  ensure_rows(fd);
  const auto n = static_cast<Eigen::Index>(fd.rows.size());

  MatrixXd vars;
  std::vector<std::string> var_names;
  if (conditioning == Conditioning::D1) {
    vars.resize(n, 1);
    vars.col(0) = fd.d_lag();
    var_names = {"d1"};
  } else {
    const VectorXd d0 = fd.d_lag2();
    if (!d0.allFinite()) {
      throw validation_error(
          "conditioning on the pre-baseline treatment requires a third "
          "period before the pair being differenced");
    }
    vars.resize(n, 2);
    vars.col(0) = d0;
    vars.col(1) = fd.d_lag();
    var_names = {"d0", "d1"};
  }

  const std::vector<int> fold_of_row = row_folds(fd, folds);
  const VectorXd dd = fd.dd();
  const VectorXd dy = fd.dy();
  const VectorXd w = fd.weights();
  ensure_variation("treatment change", dd, w);

  CrossFitResult eta = cross_fit(vars, var_names, dd, w, fold_of_row, folds.L,
                                 spec, "eta", options.threads);
  CrossFitResult gamma = cross_fit(vars, var_names, dy, w, fold_of_row,
                                   folds.L, spec, "gamma", options.threads);

  const VectorXd dd_r = dd - eta.predictions;
  const VectorXd dy_r = dy - gamma.predictions;
  const std::vector<int> clusters = fd.clusters();

  DdmlResult out;
  out.fit = residual_regression(dy_r, dd_r, dd, w, clusters, options.vcov);
  out.beta_d1 = out.fit.coef[1];
  out.se = out.fit.se(1);
  out.p_value = out.fit.pvalue(1);
  out.n = out.fit.n_obs;
  out.n_clusters = out.fit.n_clusters;
  out.eta_folds = std::move(eta.folds);
  out.gamma_folds = std::move(gamma.folds);
  out.learner = spec.describe();
  out.conditioning = var_names;
  out.folds = folds.L;
  out.seed = spec.seed;

  const RegressionFit naive = fd_ols(fd, false, options.vcov);
  out.naive_beta = naive.coef[1];
  out.naive_se = naive.se(1);

  if (options.with_hausman) {
    SlopeProblem pa{dy, with_intercept(dd), w, clusters,
                    {"intercept", "delta_d"}, 1};
    SlopeProblem pb{dy_r, with_intercept(dd_r), w, clusters,
                    {"intercept", "delta_d_resid"}, 1};
    out.hausman = hausman(pa, pb, options.hausman);
    out.hausman_computed = true;
  }
  return out;
}

DdmlResult ddml_with_nuisances(const FdView& fd, const VectorXd& eta_hat,
                               const VectorXd& gamma_hat,
                               const EstimatorOptions& options) {
  ensure_rows(fd);
  const auto n = static_cast<Eigen::Index>(fd.rows.size());
  if (eta_hat.size() != n || gamma_hat.size() != n) {
    throw validation_error(
        "supplied nuisance vectors do not match the FD row count");
  }
  const VectorXd dd = fd.dd();
  const VectorXd dy = fd.dy();
  const VectorXd w = fd.weights();
  const VectorXd dd_r = dd - eta_hat;
  const VectorXd dy_r = dy - gamma_hat;
  const std::vector<int> clusters = fd.clusters();

  DdmlResult out;
  out.fit = residual_regression(dy_r, dd_r, dd, w, clusters, options.vcov);
  out.beta_d1 = out.fit.coef[1];
  out.se = out.fit.se(1);
  out.p_value = out.fit.pvalue(1);
  out.n = out.fit.n_obs;
  out.n_clusters = out.fit.n_clusters;
  out.learner = "supplied-nuisances";

  const RegressionFit naive = fd_ols(fd, false, options.vcov);
  out.naive_beta = naive.coef[1];
  out.naive_se = naive.se(1);
  if (options.with_hausman) {
    SlopeProblem pa{dy, with_intercept(dd), w, clusters,
                    {"intercept", "delta_d"}, 1};
    SlopeProblem pb{dy_r, with_intercept(dd_r), w, clusters,
                    {"intercept", "delta_d_resid"}, 1};
    out.hausman = hausman(pa, pb, options.hausman);
    out.hausman_computed = true;
  }
  return out;
}

RegressionFit stacked_naive(const FdView& fd, VcovKind vcov) {
  ensure_rows(fd);
  if (fd.n_pairs() < 2) {
    throw validation_error(
        "stacked estimation needs at least 3 periods (2 FD rows per unit)");
  }
  const VectorXd dd = fd.dd();
  const VectorXd w = fd.weights();
  ensure_variation("treatment change", dd, w);
  auto [X, names] = stacked_design(fd, dd);
  return wls(fd.dy(), X, w, fd.clusters(), names, WlsOptions{vcov});
}

DdmlResult stacked_ddml(const FdView& fd, const LearnerSpec& spec,
                        const FoldAssignment& folds,
                        const EstimatorOptions& options) {
  ensure_rows(fd);
  const int R = fd.n_pairs();
  if (R < 2) {
    throw validation_error(
        "stacked estimation needs at least 3 periods (2 FD rows per unit)");
  }
  const auto n = static_cast<Eigen::Index>(fd.rows.size());
  const VectorXd dd = fd.dd();
  const VectorXd dy = fd.dy();
  const VectorXd w = fd.weights();
  ensure_variation("treatment change", dd, w);
  const std::vector<int> fold_of_row = row_folds(fd, folds);

  // Nuisances are fit within each FD period separately: both the training
  // folds and the standardization constants are period-specific.
  VectorXd eta_hat = VectorXd::Zero(n);
  VectorXd gamma_hat = VectorXd::Zero(n);
  DdmlResult out;
  for (int p = 0; p < R; ++p) {
    std::vector<Eigen::Index> idx;
    for (std::size_t i = 0; i < fd.rows.size(); ++i) {
      if (fd.rows[i].pair == p) idx.push_back(static_cast<Eigen::Index>(i));
    }
    const auto np = static_cast<Eigen::Index>(idx.size());
    MatrixXd vars(np, 1);
    VectorXd dd_p(np), dy_p(np), w_p(np);
    std::vector<int> folds_p(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      vars(ii, 0) = fd.rows[static_cast<std::size_t>(idx[i])].d_lag;
      dd_p[ii] = dd[idx[i]];
      dy_p[ii] = dy[idx[i]];
      w_p[ii] = w[idx[i]];
      folds_p[i] = fold_of_row[static_cast<std::size_t>(idx[i])];
    }
    const std::string tag = pair_label(fd, p);
    CrossFitResult eta =
        cross_fit(vars, {"d1"}, dd_p, w_p, folds_p, folds.L, spec,
                  "eta:" + tag, options.threads);
    CrossFitResult gamma =
        cross_fit(vars, {"d1"}, dy_p, w_p, folds_p, folds.L, spec,
                  "gamma:" + tag, options.threads);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      eta_hat[idx[i]] = eta.predictions[ii];
      gamma_hat[idx[i]] = gamma.predictions[ii];
    }
    for (auto& d : eta.folds) out.eta_folds.push_back(d);
    for (auto& d : gamma.folds) out.gamma_folds.push_back(d);
  }

  const VectorXd dd_r = dd - eta_hat;
  const VectorXd dy_r = dy - gamma_hat;
  const double v_res = weighted_var(dd_r, w);
  if (v_res < 1e-12 * weighted_var(dd, w)) {
    throw numeric_error(
        "treatment change is fully explained by the conditioning variables; "
        "the adjusted slope is unidentified");
  }
  const std::vector<int> clusters = fd.clusters();
  auto [Xr, names_r] = stacked_design(fd, dd_r);
  names_r[1] = "delta_d_resid";
  out.fit = wls(dy_r, Xr, w, clusters, names_r, WlsOptions{options.vcov});
  out.beta_d1 = out.fit.coef[1];
  out.se = out.fit.se(1);
  out.p_value = out.fit.pvalue(1);
  out.n = out.fit.n_obs;
  out.n_clusters = out.fit.n_clusters;
  out.learner = spec.describe();
  out.conditioning = {"d1"};
  out.folds = folds.L;
  out.seed = spec.seed;

  const RegressionFit naive = stacked_naive(fd, options.vcov);
  out.naive_beta = naive.coef[1];
  out.naive_se = naive.se(1);
  if (options.with_hausman) {
    auto [Xn, names_n] = stacked_design(fd, dd);
    SlopeProblem pa{dy, Xn, w, clusters, names_n, 1};
    SlopeProblem pb{dy_r, Xr, w, clusters, names_r, 1};
    out.hausman = hausman(pa, pb, options.hausman);
    out.hausman_computed = true;
  }
  return out;
}

PlaceboResult placebo_test(const FdView& fd, const LearnerSpec& spec,
                           const FoldAssignment& folds,
                           const EstimatorOptions& options) {
  ensure_rows(fd);
  // Keep the rows that carry a lagged outcome change and a pre-baseline
  // treatment level.
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < fd.rows.size(); ++i) {
    if (fd.rows[i].pair >= 1) keep.push_back(i);
  }
  if (keep.empty()) {
    throw validation_error(
        "placebo test needs a third period: no row carries a lagged outcome "
        "change");
  }
  const auto n = static_cast<Eigen::Index>(keep.size());
  VectorXd dyl(n), dd(n), d0(n), d1(n), w(n);
  std::vector<int> clusters(keep.size());
  std::vector<int> fold_of_row(keep.size());
  const std::vector<int> all_folds = row_folds(fd, folds);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const FdRow& r = fd.rows[keep[i]];
    const auto ii = static_cast<Eigen::Index>(i);
    dyl[ii] = r.dy_lag;
    dd[ii] = r.dd;
    d0[ii] = r.d_lag2;
    d1[ii] = r.d_lag;
    w[ii] = r.weight;
    clusters[i] = r.cluster;
    fold_of_row[i] = all_folds[keep[i]];
  }
  ensure_variation("treatment change", dd, w);

  PlaceboResult out;
  out.alpha = options.alpha;
  out.learner = spec.describe();
  out.folds = folds.L;
  out.seed = spec.seed;

  const RegressionFit naive =
      wls(dyl, with_intercept(dd), w, clusters, {"intercept", "delta_d"},
          WlsOptions{options.vcov});
  out.naive_slope = naive.coef[1];
  out.naive_se = naive.se(1);
  out.naive_p = naive.pvalue(1);
  out.naive_reject = out.naive_p < options.alpha;

  MatrixXd vars(n, 2);
  vars.col(0) = d0;
  vars.col(1) = d1;
  const std::vector<std::string> var_names{"d0", "d1"};
  CrossFitResult eta = cross_fit(vars, var_names, dd, w, fold_of_row, folds.L,
                                 spec, "placebo-eta", options.threads);
  CrossFitResult gamma = cross_fit(vars, var_names, dyl, w, fold_of_row,
                                   folds.L, spec, "placebo-gamma",
                                   options.threads);
  const VectorXd dd_r = dd - eta.predictions;
  const VectorXd dyl_r = dyl - gamma.predictions;
  const RegressionFit lr =
      residual_regression(dyl_r, dd_r, dd, w, clusters, options.vcov);
  out.lr_slope = lr.coef[1];
  out.lr_se = lr.se(1);
  out.lr_p = lr.pvalue(1);
  out.lr_reject = out.lr_p < options.alpha;
  out.n = lr.n_obs;
  out.n_clusters = lr.n_clusters;
  out.eta_folds = std::move(eta.folds);
  out.gamma_folds = std::move(gamma.folds);
  return out;
}

double weighted_quantile(std::vector<double> values, std::vector<double> w,
                         double q) {
  if (values.empty() || values.size() != w.size()) {
    throw validation_error("weighted quantile needs matching nonempty inputs");
  }
  std::vector<std::size_t> order(values.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return values[a] < values[b];
  });
  double total = 0;
  for (double x : w) total += x;
  const double target = q * total;
  double cum = 0;
  for (std::size_t i : order) {
    cum += w[i];
    if (cum >= target - 1e-12 * total) return values[i];
  }
  return values[order.back()];
}

YitzhakiWeightGrid yitzhaki_weights(const FdView& fd, int d1_bins,
                                    int x_grid) {
  ensure_rows(fd);
  if (d1_bins < 2) {
    throw validation_error("derivative-weight grid needs at least 2 bins");
  }
  if (x_grid < 1) {
    throw validation_error("derivative-weight grid needs at least 1 x point");
  }

  const std::size_t n = fd.rows.size();
  std::vector<double> d1(n), d2(n), w(n);
  for (std::size_t i = 0; i < n; ++i) {
    d1[i] = fd.rows[i].d_lag;
    d2[i] = fd.rows[i].d_lag + fd.rows[i].dd;
    w[i] = fd.rows[i].weight;
  }

  YitzhakiWeightGrid out;
  {
    std::set<double> distinct(d2.begin(), d2.end());
    if (distinct.size() < 20) {
      out.warnings.push_back(
          "treatment level has only " + std::to_string(distinct.size()) +
          " distinct values; the derivative-weight formula assumes an "
          "effectively continuous treatment");
    }
  }

  // Equal-mass bin edges on the baseline treatment.
  std::vector<double> edges(static_cast<std::size_t>(d1_bins) + 1);
  for (int k = 0; k <= d1_bins; ++k) {
    edges[static_cast<std::size_t>(k)] =
        weighted_quantile(d1, w, static_cast<double>(k) / d1_bins);
  }
  double total_w = 0;
  for (double x : w) total_w += x;

  for (int k = 0; k < d1_bins; ++k) {
    const double lo = edges[static_cast<std::size_t>(k)];
    const double hi = edges[static_cast<std::size_t>(k) + 1];
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < n; ++i) {
      const bool in_bin = k == 0 ? (d1[i] <= hi) : (d1[i] > lo && d1[i] <= hi);
      if (in_bin) idx.push_back(i);
    }
    if (idx.empty()) {
      out.warnings.push_back("baseline-treatment bin " + std::to_string(k + 1) +
                             " is empty (tied quantile edges); dropped");
      continue;
    }
    YitzhakiWeightGrid::Bin bin;
    bin.d1_lo = lo;
    bin.d1_hi = hi;
    double bw = 0, bm = 0;
    std::vector<double> bd2, bwt;
    for (std::size_t i : idx) {
      bw += w[i];
      bm += w[i] * d1[i];
      bd2.push_back(d2[i]);
      bwt.push_back(w[i]);
    }
    bin.mass = bw / total_w;
    bin.d1_mean = bm / bw;

    const double x_lo = weighted_quantile(bd2, bwt, 0.01);
    const double x_hi = weighted_quantile(bd2, bwt, 0.99);
    for (int j = 0; j < x_grid; ++j) {
      const double x =
          x_grid == 1
              ? x_lo
              : x_lo + (x_hi - x_lo) * static_cast<double>(j) / (x_grid - 1);
      double w_hi = 0, w_lo = 0, s_hi = 0, s_lo = 0;
      for (std::size_t i = 0; i < bd2.size(); ++i) {
        if (bd2[i] >= x) {
          w_hi += bwt[i];
          s_hi += bwt[i] * bd2[i];
        } else {
          w_lo += bwt[i];
          s_lo += bwt[i] * bd2[i];
        }
      }
      double weight = 0;
      if (w_hi > 0 && w_lo > 0) {
        const double p = w_hi / (w_hi + w_lo);
        weight = (s_hi / w_hi - s_lo / w_lo) * p * (1.0 - p);
      }
      bin.x.push_back(x);
      bin.weight.push_back(weight);
    }
    double sum = 0;
    for (double v : bin.weight) sum += v;
    bin.normalized.resize(bin.weight.size(), 0.0);
    if (sum > 0) {
      for (std::size_t j = 0; j < bin.weight.size(); ++j) {
        bin.normalized[j] = bin.weight[j] / sum;
      }
    }
    out.bins.push_back(std::move(bin));
  }
  return out;
}

}  // namespace fda
