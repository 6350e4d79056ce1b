#include "regress.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <unordered_map>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>

namespace fda {

namespace {

constexpr double kRankTolerance = 1e-10;  // relative pivot cutoff

struct QrSolve {
  VectorXd coef;
  VectorXd residuals;  // y - X coef
  MatrixXd xtwx_inv;   // (X' W X)^{-1}
  int rank = 0;
};

// Core weighted solve.  Applies sqrt-weight scaling and a column-pivoted QR;
// on rank deficiency throws numeric_error naming the columns that fell
// outside the pivot set.
QrSolve solve_weighted(const VectorXd& y, const MatrixXd& X, const VectorXd& w,
                       const std::vector<std::string>& names) {
  const auto n = X.rows();
  const auto k = X.cols();
  if (y.size() != n || w.size() != n) {
    throw validation_error("design, outcome, and weights disagree on length");
  }
  if (n < k) {
    throw numeric_error("fewer observations (" + std::to_string(n) +
                        ") than design columns (" + std::to_string(k) + ")");
  }
  const VectorXd sw = w.cwiseSqrt();
  const MatrixXd A = sw.asDiagonal() * X;
  const VectorXd b = sw.cwiseProduct(y);

  Eigen::ColPivHouseholderQR<MatrixXd> qr(A);
  qr.setThreshold(kRankTolerance);
  const int rank = static_cast<int>(qr.rank());
  if (rank < k) {
    // Pivot order: the first `rank` pivots span the column space; the rest
    // are the (near-)collinear ones.
    const auto& perm = qr.colsPermutation().indices();
    std::vector<std::string> dropped;
    for (int j = rank; j < k; ++j) {
      const int col = perm[j];
      dropped.push_back(col < static_cast<int>(names.size())
                            ? names[col]
                            : "column " + std::to_string(col));
    }
    std::string msg = "design matrix is rank deficient; collinear column(s): ";
    for (std::size_t i = 0; i < dropped.size(); ++i) {
      if (i) msg += ", ";
      msg += dropped[i];
    }
    throw numeric_error(msg);
  }

  QrSolve out;
  out.rank = rank;
  out.coef = qr.solve(b);
  out.residuals = y - X * out.coef;
  // (A'A)^{-1} from the QR factors: A P = Q R  =>  (A'A)^{-1} = P R^{-1} R^{-T} P'.
  const MatrixXd R = qr.matrixR().topLeftCorner(k, k).triangularView<Eigen::Upper>();
  const MatrixXd Rinv =
      R.triangularView<Eigen::Upper>().solve(MatrixXd::Identity(k, k));
  const MatrixXd P = qr.colsPermutation();
  out.xtwx_inv = P * (Rinv * Rinv.transpose()) * P.transpose();
  return out;
}

int count_clusters(const std::vector<int>& clusters) {
  return static_cast<int>(
      std::set<int>(clusters.begin(), clusters.end()).size());
}

// Score of the focal coefficient summed within clusters:
// u_c = sum_{i in c} w_i xr_i e_i / sum_i w_i xr_i^2, where xr is the focal
// column residualized on the remaining columns.
std::unordered_map<int, double> cluster_scores(const SlopeProblem& p) {
  const auto k = p.X.cols();
  VectorXd xr;
  if (k > 1) {
    MatrixXd others(p.X.rows(), k - 1);
    int c = 0;
    for (int j = 0; j < k; ++j) {
      if (j != p.focal) others.col(c++) = p.X.col(j);
    }
    xr = fwl_residualize(p.X.col(p.focal), others, p.w);
  } else {
    xr = p.X.col(p.focal);
  }
  const QrSolve fit = solve_weighted(p.y, p.X, p.w, p.names);
  const double denom = p.w.cwiseProduct(xr).dot(xr);
  std::unordered_map<int, double> u;
  for (Eigen::Index i = 0; i < p.y.size(); ++i) {
    u[p.clusters[static_cast<std::size_t>(i)]] +=
        p.w[i] * xr[i] * fit.residuals[i] / denom;
  }
  return u;
}

double focal_slope(const SlopeProblem& p, const std::vector<Eigen::Index>& rows) {
  VectorXd y(rows.size()), w(rows.size());
  MatrixXd X(static_cast<Eigen::Index>(rows.size()), p.X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    y[static_cast<Eigen::Index>(i)] = p.y[rows[i]];
    w[static_cast<Eigen::Index>(i)] = p.w[rows[i]];
    X.row(static_cast<Eigen::Index>(i)) = p.X.row(rows[i]);
  }
  return solve_weighted(y, X, w, p.names).coef[p.focal];
}

}  // namespace

double RegressionFit::se(int j) const { return std::sqrt(vcov(j, j)); }

double RegressionFit::tstat(int j) const { return coef[j] / se(j); }

double RegressionFit::pvalue(int j) const {
  if (n_clusters < 2) return std::numeric_limits<double>::quiet_NaN();
  const boost::math::students_t dist(n_clusters - 1);
  const double t = std::abs(tstat(j));
  return 2.0 * boost::math::cdf(boost::math::complement(dist, t));
}

RegressionFit wls(const VectorXd& y, const MatrixXd& X, const VectorXd& w,
                  const std::vector<int>& clusters,
                  const std::vector<std::string>& names,
                  const WlsOptions& options) {
  const auto n = X.rows();
  const auto k = X.cols();
  if (static_cast<Eigen::Index>(clusters.size()) != n) {
    throw validation_error("cluster vector length differs from design rows");
  }
  const int C = count_clusters(clusters);
  if (C < 2) {
    throw validation_error(
        "cluster-robust variance needs at least 2 clusters, found " +
        std::to_string(C));
  }

  QrSolve sol = solve_weighted(y, X, w, names);

  RegressionFit fit;
  fit.coef = std::move(sol.coef);
  fit.residuals = std::move(sol.residuals);
  fit.names = names;
  fit.n_obs = static_cast<int>(n);
  fit.n_clusters = C;
  fit.rank = sol.rank;

  // Cluster sandwich: meat = sum_c s_c s_c' with s_c = sum_{i in c} w_i x_i e_i.
  std::unordered_map<int, VectorXd> sums;
  for (Eigen::Index i = 0; i < n; ++i) {
    auto [it, inserted] =
        sums.try_emplace(clusters[static_cast<std::size_t>(i)],
                         VectorXd::Zero(k));
    it->second += w[i] * fit.residuals[i] * X.row(i).transpose();
  }
  MatrixXd meat = MatrixXd::Zero(k, k);
  for (const auto& [c, s] : sums) {
    meat += s * s.transpose();
  }
  const double nn = static_cast<double>(n);
  const double cc = static_cast<double>(C);
  fit.dof_correction =
      options.vcov == VcovKind::CR1
          ? (cc / (cc - 1.0)) * ((nn - 1.0) / (nn - static_cast<double>(k)))
          : 1.0;
  fit.vcov = fit.dof_correction * sol.xtwx_inv * meat * sol.xtwx_inv;
  return fit;
}

VectorXd fwl_residualize(const VectorXd& target, const MatrixXd& controls,
                         const VectorXd& w) {
  std::vector<std::string> names(controls.cols());
  for (Eigen::Index j = 0; j < controls.cols(); ++j) {
    names[static_cast<std::size_t>(j)] = "control " + std::to_string(j);
  }
  return solve_weighted(target, controls, w, names).residuals;
}

HausmanResult hausman(const SlopeProblem& a, const SlopeProblem& b,
                      const HausmanOptions& options) {
  if (a.y.size() != b.y.size() || a.clusters != b.clusters) {
    throw validation_error(
        "slope comparison requires identical samples and clustering");
  }
  if (a.focal < 0 || a.focal >= a.X.cols() || b.focal < 0 ||
      b.focal >= b.X.cols()) {
    throw validation_error("focal column index out of range");
  }

  std::vector<Eigen::Index> all(static_cast<std::size_t>(a.y.size()));
  for (std::size_t i = 0; i < all.size(); ++i) {
    all[i] = static_cast<Eigen::Index>(i);
  }
  HausmanResult out;
  out.difference = focal_slope(a, all) - focal_slope(b, all);

  if (options.strategy == HausmanStrategy::ClusterBootstrap) {
    // Distinct cluster ids in sorted order, with their member rows.
    std::map<int, std::vector<Eigen::Index>> members;
    for (std::size_t i = 0; i < a.clusters.size(); ++i) {
      members[a.clusters[i]].push_back(static_cast<Eigen::Index>(i));
    }
    std::vector<const std::vector<Eigen::Index>*> pool;
    pool.reserve(members.size());
    for (const auto& [c, rows] : members) pool.push_back(&rows);
    const std::uint64_t C = pool.size();

    std::vector<double> diffs;
    diffs.reserve(static_cast<std::size_t>(options.bootstrap_reps));
    for (int r = 0; r < options.bootstrap_reps; ++r) {
      Rng rng(derive_seed(options.seed, fnv1a("hausman-bootstrap"),
                          static_cast<std::uint64_t>(r)));
      std::vector<Eigen::Index> rows;
      rows.reserve(all.size());
      for (std::uint64_t c = 0; c < C; ++c) {
        const auto& cluster_rows = *pool[static_cast<std::size_t>(rng.bounded(C))];
        rows.insert(rows.end(), cluster_rows.begin(), cluster_rows.end());
      }
      try {
        diffs.push_back(focal_slope(a, rows) - focal_slope(b, rows));
      } catch (const numeric_error&) {
        // Degenerate resample (e.g. one cluster drawn C times); skip it.
      }
    }
    out.bootstrap_used = static_cast<int>(diffs.size());
    if (diffs.size() < 2) {
      throw numeric_error(
          "cluster bootstrap produced fewer than 2 usable replicates");
    }
    double mean = 0;
    for (double d : diffs) mean += d;
    mean /= static_cast<double>(diffs.size());
    double ss = 0;
    for (double d : diffs) ss += (d - mean) * (d - mean);
    out.se_difference = std::sqrt(ss / (static_cast<double>(diffs.size()) - 1.0));
  } else {
    const auto ua = cluster_scores(a);
    const auto ub = cluster_scores(b);
    double ss = 0;
    for (const auto& [c, va] : ua) {
      const double diff = va - ub.at(c);
      ss += diff * diff;
    }
    const double C = static_cast<double>(ua.size());
    out.se_difference = std::sqrt(ss * C / (C - 1.0));
    out.bootstrap_used = 0;
  }

  if (out.se_difference > 0) {
    const double t = out.difference / out.se_difference;
    out.statistic = t * t;
    const boost::math::chi_squared chi2(1);
    out.p_value = boost::math::cdf(boost::math::complement(chi2, out.statistic));
  } else {
    out.statistic = out.difference == 0
                        ? 0.0
                        : std::numeric_limits<double>::infinity();
    out.p_value = out.difference == 0 ? 1.0 : 0.0;
  }
  return out;
}

}  // namespace fda
