#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace fda {

enum class VcovKind { CR1, CR0 };

struct WlsOptions {
  VcovKind vcov = VcovKind::CR1;
};

// Weighted least-squares fit with a cluster-robust sandwich variance.
struct RegressionFit {
  VectorXd coef;
  MatrixXd vcov;
  VectorXd residuals;             // on the original (unweighted) scale
  std::vector<std::string> names; // one per design column
  int n_obs = 0;
  int n_clusters = 0;
  int rank = 0;
  double dof_correction = 1.0;    // small-sample factor applied to the sandwich

  double se(int j) const;
  double tstat(int j) const;
  // Two-sided p-value referencing t with (n_clusters - 1) degrees of freedom.
  double pvalue(int j) const;
};

// WLS via QR on the sqrt-weight-scaled design.  X must include any intercept
// column the caller wants.  Throws numeric_error naming the collinear columns
// on rank deficiency, validation_error when fewer than two clusters are
// present.
RegressionFit wls(const VectorXd& y, const MatrixXd& X, const VectorXd& w,
                  const std::vector<int>& clusters,
                  const std::vector<std::string>& names,
                  const WlsOptions& options = {});

// Residual of the weighted projection of `target` on `controls`
// (Frisch-Waugh-Lovell step).  Orthogonal to every control column under the
// weight metric.
VectorXd fwl_residualize(const VectorXd& target, const MatrixXd& controls,
                         const VectorXd& w);

// A slope to be compared across specifications: design, weights, clustering,
// and which column's coefficient is under test.
struct SlopeProblem {
  VectorXd y;
  MatrixXd X;
  VectorXd w;
  std::vector<int> clusters;
  std::vector<std::string> names;
  int focal = 1;  // column whose coefficient is compared
};

enum class HausmanStrategy { ClusterBootstrap, InfluenceFunction };

struct HausmanOptions {
  HausmanStrategy strategy = HausmanStrategy::ClusterBootstrap;
  int bootstrap_reps = 399;
  std::uint64_t seed = 0;
};

struct HausmanResult {
  double statistic = 0;      // (difference / se_difference)^2
  double difference = 0;
  double se_difference = 0;
  double p_value = 1;        // chi-squared(1) reference
  int bootstrap_used = 0;    // replicates that produced a full-rank refit
};

// Compares the focal coefficients of two specifications estimated on the
// same rows and clustering.  The default variance of the difference comes
// from a seeded cluster bootstrap that refits both slopes per replicate;
// the influence-function strategy uses cluster-summed score contributions.
HausmanResult hausman(const SlopeProblem& a, const SlopeProblem& b,
                      const HausmanOptions& options = {});

}  // namespace fda
