#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "learners.hpp"
#include "panel.hpp"
#include "regress.hpp"

namespace fda {

// Which baseline-treatment variables the nuisance functions condition on.
enum class Conditioning { D1, D0D1 };

struct EstimatorOptions {
  double alpha = 0.05;
  VcovKind vcov = VcovKind::CR1;
  HausmanOptions hausman;
  bool with_hausman = true;  // oracle loops switch the comparison off
  int threads = 1;
};

// Diagnostic regression of the treatment change on the baseline treatment:
// a nonzero slope means the change is predictable from the level, the
// precondition for the bias the toolkit audits.
struct BalanceResult {
  RegressionFit fit;  // Delta D on [1, D1]
  double slope = 0;
  double se = 0;
  double p_value = 1;
  double alpha = 0.05;
  bool correlated = false;
};

// Decomposition weights attached to the two periods' average slopes.
struct PathWeights {
  double omega1 = 0;
  double omega2 = 0;
  double var_d1 = 0;
  double var_d2 = 0;
  double cov_d12 = 0;
  long long period1 = 0;
  long long period2 = 0;
  bool any_negative = false;
};

// Bias-corrected cross-fitted slope with its naive companion.
struct DdmlResult {
  double beta_d1 = 0;
  double se = 0;
  double p_value = 1;
  int n = 0;
  int n_clusters = 0;
  double naive_beta = 0;
  double naive_se = 0;
  bool hausman_computed = false;  // false when the comparison was skipped
  HausmanResult hausman;
  RegressionFit fit;  // residual-on-residual regression
  std::vector<FoldDiagnostics> eta_folds;    // treatment-change nuisance
  std::vector<FoldDiagnostics> gamma_folds;  // outcome-change nuisance
  std::string learner;
  std::vector<std::string> conditioning;
  int folds = 0;
  std::uint64_t seed = 0;
};

struct PlaceboResult {
  double naive_slope = 0;
  double naive_se = 0;
  double naive_p = 1;
  bool naive_reject = false;
  double lr_slope = 0;  // locally robust version
  double lr_se = 0;
  double lr_p = 1;
  bool lr_reject = false;
  double alpha = 0.05;
  int n = 0;
  int n_clusters = 0;
  std::vector<FoldDiagnostics> eta_folds;
  std::vector<FoldDiagnostics> gamma_folds;
  std::string learner;
  int folds = 0;
  std::uint64_t seed = 0;
};

// Empirical analog of the derivative weights that a linear slope places on
// the treatment axis, per baseline-treatment bin.
struct YitzhakiWeightGrid {
  struct Bin {
    double d1_lo = 0;
    double d1_hi = 0;
    double d1_mean = 0;
    double mass = 0;  // weighted share of rows
    std::vector<double> x;
    std::vector<double> weight;
    std::vector<double> normalized;  // weights scaled to sum 1 within bin
  };
  std::vector<Bin> bins;
  std::vector<std::string> warnings;
};

// --------------------------------------------------------------------------
// Operations.  Two-period procedures act on the rows the FdView carries;
// callers restrict to one period pair first (see FdView::filter_pair).
// --------------------------------------------------------------------------

BalanceResult balance_test(const FdView& fd, double alpha = 0.05,
                           VcovKind vcov = VcovKind::CR1);

// WLS of the outcome change on the treatment change (or on the instrument
// change when use_instrument is set — the reduced form).
RegressionFit fd_ols(const FdView& fd, bool use_instrument = false,
                     VcovKind vcov = VcovKind::CR1);

// Decomposition weights computed from the weighted sample moments of the
// two periods' treatment levels (period indices into panel.periods).
PathWeights path_weights(const PanelDataset& panel, int t1, int t2);

DdmlResult ddml_beta_d1(const FdView& fd, Conditioning conditioning,
                        const LearnerSpec& spec, const FoldAssignment& folds,
                        const EstimatorOptions& options = {});

// Same estimand with externally supplied conditional-expectation values
// (e.g. the generating process's exact functions).
DdmlResult ddml_with_nuisances(const FdView& fd, const VectorXd& eta_hat,
                               const VectorXd& gamma_hat,
                               const EstimatorOptions& options = {});

// Pooled version over every FD period: nuisances are fit separately within
// each period pair, and the second-stage regression adds period indicators.
DdmlResult stacked_ddml(const FdView& fd, const LearnerSpec& spec,
                        const FoldAssignment& folds,
                        const EstimatorOptions& options = {});

// Pooled WLS of the outcome change on the treatment change plus period
// indicators, with no residualization (the stacked baseline).
RegressionFit stacked_naive(const FdView& fd,
                            VcovKind vcov = VcovKind::CR1);

PlaceboResult placebo_test(const FdView& fd, const LearnerSpec& spec,
                           const FoldAssignment& folds,
                           const EstimatorOptions& options = {});

YitzhakiWeightGrid yitzhaki_weights(const FdView& fd, int d1_bins = 10,
                                    int x_grid = 50);

// Weighted quantile (smallest value whose cumulative weight reaches q).
double weighted_quantile(std::vector<double> values, std::vector<double> w,
                         double q);

}  // namespace fda
