#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace fda {

enum class LearnerKind { PolyLasso, Mlp, PolyOls };

enum class PenaltyRule { Plugin, CrossValidated, Fixed };

// Configuration of a conditional-expectation learner.
struct LearnerSpec {
  LearnerKind kind = LearnerKind::PolyLasso;
  int degree = 3;                     // polynomial basis degree
  PenaltyRule penalty = PenaltyRule::Plugin;
  int cv_folds = 10;                  // for PenaltyRule::CrossValidated
  double fixed_lambda = 0;            // for PenaltyRule::Fixed
  bool post_lasso = true;             // predict from the OLS refit on support
  std::vector<int> mlp_hidden = {10};
  int mlp_iters = 1000;
  double mlp_rate = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string describe() const;
};

// Raw polynomial expansion: for one variable the powers x..x^degree; for two,
// every monomial of total degree 1..degree.  No standardization here.
struct PolyExpansion {
  MatrixXd X;
  std::vector<std::string> names;
};
PolyExpansion poly_features(const MatrixXd& vars,
                            const std::vector<std::string>& var_names,
                            int degree);

// Column standardization to weighted mean 0 / variance 1, fitted on training
// rows.  Zero-variance columns are dropped (recorded, not fatal).
struct Standardizer {
  VectorXd mean;
  VectorXd scale;
  std::vector<int> keep;               // retained column indices
  std::vector<std::string> kept_names;
  std::vector<std::string> dropped_names;

  static Standardizer fit(const MatrixXd& X, const VectorXd& w,
                          const std::vector<std::string>& names);
  MatrixXd apply(const MatrixXd& X) const;
};

// Weighted Lasso solved by cyclic coordinate descent.  Objective:
//   sum_i wn_i (y_i - b0 - x_i'b)^2 + lambda * sum_j |b_j|
// with wn = w * n / sum(w) and an unpenalized intercept.  Converged when the
// duality gap falls below gap_tolerance = 1e-8 * max(1, ||sqrt(wn) (y - ybar)||^2).
struct LassoSettings {
  PenaltyRule rule = PenaltyRule::Plugin;
  double fixed_lambda = 0;
  int cv_folds = 10;
  bool post_refit = true;
  std::uint64_t seed = 0;
};

struct LassoFit {
  double intercept = 0;
  VectorXd coef;                 // per design column
  std::vector<bool> selected;
  double lambda = 0;
  double sigma_hat = 0;          // noise scale behind the plugin penalty
  int sweeps = 0;
  double gap = 0;                // duality gap at exit
  double gap_tolerance = 0;
  std::vector<double> objective_trace;  // objective after each sweep
  bool post_refit = false;
  double post_intercept = 0;
  VectorXd post_coef;            // zeros off the selected support

  // Prediction on the same column scale the fit saw.
  VectorXd predict(const MatrixXd& X) const;
  int n_selected() const;
};

LassoFit fit_lasso(const MatrixXd& X, const VectorXd& y, const VectorXd& w,
                   const LassoSettings& settings,
                   const std::vector<std::string>& names = {});

// Small feed-forward network: sigmoid hidden layers, linear scalar output,
// trained by full-batch gradient descent on weighted squared error
//   L = 1/2 sum_i wn_i (f(x_i) - y_i)^2,  sum_i wn_i = 1.
// init() draws hidden layers from a seeded scaled-uniform law and zeroes the
// output layer, so the first prediction is the standardized-target mean.
// step() scales each layer's update by rate / fan_in, which keeps the
// default rate stable; gradient() is exact for L (finite-difference checkable).
struct Mlp {
  std::vector<MatrixXd> W;  // layer l maps a_{l-1} (fan_in) to z_l (fan_out)
  std::vector<VectorXd> b;

  struct Gradients {
    std::vector<MatrixXd> W;
    std::vector<VectorXd> b;
  };

  static Mlp init(const std::vector<int>& layer_sizes, Rng& rng);
  VectorXd forward(const MatrixXd& X) const;
  double loss(const MatrixXd& X, const VectorXd& y, const VectorXd& wn) const;
  Gradients gradient(const MatrixXd& X, const VectorXd& y,
                     const VectorXd& wn) const;
  void step(const Gradients& g, double rate);
};

struct MlpFit {
  Mlp net;
  double target_mean = 0;
  double target_scale = 1;
  double final_loss = 0;  // on the standardized-target scale
  int iters = 0;

  VectorXd predict(const MatrixXd& X) const;  // X on the training column scale
};

MlpFit fit_mlp(const MatrixXd& X, const VectorXd& y, const VectorXd& w,
               const LearnerSpec& spec, std::uint64_t seed);

// One fitted conditional-expectation model: raw conditioning variables in,
// predictions out (feature expansion and standardization handled inside).
struct FittedLearner {
  LearnerKind kind = LearnerKind::PolyOls;
  bool constant_shortcut = false;  // conditioning had no variation
  double constant_value = 0;
  int degree = 1;
  Standardizer standardizer;
  LassoFit lasso;
  VectorXd ols_coef;  // intercept followed by kept-column slopes
  MlpFit mlp;
  std::vector<std::string> warnings;

  VectorXd predict(const MatrixXd& raw_vars) const;
};

FittedLearner fit_learner(const MatrixXd& raw_vars,
                          const std::vector<std::string>& var_names,
                          const VectorXd& target, const VectorXd& weights,
                          const LearnerSpec& spec, std::uint64_t seed);

struct FoldDiagnostics {
  int fold = 0;  // 1-based in reports
  int n_train = 0;
  int n_test = 0;
  double train_mse = 0;  // weighted, on the raw target scale
  std::vector<std::string> selected;
  double lambda = 0;
  int sweeps = 0;
  double gap = 0;
  double mlp_final_loss = 0;
  int mlp_iters = 0;
  std::vector<std::string> warnings;
};

struct CrossFitResult {
  VectorXd predictions;  // out-of-fold, aligned with input rows
  std::vector<FoldDiagnostics> folds;
};

// For each fold, trains on the complement and predicts the held-out rows.
// Per-fold seeds derive from (spec.seed, target_tag, fold), so fold jobs can
// run in any order (or in parallel) with identical output.
CrossFitResult cross_fit(const MatrixXd& raw_vars,
                         const std::vector<std::string>& var_names,
                         const VectorXd& target, const VectorXd& weights,
                         const std::vector<int>& fold_of_row, int L,
                         const LearnerSpec& spec, const std::string& target_tag,
                         int threads = 1);

}  // namespace fda
