#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"
#include "learners.hpp"
#include "panel.hpp"

namespace fda {

// Which independence structure the generator enforces by construction.
//   RandomFd:     treatment changes independent of slopes and outcome noise
//                 (slopes must not depend on the baseline level).
//   RandomPaths:  the whole treatment path independent of slopes/noise.
//   Sequential:   final-period treatment drawn from a law depending only on
//                 the baseline level; slopes may depend on the baseline.
//   Sequential3p: three-period version conditioning on the two earlier
//                 levels; the setting the placebo test needs.
enum class AssumptionMode { RandomFd, RandomPaths, Sequential, Sequential3p };

enum class InitialLaw { Normal, Bernoulli };

enum class PathLaw { Ar1, JointNormal, Independent, Binary };

// Slope per period: S_t = a + b*D1 + c*D1^2 + Normal(0, sd), where D1 is the
// baseline treatment of the final period pair.
struct SlopeParams {
  double a = 0, b = 0, c = 0, sd = 0;
};

struct DgpSpec {
  int n_units = 5000;
  int n_periods = 2;  // 2 or 3
  AssumptionMode mode = AssumptionMode::RandomFd;

  InitialLaw initial = InitialLaw::Normal;
  double init_mean = 0, init_sd = 1;  // Normal
  double init_p = 0.5;                // Bernoulli

  PathLaw path = PathLaw::Ar1;
  double ar1_const = 0, ar1_slope = 1, ar1_sd = 1;
  double jn_mean2 = 0, jn_sd2 = 1, jn_rho = 0;  // pair law; 2 periods only
  double ind_mean = 0, ind_sd = 1;
  double bin_p01 = 0.5, bin_p11 = 0.5;  // P(D_t=1 | D_{t-1}=0), P(... | 1)

  bool shared_slopes = false;  // one time-constant S per unit (from s2)
  SlopeParams s0, s1, s2;      // s0 only used with 3 periods

  double theta_sd = 1;               // unit effect scale
  std::vector<double> alpha = {};    // period effects; empty = zeros
  double u_sd = 1;                   // idiosyncratic outcome noise

  std::uint64_t seed = 0;

  void validate() const;
};

// Per-unit hidden state the generator emits alongside the panel, enabling
// exact evaluation of the decomposition terms on the realized sample.
struct TruthRecord {
  MatrixXd s;   // n_units x n_periods slopes
  MatrixXd y0;  // n_units x n_periods untreated outcomes
};

struct GeneratedPanel {
  PanelDataset panel;
  TruthRecord truth;
  DgpSpec spec;
};

GeneratedPanel generate(const DgpSpec& spec, std::uint64_t seed);

// Plain-text key=value configuration (# comments allowed).
DgpSpec parse_dgp_config(const std::string& text);
DgpSpec load_dgp_config(const std::string& path);

// ---------------------------------------------------------------------------
// Exact conditional functions and moments implied by a DgpSpec, for oracle
// targets and the supplied-nuisance estimator path.  d1 is the baseline
// treatment of the final pair.
// ---------------------------------------------------------------------------

double true_eta(const DgpSpec& spec, double d1);    // E(dD | D1 = d1)
double true_vdd(const DgpSpec& spec, double d1);    // V(dD | D1 = d1)
double true_es1(const DgpSpec& spec, double d1);    // E(S_1 | D1 = d1)
double true_es2(const DgpSpec& spec, double d1);    // E(S_2 | D1 = d1)
double true_gamma(const DgpSpec& spec, double d1);  // E(dY | D1 = d1)

struct BaselineMoments {
  double mean = 0;  // E(D1)
  double var = 0;   // V(D1)
};
BaselineMoments baseline_moments(const DgpSpec& spec);

struct PairMoments {
  double e1 = 0, v1 = 0;  // baseline level
  double e2 = 0, v2 = 0;  // final level
  double cov = 0;
};
PairMoments pair_moments(const DgpSpec& spec);

// Population targets of the audited estimators under the spec.
double target_fd_ols(const DgpSpec& spec);          // population FD slope
double target_omega1(const DgpSpec& spec);
double target_beta_d1_closed(const DgpSpec& spec);
double target_beta_d1_quadrature(const DgpSpec& spec);  // Normal baseline only

// Gauss-Hermite rule for E[f(X)], X standard normal (physicists' weight
// rescaled); nodes/weights from the Golub-Welsch eigen decomposition.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;  // sum to 1 after rescaling
};
QuadratureRule gauss_hermite(int n);

// ---------------------------------------------------------------------------
// Monte Carlo oracle engine.
// ---------------------------------------------------------------------------

enum class Theorem { Ovb, PathWeights, BetaD1, Placebo };

struct OracleSettings {
  int n_reps = 500;
  double tolerance = 0.02;       // two-sided band component
  double rejection_bound = 0.07; // for rejection-rate series
  int folds = 5;
  LearnerSpec learner;           // used by BetaD1 and Placebo
  int threads = 1;
  bool keep_estimates = true;    // store per-replication values in the report
};

struct OracleSeries {
  std::string name;
  std::vector<double> estimates;
  double mean = 0;
  double sd = 0;
  double mc_se = 0;
  double target = 0;
  std::string method;      // "closed-form" | "quadrature" | "bound"
  double tolerance = 0;    // band actually applied: max(tol, 3 mc_se)
  bool bound_only = false; // pass iff mean <= target
  bool pass = false;
};

struct MonteCarloReport {
  std::string theorem;
  int n_reps = 0;
  int n_units = 0;
  std::uint64_t seed = 0;
  std::vector<OracleSeries> series;
  bool pass = false;
};

// Runs the estimator matching `theorem` on n_reps fresh panels and compares
// the mean estimate against the population target.  Errors when the design's
// assumption mode does not match the theorem's hypothesis.
MonteCarloReport run_oracle(Theorem theorem, const DgpSpec& spec,
                            const OracleSettings& settings = {});

std::string theorem_name(Theorem t);

}  // namespace fda
