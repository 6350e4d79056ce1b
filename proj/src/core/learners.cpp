#include "learners.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <thread>

#include <boost/math/distributions/normal.hpp>

#include "regress.hpp"

namespace fda {

namespace {

constexpr int kMaxSweeps = 100000;
constexpr double kGapRelTolerance = 1e-8;
constexpr double kPluginC = 1.1;
constexpr int kCvGridPoints = 100;
constexpr double kCvGridFloor = 1e-4;  // lambda_min = floor * lambda_max

double soft_threshold(double x, double t) {
  if (x > t) return x - t;
  if (x < -t) return x + t;
  return 0.0;
}

std::string kind_name(LearnerKind k) {
  switch (k) {
    case LearnerKind::PolyLasso: return "poly-lasso";
    case LearnerKind::Mlp: return "mlp";
    case LearnerKind::PolyOls: return "poly-ols";
  }
  return "?";
}

// Cyclic coordinate descent on centered data.  Xc has weighted-mean-zero
// columns, yc is the centered target, wn sums to n.
struct CdState {
  VectorXd beta;
  int sweeps = 0;
  double gap = 0;
  double gap_tolerance = 0;
  std::vector<double> trace;
};

CdState coordinate_descent(const MatrixXd& Xc, const VectorXd& yc,
                           const VectorXd& wn, double lambda, VectorXd beta,
                           bool record_trace) {
  const auto p = Xc.cols();
  VectorXd col_scale(p);  // S_j = sum_i wn_i x_ij^2
  for (Eigen::Index j = 0; j < p; ++j) {
    col_scale[j] = wn.cwiseProduct(Xc.col(j)).dot(Xc.col(j));
  }
  VectorXd r = yc - Xc * beta;
  const double z_norm2 = wn.cwiseProduct(yc).dot(yc);
  CdState st;
  st.gap_tolerance = kGapRelTolerance * std::max(1.0, z_norm2);

  for (int sweep = 1; sweep <= kMaxSweeps; ++sweep) {
    for (Eigen::Index j = 0; j < p; ++j) {
      if (col_scale[j] <= 0) {
        beta[j] = 0;
        continue;
      }
      const double rho = wn.cwiseProduct(Xc.col(j)).dot(r) +
                         col_scale[j] * beta[j];
      const double nb = soft_threshold(rho, lambda / 2.0) / col_scale[j];
      const double delta = nb - beta[j];
      if (delta != 0.0) {
        r -= delta * Xc.col(j);
        beta[j] = nb;
      }
    }
    st.sweeps = sweep;

    // Duality gap for P(b) = ||r||_wn^2 + lambda |b|_1 via the scaled dual
    // point nu = -2 s r: gap = ||r||^2 + lambda |b|_1 - 2 s <r, y>_wn + s^2 ||r||^2.
    const double r_norm2 = wn.cwiseProduct(r).dot(r);
    const VectorXd corr = Xc.transpose() * wn.cwiseProduct(r);
    const double corr_inf = corr.size() ? corr.cwiseAbs().maxCoeff() : 0.0;
    const double s = corr_inf > lambda / 2.0 && corr_inf > 0.0
                         ? lambda / (2.0 * corr_inf)
                         : 1.0;
    const double l1 = beta.cwiseAbs().sum();
    const double ry = wn.cwiseProduct(r).dot(yc);
    st.gap = r_norm2 + lambda * l1 - 2.0 * s * ry + s * s * r_norm2;
    if (record_trace) st.trace.push_back(r_norm2 + lambda * l1);
    if (st.gap <= st.gap_tolerance) {
      st.beta = std::move(beta);
      return st;
    }
  }
  throw numeric_error(
      "lasso coordinate descent did not converge after " +
      std::to_string(kMaxSweeps) + " sweeps; duality gap " +
      std::to_string(st.gap) + " (tolerance " +
      std::to_string(st.gap_tolerance) + ")");
}

double plugin_lambda(double sigma, Eigen::Index n, Eigen::Index p) {
  const double nn = static_cast<double>(std::max<Eigen::Index>(n, 3));
  const double gamma = 0.1 / std::log(nn);
  const boost::math::normal norm;
  const double q =
      boost::math::quantile(norm, 1.0 - gamma / (2.0 * static_cast<double>(p)));
  return 2.0 * kPluginC * sigma * std::sqrt(static_cast<double>(n)) * q;
}

struct CenteredProblem {
  MatrixXd Xc;
  VectorXd yc;
  VectorXd wn;
  VectorXd col_means;
  double y_mean = 0;
};

CenteredProblem center_problem(const MatrixXd& X, const VectorXd& y,
                               const VectorXd& w) {
  CenteredProblem cp;
  const auto n = X.rows();
  cp.wn = w * (static_cast<double>(n) / w.sum());
  cp.col_means.resize(X.cols());
  cp.Xc = X;
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    cp.col_means[j] = cp.wn.dot(X.col(j)) / static_cast<double>(n);
    cp.Xc.col(j).array() -= cp.col_means[j];
  }
  cp.y_mean = cp.wn.dot(y) / static_cast<double>(n);
  cp.yc = y.array() - cp.y_mean;
  return cp;
}

double weighted_residual_scale(const VectorXd& r, const VectorXd& wn) {
  return std::sqrt(wn.cwiseProduct(r).dot(r) / static_cast<double>(r.size()));
}

// lambda == 0 degenerates to WLS; solve directly.
LassoFit lasso_at_lambda(const CenteredProblem& cp, double lambda,
                         VectorXd warm, bool record_trace) {
  LassoFit fit;
  fit.lambda = lambda;
  if (lambda <= 0.0) {
    // Direct weighted solve on centered data (no intercept needed).
    if (cp.Xc.cols() > 0) {
      Eigen::ColPivHouseholderQR<MatrixXd> qr(
          (cp.wn.cwiseSqrt().asDiagonal() * cp.Xc).eval());
      qr.setThreshold(1e-10);
      if (qr.rank() < cp.Xc.cols()) {
        throw numeric_error(
            "unpenalized fit is rank deficient; supply a positive penalty");
      }
      fit.coef = qr.solve((cp.wn.cwiseSqrt().cwiseProduct(cp.yc)).eval());
    } else {
      fit.coef = VectorXd();
    }
    const VectorXd r = cp.yc - cp.Xc * fit.coef;
    const double r_norm2 = cp.wn.cwiseProduct(r).dot(r);
    const double ry = cp.wn.cwiseProduct(r).dot(cp.yc);
    fit.gap = r_norm2 - 2.0 * ry + r_norm2;  // s = 1, lambda = 0
    fit.gap_tolerance = kGapRelTolerance *
                        std::max(1.0, cp.wn.cwiseProduct(cp.yc).dot(cp.yc));
    fit.sweeps = 0;
  } else {
    CdState st = coordinate_descent(cp.Xc, cp.yc, cp.wn, lambda,
                                    std::move(warm), record_trace);
    fit.coef = std::move(st.beta);
    fit.sweeps = st.sweeps;
    fit.gap = st.gap;
    fit.gap_tolerance = st.gap_tolerance;
    fit.objective_trace = std::move(st.trace);
  }
  fit.intercept = cp.y_mean - fit.coef.dot(cp.col_means);
  fit.selected.resize(static_cast<std::size_t>(fit.coef.size()));
  for (Eigen::Index j = 0; j < fit.coef.size(); ++j) {
    fit.selected[static_cast<std::size_t>(j)] = fit.coef[j] != 0.0;
  }
  return fit;
}

double lambda_max_of(const CenteredProblem& cp) {
  if (cp.Xc.cols() == 0) return 0.0;
  const VectorXd corr = cp.Xc.transpose() * cp.wn.cwiseProduct(cp.yc);
  return 2.0 * corr.cwiseAbs().maxCoeff();
}

}  // namespace

void LearnerSpec::validate() const {
  if (degree < 1) {
    throw validation_error("polynomial degree must be >= 1, got " +
                           std::to_string(degree));
  }
  if (penalty == PenaltyRule::Fixed && fixed_lambda < 0) {
    throw validation_error("fixed lasso penalty must be >= 0");
  }
  if (penalty == PenaltyRule::CrossValidated && cv_folds < 2) {
    throw validation_error("lasso cross-validation needs >= 2 folds");
  }
  if (mlp_iters < 1) {
    throw validation_error("network iteration count must be >= 1");
  }
  if (!(mlp_rate > 0)) {
    throw validation_error("network training rate must be positive");
  }
  if (mlp_hidden.empty()) {
    throw validation_error("network needs at least one hidden layer");
  }
  for (int h : mlp_hidden) {
    if (h < 1) throw validation_error("hidden layer width must be >= 1");
  }
}

std::string LearnerSpec::describe() const {
  std::string s = kind_name(kind);
  if (kind == LearnerKind::Mlp) {
    s += "(hidden=";
    for (std::size_t i = 0; i < mlp_hidden.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(mlp_hidden[i]);
    }
    char rate[32];
    std::snprintf(rate, sizeof rate, "%g", mlp_rate);
    s += ", iters=" + std::to_string(mlp_iters) + ", rate=" + rate + ")";
  } else {
    s += "(degree=" + std::to_string(degree);
    if (kind == LearnerKind::PolyLasso) {
      switch (penalty) {
        case PenaltyRule::Plugin: s += ", penalty=plugin"; break;
        case PenaltyRule::CrossValidated:
          s += ", penalty=cv:" + std::to_string(cv_folds);
          break;
        case PenaltyRule::Fixed: {
          char lam[32];
          std::snprintf(lam, sizeof lam, "%g", fixed_lambda);
          s += std::string(", penalty=fixed:") + lam;
          break;
        }
      }
      s += post_lasso ? ", post=true" : ", post=false";
    }
    s += ")";
  }
  return s;
}

PolyExpansion poly_features(const MatrixXd& vars,
                            const std::vector<std::string>& var_names,
                            int degree) {
  const auto n = vars.rows();
  const auto v = vars.cols();
  if (degree < 1) {
    throw validation_error("polynomial degree must be >= 1");
  }
  if (v < 1 || v > 2) {
    throw validation_error(
        "polynomial basis supports 1 or 2 conditioning variables, got " +
        std::to_string(v));
  }
  auto name_of = [&](int var, int e) -> std::string {
    const std::string base = var < static_cast<int>(var_names.size())
                                 ? var_names[static_cast<std::size_t>(var)]
                                 : "x" + std::to_string(var);
    return e == 1 ? base : base + "^" + std::to_string(e);
  };

  PolyExpansion out;
  std::vector<VectorXd> cols;
  if (v == 1) {
    VectorXd acc = VectorXd::Ones(n);
    for (int g = 1; g <= degree; ++g) {
      acc = acc.cwiseProduct(vars.col(0));
      cols.push_back(acc);
      out.names.push_back(name_of(0, g));
    }
  } else {
    // All monomials x0^e0 x1^e1 with 1 <= e0+e1 <= degree, ordered by total
    // degree, then by descending e0.
    for (int g = 1; g <= degree; ++g) {
      for (int e0 = g; e0 >= 0; --e0) {
        const int e1 = g - e0;
        VectorXd c = VectorXd::Ones(n);
        for (int k = 0; k < e0; ++k) c = c.cwiseProduct(vars.col(0));
        for (int k = 0; k < e1; ++k) c = c.cwiseProduct(vars.col(1));
        cols.push_back(c);
        std::string nm;
        if (e0 > 0) nm = name_of(0, e0);
        if (e1 > 0) nm += (nm.empty() ? "" : "*") + name_of(1, e1);
        out.names.push_back(nm);
      }
    }
  }
  out.X.resize(n, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) {
    out.X.col(static_cast<Eigen::Index>(j)) = cols[j];
  }
  return out;
}

Standardizer Standardizer::fit(const MatrixXd& X, const VectorXd& w,
                               const std::vector<std::string>& names) {
  Standardizer st;
  const auto p = X.cols();
  VectorXd mean(p), scale(p);
  for (Eigen::Index j = 0; j < p; ++j) {
    mean[j] = weighted_mean(X.col(j), w);
    scale[j] = std::sqrt(weighted_var(X.col(j), w));
  }
  for (Eigen::Index j = 0; j < p; ++j) {
    const std::string nm = j < static_cast<Eigen::Index>(names.size())
                               ? names[static_cast<std::size_t>(j)]
                               : "column " + std::to_string(j);
    if (scale[j] <= 1e-12 * std::max(1.0, std::abs(mean[j]))) {
      st.dropped_names.push_back(nm);
    } else {
      st.keep.push_back(static_cast<int>(j));
      st.kept_names.push_back(nm);
    }
  }
  st.mean.resize(static_cast<Eigen::Index>(st.keep.size()));
  st.scale.resize(static_cast<Eigen::Index>(st.keep.size()));
  for (std::size_t k = 0; k < st.keep.size(); ++k) {
    st.mean[static_cast<Eigen::Index>(k)] = mean[st.keep[k]];
    st.scale[static_cast<Eigen::Index>(k)] = scale[st.keep[k]];
  }
  return st;
}

MatrixXd Standardizer::apply(const MatrixXd& X) const {
  MatrixXd out(X.rows(), static_cast<Eigen::Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    const auto j = static_cast<Eigen::Index>(k);
    out.col(j) = (X.col(keep[k]).array() - mean[j]) / scale[j];
  }
  return out;
}

VectorXd LassoFit::predict(const MatrixXd& X) const {
  if (post_refit) {
    return (X * post_coef).array() + post_intercept;
  }
  return (X * coef).array() + intercept;
}

int LassoFit::n_selected() const {
  return static_cast<int>(std::count(selected.begin(), selected.end(), true));
}

LassoFit fit_lasso(const MatrixXd& X, const VectorXd& y, const VectorXd& w,
                   const LassoSettings& settings,
                   const std::vector<std::string>& names) {
  const auto n = X.rows();
  if (n == 0) throw validation_error("lasso fit needs at least one row");
  if (y.size() != n || w.size() != n) {
    throw validation_error("lasso inputs disagree on length");
  }
  const CenteredProblem cp = center_problem(X, y, w);
  const VectorXd warm0 = VectorXd::Zero(X.cols());

  LassoFit fit;
  if (settings.rule == PenaltyRule::Fixed) {
    fit = lasso_at_lambda(cp, settings.fixed_lambda, warm0, true);
  } else if (settings.rule == PenaltyRule::Plugin) {
    // Noise scale iterated twice: start from the dispersion of y, refit the
    // penalty from residuals after each pass.
    double sigma = weighted_residual_scale(cp.yc, cp.wn);
    LassoFit cur;
    for (int pass = 0; pass < 3; ++pass) {
      const double lambda =
          sigma > 0 ? plugin_lambda(sigma, n, std::max<Eigen::Index>(
                                                  X.cols(), 1))
                    : 0.0;
      cur = lasso_at_lambda(cp, lambda, pass == 0 ? warm0 : cur.coef,
                            pass == 2);
      const VectorXd r = cp.yc - cp.Xc * cur.coef;
      sigma = weighted_residual_scale(r, cp.wn);
      cur.sigma_hat = sigma;
    }
    fit = std::move(cur);
  } else {
    // K-fold cross-validation over a geometric penalty path, scored by
    // weighted validation error of the penalized fit; final refit on all rows.
    const double lmax = lambda_max_of(cp);
    if (lmax <= 0) {
      fit = lasso_at_lambda(cp, 0.0, warm0, true);
    } else {
      std::vector<double> grid(kCvGridPoints);
      const double ratio =
          std::pow(kCvGridFloor, 1.0 / (kCvGridPoints - 1));
      double l = lmax;
      for (int i = 0; i < kCvGridPoints; ++i, l *= ratio) grid[static_cast<std::size_t>(i)] = l;

      const int K = settings.cv_folds;
      if (n < K) {
        throw validation_error("lasso cross-validation folds exceed rows");
      }
      std::vector<int> fold(static_cast<std::size_t>(n));
      {
        std::vector<std::size_t> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        Rng rng(derive_seed(settings.seed, fnv1a("lasso-cv-folds")));
        rng.shuffle(order);
        for (std::size_t k = 0; k < order.size(); ++k) {
          fold[order[k]] = static_cast<int>(k % static_cast<std::size_t>(K));
        }
      }
      std::vector<double> cv_err(grid.size(), 0.0);
      for (int k = 0; k < K; ++k) {
        std::vector<Eigen::Index> tr, va;
        for (Eigen::Index i = 0; i < n; ++i) {
          (fold[static_cast<std::size_t>(i)] == k ? va : tr).push_back(i);
        }
        MatrixXd Xt(static_cast<Eigen::Index>(tr.size()), X.cols());
        VectorXd yt(tr.size()), wt(tr.size());
        for (std::size_t i = 0; i < tr.size(); ++i) {
          Xt.row(static_cast<Eigen::Index>(i)) = X.row(tr[i]);
          yt[static_cast<Eigen::Index>(i)] = y[tr[i]];
          wt[static_cast<Eigen::Index>(i)] = w[tr[i]];
        }
        const CenteredProblem cpt = center_problem(Xt, yt, wt);
        VectorXd warm = VectorXd::Zero(X.cols());
        for (std::size_t gi = 0; gi < grid.size(); ++gi) {
          LassoFit f = lasso_at_lambda(cpt, grid[gi], warm, false);
          warm = f.coef;
          for (Eigen::Index vi : va) {
            const double pred = f.intercept + X.row(vi).dot(f.coef);
            cv_err[gi] += w[vi] * (y[vi] - pred) * (y[vi] - pred);
          }
        }
      }
      const std::size_t best = static_cast<std::size_t>(
          std::min_element(cv_err.begin(), cv_err.end()) - cv_err.begin());
      fit = lasso_at_lambda(cp, grid[best], warm0, true);
    }
  }

  // Post-selection OLS refit on the support, used for prediction.
  fit.post_coef = VectorXd::Zero(X.cols());
  fit.post_intercept = fit.intercept;
  if (settings.post_refit) {
    std::vector<Eigen::Index> support;
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
      if (fit.coef[j] != 0.0) support.push_back(j);
    }
    if (support.empty()) {
      fit.post_refit = true;
      fit.post_intercept = cp.y_mean;
    } else {
      MatrixXd Xs(n, static_cast<Eigen::Index>(support.size()) + 1);
      Xs.col(0) = VectorXd::Ones(n);
      std::vector<std::string> sn{"intercept"};
      for (std::size_t j = 0; j < support.size(); ++j) {
        Xs.col(static_cast<Eigen::Index>(j) + 1) = X.col(support[j]);
        sn.push_back(support[j] < static_cast<Eigen::Index>(names.size())
                         ? names[static_cast<std::size_t>(support[j])]
                         : "column " + std::to_string(support[j]));
      }
      try {
        Eigen::ColPivHouseholderQR<MatrixXd> qr(
            (w.cwiseSqrt().asDiagonal() * Xs).eval());
        qr.setThreshold(1e-10);
        if (qr.rank() < Xs.cols()) throw numeric_error("collinear support");
        const VectorXd bs = qr.solve(w.cwiseSqrt().cwiseProduct(y).eval());
        fit.post_refit = true;
        fit.post_intercept = bs[0];
        for (std::size_t j = 0; j < support.size(); ++j) {
          fit.post_coef[support[j]] = bs[static_cast<Eigen::Index>(j) + 1];
        }
      } catch (const numeric_error&) {
        fit.post_refit = false;  // fall back to penalized coefficients
      }
    }
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Feed-forward network.
// ---------------------------------------------------------------------------

namespace {
MatrixXd sigmoid(const MatrixXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}
}  // namespace

Mlp Mlp::init(const std::vector<int>& layer_sizes, Rng& rng) {
  Mlp net;
  for (std::size_t l = 1; l < layer_sizes.size(); ++l) {
    const int fan_in = layer_sizes[l - 1];
    const int fan_out = layer_sizes[l];
    const bool output_layer = l + 1 == layer_sizes.size();
    // Hidden layers start at scaled-uniform random weights; the linear output
    // layer starts at zero, so the initial prediction is exactly the
    // (standardized) target mean and a constant target is fit from step one.
    const double bound =
        output_layer ? 0.0 : 1.0 / std::sqrt(static_cast<double>(fan_in));
    MatrixXd W(fan_out, fan_in);
    for (int i = 0; i < fan_out; ++i) {
      for (int j = 0; j < fan_in; ++j) {
        W(i, j) = bound == 0.0 ? 0.0 : rng.uniform(-bound, bound);
      }
    }
    VectorXd bvec(fan_out);
    for (int i = 0; i < fan_out; ++i) {
      bvec[i] = bound == 0.0 ? 0.0 : rng.uniform(-bound, bound);
    }
    net.W.push_back(std::move(W));
    net.b.push_back(std::move(bvec));
  }
  return net;
}

VectorXd Mlp::forward(const MatrixXd& X) const {
  MatrixXd a = X;
  for (std::size_t l = 0; l < W.size(); ++l) {
    MatrixXd z = a * W[l].transpose();
    z.rowwise() += b[l].transpose();
    a = (l + 1 < W.size()) ? sigmoid(z) : z;
  }
  return a.col(0);
}

double Mlp::loss(const MatrixXd& X, const VectorXd& y,
                 const VectorXd& wn) const {
  const VectorXd e = forward(X) - y;
  return 0.5 * wn.cwiseProduct(e).dot(e);
}

Mlp::Gradients Mlp::gradient(const MatrixXd& X, const VectorXd& y,
                             const VectorXd& wn) const {
  const std::size_t L = W.size();
  std::vector<MatrixXd> act(L + 1);
  act[0] = X;
  for (std::size_t l = 0; l < L; ++l) {
    MatrixXd z = act[l] * W[l].transpose();
    z.rowwise() += b[l].transpose();
    act[l + 1] = (l + 1 < L) ? sigmoid(z) : z;
  }
  Gradients g;
  g.W.resize(L);
  g.b.resize(L);
  // Output delta: wn .* (prediction - target).
  MatrixXd delta = act[L].col(0) - y;
  delta = wn.cwiseProduct(delta.col(0)).eval();
  for (std::size_t l = L; l-- > 0;) {
    g.W[l] = delta.transpose() * act[l];
    g.b[l] = delta.colwise().sum().transpose();
    if (l > 0) {
      MatrixXd back = delta * W[l];
      delta = back.cwiseProduct(
          act[l].cwiseProduct((1.0 - act[l].array()).matrix()));
    }
  }
  return g;
}

void Mlp::step(const Gradients& g, double rate) {
  for (std::size_t l = 0; l < W.size(); ++l) {
    const double scale = rate / static_cast<double>(W[l].cols());
    W[l] -= scale * g.W[l];
    b[l] -= scale * g.b[l];
  }
}

VectorXd MlpFit::predict(const MatrixXd& X) const {
  return net.forward(X).array() * target_scale + target_mean;
}

MlpFit fit_mlp(const MatrixXd& X, const VectorXd& y, const VectorXd& w,
               const LearnerSpec& spec, std::uint64_t seed) {
  spec.validate();
  const auto n = X.rows();
  const int widest =
      *std::max_element(spec.mlp_hidden.begin(), spec.mlp_hidden.end());
  if (n <= widest) {
    throw validation_error(
        "network training needs more rows than the widest hidden layer (" +
        std::to_string(n) + " <= " + std::to_string(widest) + ")");
  }
  MlpFit fit;
  fit.target_mean = weighted_mean(y, w);
  const double sd = std::sqrt(weighted_var(y, w));
  fit.target_scale = sd > 0 ? sd : 1.0;
  const VectorXd ys = (y.array() - fit.target_mean) / fit.target_scale;
  const VectorXd wn = w / w.sum();

  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(X.cols()));
  for (int h : spec.mlp_hidden) sizes.push_back(h);
  sizes.push_back(1);
  Rng rng(seed);
  fit.net = Mlp::init(sizes, rng);

  for (int it = 0; it < spec.mlp_iters; ++it) {
    const Mlp::Gradients g = fit.net.gradient(X, ys, wn);
    fit.net.step(g, spec.mlp_rate);
    ++fit.iters;
  }
  fit.final_loss = fit.net.loss(X, ys, wn);
  if (!std::isfinite(fit.final_loss)) {
    throw numeric_error(
        "network training diverged (loss is not finite); reduce the training "
        "rate");
  }
  return fit;
}

// ---------------------------------------------------------------------------
// Full learner pipeline and cross-fitting.
// ---------------------------------------------------------------------------

FittedLearner fit_learner(const MatrixXd& raw_vars,
                          const std::vector<std::string>& var_names,
                          const VectorXd& target, const VectorXd& weights,
                          const LearnerSpec& spec, std::uint64_t seed) {
  spec.validate();
  FittedLearner f;
  f.kind = spec.kind;
  f.degree = spec.degree;

  if (spec.kind == LearnerKind::Mlp) {
    f.standardizer = Standardizer::fit(raw_vars, weights, var_names);
  } else {
    const PolyExpansion exp = poly_features(raw_vars, var_names, spec.degree);
    f.standardizer = Standardizer::fit(exp.X, weights, exp.names);
  }
  for (const auto& nm : f.standardizer.dropped_names) {
    f.warnings.push_back("dropped zero-variance column '" + nm + "'");
  }
  if (f.standardizer.keep.empty()) {
    // Constant conditioning: the conditional mean is the weighted mean.
    f.constant_shortcut = true;
    f.constant_value = weighted_mean(target, weights);
    return f;
  }

  if (spec.kind == LearnerKind::Mlp) {
    const MatrixXd Xs = f.standardizer.apply(raw_vars);
    f.mlp = fit_mlp(Xs, target, weights, spec, seed);
  } else {
    const PolyExpansion exp = poly_features(raw_vars, var_names, spec.degree);
    const MatrixXd Xs = f.standardizer.apply(exp.X);
    if (spec.kind == LearnerKind::PolyLasso) {
      LassoSettings ls;
      ls.rule = spec.penalty;
      ls.fixed_lambda = spec.fixed_lambda;
      ls.cv_folds = spec.cv_folds;
      ls.post_refit = spec.post_lasso;
      ls.seed = seed;
      f.lasso = fit_lasso(Xs, target, weights, ls, f.standardizer.kept_names);
    } else {
      MatrixXd Xi(Xs.rows(), Xs.cols() + 1);
      Xi.col(0) = VectorXd::Ones(Xs.rows());
      Xi.rightCols(Xs.cols()) = Xs;
      Eigen::ColPivHouseholderQR<MatrixXd> qr(
          (weights.cwiseSqrt().asDiagonal() * Xi).eval());
      qr.setThreshold(1e-10);
      if (qr.rank() < Xi.cols()) {
        std::string msg =
            "polynomial regression design is rank deficient; columns: ";
        for (std::size_t j = 0; j < f.standardizer.kept_names.size(); ++j) {
          if (j) msg += ", ";
          msg += f.standardizer.kept_names[j];
        }
        throw numeric_error(msg);
      }
      f.ols_coef =
          qr.solve(weights.cwiseSqrt().cwiseProduct(target).eval());
    }
  }
  return f;
}

VectorXd FittedLearner::predict(const MatrixXd& raw_vars) const {
  const auto n = raw_vars.rows();
  if (constant_shortcut) {
    return VectorXd::Constant(n, constant_value);
  }
  if (kind == LearnerKind::Mlp) {
    return mlp.predict(standardizer.apply(raw_vars));
  }
  std::vector<std::string> dummy_names(
      static_cast<std::size_t>(raw_vars.cols()));
  const PolyExpansion exp = poly_features(raw_vars, dummy_names, degree);
  const MatrixXd Xs = standardizer.apply(exp.X);
  if (kind == LearnerKind::PolyLasso) {
    return lasso.predict(Xs);
  }
  return (Xs * ols_coef.tail(ols_coef.size() - 1)).array() + ols_coef[0];
}

CrossFitResult cross_fit(const MatrixXd& raw_vars,
                         const std::vector<std::string>& var_names,
                         const VectorXd& target, const VectorXd& weights,
                         const std::vector<int>& fold_of_row, int L,
                         const LearnerSpec& spec, const std::string& target_tag,
                         int threads) {
  spec.validate();
  const auto n = raw_vars.rows();
  if (static_cast<Eigen::Index>(fold_of_row.size()) != n ||
      target.size() != n || weights.size() != n) {
    throw validation_error("cross-fit inputs disagree on length");
  }
  if (L < 2) throw validation_error("cross-fitting needs at least 2 folds");
  for (int fl : fold_of_row) {
    if (fl < 0 || fl >= L) {
      throw validation_error("row fold index out of range");
    }
  }

  CrossFitResult out;
  out.predictions = VectorXd::Zero(n);
  out.folds.resize(static_cast<std::size_t>(L));

  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(L));
  auto run_fold = [&](int fold) {
    try {
      std::vector<Eigen::Index> train, test;
      for (Eigen::Index i = 0; i < n; ++i) {
        (fold_of_row[static_cast<std::size_t>(i)] == fold ? test : train)
            .push_back(i);
      }
      if (train.empty()) {
        throw validation_error("fold " + std::to_string(fold + 1) +
                               " has no training rows");
      }
      MatrixXd Xt(static_cast<Eigen::Index>(train.size()), raw_vars.cols());
      VectorXd yt(train.size()), wt(train.size());
      for (std::size_t i = 0; i < train.size(); ++i) {
        Xt.row(static_cast<Eigen::Index>(i)) = raw_vars.row(train[i]);
        yt[static_cast<Eigen::Index>(i)] = target[train[i]];
        wt[static_cast<Eigen::Index>(i)] = weights[train[i]];
      }
      const std::uint64_t fold_seed = derive_seed(
          spec.seed, fnv1a("crossfit:" + target_tag),
          static_cast<std::uint64_t>(fold));
      const FittedLearner f =
          fit_learner(Xt, var_names, yt, wt, spec, fold_seed);

      FoldDiagnostics& diag = out.folds[static_cast<std::size_t>(fold)];
      diag.fold = fold + 1;
      diag.n_train = static_cast<int>(train.size());
      diag.n_test = static_cast<int>(test.size());
      const VectorXd train_pred = f.predict(Xt);
      const VectorXd err = yt - train_pred;
      diag.train_mse = wt.cwiseProduct(err).dot(err) / wt.sum();
      diag.warnings = f.warnings;
      if (spec.kind == LearnerKind::PolyLasso && !f.constant_shortcut) {
        for (std::size_t j = 0; j < f.lasso.selected.size(); ++j) {
          if (f.lasso.selected[j]) {
            diag.selected.push_back(f.standardizer.kept_names[j]);
          }
        }
        diag.lambda = f.lasso.lambda;
        diag.sweeps = f.lasso.sweeps;
        diag.gap = f.lasso.gap;
      }
      if (spec.kind == LearnerKind::Mlp && !f.constant_shortcut) {
        diag.mlp_final_loss = f.mlp.final_loss;
        diag.mlp_iters = f.mlp.iters;
      }
      if (!test.empty()) {
        MatrixXd Xv(static_cast<Eigen::Index>(test.size()), raw_vars.cols());
        for (std::size_t i = 0; i < test.size(); ++i) {
          Xv.row(static_cast<Eigen::Index>(i)) = raw_vars.row(test[i]);
        }
        const VectorXd pred = f.predict(Xv);
        for (std::size_t i = 0; i < test.size(); ++i) {
          out.predictions[test[i]] = pred[static_cast<Eigen::Index>(i)];
        }
      }
    } catch (...) {
      errors[static_cast<std::size_t>(fold)] = std::current_exception();
    }
  };

  const int workers = std::max(1, std::min(threads, L));
  if (workers == 1) {
    for (int fold = 0; fold < L; ++fold) run_fold(fold);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int fold = next.fetch_add(1); fold < L;
             fold = next.fetch_add(1)) {
          run_fold(fold);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

}  // namespace fda
