#include "simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <sstream>
#include <thread>

#include <Eigen/Eigenvalues>

#include "estimators.hpp"

namespace fda {

namespace {

bool slopes_depend_on_baseline(const DgpSpec& spec) {
  auto dep = [](const SlopeParams& p) { return p.b != 0.0 || p.c != 0.0; };
  if (spec.shared_slopes) return dep(spec.s2);
  bool any = dep(spec.s1) || dep(spec.s2);
  if (spec.n_periods == 3) any = any || dep(spec.s0);
  return any;
}

double slope_mean(const SlopeParams& p, double d1) {
  return p.a + p.b * d1 + p.c * d1 * d1;
}

double transition_mean(const DgpSpec& spec, double d) {
  switch (spec.path) {
    case PathLaw::Ar1:
      return spec.ar1_const + spec.ar1_slope * d;
    case PathLaw::JointNormal:
      return spec.jn_mean2 +
             spec.jn_rho * spec.jn_sd2 / spec.init_sd * (d - spec.init_mean);
    case PathLaw::Independent:
      return spec.ind_mean;
    case PathLaw::Binary:
      return d > 0.5 ? spec.bin_p11 : spec.bin_p01;
  }
  return 0;
}

double transition_var(const DgpSpec& spec, double d) {
  switch (spec.path) {
    case PathLaw::Ar1:
      return spec.ar1_sd * spec.ar1_sd;
    case PathLaw::JointNormal:
      return spec.jn_sd2 * spec.jn_sd2 * (1.0 - spec.jn_rho * spec.jn_rho);
    case PathLaw::Independent:
      return spec.ind_sd * spec.ind_sd;
    case PathLaw::Binary: {
      const double p = d > 0.5 ? spec.bin_p11 : spec.bin_p01;
      return p * (1.0 - p);
    }
  }
  return 0;
}

double draw_transition(const DgpSpec& spec, double d, Rng& rng) {
  switch (spec.path) {
    case PathLaw::Ar1:
      return spec.ar1_const + spec.ar1_slope * d + spec.ar1_sd * rng.normal();
    case PathLaw::JointNormal: {
      const double mu = transition_mean(spec, d);
      const double sd =
          spec.jn_sd2 * std::sqrt(1.0 - spec.jn_rho * spec.jn_rho);
      return mu + sd * rng.normal();
    }
    case PathLaw::Independent:
      return spec.ind_mean + spec.ind_sd * rng.normal();
    case PathLaw::Binary:
      return rng.bernoulli(d > 0.5 ? spec.bin_p11 : spec.bin_p01) ? 1.0 : 0.0;
  }
  return 0;
}

double alpha_at(const DgpSpec& spec, int t) {
  return spec.alpha.empty() ? 0.0
                            : spec.alpha[static_cast<std::size_t>(t)];
}

const SlopeParams& slope_params_at(const DgpSpec& spec, int t) {
  if (spec.shared_slopes) return spec.s2;
  if (spec.n_periods == 2) return t == 0 ? spec.s1 : spec.s2;
  return t == 0 ? spec.s0 : (t == 1 ? spec.s1 : spec.s2);
}

}  // namespace

void DgpSpec::validate() const {
  if (n_units < 4) {
    throw validation_error("simulation needs at least 4 units");
  }
  if (n_periods != 2 && n_periods != 3) {
    throw validation_error("simulation supports 2 or 3 periods, got " +
                           std::to_string(n_periods));
  }
  const bool needs3 = mode == AssumptionMode::Sequential3p;
  if (needs3 != (n_periods == 3)) {
    throw validation_error(
        needs3 ? "assumption mode sequential-3p requires 3 periods"
               : "a 3-period design requires assumption mode sequential-3p");
  }
  if ((initial == InitialLaw::Bernoulli) != (path == PathLaw::Binary)) {
    throw validation_error(
        "binary treatment paths require a bernoulli initial law and vice "
        "versa (mixed continuous/binary treatment laws are inconsistent)");
  }
  if (path == PathLaw::JointNormal && n_periods != 2) {
    throw validation_error(
        "the joint-normal law specifies one period pair; use ar1 or "
        "independent for 3-period designs");
  }
  if (initial == InitialLaw::Normal && !(init_sd > 0)) {
    throw validation_error("initial treatment law needs a positive sd");
  }
  if (initial == InitialLaw::Bernoulli &&
      (init_p < 0 || init_p > 1)) {
    throw validation_error("bernoulli probability must lie in [0, 1]");
  }
  if (path == PathLaw::Binary &&
      (bin_p01 < 0 || bin_p01 > 1 || bin_p11 < 0 || bin_p11 > 1)) {
    throw validation_error("transition probabilities must lie in [0, 1]");
  }
  if (ar1_sd < 0 || jn_sd2 < 0 || ind_sd < 0 || theta_sd < 0 || u_sd < 0 ||
      s0.sd < 0 || s1.sd < 0 || s2.sd < 0) {
    throw validation_error("scale parameters must be nonnegative");
  }
  if (path == PathLaw::JointNormal && (jn_rho <= -1 || jn_rho >= 1)) {
    throw validation_error("joint-normal correlation must lie in (-1, 1)");
  }
  if (!alpha.empty() &&
      static_cast<int>(alpha.size()) != n_periods) {
    throw validation_error(
        "period-effect list must have one entry per period");
  }
  if ((mode == AssumptionMode::RandomFd ||
       mode == AssumptionMode::RandomPaths) &&
      slopes_depend_on_baseline(*this)) {
    throw validation_error(
        "random-fd / random-paths modes require slopes independent of the "
        "baseline treatment (zero linear and quadratic slope terms); use "
        "mode sequential for baseline-dependent effects");
  }
}

GeneratedPanel generate(const DgpSpec& spec, std::uint64_t seed) {
  spec.validate();
  const int G = spec.n_units;
  const int P = spec.n_periods;

  GeneratedPanel out;
  out.spec = spec;
  out.spec.seed = seed;
  out.truth.s.resize(G, P);
  out.truth.y0.resize(G, P);

  PanelDataset& ds = out.panel;
  ds.periods.resize(static_cast<std::size_t>(P));
  for (int t = 0; t < P; ++t) ds.periods[static_cast<std::size_t>(t)] = t + 1;
  const int width = static_cast<int>(std::to_string(G - 1).size());
  ds.units.resize(static_cast<std::size_t>(G));
  ds.cluster_ids.resize(static_cast<std::size_t>(G));
  ds.unit_weight.assign(static_cast<std::size_t>(G), 1.0);
  ds.unit_cluster.resize(static_cast<std::size_t>(G));
  ds.y.resize(static_cast<std::size_t>(G) * P);
  ds.d.resize(static_cast<std::size_t>(G) * P);

  Rng rng(derive_seed(seed, fnv1a("dgp")));
  std::vector<double> d(static_cast<std::size_t>(P));
  std::vector<double> u(static_cast<std::size_t>(P));
  for (int g = 0; g < G; ++g) {
    std::string id = std::to_string(g);
    id = "u" + std::string(static_cast<std::size_t>(width) - id.size(), '0') +
         id;
    ds.units[static_cast<std::size_t>(g)] = id;
    ds.cluster_ids[static_cast<std::size_t>(g)] = id;
    ds.unit_cluster[static_cast<std::size_t>(g)] = g;

    const double theta = spec.theta_sd * rng.normal();
    for (int t = 0; t < P; ++t) u[static_cast<std::size_t>(t)] = spec.u_sd * rng.normal();

    d[0] = spec.initial == InitialLaw::Normal
               ? spec.init_mean + spec.init_sd * rng.normal()
               : (rng.bernoulli(spec.init_p) ? 1.0 : 0.0);
    for (int t = 1; t < P; ++t) {
      d[static_cast<std::size_t>(t)] =
          draw_transition(spec, d[static_cast<std::size_t>(t - 1)], rng);
    }
    const double d1 = d[static_cast<std::size_t>(P - 2)];

    if (spec.shared_slopes) {
      const double s =
          slope_mean(spec.s2, d1) + spec.s2.sd * rng.normal();
      for (int t = 0; t < P; ++t) out.truth.s(g, t) = s;
    } else {
      for (int t = 0; t < P; ++t) {
        const SlopeParams& p = slope_params_at(spec, t);
        out.truth.s(g, t) = slope_mean(p, d1) + p.sd * rng.normal();
      }
    }

    for (int t = 0; t < P; ++t) {
      const double y0 = theta + alpha_at(spec, t) + u[static_cast<std::size_t>(t)];
      out.truth.y0(g, t) = y0;
      const std::size_t i = static_cast<std::size_t>(g) * P +
                            static_cast<std::size_t>(t);
      ds.d[i] = d[static_cast<std::size_t>(t)];
      ds.y[i] = y0 + out.truth.s(g, t) * d[static_cast<std::size_t>(t)];
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact conditionals and moments.
// ---------------------------------------------------------------------------

double true_eta(const DgpSpec& spec, double d1) {
  return transition_mean(spec, d1) - d1;
}

double true_vdd(const DgpSpec& spec, double d1) {
  return transition_var(spec, d1);
}

double true_es1(const DgpSpec& spec, double d1) {
  return slope_mean(spec.shared_slopes ? spec.s2 : spec.s1, d1);
}

double true_es2(const DgpSpec& spec, double d1) {
  return slope_mean(spec.s2, d1);
}

double true_gamma(const DgpSpec& spec, double d1) {
  const double dalpha = alpha_at(spec, spec.n_periods - 1) -
                        alpha_at(spec, spec.n_periods - 2);
  const double es2 = true_es2(spec, d1);
  const double es1 = true_es1(spec, d1);
  return dalpha + es2 * true_eta(spec, d1) + (es2 - es1) * d1;
}

BaselineMoments baseline_moments(const DgpSpec& spec) {
  BaselineMoments m;
  if (spec.initial == InitialLaw::Normal) {
    m.mean = spec.init_mean;
    m.var = spec.init_sd * spec.init_sd;
  } else {
    m.mean = spec.init_p;
    m.var = spec.init_p * (1.0 - spec.init_p);
  }
  // Walk the chain to the baseline of the final pair.
  for (int step = 0; step < spec.n_periods - 2; ++step) {
    switch (spec.path) {
      case PathLaw::Ar1:
        m.mean = spec.ar1_const + spec.ar1_slope * m.mean;
        m.var = spec.ar1_slope * spec.ar1_slope * m.var +
                spec.ar1_sd * spec.ar1_sd;
        break;
      case PathLaw::Independent:
        m.mean = spec.ind_mean;
        m.var = spec.ind_sd * spec.ind_sd;
        break;
      case PathLaw::Binary:
        m.mean = spec.bin_p01 + (spec.bin_p11 - spec.bin_p01) * m.mean;
        m.var = m.mean * (1.0 - m.mean);
        break;
      case PathLaw::JointNormal:
        throw validation_error(
            "joint-normal law cannot be chained beyond one pair");
    }
  }
  return m;
}

PairMoments pair_moments(const DgpSpec& spec) {
  const BaselineMoments base = baseline_moments(spec);
  PairMoments m;
  m.e1 = base.mean;
  m.v1 = base.var;
  switch (spec.path) {
    case PathLaw::Ar1:
      m.e2 = spec.ar1_const + spec.ar1_slope * m.e1;
      m.v2 = spec.ar1_slope * spec.ar1_slope * m.v1 +
             spec.ar1_sd * spec.ar1_sd;
      m.cov = spec.ar1_slope * m.v1;
      break;
    case PathLaw::JointNormal:
      m.e2 = spec.jn_mean2;
      m.v2 = spec.jn_sd2 * spec.jn_sd2;
      m.cov = spec.jn_rho * spec.init_sd * spec.jn_sd2;
      break;
    case PathLaw::Independent:
      m.e2 = spec.ind_mean;
      m.v2 = spec.ind_sd * spec.ind_sd;
      m.cov = 0;
      break;
    case PathLaw::Binary:
      m.e2 = spec.bin_p01 + (spec.bin_p11 - spec.bin_p01) * m.e1;
      m.v2 = m.e2 * (1.0 - m.e2);
      m.cov = m.e1 * (1.0 - m.e1) * (spec.bin_p11 - spec.bin_p01);
      break;
  }
  return m;
}

double target_fd_ols(const DgpSpec& spec) {
  if (slopes_depend_on_baseline(spec)) {
    throw validation_error(
        "closed-form FD target requires slopes independent of the baseline");
  }
  const PairMoments m = pair_moments(spec);
  const double v_dd = m.v1 + m.v2 - 2.0 * m.cov;
  const double cov_dd_d1 = m.cov - m.v1;
  const double es1 = spec.shared_slopes ? spec.s2.a : spec.s1.a;
  const double es2 = spec.s2.a;
  return es2 + (es2 - es1) * cov_dd_d1 / v_dd;
}

double target_omega1(const DgpSpec& spec) {
  const PairMoments m = pair_moments(spec);
  const double denom = m.v1 + m.v2 - 2.0 * m.cov;
  return (m.v1 - m.cov) / denom;
}

double target_beta_d1_closed(const DgpSpec& spec) {
  const BaselineMoments base = baseline_moments(spec);
  if (spec.path == PathLaw::Binary) {
    // Exact enumeration over the two baseline states.
    const double p1 = base.mean;
    double num = 0, den = 0;
    for (int d = 0; d <= 1; ++d) {
      const double prob = d == 1 ? p1 : 1.0 - p1;
      const double v = true_vdd(spec, d);
      num += prob * v * true_es2(spec, d);
      den += prob * v;
    }
    return num / den;
  }
  // Continuous menu laws have constant V(dD | D1), so the variance weights
  // cancel and the target is E[E(S2 | D1)].
  return spec.s2.a + spec.s2.b * base.mean +
         spec.s2.c * (base.var + base.mean * base.mean);
}

double target_beta_d1_quadrature(const DgpSpec& spec) {
  if (spec.initial != InitialLaw::Normal) {
    throw validation_error(
        "quadrature route needs a normal baseline treatment");
  }
  const BaselineMoments base = baseline_moments(spec);
  const QuadratureRule q = gauss_hermite(64);
  const double sd = std::sqrt(base.var);
  double num = 0, den = 0;
  for (std::size_t k = 0; k < q.nodes.size(); ++k) {
    const double x = base.mean + sd * q.nodes[k];
    const double v = true_vdd(spec, x);
    num += q.weights[k] * v * true_es2(spec, x);
    den += q.weights[k] * v;
  }
  return num / den;
}

QuadratureRule gauss_hermite(int n) {
  if (n < 1) throw validation_error("quadrature needs at least 1 node");
  MatrixXd J = MatrixXd::Zero(n, n);
  for (int k = 0; k + 1 < n; ++k) {
    const double off = std::sqrt((k + 1) / 2.0);
    J(k, k + 1) = off;
    J(k + 1, k) = off;
  }
  Eigen::SelfAdjointEigenSolver<MatrixXd> es(J);
  QuadratureRule rule;
  rule.nodes.resize(static_cast<std::size_t>(n));
  rule.weights.resize(static_cast<std::size_t>(n));
  for (int k = 0; k < n; ++k) {
    // Physicists' nodes integrate against exp(-x^2); stretching by sqrt(2)
    // and normalizing the weights to unit mass turns the rule into an
    // expectation under the standard normal law.
    rule.nodes[static_cast<std::size_t>(k)] =
        std::sqrt(2.0) * es.eigenvalues()[k];
    const double v0 = es.eigenvectors()(0, k);
    rule.weights[static_cast<std::size_t>(k)] = v0 * v0;  // sums to 1
  }
  return rule;
}

// ---------------------------------------------------------------------------
// Plain-text configuration.
// ---------------------------------------------------------------------------

namespace {

std::string strip(const std::string& s) {
  std::size_t b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  std::size_t e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct Call {
  std::string name;
  std::vector<double> args;
};

Call parse_call(const std::string& raw, const std::string& key) {
  const std::string s = strip(raw);
  Call c;
  const std::size_t open = s.find('(');
  if (open == std::string::npos) {
    c.name = s;
    return c;
  }
  if (s.back() != ')') {
    throw validation_error("config key '" + key + "': malformed value '" + s +
                           "'");
  }
  c.name = strip(s.substr(0, open));
  const std::string inner = s.substr(open + 1, s.size() - open - 2);
  std::stringstream ss(inner);
  std::string piece;
  while (std::getline(ss, piece, ',')) {
    const std::string t = strip(piece);
    if (t.empty()) continue;
    try {
      std::size_t pos = 0;
      const double v = std::stod(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      c.args.push_back(v);
    } catch (const std::exception&) {
      throw validation_error("config key '" + key +
                             "': non-numeric argument '" + t + "'");
    }
  }
  return c;
}

void expect_args(const Call& c, const std::string& key, std::size_t n) {
  if (c.args.size() != n) {
    throw validation_error("config key '" + key + "': '" + c.name +
                           "' expects " + std::to_string(n) +
                           " argument(s), got " +
                           std::to_string(c.args.size()));
  }
}

SlopeParams parse_slope(const Call& c, const std::string& key) {
  SlopeParams p;
  if (c.name == "const") {
    expect_args(c, key, 1);
    p.a = c.args[0];
  } else if (c.name == "linear") {
    expect_args(c, key, 3);
    p.a = c.args[0];
    p.b = c.args[1];
    p.sd = c.args[2];
  } else if (c.name == "quadratic") {
    expect_args(c, key, 4);
    p.a = c.args[0];
    p.b = c.args[1];
    p.c = c.args[2];
    p.sd = c.args[3];
  } else {
    throw validation_error("config key '" + key + "': unknown slope law '" +
                           c.name + "' (const | linear | quadratic)");
  }
  return p;
}

double parse_number(const std::string& raw, const std::string& key) {
  const std::string s = strip(raw);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw validation_error("config key '" + key + "': non-numeric value '" +
                           s + "'");
  }
}

}  // namespace

DgpSpec parse_dgp_config(const std::string& text) {
  DgpSpec spec;
  std::stringstream ss(text);
  std::string line;
  while (std::getline(ss, line)) {
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = strip(line);
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw validation_error("config line without '=': '" + line + "'");
    }
    const std::string key = strip(line.substr(0, eq));
    const std::string value = strip(line.substr(eq + 1));

    if (key == "units") {
      spec.n_units = static_cast<int>(parse_number(value, key));
    } else if (key == "periods") {
      spec.n_periods = static_cast<int>(parse_number(value, key));
    } else if (key == "seed") {
      spec.seed = static_cast<std::uint64_t>(parse_number(value, key));
    } else if (key == "theta_sd") {
      spec.theta_sd = parse_number(value, key);
    } else if (key == "u_sd") {
      spec.u_sd = parse_number(value, key);
    } else if (key == "mode") {
      if (value == "random-fd") spec.mode = AssumptionMode::RandomFd;
      else if (value == "random-paths") spec.mode = AssumptionMode::RandomPaths;
      else if (value == "sequential") spec.mode = AssumptionMode::Sequential;
      else if (value == "sequential-3p") spec.mode = AssumptionMode::Sequential3p;
      else
        throw validation_error(
            "config key 'mode': unknown mode '" + value +
            "' (random-fd | random-paths | sequential | sequential-3p)");
    } else if (key == "d1") {
      const Call c = parse_call(value, key);
      if (c.name == "normal") {
        expect_args(c, key, 2);
        spec.initial = InitialLaw::Normal;
        spec.init_mean = c.args[0];
        spec.init_sd = c.args[1];
      } else if (c.name == "bernoulli") {
        expect_args(c, key, 1);
        spec.initial = InitialLaw::Bernoulli;
        spec.init_p = c.args[0];
      } else {
        throw validation_error("config key 'd1': unknown law '" + c.name +
                               "' (normal | bernoulli)");
      }
    } else if (key == "path") {
      const Call c = parse_call(value, key);
      if (c.name == "ar1") {
        expect_args(c, key, 3);
        spec.path = PathLaw::Ar1;
        spec.ar1_const = c.args[0];
        spec.ar1_slope = c.args[1];
        spec.ar1_sd = c.args[2];
      } else if (c.name == "jointnormal") {
        expect_args(c, key, 3);
        spec.path = PathLaw::JointNormal;
        spec.jn_mean2 = c.args[0];
        spec.jn_sd2 = c.args[1];
        spec.jn_rho = c.args[2];
      } else if (c.name == "independent") {
        expect_args(c, key, 2);
        spec.path = PathLaw::Independent;
        spec.ind_mean = c.args[0];
        spec.ind_sd = c.args[1];
      } else if (c.name == "binary") {
        expect_args(c, key, 2);
        spec.path = PathLaw::Binary;
        spec.bin_p01 = c.args[0];
        spec.bin_p11 = c.args[1];
      } else {
        throw validation_error(
            "config key 'path': unknown law '" + c.name +
            "' (ar1 | jointnormal | independent | binary)");
      }
    } else if (key == "s0") {
      spec.s0 = parse_slope(parse_call(value, key), key);
    } else if (key == "s1") {
      spec.s1 = parse_slope(parse_call(value, key), key);
    } else if (key == "s2") {
      spec.s2 = parse_slope(parse_call(value, key), key);
    } else if (key == "slopes") {
      const Call c = parse_call(value, key);
      if (c.name == "shared") {
        // Positional form: shared(a) or shared(a,b,sd) or shared(a,b,c,sd).
        SlopeParams p;
        if (c.args.size() == 1) {
          p.a = c.args[0];
        } else if (c.args.size() == 3) {
          p.a = c.args[0];
          p.b = c.args[1];
          p.sd = c.args[2];
        } else if (c.args.size() == 4) {
          p.a = c.args[0];
          p.b = c.args[1];
          p.c = c.args[2];
          p.sd = c.args[3];
        } else {
          throw validation_error(
              "config key 'slopes': shared(a) or shared(a,b,sd) or "
              "shared(a,b,c,sd)");
        }
        spec.shared_slopes = true;
        spec.s2 = p;
        spec.s1 = p;
      } else {
        throw validation_error("config key 'slopes': only 'shared(...)' is "
                               "recognized; use s1=/s2= for per-period laws");
      }
    } else if (key == "alpha") {
      spec.alpha.clear();
      std::stringstream as(value);
      std::string piece;
      while (std::getline(as, piece, ',')) {
        spec.alpha.push_back(parse_number(piece, key));
      }
    } else {
      throw validation_error("unknown config key '" + key + "'");
    }
  }
  spec.validate();
  return spec;
}

DgpSpec load_dgp_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw validation_error("cannot open simulation config '" + path + "'");
  }
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_dgp_config(buf.str());
}

// ---------------------------------------------------------------------------
// Oracle engine.
// ---------------------------------------------------------------------------

std::string theorem_name(Theorem t) {
  switch (t) {
    case Theorem::Ovb: return "ovb";
    case Theorem::PathWeights: return "path-weights";
    case Theorem::BetaD1: return "beta-d1";
    case Theorem::Placebo: return "placebo";
  }
  return "?";
}

namespace {

AssumptionMode required_mode(Theorem t) {
  switch (t) {
    case Theorem::Ovb: return AssumptionMode::RandomFd;
    case Theorem::PathWeights: return AssumptionMode::RandomPaths;
    case Theorem::BetaD1: return AssumptionMode::Sequential;
    case Theorem::Placebo: return AssumptionMode::Sequential3p;
  }
  return AssumptionMode::RandomFd;
}

std::string mode_name(AssumptionMode m) {
  switch (m) {
    case AssumptionMode::RandomFd: return "random-fd";
    case AssumptionMode::RandomPaths: return "random-paths";
    case AssumptionMode::Sequential: return "sequential";
    case AssumptionMode::Sequential3p: return "sequential-3p";
  }
  return "?";
}

void finalize_series(OracleSeries& s, double tolerance) {
  const auto n = static_cast<double>(s.estimates.size());
  double mean = 0;
  for (double v : s.estimates) mean += v;
  mean /= n;
  double ss = 0;
  for (double v : s.estimates) ss += (v - mean) * (v - mean);
  s.mean = mean;
  s.sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  s.mc_se = s.sd / std::sqrt(n);
  if (s.bound_only) {
    s.tolerance = 0;
    s.pass = s.mean <= s.target;
  } else {
    s.tolerance = std::max(tolerance, 3.0 * s.mc_se);
    s.pass = std::abs(s.mean - s.target) <= s.tolerance;
  }
}

}  // namespace

MonteCarloReport run_oracle(Theorem theorem, const DgpSpec& spec,
                            const OracleSettings& settings) {
  spec.validate();
  if (spec.mode != required_mode(theorem)) {
    throw validation_error(
        "oracle '" + theorem_name(theorem) + "' requires assumption mode '" +
        mode_name(required_mode(theorem)) + "' but the design declares '" +
        mode_name(spec.mode) + "'");
  }
  if (settings.n_reps < 2) {
    throw validation_error("oracle needs at least 2 replications");
  }

  MonteCarloReport report;
  report.theorem = theorem_name(theorem);
  report.n_reps = settings.n_reps;
  report.n_units = spec.n_units;
  report.seed = spec.seed;

  // Series layout and targets.
  switch (theorem) {
    case Theorem::Ovb: {
      OracleSeries s;
      s.name = "fd_ols_slope";
      s.target = target_fd_ols(spec);
      s.method = "closed-form";
      report.series.push_back(s);
      break;
    }
    case Theorem::PathWeights: {
      const double w1 = target_omega1(spec);
      const double es1 = spec.shared_slopes ? spec.s2.a : spec.s1.a;
      const double es2 = spec.s2.a;
      OracleSeries a;
      a.name = "omega1";
      a.target = w1;
      a.method = "closed-form";
      OracleSeries b;
      b.name = "omega2";
      b.target = 1.0 - w1;
      b.method = "closed-form";
      OracleSeries c;
      c.name = "fd_ols_slope";
      c.target = w1 * es1 + (1.0 - w1) * es2;
      c.method = "closed-form";
      report.series.push_back(a);
      report.series.push_back(b);
      report.series.push_back(c);
      break;
    }
    case Theorem::BetaD1: {
      OracleSeries s;
      s.name = "beta_d1";
      s.target = target_beta_d1_closed(spec);
      s.method = "closed-form";
      report.series.push_back(s);
      break;
    }
    case Theorem::Placebo: {
      OracleSeries s;
      s.name = "lr_slope";
      s.target = 0.0;
      s.method = "closed-form";
      OracleSeries r;
      r.name = "lr_rejection_rate";
      r.target = settings.rejection_bound;
      r.method = "bound";
      r.bound_only = true;
      report.series.push_back(s);
      report.series.push_back(r);
      break;
    }
  }
  for (auto& s : report.series) {
    s.estimates.assign(static_cast<std::size_t>(settings.n_reps), 0.0);
  }

  std::vector<std::exception_ptr> errors(
      static_cast<std::size_t>(settings.n_reps));
  auto run_rep = [&](int rep) {
    try {
      const std::uint64_t rep_seed =
          derive_seed(spec.seed, fnv1a("mc:" + report.theorem),
                      static_cast<std::uint64_t>(rep));
      const GeneratedPanel gp = generate(spec, rep_seed);
      const FdView fd = first_differences(gp.panel);
      const std::size_t r = static_cast<std::size_t>(rep);
      switch (theorem) {
        case Theorem::Ovb: {
          report.series[0].estimates[r] = fd_ols(fd).coef[1];
          break;
        }
        case Theorem::PathWeights: {
          const PathWeights pw = path_weights(gp.panel, 0, 1);
          report.series[0].estimates[r] = pw.omega1;
          report.series[1].estimates[r] = pw.omega2;
          report.series[2].estimates[r] = fd_ols(fd).coef[1];
          break;
        }
        case Theorem::BetaD1: {
          const FoldAssignment fa =
              assign_folds(gp.panel, settings.folds, rep_seed);
          LearnerSpec ls = settings.learner;
          ls.seed = rep_seed;
          EstimatorOptions opts;
          opts.with_hausman = false;
          report.series[0].estimates[r] =
              ddml_beta_d1(fd, Conditioning::D1, ls, fa, opts).beta_d1;
          break;
        }
        case Theorem::Placebo: {
          const FoldAssignment fa =
              assign_folds(gp.panel, settings.folds, rep_seed);
          LearnerSpec ls = settings.learner;
          ls.seed = rep_seed;
          EstimatorOptions opts;
          opts.with_hausman = false;
          const PlaceboResult pr = placebo_test(fd, ls, fa, opts);
          report.series[0].estimates[r] = pr.lr_slope;
          report.series[1].estimates[r] = pr.lr_reject ? 1.0 : 0.0;
          break;
        }
      }
    } catch (...) {
      errors[static_cast<std::size_t>(rep)] = std::current_exception();
    }
  };

  const int workers = std::max(1, std::min(settings.threads, settings.n_reps));
  if (workers == 1) {
    for (int rep = 0; rep < settings.n_reps; ++rep) run_rep(rep);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t) {
      pool.emplace_back([&] {
        for (int rep = next.fetch_add(1); rep < settings.n_reps;
             rep = next.fetch_add(1)) {
          run_rep(rep);
        }
      });
    }
    for (auto& th : pool) th.join();
  }
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  report.pass = true;
  for (auto& s : report.series) {
    finalize_series(s, settings.tolerance);
    report.pass = report.pass && s.pass;
    if (!settings.keep_estimates) {
      s.estimates.clear();
      s.estimates.shrink_to_fit();
    }
  }
  return report;
}

}  // namespace fda
