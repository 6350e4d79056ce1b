#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace fda {

using Eigen::MatrixXd;
using Eigen::VectorXd;

// Thrown when inputs violate a contract (bad file, unbalanced panel,
// inconsistent options).  Maps to exit code 2 at the CLI.
class validation_error : public std::runtime_error {
public:
  explicit validation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when a computation cannot proceed (rank deficiency, divergence,
// degenerate variance).  Maps to exit code 1 at the CLI.
class numeric_error : public std::runtime_error {
public:
  explicit numeric_error(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Random numbers.
//
// All stochastic components (fold shuffles, bootstrap draws, simulation,
// learner initialization) draw from Rng so that results are reproducible
// bit-for-bit given a seed.  The engine is std::mt19937_64, whose output
// sequence is fixed by the standard; the uniform/normal transforms below are
// spelled out here instead of using std::*_distribution, whose output is
// implementation-defined.
// ---------------------------------------------------------------------------

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Derives an independent stream seed from (master, tag, counter).
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t tag,
                                 std::uint64_t counter = 0) {
  return splitmix64(splitmix64(master ^ (tag * 0x9e3779b97f4a7c15ULL)) + counter);
}

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  // Uniform on (0, 1].  Never returns 0, so log() is safe.
  double uniform() {
    return (static_cast<double>(eng_() >> 11) + 1.0) * 0x1p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Standard normal via Box-Muller; the sine partner is cached so draws come
  // in a fixed sequence.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double theta = 2.0 * M_PI * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
  }

  double normal(double mean, double sd) { return mean + sd * normal(); }

  bool bernoulli(double p) { return uniform() <= p; }

  // Unbiased integer in [0, n) by rejection.
  std::uint64_t bounded(std::uint64_t n) {
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % n;
    std::uint64_t x;
    do {
      x = eng_();
    } while (x >= limit);
    return x % n;
  }

  // Fisher-Yates; spelled out because std::shuffle is implementation-defined.
  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[static_cast<std::size_t>(bounded(i))]);
    }
  }

private:
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool have_spare_ = false;
};

// ---------------------------------------------------------------------------
// Weighted moments.
// ---------------------------------------------------------------------------

inline double weighted_sum(const VectorXd& w) { return w.sum(); }

inline double weighted_mean(const VectorXd& x, const VectorXd& w) {
  return x.dot(w) / w.sum();
}

// Weighted variance with 1/sum(w) normalization (population analog; WLS
// ratios cancel the scale so the choice does not affect any estimator).
inline double weighted_var(const VectorXd& x, const VectorXd& w) {
  const double m = weighted_mean(x, w);
  return (x.array() - m).square().matrix().dot(w) / w.sum();
}

inline double weighted_cov(const VectorXd& x, const VectorXd& y,
                           const VectorXd& w) {
  const double mx = weighted_mean(x, w);
  const double my = weighted_mean(y, w);
  return ((x.array() - mx) * (y.array() - my)).matrix().dot(w) / w.sum();
}

// FNV-1a, used for config provenance hashes.
inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string version_string() { return "0.1.0"; }

}  // namespace fda
