// Exact-arithmetic oracle for the two-column WLS fit with CR1 clustered
// variance.  Everything is computed over the rationals (boost cpp_rational)
// from integer data, so the reference values carry no rounding error of
// their own; conversion to double happens only at the very end.
#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace exact_cr1 {

using Rat = boost::multiprecision::cpp_rational;

struct Reference {
  std::array<double, 2> coef{};           // intercept, slope
  std::array<std::array<double, 2>, 2> vcov{};
};

// y, x, w: integer-valued observations; cluster: id per observation.
// Design is [1, x]; variance is the CR1 clustered sandwich
//   c1 * (X'WX)^{-1} (sum_c s_c s_c') (X'WX)^{-1},
//   s_c = sum_{i in c} w_i e_i (1, x_i)',  c1 = C/(C-1) * (N-1)/(N-K).
inline Reference compute(const std::vector<long>& y, const std::vector<long>& x,
                         const std::vector<long>& w,
                         const std::vector<int>& cluster) {
  const std::size_t n = y.size();

  Rat a00 = 0, a01 = 0, a11 = 0, c0 = 0, c1v = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const Rat wi = w[i], xi = x[i], yi = y[i];
    a00 += wi;
    a01 += wi * xi;
    a11 += wi * xi * xi;
    c0 += wi * yi;
    c1v += wi * xi * yi;
  }
  const Rat det = a00 * a11 - a01 * a01;
  const Rat b0 = (a11 * c0 - a01 * c1v) / det;
  const Rat b1 = (a00 * c1v - a01 * c0) / det;

  // Cluster score sums s_c.
  int n_clusters = 0;
  std::vector<Rat> s0, s1;
  std::vector<int> seen;
  for (std::size_t i = 0; i < n; ++i) {
    int k = -1;
    for (std::size_t j = 0; j < seen.size(); ++j) {
      if (seen[j] == cluster[i]) k = static_cast<int>(j);
    }
    if (k < 0) {
      seen.push_back(cluster[i]);
      s0.push_back(0);
      s1.push_back(0);
      k = n_clusters++;
    }
    const Rat ei = Rat(y[i]) - b0 - b1 * Rat(x[i]);
    const Rat base = Rat(w[i]) * ei;
    s0[static_cast<std::size_t>(k)] += base;
    s1[static_cast<std::size_t>(k)] += base * Rat(x[i]);
  }

  Rat m00 = 0, m01 = 0, m11 = 0;
  for (int c = 0; c < n_clusters; ++c) {
    const auto cc = static_cast<std::size_t>(c);
    m00 += s0[cc] * s0[cc];
    m01 += s0[cc] * s1[cc];
    m11 += s1[cc] * s1[cc];
  }

  // Bread inverse.
  const Rat i00 = a11 / det, i01 = -a01 / det, i11 = a00 / det;

  // V = c1 * Ainv M Ainv for symmetric 2x2 matrices.
  const Rat t00 = i00 * m00 + i01 * m01;
  const Rat t01 = i00 * m01 + i01 * m11;
  const Rat t10 = i01 * m00 + i11 * m01;
  const Rat t11 = i01 * m01 + i11 * m11;
  Rat v00 = t00 * i00 + t01 * i01;
  Rat v01 = t00 * i01 + t01 * i11;
  Rat v11 = t10 * i01 + t11 * i11;

  const Rat C = n_clusters;
  const Rat N = static_cast<long>(n);
  const Rat K = 2;
  const Rat c1 = (C / (C - 1)) * ((N - 1) / (N - K));
  v00 *= c1;
  v01 *= c1;
  v11 *= c1;

  Reference out;
  out.coef[0] = b0.convert_to<double>();
  out.coef[1] = b1.convert_to<double>();
  out.vcov[0][0] = v00.convert_to<double>();
  out.vcov[0][1] = v01.convert_to<double>();
  out.vcov[1][0] = v01.convert_to<double>();
  out.vcov[1][1] = v11.convert_to<double>();
  return out;
}

// A fixed 20-observation, 4-cluster integer fixture.
struct Fixture {
  std::vector<long> y, x, w;
  std::vector<int> cluster;
};

inline Fixture fixture() {
  Fixture f;
  f.y = {3, 5, 4, 8, 2, 7, 6, 9, 1, 4, 5, 3, 8, 6, 2, 7, 9, 5, 4, 6};
  f.x = {1, 2, 0, 3, -1, 2, 1, 4, -2, 0, 1, -1, 3, 2, 0, 2, 4, 1, -1, 2};
  f.w = {1, 2, 1, 3, 1, 2, 1, 1, 2, 1, 3, 1, 2, 1, 1, 2, 1, 3, 1, 2};
  f.cluster = {0, 0, 0, 0, 0, 1, 1, 1, 1, 1, 2, 2, 2, 2, 2, 3, 3, 3, 3, 3};
  return f;
}

}  // namespace exact_cr1
