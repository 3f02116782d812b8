#pragma once
// Independent oracles used by the test suite. Everything here is implemented
// from first principles, without the library's own linear algebra, so tests
// compare two unrelated computations.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;  // dense symmetric, row-major

// All eigenvalues of a small symmetric matrix via cyclic Jacobi sweeps.
// Returns eigenvalues sorted descending. Good to ~1e-13 for the d <= 8
// matrices used in tests.
inline std::vector<double> jacobi_eigenvalues(Matrix a) {
  const std::size_t n = a.size();
  for (const auto& row : a)
    if (row.size() != n) throw std::invalid_argument("jacobi: not square");
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += a[p][q] * a[p][q];
    if (off < 1e-30) break;
    for (std::size_t p = 0; p < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        if (std::abs(a[p][q]) < 1e-300) continue;
        const double theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a[k][p], akq = a[k][q];
          a[k][p] = c * akp - s * akq;
          a[k][q] = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a[p][k], aqk = a[q][k];
          a[p][k] = c * apk - s * aqk;
          a[q][k] = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(n);
  for (std::size_t i = 0; i < n; ++i) ev[i] = a[i][i];
  std::sort(ev.begin(), ev.end(), std::greater<double>());
  return ev;
}

// Dense weighted covariance of points about `center`:
//   (1 / sum w) * sum_i w_i (p_i - c)(p_i - c)^T
inline Matrix dense_covariance(const std::vector<std::vector<double>>& points,
                               const std::vector<double>& weights,
                               const std::vector<double>& center) {
  const std::size_t d = center.size();
  Matrix m(d, std::vector<double>(d, 0.0));
  double wsum = 0.0;
  for (double w : weights) wsum += w;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t r = 0; r < d; ++r)
      for (std::size_t c = 0; c < d; ++c)
        m[r][c] += weights[i] * (points[i][r] - center[r]) * (points[i][c] - center[c]);
  }
  for (auto& row : m)
    for (double& v : row) v /= wsum;
  return m;
}

// All k-element subsets of {0..n-1}, in lexicographic order.
inline std::vector<std::vector<std::size_t>> combinations(std::size_t n, std::size_t k) {
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> cur(k);
  // Standard odometer enumeration.
  for (std::size_t i = 0; i < k; ++i) cur[i] = i;
  if (k > n) return out;
  while (true) {
    out.push_back(cur);
    // Find rightmost position that can advance.
    std::size_t i = k;
    while (i > 0 && cur[i - 1] == n - k + (i - 1)) --i;
    if (i == 0) break;
    ++cur[i - 1];
    for (std::size_t j = i; j < k; ++j) cur[j] = cur[j - 1] + 1;
  }
  return out;
}

}  // namespace oracle
