#pragma once
// Minimal dense linear algebra for the aggregation filter and the
// concentration checks: fixed-dimension vectors, symmetric quadratic forms,
// and the dominant eigenpair of a PSD operator via power iteration.
//
// Scope is deliberately small (desk-scale d): no general eigendecomposition,
// no sparse formats, no non-symmetric matrices.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "byzsim/rng.hpp"

namespace byzsim {

// A point in R^d: model parameters or a gradient. Arithmetic rejects
// mismatched dimensions; entries are expected to stay finite (callers at
// module boundaries check with all_finite / require_finite).
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(std::size_t d, double fill = 0.0) : e_(d, fill) {}
  explicit ParamVector(std::vector<double> entries) : e_(std::move(entries)) {}

  std::size_t dim() const { return e_.size(); }
  double& operator[](std::size_t i) { return e_[i]; }
  double operator[](std::size_t i) const { return e_[i]; }
  const std::vector<double>& entries() const { return e_; }

  ParamVector& operator+=(const ParamVector& o) {
    require_same_dim(o);
    for (std::size_t i = 0; i < e_.size(); ++i) e_[i] += o.e_[i];
    return *this;
  }
  ParamVector& operator-=(const ParamVector& o) {
    require_same_dim(o);
    for (std::size_t i = 0; i < e_.size(); ++i) e_[i] -= o.e_[i];
    return *this;
  }
  ParamVector& operator*=(double s) {
    for (double& v : e_) v *= s;
    return *this;
  }

  friend ParamVector operator+(ParamVector a, const ParamVector& b) { return a += b; }
  friend ParamVector operator-(ParamVector a, const ParamVector& b) { return a -= b; }
  friend ParamVector operator*(ParamVector a, double s) { return a *= s; }
  friend ParamVector operator*(double s, ParamVector a) { return a *= s; }

  void require_same_dim(const ParamVector& o) const {
    if (e_.size() != o.e_.size())
      throw std::invalid_argument("dimension mismatch: " + std::to_string(e_.size()) +
                                  " vs " + std::to_string(o.e_.size()));
  }

 private:
  std::vector<double> e_;
};

inline double dot(const ParamVector& a, const ParamVector& b) {
  a.require_same_dim(b);
  double s = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(const ParamVector& a) { return dot(a, a); }
inline double norm(const ParamVector& a) { return std::sqrt(norm_sq(a)); }

// y += alpha * x
inline void axpy(double alpha, const ParamVector& x, ParamVector& y) {
  y.require_same_dim(x);
  for (std::size_t i = 0; i < y.dim(); ++i) y[i] += alpha * x[i];
}

inline bool all_finite(const ParamVector& a) {
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (!std::isfinite(a[i])) return false;
  return true;
}

inline void require_finite(const ParamVector& a, const char* what) {
  if (!all_finite(a)) throw std::invalid_argument(std::string(what) + ": non-finite entry");
}

// Indices of `points` sorted by lexicographic comparison of entries. Used to
// make reductions independent of input order: summing in canonical order gives
// bit-identical results under any permutation of the inputs (ties are between
// identical vectors, which contribute identically).
inline std::vector<std::size_t> canonical_order(const std::vector<ParamVector>& points) {
  std::vector<std::size_t> idx(points.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) {
    return points[a].entries() < points[b].entries();
  });
  return idx;
}

// Sample mean, accumulated in canonical order so the result is a pure function
// of the multiset of points (exactly permutation-invariant).
inline ParamVector mean(const std::vector<ParamVector>& points) {
  if (points.empty()) throw std::invalid_argument("mean: no points");
  // Coincident inputs average to the common value exactly; the generic sum
  // below could land an ulp off it, which matters when a caller compares
  // deviations against a threshold of exactly zero.
  bool all_equal = true;
  for (std::size_t i = 1; i < points.size() && all_equal; ++i) {
    points[i].require_same_dim(points[0]);
    for (std::size_t j = 0; j < points[0].dim(); ++j)
      if (points[i][j] != points[0][j]) {
        all_equal = false;
        break;
      }
  }
  if (all_equal) return points[0];
  ParamVector s(points[0].dim(), 0.0);
  for (std::size_t i : canonical_order(points)) s += points[i];
  s *= 1.0 / static_cast<double>(points.size());
  return s;
}

// Order-independent content hash of a weighted point set (per-point hashes
// combined by wrap-around addition). Drives deterministic eigensolver seeding
// so downstream results are pure functions of the input multiset.
inline std::uint64_t content_hash(const std::vector<ParamVector>& points,
                                  const std::vector<double>& weights = {}) {
  std::uint64_t total = mix64(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) {
    std::uint64_t h = mix64(points[i].dim());
    for (std::size_t j = 0; j < points[i].dim(); ++j)
      h = mix64(h ^ std::bit_cast<std::uint64_t>(points[i][j]));
    if (!weights.empty()) h = mix64(h ^ std::bit_cast<std::uint64_t>(weights[i]));
    total += h;  // commutative combine: order does not matter
  }
  return mix64(total);
}

// Dominant eigenpair of a symmetric PSD operator.
struct EigenResult {
  double value = 0.0;
  ParamVector vector;       // unit norm
  std::size_t iterations = 0;
  double residual = 0.0;    // ||A v - value * v|| at return
  bool converged = true;    // false only when max_iter ran out while still improving
};

// Power iteration, matrix-free: `apply` maps v to A v for a symmetric PSD A.
// The start vector is derived deterministically from rng_seed, so runs are
// bit-reproducible. Convergence: residual <= tol absolutely, or (for operators
// with large norm, where an absolute tol is below the floating-point floor)
// residual <= tol * |value| once progress has stalled at the roundoff floor.
template <typename Apply>
EigenResult top_eigenpair(Apply&& apply, std::size_t d, double tol = 1e-10,
                          std::size_t max_iter = 10000, std::uint64_t rng_seed = 0) {
  if (d < 1) throw std::invalid_argument("top_eigenpair: d must be >= 1");
  if (!(tol > 0)) throw std::invalid_argument("top_eigenpair: tol must be > 0");

  Rng rng = Rng::derive(rng_seed, {kTagEigen});
  ParamVector v(d);
  double nv = 0.0;
  do {
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.uniform(-1.0, 1.0);
    nv = norm(v);
  } while (nv == 0.0);
  v *= 1.0 / nv;

  double lambda = 0.0;
  double res = 0.0;
  double prev_res = std::numeric_limits<double>::infinity();
  std::size_t stalled = 0;
  for (std::size_t k = 1; k <= max_iter; ++k) {
    ParamVector w = apply(v);
    if (w.dim() != d || !all_finite(w))
      throw std::runtime_error("top_eigenpair: operator produced an invalid vector");
    lambda = dot(v, w);  // Rayleigh quotient; >= 0 for PSD A
    ParamVector r = w;
    axpy(-lambda, v, r);
    res = norm(r);
    if (res <= tol) return {lambda, v, k, res, true};
    // Detect the roundoff floor: residual no longer shrinking meaningfully.
    stalled = (res > 0.999 * prev_res) ? stalled + 1 : 0;
    prev_res = res;
    if (stalled >= 50 && res <= tol * std::abs(lambda)) return {lambda, v, k, res, true};
    double nw = norm(w);
    if (nw == 0.0) return {0.0, v, k, 0.0, true};  // A v = 0: v spans the null space
    v = w;
    v *= 1.0 / nw;
  }
  return {lambda, v, max_iter, res, false};
}

// Top eigenpair of the weight-normalized empirical covariance about `center`:
//   A = (1 / sum_i w_i) * sum_i w_i (p_i - center)(p_i - center)^T,
// applied matrix-free in two passes over the points. Deterministic: the
// eigensolver seed comes from an order-independent content hash of the inputs.
inline EigenResult cov_lambda_max(const std::vector<ParamVector>& points,
                                  const std::vector<double>& weights,
                                  const ParamVector& center, double tol = 1e-10) {
  if (points.empty()) throw std::invalid_argument("cov_lambda_max: no points");
  if (weights.size() != points.size())
    throw std::invalid_argument("cov_lambda_max: weights/points size mismatch");
  const std::size_t d = center.dim();
  double wsum = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    points[i].require_same_dim(center);
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i]))
      throw std::invalid_argument("cov_lambda_max: weights must be finite and >= 0");
    wsum += weights[i];
  }
  if (wsum <= 0.0) throw std::invalid_argument("cov_lambda_max: all weights zero");

  // Canonical summation order: the result is a function of the multiset only.
  std::vector<std::size_t> order = canonical_order(points);
  auto apply = [&](const ParamVector& y) {
    ParamVector out(d, 0.0);
    for (std::size_t i : order) {
      if (weights[i] == 0.0) continue;
      ParamVector diff = points[i] - center;
      axpy(weights[i] * dot(diff, y), diff, out);
    }
    out *= 1.0 / wsum;
    return out;
  };
  return top_eigenpair(apply, d, tol, 10000, content_hash(points, weights));
}

}  // namespace byzsim
