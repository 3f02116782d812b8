#pragma once
// Robust accumulated-gradient estimation: an iterative spectral filter that
// downweights and removes outlier report vectors until the weighted covariance
// score passes a concentration threshold, then returns the unweighted mean of
// the surviving inputs. Also houses the closed-form concentration thresholds
// sigma0^2 for the minibatch and full-batch regimes.
//
// Filter round structure (K input vectors g_1..g_K, weights c_i, active set A):
//   1. approximately solve the saddle point
//        max_{Y psd, tr(Y) <= 1} min_{W in box-and-simplex} sum_i c_i (g_i - G w_i)^T Y (g_i - G w_i)
//      where column w_i of W mixes the active inputs to "explain" g_i, subject
//      to 0 <= W_ji <= (4 - alpha) / (alpha (2 + alpha) m) and sum_j W_ji = 1
//      (m = current active count, so the box always admits a simplex point);
//   2. per-point scores tau_i = (g_i - G w_i)^T Y (g_i - G w_i);
//   3. if sum_i c_i tau_i exceeds score_multiplier * K * sigma0_sq, scale
//      c_i <- (1 - tau_i / tau_max) c_i and drop every i with c_i < 1/2
//      (all points attaining tau_max get weight 0, so >= 1 leaves per round);
//   4. otherwise stop and return the mean over A.
//
// All reductions run in a canonical (value-sorted) order and the eigensolver
// seed comes from an order-independent content hash, so the filter output is
// exactly invariant to permutations of its inputs.

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "byzsim/linalg.hpp"

namespace byzsim {

// How the inner minimization over W is carried out.
enum class WMode {
  alternating,  // projected-gradient best response to the current Y (default)
  uniform,      // every column uniform over the active set (hand-traceable)
};

struct RageConfig {
  double sigma0_sq = 0.0;        // concentration threshold for honest inputs
  double alpha = 0.75;           // 1 - assumed corrupt fraction; must be >= 3/4
  double score_multiplier = 4.0; // the "4" in the 4 K sigma0^2 stopping test
  double eig_tol = 1e-10;
  std::size_t max_rounds = 0;    // 0 means default K + 1
  WMode w_mode = WMode::alternating;

  void validate() const {
    if (!(sigma0_sq >= 0.0)) throw std::invalid_argument("RageConfig: sigma0_sq must be >= 0");
    if (!(alpha >= 0.75 && alpha <= 1.0))
      throw std::invalid_argument("RageConfig: alpha must be in [0.75, 1]");
    if (!(score_multiplier > 0.0))
      throw std::invalid_argument("RageConfig: score_multiplier must be > 0");
    if (!(eig_tol > 0.0)) throw std::invalid_argument("RageConfig: eig_tol must be > 0");
  }
};

// Approximate saddle point for one filter round, over the active inputs.
struct SaddlePoint {
  std::vector<std::vector<double>> W;  // W[i] = column for input i (mixing weights)
  ParamVector y_direction;             // unit vector v; the PSD matrix is v v^T
  std::vector<double> tau;             // per-input scores at (W, Y)
  double phi = 0.0;                    // sum_i c_i tau_i at the returned point
  bool eig_converged = true;
};

struct RageReport {
  ParamVector estimate;                   // mean of inputs in the active set
  std::vector<double> final_weights;      // c_i per original index
  std::vector<std::size_t> active_set;    // surviving original indices, sorted
  std::size_t rounds = 0;                 // filtering rounds that downweighted
  double final_score = 0.0;               // sum c_i tau_i at termination
  std::vector<std::vector<double>> tau_history;  // per evaluation, K-sized (NaN = inactive)
  bool inexact = false;                   // round budget or eigensolver ran out
};

namespace detail {

// Euclidean projection onto { w : 0 <= w_j <= cap, sum_j w_j = 1 } by
// bisection on the shift theta in clip(y - theta, 0, cap). Requires
// m * cap >= 1, which the caller's box bound guarantees.
inline void project_box_simplex(std::vector<double>& y, double cap) {
  double lo = y[0], hi = y[0];
  for (double v : y) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  lo -= cap;  // sum at lo is m * cap >= 1; sum at hi is 0
  auto sum_at = [&](double theta) {
    double s = 0.0;
    for (double v : y) s += std::clamp(v - theta, 0.0, cap);
    return s;
  };
  for (int it = 0; it < 48; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (sum_at(mid) > 1.0)
      lo = mid;
    else
      hi = mid;
  }
  const double theta = 0.5 * (lo + hi);
  for (double& v : y) v = std::clamp(v - theta, 0.0, cap);
}

}  // namespace detail

// One saddle-point solve over the given (active) inputs with weights c > 0.
// Alternates a rank-1 maximization in Y (top eigenpair of the weighted
// residual covariance) with a per-column projected-gradient minimization in W,
// until the score settles or 12 alternations pass, then re-solves Y once at
// full precision for the reported scores. In uniform mode W is fixed to
// uniform columns and a single Y step is taken. Outputs follow input order.
inline SaddlePoint solve_saddle_point(const std::vector<ParamVector>& points,
                                      const std::vector<double>& c, double alpha,
                                      double eig_tol, WMode mode = WMode::alternating) {
  const std::size_t m = points.size();
  if (m == 0) throw std::invalid_argument("solve_saddle_point: no active points");
  if (c.size() != m) throw std::invalid_argument("solve_saddle_point: weights size mismatch");
  double csum = 0.0;
  for (double w : c) csum += w;
  if (!(csum > 0.0)) throw std::invalid_argument("solve_saddle_point: weights must sum > 0");
  const std::size_t d = points[0].dim();
  const double cap = (4.0 - alpha) / (alpha * (2.0 + alpha) * static_cast<double>(m));

  SaddlePoint sp;
  sp.W.assign(m, std::vector<double>(m, 1.0 / static_cast<double>(m)));

  const std::uint64_t eig_seed = content_hash(points, c);
  // Residuals r_i = g_i - sum_j W_ji g_j are fixed while Y is optimized, so
  // they are materialized once per W and shared by every operator application.
  // The difference form sum_j W_ji (g_i - g_j) is identical on the simplex
  // (columns sum to one) but is exactly zero for coincident points and makes
  // the scores invariant under a common shift of all inputs.
  std::vector<ParamVector> res(m, ParamVector(d, 0.0));
  ParamVector diff(d, 0.0);
  auto y_step = [&](std::size_t max_iter) {
    for (std::size_t i = 0; i < m; ++i) {
      res[i] = ParamVector(d, 0.0);
      for (std::size_t j = 0; j < m; ++j) {
        if (sp.W[i][j] == 0.0 || j == i) continue;
        diff = points[i];
        diff -= points[j];
        axpy(sp.W[i][j], diff, res[i]);
      }
    }
    auto apply = [&](const ParamVector& y) {
      ParamVector out(d, 0.0);
      for (std::size_t i = 0; i < m; ++i)
        if (c[i] != 0.0) axpy(c[i] * dot(res[i], y), res[i], out);
      return out;
    };
    EigenResult e = top_eigenpair(apply, d, eig_tol, max_iter, eig_seed);
    if (!e.converged) sp.eig_converged = false;
    sp.y_direction = e.vector;
    return e.value;  // equals sum_i c_i (v . r_i)^2 at the eigenvector
  };

  // Intermediate Y solves only steer the W updates, so they run with a small
  // iteration cap; the final solve below is the one the scores come from and
  // gets the full budget. (For near-degenerate residual spectra the score is
  // direction-insensitive, so even the final budget need not be huge.)
  constexpr std::size_t kSteerIters = 150, kFinalIters = 2500;
  double phi = y_step(mode == WMode::alternating ? kSteerIters : kFinalIters);
  if (mode == WMode::alternating) {
    double phi_prev = std::numeric_limits<double>::infinity();
    for (std::size_t alt = 0; alt < 12; ++alt) {
      // The capped intermediate eigensolves leave ~1e-6 relative jitter in
      // phi, so a tighter break tolerance would never fire.
      if (std::abs(phi - phi_prev) <= 1e-5 * std::max(1.0, std::abs(phi))) break;
      phi_prev = phi;

      // W step: with Y = v v^T the residual only matters through p_j = v . g_j,
      // so each column solves min_w (p_i - w . p)^2 over the box-and-simplex.
      std::vector<double> p(m);
      for (std::size_t j = 0; j < m; ++j) p[j] = dot(sp.y_direction, points[j]);
      double p_sq = 0.0;
      for (double v : p) p_sq += v * v;
      if (p_sq == 0.0) break;  // all projections zero: W is irrelevant
      const double step = 1.0 / (2.0 * p_sq);
      for (std::size_t i = 0; i < m; ++i) {
        std::vector<double>& w = sp.W[i];
        for (int inner = 0; inner < 12; ++inner) {
          double wp = 0.0;
          for (std::size_t j = 0; j < m; ++j) wp += w[j] * p[j];
          const double g = 2.0 * (wp - p[i]);
          for (std::size_t j = 0; j < m; ++j) w[j] -= step * g * p[j];
          detail::project_box_simplex(w, cap);
        }
      }
      phi = y_step(kSteerIters);  // re-synchronize Y and the cached residuals with W
    }
    sp.eig_converged = true;       // only the final, full-budget solve is binding
    phi = y_step(kFinalIters);
  }

  sp.tau.resize(m);
  sp.phi = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double proj = dot(sp.y_direction, res[i]);
    sp.tau[i] = proj * proj;
    sp.phi += c[i] * sp.tau[i];
  }
  return sp;
}

// The filter. Throws std::invalid_argument on malformed input and
// std::runtime_error if every input gets rejected (more outliers than the
// quarter-fraction regime the score test is built for).
inline RageReport rage_filter(const std::vector<ParamVector>& inputs, const RageConfig& cfg) {
  cfg.validate();
  const std::size_t K = inputs.size();
  if (K < 2) throw std::invalid_argument("rage_filter: need K >= 2 inputs");
  for (const auto& g : inputs) {
    require_finite(g, "rage_filter input");
    g.require_same_dim(inputs[0]);
  }
  const std::size_t max_rounds = cfg.max_rounds == 0 ? K + 1 : cfg.max_rounds;
  const double threshold = cfg.score_multiplier * static_cast<double>(K) * cfg.sigma0_sq;

  // Canonical processing order makes every reduction permutation-invariant.
  const std::vector<std::size_t> order = canonical_order(inputs);
  std::vector<bool> active(K, true);
  std::vector<double> c(K, 1.0);

  RageReport rep;
  rep.final_weights.assign(K, 1.0);
  while (true) {
    std::vector<std::size_t> av;  // active originals, canonical order
    av.reserve(K);
    for (std::size_t i : order)
      if (active[i]) av.push_back(i);
    if (av.empty())
      throw std::runtime_error("rage_filter: all inputs rejected (corruption beyond design range)");

    std::vector<ParamVector> pts;
    std::vector<double> cw;
    pts.reserve(av.size());
    for (std::size_t i : av) {
      pts.push_back(inputs[i]);
      cw.push_back(c[i]);
    }
    SaddlePoint sp = solve_saddle_point(pts, cw, cfg.alpha, cfg.eig_tol, cfg.w_mode);
    if (!sp.eig_converged) rep.inexact = true;

    double score = 0.0;
    for (std::size_t k = 0; k < av.size(); ++k) score += cw[k] * sp.tau[k];
    std::vector<double> trace(K, std::numeric_limits<double>::quiet_NaN());
    for (std::size_t k = 0; k < av.size(); ++k) trace[av[k]] = sp.tau[k];
    rep.tau_history.push_back(std::move(trace));
    rep.final_score = score;

    if (score <= threshold) break;  // concentrated enough: stop filtering
    if (rep.rounds >= max_rounds) {
      rep.inexact = true;
      break;
    }

    double tau_max = 0.0;
    for (double t : sp.tau) tau_max = std::max(tau_max, t);
    // score > threshold >= 0 guarantees tau_max > 0 here.
    for (std::size_t k = 0; k < av.size(); ++k) {
      const std::size_t i = av[k];
      c[i] *= 1.0 - sp.tau[k] / tau_max;  // every argmax lands exactly on 0
      if (c[i] < 0.5) active[i] = false;
    }
    ++rep.rounds;
  }

  ParamVector est(inputs[0].dim(), 0.0);
  std::size_t n_active = 0;
  for (std::size_t i : order) {
    if (!active[i]) continue;
    est += inputs[i];
    ++n_active;
  }
  est *= 1.0 / static_cast<double>(n_active);
  rep.estimate = est;
  rep.final_weights = c;
  for (std::size_t i = 0; i < K; ++i)
    if (active[i]) rep.active_set.push_back(i);
  return rep;
}

// Concentration threshold for accumulated minibatch gradients over a window of
// H local steps: 25 H^2 sigma^2 / (b eps') * (1 + 4d / 3K) + 28 H^2 kappa^2.
inline double sigma0_sgd(std::size_t H, double sigma, std::size_t b, double eps_prime,
                         std::size_t d, std::size_t K, double kappa) {
  if (!(eps_prime > 0.0)) throw std::invalid_argument("sigma0_sgd: eps_prime must be > 0");
  if (b < 1) throw std::invalid_argument("sigma0_sgd: b must be >= 1");
  const double h2 = static_cast<double>(H) * static_cast<double>(H);
  const double dim_term = 1.0 + 4.0 * static_cast<double>(d) / (3.0 * static_cast<double>(K));
  return 25.0 * h2 * sigma * sigma / (static_cast<double>(b) * eps_prime) * dim_term +
         28.0 * h2 * kappa * kappa;
}

// Full-batch analog: deterministic clients concentrate within 11 H^2 kappa^2.
inline double sigma0_gd(std::size_t H, double kappa) {
  return 11.0 * static_cast<double>(H) * static_cast<double>(H) * kappa * kappa;
}

}  // namespace byzsim
