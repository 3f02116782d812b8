#pragma once
// Synthetic heterogeneous objectives with exact per-point gradients, minibatch
// sampling without replacement, and closed-form estimation of the noise bound
// sigma (per-point gradient variance) and the dissimilarity bound kappa
// (distance between a client's gradient and the global gradient).
//
// Three families:
//  - strongly convex quadratics  F_{r,i}(x) = 1/2 (x - a_{r,i})^T Q (x - a_{r,i})
//    with a diagonal Q shared by every client, so mu, L, kappa and the global
//    minimizer are exact;
//  - the same quadratic plus beta * sum_j sin^2(x_j): smooth but nonconvex,
//    with smoothness constant still explicit (L = max Q + 2 beta);
//  - l2-regularized logistic loss on separable synthetic features.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "byzsim/linalg.hpp"
#include "byzsim/rng.hpp"

namespace byzsim {

enum class ObjectiveKind { strongly_convex_quadratic, logistic, smooth_nonconvex };

// One client's dataset: n per-point losses with closed-form gradients.
// Quadratic / nonconvex kinds use (q, anchors, beta); logistic uses
// (features, labels, lambda_reg).
struct ClientDataset {
  int client_id = 0;
  ObjectiveKind kind = ObjectiveKind::strongly_convex_quadratic;

  std::vector<double> q;              // diagonal Hessian, shared across clients
  std::vector<ParamVector> anchors;   // per-point a_{r,i}
  double beta = 0.0;                  // sin^2 weight (nonconvex kind only)

  std::vector<ParamVector> features;  // logistic kind
  std::vector<double> labels;         // +-1
  double lambda_reg = 0.0;

  std::size_t n() const {
    return kind == ObjectiveKind::logistic ? features.size() : anchors.size();
  }
  std::size_t dim() const {
    if (kind == ObjectiveKind::logistic) return features.empty() ? 0 : features[0].dim();
    return anchors.empty() ? 0 : anchors[0].dim();
  }

  ParamVector point_gradient(std::size_t i, const ParamVector& x) const {
    const std::size_t d = x.dim();
    ParamVector g(d, 0.0);
    switch (kind) {
      case ObjectiveKind::strongly_convex_quadratic:
        for (std::size_t j = 0; j < d; ++j) g[j] = q[j] * (x[j] - anchors[i][j]);
        break;
      case ObjectiveKind::smooth_nonconvex:
        for (std::size_t j = 0; j < d; ++j)
          g[j] = q[j] * (x[j] - anchors[i][j]) + beta * std::sin(2.0 * x[j]);
        break;
      case ObjectiveKind::logistic: {
        const double m = labels[i] * dot(features[i], x);
        const double s = 1.0 / (1.0 + std::exp(m));  // sigmoid(-m)
        for (std::size_t j = 0; j < d; ++j) g[j] = -labels[i] * s * features[i][j] + lambda_reg * x[j];
        break;
      }
    }
    return g;
  }

  double point_loss(std::size_t i, const ParamVector& x) const {
    switch (kind) {
      case ObjectiveKind::strongly_convex_quadratic: {
        double s = 0.0;
        for (std::size_t j = 0; j < x.dim(); ++j) {
          const double dxa = x[j] - anchors[i][j];
          s += q[j] * dxa * dxa;
        }
        return 0.5 * s;
      }
      case ObjectiveKind::smooth_nonconvex: {
        double s = 0.0;
        for (std::size_t j = 0; j < x.dim(); ++j) {
          const double dxa = x[j] - anchors[i][j];
          const double sj = std::sin(x[j]);
          s += 0.5 * q[j] * dxa * dxa + beta * sj * sj;
        }
        return s;
      }
      case ObjectiveKind::logistic: {
        const double m = labels[i] * dot(features[i], x);
        // log(1 + exp(-m)), numerically stable on both tails.
        const double nll = m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
        return nll + 0.5 * lambda_reg * norm_sq(x);
      }
    }
    return 0.0;
  }
};

// Exact local gradient: mean of the per-point gradients.
inline ParamVector full_gradient(const ClientDataset& client, const ParamVector& x) {
  if (client.n() == 0) throw std::invalid_argument("full_gradient: empty dataset");
  ParamVector g(x.dim(), 0.0);
  for (std::size_t i = 0; i < client.n(); ++i) g += client.point_gradient(i, x);
  g *= 1.0 / static_cast<double>(client.n());
  return g;
}

inline double client_loss(const ClientDataset& client, const ParamVector& x) {
  double s = 0.0;
  for (std::size_t i = 0; i < client.n(); ++i) s += client.point_loss(i, x);
  return s / static_cast<double>(client.n());
}

// Average of gradients at b distinct indices, chosen uniformly without
// replacement by a seeded Fisher-Yates partial shuffle (exactly uniform over
// all C(n, b) batches, deterministic given the stream).
inline ParamVector minibatch_gradient(const ClientDataset& client, const ParamVector& x,
                                      std::size_t b, Rng& rng) {
  const std::size_t n = client.n();
  if (b < 1 || b > n) throw std::invalid_argument("minibatch_gradient: b out of [1, n]");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  ParamVector g(x.dim(), 0.0);
  for (std::size_t i = 0; i < b; ++i) {
    std::swap(idx[i], idx[i + rng.below(n - i)]);
    g += client.point_gradient(idx[i], x);
  }
  g *= 1.0 / static_cast<double>(b);
  return g;
}

// The whole problem: R clients plus the constants that make bounds checkable.
struct ObjectiveSuite {
  ObjectiveKind kind = ObjectiveKind::strongly_convex_quadratic;
  std::vector<ClientDataset> clients;
  std::optional<ParamVector> global_min;  // present only when known in closed form
  double mu = 0.0;  // strong-convexity constant of the global loss (0 if none)
  double L = 1.0;   // smoothness constant of the global loss

  std::size_t R() const { return clients.size(); }
  std::size_t dim() const { return clients.empty() ? 0 : clients[0].dim(); }
};

// Unweighted mean of the client gradients (the global gradient).
inline ParamVector global_gradient(const ObjectiveSuite& suite, const ParamVector& x) {
  if (suite.clients.empty()) throw std::invalid_argument("global_gradient: empty suite");
  ParamVector g(x.dim(), 0.0);
  for (const auto& c : suite.clients) g += full_gradient(c, x);
  g *= 1.0 / static_cast<double>(suite.R());
  return g;
}

inline double global_loss(const ObjectiveSuite& suite, const ParamVector& x) {
  double s = 0.0;
  for (const auto& c : suite.clients) s += client_loss(c, x);
  return s / static_cast<double>(suite.R());
}

namespace detail {

// Client mean-anchors g0 + scale * u_r with the u_r centered, scaled so that
// max_r ||Q (m_r - mean_m)|| equals `heterogeneity` exactly; per-point offsets
// centered per client and scaled so the per-point gradient variance equals
// point_spread^2 exactly. This makes kappa and sigma exact by construction.
inline std::vector<std::vector<ParamVector>> make_anchor_grid(
    std::size_t R, std::size_t d, double heterogeneity, const std::vector<double>& q,
    std::size_t n_r, double point_spread, Rng& rng, ParamVector* global_mean_out,
    double center_scale) {
  ParamVector g0(d);
  // center_scale = 0 pins the grand-mean anchor (and so the minimizer) at the
  // origin exactly; the normal draw still happens so streams stay aligned.
  for (std::size_t j = 0; j < d; ++j) g0[j] = center_scale * rng.normal();

  std::vector<ParamVector> dirs(R, ParamVector(d, 0.0));
  if (R >= 2 && heterogeneity > 0.0) {
    ParamVector avg(d, 0.0);
    for (auto& u : dirs) {
      for (std::size_t j = 0; j < d; ++j) u[j] = rng.normal();
      avg += u;
    }
    avg *= 1.0 / static_cast<double>(R);
    double max_qnorm = 0.0;
    for (auto& u : dirs) {
      u -= avg;
      double s = 0.0;
      for (std::size_t j = 0; j < d; ++j) s += q[j] * u[j] * q[j] * u[j];
      max_qnorm = std::max(max_qnorm, std::sqrt(s));
    }
    if (max_qnorm > 0.0)
      for (auto& u : dirs) u *= heterogeneity / max_qnorm;
  }

  std::vector<std::vector<ParamVector>> anchors(R);
  for (std::size_t r = 0; r < R; ++r) {
    ParamVector m_r = g0 + dirs[r];
    std::vector<ParamVector> z(n_r, ParamVector(d, 0.0));
    if (n_r >= 2 && point_spread > 0.0) {
      ParamVector zavg(d, 0.0);
      for (auto& zi : z) {
        for (std::size_t j = 0; j < d; ++j) zi[j] = rng.normal();
        zavg += zi;
      }
      zavg *= 1.0 / static_cast<double>(n_r);
      double var = 0.0;
      for (auto& zi : z) {
        zi -= zavg;
        for (std::size_t j = 0; j < d; ++j) var += q[j] * zi[j] * q[j] * zi[j];
      }
      var /= static_cast<double>(n_r);
      if (var > 0.0)
        for (auto& zi : z) zi *= point_spread / std::sqrt(var);
    }
    anchors[r].reserve(n_r);
    for (std::size_t i = 0; i < n_r; ++i) anchors[r].push_back(m_r + z[i]);
  }
  if (global_mean_out) {
    ParamVector m(d, 0.0);
    for (std::size_t r = 0; r < R; ++r) {
      ParamVector cm(d, 0.0);
      for (const auto& a : anchors[r]) cm += a;
      cm *= 1.0 / static_cast<double>(n_r);
      m += cm;
    }
    m *= 1.0 / static_cast<double>(R);
    *global_mean_out = m;
  }
  return anchors;
}

inline std::vector<double> diag_spectrum(std::size_t d, double mu, double L) {
  if (!(mu > 0.0) || !(mu <= L))
    throw std::invalid_argument("diag_spectrum: need 0 < mu <= L");
  std::vector<double> q(d, L);
  // Linear descent from L down to mu; a single dimension can only carry L.
  for (std::size_t j = 0; j + 1 < d && d >= 2; ++j)
    q[j + 1] = mu + (L - mu) * static_cast<double>(d - 2 - j) / static_cast<double>(d - 1);
  if (d >= 2) q[d - 1] = mu;
  return q;
}

}  // namespace detail

// Quadratic family with shared diagonal Hessian: mu, L, kappa, sigma and the
// global minimizer are all exact. For d == 1 the single curvature is L (and so
// the reported mu is L as well).
inline ObjectiveSuite make_quadratic_suite(std::size_t R, std::size_t d, double heterogeneity,
                                           double mu, double L, std::uint64_t rng_seed,
                                           std::size_t n_r = 4, double point_spread = 1.0,
                                           double center_scale = 1.0) {
  if (R < 1 || d < 1 || n_r < 1) throw std::invalid_argument("make_quadratic_suite: empty shape");
  std::vector<double> q = detail::diag_spectrum(d, mu, L);
  Rng rng = Rng::derive(rng_seed, {kTagSuite});
  ObjectiveSuite suite;
  suite.kind = ObjectiveKind::strongly_convex_quadratic;
  suite.L = L;
  suite.mu = d == 1 ? L : mu;
  ParamVector gmean(d);
  auto anchors = detail::make_anchor_grid(R, d, heterogeneity, q, n_r, point_spread, rng, &gmean,
                                          center_scale);
  for (std::size_t r = 0; r < R; ++r) {
    ClientDataset c;
    c.client_id = static_cast<int>(r);
    c.kind = suite.kind;
    c.q = q;
    c.anchors = std::move(anchors[r]);
    suite.clients.push_back(std::move(c));
  }
  suite.global_min = gmean;
  return suite;
}

// Quadratic-plus-sin^2 family: nonconvex but with explicit smoothness
// L = (max curvature of the quadratic part) + 2 * beta. No closed-form
// minimizer, so global_min stays absent.
inline ObjectiveSuite make_nonconvex_suite(std::size_t R, std::size_t d, double heterogeneity,
                                           double mu_q, double L_q, double beta,
                                           std::uint64_t rng_seed, std::size_t n_r = 4,
                                           double point_spread = 1.0, double center_scale = 1.0) {
  if (beta < 0.0) throw std::invalid_argument("make_nonconvex_suite: beta must be >= 0");
  ObjectiveSuite suite = make_quadratic_suite(R, d, heterogeneity, mu_q, L_q, rng_seed, n_r,
                                              point_spread, center_scale);
  suite.kind = ObjectiveKind::smooth_nonconvex;
  suite.mu = 0.0;
  suite.L = suite.L + 2.0 * beta;
  suite.global_min.reset();
  for (auto& c : suite.clients) {
    c.kind = ObjectiveKind::smooth_nonconvex;
    c.beta = beta;
  }
  return suite;
}

// l2-regularized logistic regression on separable synthetic features; client
// heterogeneity enters through a per-client shift of the feature cloud, and
// feature_scale sets the cloud's own spread. mu is the explicit
// regularization weight; L = max_i ||f_i||^2 / 4 + mu. The global minimizer
// is solved numerically (deterministic fixed-step descent to the round-off
// floor), so distance-to-optimum metrics exist for this family too.
inline ObjectiveSuite make_logistic_suite(std::size_t R, std::size_t d, double heterogeneity,
                                          double lambda_reg, std::uint64_t rng_seed,
                                          std::size_t n_r = 8, double feature_scale = 1.0) {
  if (R < 1 || d < 1 || n_r < 1) throw std::invalid_argument("make_logistic_suite: empty shape");
  if (!(lambda_reg > 0.0)) throw std::invalid_argument("make_logistic_suite: lambda_reg must be > 0");
  if (!(feature_scale > 0.0))
    throw std::invalid_argument("make_logistic_suite: feature_scale must be > 0");
  Rng rng = Rng::derive(rng_seed, {kTagSuite});
  ParamVector w_true(d);
  for (std::size_t j = 0; j < d; ++j) w_true[j] = rng.normal();
  w_true *= 1.0 / norm(w_true);

  ObjectiveSuite suite;
  suite.kind = ObjectiveKind::logistic;
  suite.mu = lambda_reg;
  double max_feat_sq = 0.0;
  for (std::size_t r = 0; r < R; ++r) {
    ParamVector shift(d);
    for (std::size_t j = 0; j < d; ++j) shift[j] = heterogeneity * rng.normal();
    ClientDataset c;
    c.client_id = static_cast<int>(r);
    c.kind = ObjectiveKind::logistic;
    c.lambda_reg = lambda_reg;
    for (std::size_t i = 0; i < n_r; ++i) {
      ParamVector f(d);
      for (std::size_t j = 0; j < d; ++j) f[j] = feature_scale * rng.normal() + shift[j];
      const double m = dot(f, w_true);
      c.features.push_back(f);
      c.labels.push_back(m >= 0 ? 1.0 : -1.0);
      max_feat_sq = std::max(max_feat_sq, norm_sq(f));
    }
    suite.clients.push_back(std::move(c));
  }
  suite.L = max_feat_sq / 4.0 + lambda_reg;

  ParamVector x(d, 0.0);
  const double step = 1.0 / suite.L;
  for (int it = 0; it < 200000; ++it) {
    ParamVector g = global_gradient(suite, x);
    if (norm_sq(g) <= 1e-28) break;
    axpy(-step, g, x);
  }
  suite.global_min = x;
  return suite;
}

struct HeterogeneityReport {
  double sigma_hat = 0.0;   // max over probes/clients of per-point gradient std dev
  double kappa_hat = 0.0;   // max over probes/clients of ||grad F_r - grad F||
  std::size_t probe_count = 0;
};

// Exact per-point gradient variance (by enumerating the points) and exact
// client-vs-global gradient gap, maximized over the probe points. For the
// quadratic families both quantities are independent of x, so any probe set
// recovers sigma and kappa exactly; `b` is validated here because the caller's
// minibatch variance bound is sigma_hat^2 / b.
inline HeterogeneityReport estimate_sigma_kappa(const ObjectiveSuite& suite,
                                                const std::vector<ParamVector>& probes,
                                                std::size_t b) {
  if (probes.empty()) throw std::invalid_argument("estimate_sigma_kappa: need >= 1 probe");
  for (const auto& c : suite.clients)
    if (b < 1 || b > c.n())
      throw std::invalid_argument("estimate_sigma_kappa: b out of [1, n_r]");
  HeterogeneityReport rep;
  rep.probe_count = probes.size();
  for (const auto& x : probes) {
    require_finite(x, "estimate_sigma_kappa probe");
    ParamVector gf = global_gradient(suite, x);
    for (const auto& c : suite.clients) {
      ParamVector gr = full_gradient(c, x);
      double var = 0.0;
      for (std::size_t i = 0; i < c.n(); ++i) var += norm_sq(c.point_gradient(i, x) - gr);
      var /= static_cast<double>(c.n());
      rep.sigma_hat = std::max(rep.sigma_hat, std::sqrt(var));
      rep.kappa_hat = std::max(rep.kappa_hat, norm(gr - gf));
    }
  }
  return rep;
}

}  // namespace byzsim
