#pragma once
// Verification harness: brute-force and greedy subset oracles for the
// concentration property the filter relies on, Monte-Carlo concentration
// checks for one synchronization window, geometric-plus-floor curve fitting
// for convergence series, assembly of the convergence-floor budgets from
// their calibrated constants, the flat-text calibration file format, and the
// seeded instance families behind the bundled check suites.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "byzsim/fedsim.hpp"
#include "byzsim/linalg.hpp"
#include "byzsim/objectives.hpp"
#include "byzsim/rage.hpp"
#include "byzsim/rng.hpp"

namespace byzsim {

// Least-squares decomposition of a decay series into amplitude * rho^t + floor.
struct FloorFit {
  double rho = 0.0;        // per-iteration geometric ratio, in (0, 1)
  double amplitude = 0.0;
  double floor = 0.0;      // empirical error floor, >= 0
  double r_squared = 0.0;
};

// A convergence-floor budget assembled from its parts.
struct GammaBound {
  double gamma = 0.0;
  double upsilon_sq = 0.0;  // aggregation-error budget
  double sigma0_sq = 0.0;   // concentration threshold it scales with
  double c_upsilon = 0.0;   // calibrated constant used for upsilon_sq
};

struct SubsetResult {
  std::vector<std::size_t> indices;  // ascending
  double lambda_max = 0.0;           // top eigenvalue of the subset covariance
};

namespace detail {

inline double subset_lambda(const std::vector<ParamVector>& points,
                            const std::vector<std::size_t>& idx) {
  std::vector<ParamVector> sub;
  sub.reserve(idx.size());
  for (std::size_t i : idx) sub.push_back(points[i]);
  const std::vector<double> w(sub.size(), 1.0);
  return cov_lambda_max(sub, w, mean(sub)).value;
}

}  // namespace detail

// Exhaustive search for the subset of the given size whose covariance (about
// its own mean) has the smallest top eigenvalue. Exponential: K is capped.
inline SubsetResult brute_force_best_subset(const std::vector<ParamVector>& points,
                                            std::size_t subset_size) {
  const std::size_t k = points.size();
  if (k > 14) throw std::invalid_argument("brute_force_best_subset: more than 14 points");
  if (subset_size < 1 || subset_size > k)
    throw std::invalid_argument("brute_force_best_subset: subset size out of range");

  std::vector<std::size_t> idx(subset_size);
  for (std::size_t i = 0; i < subset_size; ++i) idx[i] = i;
  SubsetResult best;
  best.lambda_max = std::numeric_limits<double>::infinity();
  while (true) {
    const double lam = detail::subset_lambda(points, idx);
    if (lam < best.lambda_max) {
      best.lambda_max = lam;
      best.indices = idx;
    }
    // Next lexicographic combination.
    std::size_t i = subset_size;
    while (i > 0 && idx[i - 1] == k - subset_size + (i - 1)) --i;
    if (i == 0) break;
    ++idx[i - 1];
    for (std::size_t j = i; j < subset_size; ++j) idx[j] = idx[j - 1] + 1;
  }
  return best;
}

// Greedy stand-in for the exhaustive search: repeatedly drop the point with
// the largest squared projection on the current top eigendirection. Sound in
// one direction only: if the greedy subset meets a bound, some subset does.
inline SubsetResult greedy_concentrated_subset(const std::vector<ParamVector>& points,
                                               std::size_t subset_size) {
  const std::size_t k = points.size();
  if (subset_size < 1 || subset_size > k)
    throw std::invalid_argument("greedy_concentrated_subset: subset size out of range");
  std::vector<std::size_t> idx(k);
  for (std::size_t i = 0; i < k; ++i) idx[i] = i;

  while (idx.size() > subset_size) {
    std::vector<ParamVector> sub;
    for (std::size_t i : idx) sub.push_back(points[i]);
    const std::vector<double> w(sub.size(), 1.0);
    ParamVector center = mean(sub);
    EigenResult e = cov_lambda_max(sub, w, center);
    std::size_t worst = 0;
    double worst_proj = -1.0;
    for (std::size_t pos = 0; pos < idx.size(); ++pos) {
      const double p = dot(points[idx[pos]] - center, e.vector);
      if (p * p > worst_proj) {
        worst_proj = p * p;
        worst = pos;
      }
    }
    idx.erase(idx.begin() + static_cast<std::ptrdiff_t>(worst));
  }
  SubsetResult out;
  out.indices = idx;
  out.lambda_max = detail::subset_lambda(points, idx);
  return out;
}

namespace detail {

// One honest synchronization window: every client starts from a common
// point and runs H local steps; returns the K accumulated gradients.
inline std::vector<ParamVector> honest_window_reports(const ObjectiveSuite& suite, std::size_t H,
                                                      std::size_t b, bool full_batch, double eta,
                                                      std::uint64_t seed) {
  const std::size_t d = suite.dim();
  ParamVector x0(d, 1.0);
  std::vector<ParamVector> accu;
  accu.reserve(suite.R());
  for (std::size_t r = 0; r < suite.R(); ++r) {
    Rng rng = Rng::derive(seed, {kTagClient, 0, r});
    ParamVector x = x0;
    for (std::size_t h = 0; h < H; ++h) {
      ParamVector g =
          full_batch ? full_gradient(suite.clients[r], x)
                     : minibatch_gradient(suite.clients[r], x, b, rng);
      axpy(-eta, g, x);
    }
    accu.push_back(accumulate_report(x0, x, eta));
  }
  return accu;
}

}  // namespace detail

// Monte-Carlo check of the minibatch concentration property: per seed,
// simulate one honest window, greedily trim to a (1 - eps_prime) fraction,
// and test the trimmed covariance against the closed-form threshold.
// Returns the fraction of seeds in which the bound held.
inline double check_concentration_sgd(const ObjectiveSuite& suite, std::size_t H, std::size_t b,
                                      double eps_prime, std::size_t n_seeds,
                                      std::uint64_t seed0 = 10000) {
  if (!(eps_prime > 0.0)) throw std::invalid_argument("check_concentration_sgd: eps_prime > 0");
  const std::size_t K = suite.R();
  ParamVector probe(suite.dim(), 1.0);
  HeterogeneityReport hr = estimate_sigma_kappa(suite, {probe}, b);
  const double bound =
      sigma0_sgd(H, hr.sigma_hat, b, eps_prime, suite.dim(), K, hr.kappa_hat);
  const double eta = 1.0 / (8.0 * static_cast<double>(H) * suite.L);
  const auto drop = static_cast<std::size_t>(
      std::floor(eps_prime * static_cast<double>(K) *
                 (1.0 + 4.0 * std::numeric_limits<double>::epsilon())));
  const std::size_t keep = K - std::min(drop, K - 1);

  std::size_t held = 0;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    auto reports = detail::honest_window_reports(suite, H, b, false, eta, seed0 + s);
    SubsetResult sub = greedy_concentrated_subset(reports, keep);
    if (sub.lambda_max <= bound) ++held;
  }
  return static_cast<double>(held) / static_cast<double>(n_seeds);
}

// Full-batch analog: a single deterministic window, no trimming. Returns
// (measured lambda_max, threshold); the bound must hold outright.
inline std::pair<double, double> check_concentration_gd(const ObjectiveSuite& suite,
                                                        std::size_t H) {
  ParamVector probe(suite.dim(), 1.0);
  HeterogeneityReport hr = estimate_sigma_kappa(suite, {probe}, 1);
  const double bound = sigma0_gd(H, hr.kappa_hat);
  const double eta = 1.0 / (5.0 * static_cast<double>(H) * suite.L);
  auto reports = detail::honest_window_reports(suite, H, 1, true, eta, 1);
  const std::vector<double> w(reports.size(), 1.0);
  const double lam = cov_lambda_max(reports, w, mean(reports)).value;
  return {lam, bound};
}

// Fits amplitude * rho^t + floor to the sync-index subsequence of a per-
// iteration series (grid over the ratio + golden refinement; the linear
// pieces solved exactly). The floor is clamped at zero and refit.
inline FloorFit fit_floor(const std::vector<double>& series, std::size_t sync_stride) {
  if (sync_stride < 1) throw std::invalid_argument("fit_floor: stride must be >= 1");
  if (series.size() < 3 * sync_stride)
    throw std::invalid_argument("fit_floor: series shorter than three windows");
  std::vector<double> y;
  for (std::size_t t = 0; t < series.size(); t += sync_stride) {
    if (!(series[t] > 0.0) || !std::isfinite(series[t]))
      throw std::invalid_argument("fit_floor: series values must be positive finite");
    y.push_back(series[t]);
  }
  const std::size_t n = y.size();
  double y_mean = 0.0;
  for (double v : y) y_mean += v;
  y_mean /= static_cast<double>(n);
  double ss_tot = 0.0;
  for (double v : y) ss_tot += (v - y_mean) * (v - y_mean);

  // For a fixed per-window ratio g, (amplitude, floor) solve a 2x2 linear
  // system; evaluate the residual and keep the best g.
  auto solve_at = [&](double g, double* a_out, double* f_out) {
    double s_gg = 0.0, s_g1 = 0.0, b_g = 0.0, b_1 = 0.0, pw = 1.0;
    for (std::size_t u = 0; u < n; ++u) {
      s_gg += pw * pw;
      s_g1 += pw;
      b_g += y[u] * pw;
      b_1 += y[u];
      pw *= g;
    }
    const double nn = static_cast<double>(n);
    const double det = s_gg * nn - s_g1 * s_g1;
    double a = 0.0, f = y_mean;
    if (std::abs(det) > 1e-14 * std::max(1.0, s_gg * nn)) {
      a = (b_g * nn - b_1 * s_g1) / det;
      f = (s_gg * b_1 - s_g1 * b_g) / det;
    }
    if (f < 0.0) {  // clamp the floor and refit the amplitude alone
      f = 0.0;
      a = s_gg > 0.0 ? b_g / s_gg : 0.0;
    }
    double sse = 0.0;
    pw = 1.0;
    for (std::size_t u = 0; u < n; ++u) {
      const double r = a * pw + f - y[u];
      sse += r * r;
      pw *= g;
    }
    *a_out = a;
    *f_out = f;
    return sse;
  };

  double best_g = 0.5, best_sse = std::numeric_limits<double>::infinity();
  const int grid = 512;
  for (int i = 0; i < grid; ++i) {
    const double g = (static_cast<double>(i) + 0.5) / static_cast<double>(grid) * 0.999999;
    double a, f;
    const double sse = solve_at(g, &a, &f);
    if (sse < best_sse) {
      best_sse = sse;
      best_g = g;
    }
  }
  // Golden-section refinement around the best grid cell.
  double lo = std::max(1e-9, best_g - 1.0 / grid), hi = std::min(0.999999, best_g + 1.0 / grid);
  const double gr = 0.5 * (std::sqrt(5.0) - 1.0);
  double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
  double a_tmp, f_tmp;
  double f1 = solve_at(x1, &a_tmp, &f_tmp), f2 = solve_at(x2, &a_tmp, &f_tmp);
  for (int it = 0; it < 80; ++it) {
    if (f1 < f2) {
      hi = x2;
      x2 = x1;
      f2 = f1;
      x1 = hi - gr * (hi - lo);
      f1 = solve_at(x1, &a_tmp, &f_tmp);
    } else {
      lo = x1;
      x1 = x2;
      f1 = f2;
      x2 = lo + gr * (hi - lo);
      f2 = solve_at(x2, &a_tmp, &f_tmp);
    }
  }
  best_g = 0.5 * (lo + hi);

  FloorFit fit;
  double a = 0.0, f = 0.0;
  const double sse = solve_at(best_g, &a, &f);
  fit.amplitude = a;
  fit.floor = f;
  fit.rho = std::pow(best_g, 1.0 / static_cast<double>(sync_stride));
  fit.r_squared = ss_tot > 0.0 ? 1.0 - sse / ss_tot : (sse <= 1e-18 ? 1.0 : 0.0);
  return fit;
}

// Minibatch convergence-floor budget: Gamma = 3 Upsilon^2 / H + 11 H sigma^2 / b
// + 36 H kappa^2, with Upsilon^2 = c_upsilon * sigma0^2 * (eps + eps_prime).
inline GammaBound gamma_bound(std::size_t H, double sigma, std::size_t b, double kappa,
                              double eps, double eps_prime, std::size_t d, std::size_t K,
                              double c_upsilon) {
  if (!(c_upsilon > 0.0)) throw std::invalid_argument("gamma_bound: c_upsilon must be > 0");
  GammaBound gb;
  gb.c_upsilon = c_upsilon;
  gb.sigma0_sq = sigma0_sgd(H, sigma, b, eps_prime, d, K, kappa);
  gb.upsilon_sq = c_upsilon * gb.sigma0_sq * (eps + eps_prime);
  const double Hd = static_cast<double>(H);
  gb.gamma = 3.0 * gb.upsilon_sq / Hd + 11.0 * Hd * sigma * sigma / static_cast<double>(b) +
             36.0 * Hd * kappa * kappa;
  return gb;
}

// Full-batch budget: Gamma = 2 Upsilon^2 / H + 25 H kappa^2, with
// Upsilon = c_upsilon * H * kappa * sqrt(eps).
inline GammaBound gamma_bound_gd(std::size_t H, double kappa, double eps, double c_upsilon) {
  if (!(c_upsilon > 0.0)) throw std::invalid_argument("gamma_bound_gd: c_upsilon must be > 0");
  GammaBound gb;
  gb.c_upsilon = c_upsilon;
  gb.sigma0_sq = sigma0_gd(H, kappa);
  const double Hd = static_cast<double>(H);
  const double upsilon = c_upsilon * Hd * kappa * std::sqrt(eps);
  gb.upsilon_sq = upsilon * upsilon;
  gb.gamma = 2.0 * gb.upsilon_sq / Hd + 25.0 * Hd * kappa * kappa;
  return gb;
}

// Compares the filter against the exhaustive subset oracle on one instance:
// returns (||filter estimate - best-subset mean||, sigma0 sqrt(eps_tilde)),
// the numerator and natural scale of the robustness guarantee.
inline std::pair<double, double> rage_oracle_compare(const std::vector<ParamVector>& points,
                                                     const std::vector<std::size_t>& honest,
                                                     const RageConfig& cfg) {
  if (points.size() > 12) throw std::invalid_argument("rage_oracle_compare: more than 12 points");
  if (honest.empty() || honest.size() > points.size())
    throw std::invalid_argument("rage_oracle_compare: honest set size out of range");
  RageReport rep = rage_filter(points, cfg);
  SubsetResult oracle = brute_force_best_subset(points, honest.size());
  std::vector<ParamVector> sub;
  for (std::size_t i : oracle.indices) sub.push_back(points[i]);
  const double err = norm(rep.estimate - mean(sub));
  const double eps_tilde = static_cast<double>(points.size() - honest.size()) /
                           static_cast<double>(points.size());
  const double scale = std::sqrt(cfg.sigma0_sq) * std::sqrt(eps_tilde);
  return {err, scale};
}

// Spearman rank correlation with average ranks on ties; 0 when either side
// is constant (a flat series counts as non-decreasing).
inline double spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series of size >= 2");
  auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> r(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) + static_cast<double>(j)) + 1.0;
      for (std::size_t t = i; t <= j; ++t) r[order[t]] = avg;
      i = j + 1;
    }
    return r;
  };
  std::vector<double> ra = ranks(a), rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double ma = 0.0, mb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += ra[i];
    mb += rb[i];
  }
  ma /= n;
  mb /= n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return 0.0;
  return sab / std::sqrt(saa * sbb);
}

// ---------------------------------------------------------------------------
// Calibration file: flat `name = value` lines, committed to the repository.

struct Calibration {
  double c_rage = 0.0;        // robustness-ratio constant
  double c_upsilon = 0.0;     // minibatch aggregation-error constant
  double c_upsilon_gd = 0.0;  // full-batch aggregation-error constant
};

inline void save_calibration(const std::string& path, const Calibration& cal) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_calibration: cannot write " + path);
  out.precision(17);
  out << "c_rage = " << cal.c_rage << "\n";
  out << "c_upsilon = " << cal.c_upsilon << "\n";
  out << "c_upsilon_gd = " << cal.c_upsilon_gd << "\n";
}

// ---------------------------------------------------------------------------
// Seeded instance families and bundled check suites, shared by the CLI
// verification command, the calibration pass, and the acceptance tests.

struct CheckOutcome {
  std::string name;
  bool pass = false;
  double measured = 0.0;  // the quantity that was checked
  double bound = 0.0;     // what it was checked against (<= unless noted)
};

// One robust-aggregation stress instance: a concentrated honest cluster plus
// an eps_tilde fraction of reports rewritten by a catalog attack whose
// strength cycles over {1, 10, 100, 1e4} (relative to the honest spread for
// the magnitude-style attacks).
struct RobustInstance {
  std::vector<ParamVector> points;
  std::vector<std::size_t> honest;   // ascending indices into points
  ParamVector honest_mean;
  double sigma0_sq = 0.0;            // top eigenvalue of the honest covariance
  double eps_tilde = 0.0;
  AttackKind kind = AttackKind::none;
  double strength = 0.0;
};

inline RobustInstance make_robust_instance(std::uint64_t idx, std::size_t K, std::size_t d,
                                           double eps_tilde) {
  Rng rng = Rng::derive(idx, {kTagVerify, 31});
  const auto n_bad = static_cast<std::size_t>(std::llround(eps_tilde * static_cast<double>(K)));
  const std::size_t n_honest = K - n_bad;

  ParamVector center(d);
  for (std::size_t j = 0; j < d; ++j) center[j] = rng.uniform(-5.0, 5.0);
  const double spread = rng.uniform(0.5, 2.0);

  std::map<std::size_t, ParamVector> models;
  for (std::size_t i = 0; i < K; ++i) {
    ParamVector p = center;
    for (std::size_t j = 0; j < d; ++j) p[j] += spread * rng.normal();
    models.emplace(i, std::move(p));
  }
  std::vector<ParamVector> honest_pts;
  for (std::size_t i = 0; i < n_honest; ++i) honest_pts.push_back(models.at(i));

  RobustInstance inst;
  inst.eps_tilde = static_cast<double>(n_bad) / static_cast<double>(K);
  inst.honest_mean = mean(honest_pts);
  const std::vector<double> w(honest_pts.size(), 1.0);
  inst.sigma0_sq = cov_lambda_max(honest_pts, w, inst.honest_mean).value;
  for (std::size_t i = 0; i < n_honest; ++i) inst.honest.push_back(i);

  static constexpr AttackKind kCatalog[] = {AttackKind::erasure_zero, AttackKind::sign_flip,
                                            AttackKind::gaussian_blowup,
                                            AttackKind::colluding_shift,
                                            AttackKind::top_eigen_drift};
  static constexpr double kStrength[] = {1.0, 10.0, 100.0, 1e4};
  inst.kind = kCatalog[idx % 5];
  inst.strength = kStrength[(idx / 5) % 4];

  const double sigma0 = std::sqrt(std::max(inst.sigma0_sq, 1e-30));
  AttackSpec spec;
  spec.kind = inst.kind;
  spec.scale = inst.strength;                    // reflection / blowup factor
  spec.magnitude = inst.strength * sigma0;       // shift attacks, in sigma0 units
  std::set<std::size_t> corrupt;
  for (std::size_t i = n_honest; i < K; ++i) corrupt.insert(i);
  Rng attack_rng = Rng::derive(idx, {kTagVerify, 32});
  auto reports = corrupt_reports(models, corrupt, spec, center, attack_rng);
  for (std::size_t i = 0; i < K; ++i) inst.points.push_back(reports.at(i));
  return inst;
}

// ||filter estimate - honest mean|| / (sigma0 sqrt(eps_tilde)) for one instance.
inline double robust_ratio(const RobustInstance& inst, double score_multiplier = 4.0) {
  RageConfig cfg;
  cfg.sigma0_sq = inst.sigma0_sq;
  cfg.alpha = std::max(0.75, 1.0 - inst.eps_tilde);
  cfg.score_multiplier = score_multiplier;
  RageReport rep = rage_filter(inst.points, cfg);
  const double scale =
      std::sqrt(std::max(inst.sigma0_sq, 1e-30)) * std::sqrt(inst.eps_tilde);
  return norm(rep.estimate - inst.honest_mean) / scale;
}

// Small-K instances sized for the exhaustive-subset oracle: K in {6,8,10,12},
// d in {1,2,3}, one or two corrupted reports (never more than a quarter).
inline RobustInstance oracle_family_instance(std::uint64_t i) {
  const std::size_t K = 6 + 2 * (i % 4);
  const std::size_t d = 1 + i % 3;
  const std::size_t n_bad = (K >= 8 && i % 2 == 1) ? 2 : 1;
  return make_robust_instance(900 + i, K, d,
                              static_cast<double>(n_bad) / static_cast<double>(K));
}

// Same numerator but against the exhaustive-subset oracle (K <= 12 only).
inline double oracle_ratio(const RobustInstance& inst, double score_multiplier = 4.0) {
  RageConfig cfg;
  cfg.sigma0_sq = inst.sigma0_sq;
  cfg.alpha = std::max(0.75, 1.0 - inst.eps_tilde);
  cfg.score_multiplier = score_multiplier;
  auto [err, scale] = rage_oracle_compare(inst.points, inst.honest, cfg);
  return err / std::max(scale, 1e-30);
}

// ---------------------------------------------------------------------------
// Convergence-floor experiments on the exact-constant quadratic family.

struct FloorOutcome {
  double axis = 0.0;        // the swept value (eps or H)
  FloorFit fit;
  double sigma0_sq = 0.0;   // closed-form threshold for the configuration
  double required_c = 0.0;  // smallest calibration constant covering the floor
};

namespace detail {

// Shared configuration for the floor experiments: 20 always-sampled clients
// on a logistic suite. The logistic family has genuinely client-dependent
// curvature, so the averaged local trajectories do not collapse onto the
// centralized path and the floor keeps a real dependence on both the
// corruption fraction and the window length. (The shared-curvature quadratic
// families are exactly window-length-neutral by construction.)
inline ExperimentConfig floor_config(double eps, std::size_t H, bool full_batch,
                                     std::uint64_t seed) {
  ExperimentConfig cfg;
  cfg.R = cfg.K = 16;
  cfg.sampling = SamplingPolicy::all_clients;
  cfg.H = H;
  cfg.T = 200 * H;
  cfg.b = 1;
  cfg.eps = eps;
  cfg.eps_prime = 0.1;
  cfg.full_batch = full_batch;
  cfg.seed = seed;
  cfg.x0 = 3.0;
  cfg.objective.kind = ObjectiveKind::logistic;
  cfg.objective.d = 3;
  cfg.objective.n_r = 4;
  cfg.objective.lambda_reg = 1.5;
  cfg.objective.point_spread = 0.5;   // feature-cloud scale
  cfg.objective.heterogeneity = 1.0;  // per-client feature shift
  cfg.objective.suite_seed = seed;    // one dataset per batch, shared across the sweep
  return cfg;
}

}  // namespace detail

inline FloorOutcome floor_case(double eps, std::size_t H, bool full_batch, std::uint64_t seed) {
  ExperimentConfig cfg = detail::floor_config(eps, H, full_batch, seed);
  // Pilot round: recover the resolved step size and concentration threshold
  // (probed sigma/kappa) so the colluding attack can sit at a fixed fraction
  // of the threshold -- enough to bite, not enough to be trivially removed.
  {
    ExperimentConfig pilot = cfg;
    pilot.T = pilot.H;
    RunResult pr = run(pilot);
    cfg.attack.kind = AttackKind::colluding_shift;
    cfg.attack.magnitude = 0.75 * pr.eta * std::sqrt(pr.sigma0_sq);
  }
  RunResult res = run(cfg);
  if (res.diverged) throw std::runtime_error("floor_case: experiment diverged");
  std::vector<double> series;
  for (const auto& row : res.rows) series.push_back(row.dist_sq.value());

  FloorOutcome out;
  out.axis = eps;
  out.fit = fit_floor(series, H);
  out.sigma0_sq = res.sigma0_sq;
  const double mu = res.suite.mu, kappa = res.kappa, sigma = res.sigma;
  const double Hd = static_cast<double>(H);
  if (full_batch) {
    // floor <= (14/mu^2)(2 c^2 H^2 kappa^2 eps / H + 25 H kappa^2)
    const double base = (14.0 / (mu * mu)) * 25.0 * Hd * kappa * kappa;
    if (out.fit.floor <= base || eps <= 0.0) {
      out.required_c = 0.0;
    } else {
      const double num = out.fit.floor * mu * mu / 14.0 - 25.0 * Hd * kappa * kappa;
      out.required_c = std::sqrt(num / (2.0 * Hd * kappa * kappa * eps));
    }
  } else {
    // floor <= (13/mu^2)(3 c sigma0^2 (eps+eps') / H + 11 H sigma^2/b + 36 H kappa^2)
    const double base_terms =
        11.0 * Hd * sigma * sigma / static_cast<double>(cfg.b) + 36.0 * Hd * kappa * kappa;
    const double num = out.fit.floor * mu * mu / 13.0 - base_terms;
    out.required_c =
        num <= 0.0 ? 0.0 : num * Hd / (3.0 * out.sigma0_sq * (eps + cfg.eps_prime));
  }
  return out;
}

inline std::vector<FloorOutcome> eps_sweep_floors(std::uint64_t seed,
                                                  const std::vector<double>& eps_values,
                                                  std::size_t H, bool full_batch) {
  std::vector<FloorOutcome> out;
  for (double e : eps_values) out.push_back(floor_case(e, H, full_batch, seed));
  return out;
}

inline std::vector<FloorOutcome> h_sweep_floors(std::uint64_t seed,
                                                const std::vector<std::size_t>& h_values,
                                                double eps, bool full_batch) {
  std::vector<FloorOutcome> out;
  for (std::size_t H : h_values) {
    FloorOutcome fo = floor_case(eps, H, full_batch, seed);
    fo.axis = static_cast<double>(H);
    out.push_back(std::move(fo));
  }
  return out;
}

// Nonconvex analog: the running average of the squared global gradient norm
// along one attacked trajectory, plus the smallest calibration constant under
// which (9/2) * Gamma covers that average.
struct NonconvexOutcome {
  double avg_grad_sq = 0.0;
  double required_c = 0.0;
};

inline NonconvexOutcome nonconvex_case(std::size_t T, std::uint64_t seed) {
  const std::size_t H = 2;
  ExperimentConfig cfg;
  cfg.R = cfg.K = 12;
  cfg.sampling = SamplingPolicy::all_clients;
  cfg.H = H;
  cfg.T = T;
  cfg.b = 1;
  cfg.eps = 0.1;
  cfg.eps_prime = 0.1;
  cfg.seed = seed;
  cfg.x0 = 3.0;
  cfg.objective.kind = ObjectiveKind::smooth_nonconvex;
  cfg.objective.d = 4;
  cfg.objective.n_r = 4;
  cfg.objective.point_spread = 1.0;
  cfg.objective.heterogeneity = 0.5;
  cfg.objective.mu = 0.5;
  cfg.objective.L = 2.0;
  cfg.objective.beta = 0.5;
  cfg.objective.suite_seed = 802;
  cfg.attack.kind = AttackKind::sign_flip;
  cfg.attack.scale = 1.0;
  RunResult res = run(cfg);
  if (res.diverged) throw std::runtime_error("nonconvex_case: experiment diverged");

  NonconvexOutcome out;
  for (const auto& row : res.rows) out.avg_grad_sq += row.grad_norm_sq;
  out.avg_grad_sq /= static_cast<double>(res.rows.size());
  const double Hd = static_cast<double>(H);
  const double base = 11.0 * Hd * res.sigma * res.sigma / static_cast<double>(cfg.b) +
                      36.0 * Hd * res.kappa * res.kappa;
  const double num = out.avg_grad_sq / 4.5 - base;
  out.required_c =
      num <= 0.0 ? 0.0 : num * Hd / (3.0 * res.sigma0_sq * (cfg.eps + cfg.eps_prime));
  return out;
}

// ---------------------------------------------------------------------------
// Bundled check suites.

namespace detail {

inline CheckOutcome check_report_variance(std::size_t n_seeds) {
  const std::size_t H = 2;
  const double sigma = 1.0;
  ExperimentConfig cfg;
  cfg.R = cfg.K = 3;
  cfg.sampling = SamplingPolicy::all_clients;
  cfg.H = H;
  cfg.T = H;
  cfg.b = 1;
  cfg.objective.d = 3;
  cfg.objective.n_r = 4;
  cfg.objective.point_spread = sigma;
  cfg.objective.heterogeneity = 0.3;
  cfg.objective.mu = 0.5;
  cfg.objective.L = 2.0;
  cfg.objective.suite_seed = 777;

  std::vector<ParamVector> ys;
  for (std::size_t s = 0; s < n_seeds; ++s) {
    cfg.seed = 2000 + s;
    ys.push_back(run(cfg, true).windows[0].accu[0]);
  }
  ParamVector ybar = mean(ys);
  std::vector<double> sq;
  double var = 0.0;
  for (const auto& y : ys) {
    sq.push_back(norm_sq(y - ybar));
    var += sq.back();
  }
  var /= static_cast<double>(n_seeds - 1);
  double se = 0.0;
  for (double v : sq) se += (v - var) * (v - var);
  se = std::sqrt(se / static_cast<double>(n_seeds - 1) / static_cast<double>(n_seeds));
  const double budget = double(H * H) * sigma * sigma / double(cfg.b) + 5.0 * se;
  return {"accumulated_report_variance", var <= budget, var, budget};
}

inline CheckOutcome check_grad_suboptimality(std::size_t n_probes) {
  ObjectiveSuite suite = make_quadratic_suite(6, 4, 0.5, 0.5, 2.0, 2024, 4, 1.0);
  const double f_star = global_loss(suite, *suite.global_min);
  Rng rng = Rng::derive(17, {kTagVerify, 40});
  double worst = 0.0;
  for (std::size_t p = 0; p < n_probes; ++p) {
    ParamVector x(4);
    for (std::size_t j = 0; j < 4; ++j) x[j] = rng.uniform(-20.0, 20.0);
    const double lhs = norm_sq(global_gradient(suite, x));
    const double rhs = 2.0 * suite.L * (global_loss(suite, x) - f_star);
    if (rhs > 0.0) worst = std::max(worst, lhs / rhs);
  }
  return {"gradient_vs_suboptimality", worst <= 1.0 + 1e-9, worst, 1.0};
}

inline CheckOutcome check_contraction() {
  ExperimentConfig cfg;
  cfg.R = cfg.K = 3;
  cfg.sampling = SamplingPolicy::all_clients;
  cfg.H = 4;
  cfg.T = 16;
  cfg.full_batch = true;
  cfg.seed = 31;
  cfg.objective.d = 3;
  cfg.objective.heterogeneity = 0.4;
  cfg.objective.mu = 0.5;
  cfg.objective.L = 2.0;
  RunResult res = run(cfg);
  const double mu = res.suite.mu, eta = res.eta;
  const double slack = (3.0 * eta / mu) * 3.0 * double(cfg.H) * res.kappa * res.kappa;
  double worst = 0.0;
  for (std::size_t t = 0; t + 1 < res.rows.size(); ++t) {
    if ((t + 1) % cfg.H == 0) continue;
    const double allowed = (1.0 - mu * eta / 2.0) * *res.rows[t].dist_sq + slack;
    if (allowed > 0.0) worst = std::max(worst, *res.rows[t + 1].dist_sq / allowed);
  }
  return {"per_step_contraction", worst <= 1.0 + 1e-9, worst, 1.0};
}

inline CheckOutcome check_drift(std::size_t n_seeds, std::size_t H = 2) {
  const std::size_t Kc = 4;
  const double sigma = 1.0, kappa = 0.5, L = 2.0;
  ExperimentConfig cfg;
  cfg.R = cfg.K = Kc;
  cfg.sampling = SamplingPolicy::all_clients;
  cfg.H = H;
  cfg.T = H;
  cfg.b = 1;
  cfg.objective.d = 4;
  cfg.objective.n_r = 4;
  cfg.objective.point_spread = sigma;
  cfg.objective.heterogeneity = kappa;
  cfg.objective.mu = 0.5;
  cfg.objective.L = L;
  cfg.objective.suite_seed = 4242;
  const double eta = 1.0 / (8.0 * double(H) * L);
  cfg.eta = eta;
  const double bound = 7.0 * double(H * H * H) * eta * eta * (sigma * sigma + 3.0 * kappa * kappa);

  std::vector<double> pair_mean(Kc * (Kc - 1) / 2, 0.0);
  for (std::size_t s = 0; s < n_seeds; ++s) {
    cfg.seed = 1000 + s;
    RunResult res = run(cfg, true);
    const auto& w = res.windows[0];
    std::size_t p = 0;
    for (std::size_t i = 0; i < Kc; ++i)
      for (std::size_t j = i + 1; j < Kc; ++j, ++p) {
        double acc = 0.0;
        for (std::size_t h = 0; h < H; ++h) acc += norm_sq(w.traj[i][h] - w.traj[j][h]);
        pair_mean[p] += acc;
      }
  }
  double worst = 0.0;
  for (double& v : pair_mean) worst = std::max(worst, v / static_cast<double>(n_seeds));
  return {"local_drift_window_bound", worst <= bound, worst, bound};
}

inline CheckOutcome check_rage_exactness(std::size_t n_instances, double score_multiplier) {
  std::size_t exact = 0;
  for (std::uint64_t i = 0; i < n_instances; ++i) {
    Rng rng = Rng::derive(i, {kTagVerify, 41});
    const std::size_t k = 4 + i % 9;
    const std::size_t d = 1 + i % 6;
    ParamVector center(d);
    for (std::size_t j = 0; j < d; ++j) center[j] = rng.uniform(-5.0, 5.0);
    std::vector<ParamVector> pts;
    for (std::size_t p = 0; p < k; ++p) {
      ParamVector v = center;
      for (std::size_t j = 0; j < d; ++j) v[j] += 0.3 * rng.normal();
      pts.push_back(v);
    }
    const std::vector<double> w(k, 1.0);
    RageConfig cfg;
    cfg.sigma0_sq = cov_lambda_max(pts, w, mean(pts)).value;
    cfg.score_multiplier = score_multiplier;
    try {
      RageReport rep = rage_filter(pts, cfg);
      ParamVector m = mean(pts);
      bool same = rep.rounds == 0;
      for (std::size_t j = 0; j < d && same; ++j) same = rep.estimate[j] == m[j];
      if (same) ++exact;
    } catch (const std::runtime_error&) {
      // an over-aggressive threshold that rejects a clean cluster is a failure
    }
  }
  const double frac = double(exact) / double(n_instances);
  return {"rage_exactness_bitwise", frac == 1.0, frac, 1.0};
}

inline CheckOutcome check_rage_outlier() {
  RageConfig cfg;
  cfg.sigma0_sq = 0.0;
  cfg.w_mode = WMode::uniform;
  std::vector<ParamVector> pts;
  for (double v : {0.0, 0.0, 0.0, 100.0}) pts.push_back(ParamVector(std::vector<double>{v}));
  RageReport rep = rage_filter(pts, cfg);
  const bool ok = rep.estimate[0] == 0.0 && rep.active_set == std::vector<std::size_t>{0, 1, 2};
  return {"rage_outlier_removal", ok, rep.estimate[0], 0.0};
}

inline CheckOutcome check_floor_recovery() {
  double worst = 0.0;
  for (double rho : {0.6, 0.9}) {
    std::vector<double> y;
    for (int t = 0; t < 60; ++t) y.push_back(2.0 * std::pow(rho, t) + 0.05);
    FloorFit fit = fit_floor(y, 1);
    worst = std::max(worst, std::abs(fit.rho - rho) / rho);
    worst = std::max(worst, std::abs(fit.floor - 0.05) / 0.05);
  }
  return {"floor_fit_recovery", worst <= 0.01, worst, 0.01};
}

inline CheckOutcome check_gamma_examples() {
  const double g1 = gamma_bound(1, 0.0, 1, 1.0, 0.1, 0.1, 4, 8, 1.0).gamma;
  const double g2 = gamma_bound_gd(2, 1.0, 0.04, 1.0).gamma;
  const double dev = std::max(std::abs(g1 - 52.8), std::abs(g2 - 50.16));
  return {"gamma_assembly_examples", dev <= 1e-12, dev, 1e-12};
}

inline CheckOutcome check_concentration_sgd_fast(std::size_t n_seeds) {
  ObjectiveSuite suite = make_quadratic_suite(24, 6, 0.0, 0.5, 2.0, 12, 4, 1.0);
  const double frac = check_concentration_sgd(suite, 1, 1, 0.25, n_seeds);
  return {"concentration_minibatch", frac >= 0.95, frac, 0.95};
}

inline CheckOutcome check_concentration_gd_fast() {
  ObjectiveSuite suite = make_quadratic_suite(8, 4, 0.7, 0.5, 2.0, 13, 4, 1.0);
  auto [lam, bound] = check_concentration_gd(suite, 3);
  return {"concentration_full_batch", lam <= bound, lam, bound};
}

}  // namespace detail

// Constant-free checks: closed-form identities, exactness properties, and
// Monte-Carlo bounds with pinned constants.
inline std::vector<CheckOutcome> fast_suite(double score_multiplier = 4.0,
                                            std::size_t n_seeds = 200) {
  std::vector<CheckOutcome> out;
  out.push_back(detail::check_report_variance(n_seeds));
  out.push_back(detail::check_grad_suboptimality(200));
  out.push_back(detail::check_contraction());
  out.push_back(detail::check_drift(n_seeds));
  out.push_back(detail::check_rage_exactness(100, score_multiplier));
  out.push_back(detail::check_rage_outlier());
  out.push_back(detail::check_floor_recovery());
  out.push_back(detail::check_gamma_examples());
  out.push_back(detail::check_concentration_sgd_fast(100));
  out.push_back(detail::check_concentration_gd_fast());
  return out;
}

// Checks that compare against the frozen calibration constants (2x headroom:
// the bound in force is twice the recorded constant).
inline std::vector<CheckOutcome> calibrated_suite(const Calibration& cal) {
  std::vector<CheckOutcome> out;

  double worst_robust = 0.0;
  for (std::uint64_t i = 0; i < 30; ++i)
    worst_robust = std::max(worst_robust, robust_ratio(make_robust_instance(i, 40, 20, 0.2)));
  out.push_back({"rage_robustness_ratio", worst_robust <= 2.0 * cal.c_rage, worst_robust,
                 2.0 * cal.c_rage});
  out.push_back({"rage_constant_cap", 2.0 * cal.c_rage <= 10.0, 2.0 * cal.c_rage, 10.0});

  double worst_oracle = 0.0;
  for (std::uint64_t i = 0; i < 20; ++i)
    worst_oracle = std::max(worst_oracle, oracle_ratio(oracle_family_instance(i)));
  out.push_back({"rage_oracle_agreement", worst_oracle <= 2.0 * cal.c_rage, worst_oracle,
                 2.0 * cal.c_rage});

  {
    auto floors = eps_sweep_floors(501, {0.0, 0.05, 0.1, 0.2}, 2, false);
    double worst = 0.0;
    for (const auto& fo : floors) worst = std::max(worst, fo.required_c);
    out.push_back({"floor_vs_gamma_sgd", worst <= 2.0 * cal.c_upsilon, worst,
                   2.0 * cal.c_upsilon});
  }
  {
    auto floors = eps_sweep_floors(502, {0.0, 0.05, 0.1, 0.2}, 2, true);
    double worst = 0.0;
    for (const auto& fo : floors) worst = std::max(worst, fo.required_c);
    out.push_back({"floor_vs_gamma_gd", worst <= 2.0 * cal.c_upsilon_gd, worst,
                   2.0 * cal.c_upsilon_gd});
  }
  return out;
}

inline Calibration load_calibration(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_calibration: missing file " + path);
  std::map<std::string, double> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    std::string key = line.substr(0, eq);
    std::string val = line.substr(eq + 1);
    auto trim = [](std::string& s) {
      const auto a = s.find_first_not_of(" \t\r");
      const auto b = s.find_last_not_of(" \t\r");
      s = a == std::string::npos ? "" : s.substr(a, b - a + 1);
    };
    trim(key);
    trim(val);
    if (key.empty() || key[0] == '#') continue;
    try {
      kv[key] = std::stod(val);
    } catch (const std::exception&) {
      throw std::runtime_error("load_calibration: bad value for " + key);
    }
  }
  Calibration cal;
  auto need = [&](const char* name) {
    auto it = kv.find(name);
    if (it == kv.end())
      throw std::runtime_error(std::string("load_calibration: missing key ") + name);
    return it->second;
  };
  cal.c_rage = need("c_rage");
  cal.c_upsilon = need("c_upsilon");
  cal.c_upsilon_gd = need("c_upsilon_gd");
  return cal;
}

}  // namespace byzsim
