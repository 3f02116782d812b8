#pragma once
// Deterministic simulator for Byzantine-resilient federated SGD with local
// iterations. Per synchronization round: the server samples K of R clients
// and broadcasts the global model; every sampled client (corrupt ones
// included) runs H local minibatch-SGD steps; corrupt clients replace their
// *reported* model per the attack; the server inverts each report into an
// accumulated gradient (x_sync - x_reported) / eta, robust-filters the
// candidates, and steps x <- x - eta * g_hat. A metrics row is emitted at
// every iteration: the global model at sync indices, the mean of the sampled
// clients' local models in between.
//
// All randomness flows from the one config seed through counter-split
// streams (suite, corrupt set, sampling, per-round-per-client batches,
// per-round attacks), so runs are bit-for-bit reproducible and client order
// never matters.

#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "byzsim/attacks.hpp"
#include "byzsim/linalg.hpp"
#include "byzsim/objectives.hpp"
#include "byzsim/rage.hpp"
#include "byzsim/rng.hpp"

namespace byzsim {

enum class SamplingPolicy { uniform_random, round_robin, all_clients };

// Recipe for the synthetic objective; the client count comes from the
// experiment config. center_scale scales the random grand-mean anchor
// (0 pins the minimizer exactly at the origin).
struct ObjectiveSpec {
  ObjectiveKind kind = ObjectiveKind::strongly_convex_quadratic;
  std::size_t d = 1;
  std::size_t n_r = 4;           // data points per client
  double heterogeneity = 0.0;    // exact kappa for the quadratic families
  double point_spread = 0.0;     // exact sigma for the quadratic families;
                                 // logistic feature-cloud scale (0 = 1.0)
  double mu = 1.0;               // curvature range of the quadratic part
  double L = 1.0;
  double beta = 0.0;             // sin^2 weight (smooth_nonconvex only)
  double lambda_reg = 0.01;      // l2 weight (logistic only)
  double center_scale = 1.0;
  std::uint64_t suite_seed = 0;  // 0 = derive from the run seed; nonzero pins
                                 // the dataset while the run seed varies
};

struct ExperimentConfig {
  std::size_t R = 1;             // total clients
  std::size_t K = 1;             // sampled per round
  std::size_t H = 1;             // local steps per round
  std::size_t T = 10;            // total iterations (multiple of H)
  std::size_t b = 1;             // minibatch size
  double eta = 0.0;              // step size; 0 = auto (1/8HL, or 1/5HL full-batch)
  double eps = 0.0;              // corrupt fraction of all clients
  double eps_prime = 0.25;       // concentration failure budget
  bool full_batch = false;
  double x0 = 1.0;               // initial model value, broadcast across coordinates
  std::uint64_t seed = 1;
  SamplingPolicy sampling = SamplingPolicy::uniform_random;
  AttackSpec attack;
  ObjectiveSpec objective;
  double score_multiplier = 4.0; // filter stopping threshold knob

  void validate() const {
    if (R < 1) throw std::invalid_argument("config: R must be >= 1");
    if (K < 1 || K > R) throw std::invalid_argument("config: need 1 <= K <= R");
    if (H < 1) throw std::invalid_argument("config: H must be >= 1");
    if (T % H != 0) throw std::invalid_argument("config: T must be a multiple of H");
    if (b < 1) throw std::invalid_argument("config: b must be >= 1");
    if (!(eta >= 0.0) || !std::isfinite(eta))
      throw std::invalid_argument("config: eta must be > 0 or 0 (auto)");
    if (!(eps >= 0.0) || eps >= 1.0) throw std::invalid_argument("config: eps must be in [0, 1)");
    if (!(eps_prime > 0.0)) throw std::invalid_argument("config: eps_prime must be > 0");
    if (sampling == SamplingPolicy::all_clients && K != R)
      throw std::invalid_argument("config: sampling=all requires K == R");
    if (!std::isfinite(x0)) throw std::invalid_argument("config: x0 must be finite");
    if (!(score_multiplier > 0.0))
      throw std::invalid_argument("config: score_multiplier must be > 0");
    if (objective.d < 1 || objective.n_r < 1)
      throw std::invalid_argument("config: objective shape must be nonempty");
    if (!full_batch && b > objective.n_r)
      throw std::invalid_argument("config: b exceeds points per client");
    attack.validate();
  }
};

struct MetricsRow {
  std::size_t t = 0;
  std::optional<double> dist_sq;     // ||x - x*||^2 when the minimizer is known
  double grad_norm_sq = 0.0;         // ||grad F(x)||^2 of the global objective
  double loss = 0.0;                 // F(x)
  std::size_t rage_removed = 0;      // inputs dropped by the filter (sync rows)
  std::size_t rage_rounds = 0;       // filter rounds used (sync rows)
  bool sync_flag = false;            // row is the global model
  bool sample_overloaded = false;    // > K/4 of this round's sample was corrupt
};

// Everything a test or the CLI needs to introspect one run. `windows` is
// only populated when run() is asked to record local trajectories.
struct LocalWindow {
  std::size_t round = 0;
  std::vector<std::size_t> sampled;            // ascending client ids
  std::vector<std::vector<ParamVector>> traj;  // [i][h], h = 0..H, traj[i][0] = broadcast
  std::vector<ParamVector> reports;            // post-attack reported models
  std::vector<ParamVector> accu;               // recovered accumulated gradients
};

struct RunResult {
  std::vector<MetricsRow> rows;
  std::vector<ParamVector> x_trace;  // the vector behind each row
  ObjectiveSuite suite;
  double eta = 0.0;
  double sigma = 0.0;                // per-point gradient noise bound in force
  double kappa = 0.0;                // client-vs-global gradient gap in force
  double sigma0_sq = 0.0;            // filter concentration threshold
  double alpha = 1.0;                // 1 - assumed bad fraction handed to the filter
  std::set<std::size_t> corrupt;
  bool diverged = false;
  std::size_t diverged_at = 0;       // iteration at which the guard tripped
  std::size_t overloaded_rounds = 0;
  std::vector<LocalWindow> windows;
};

// Inverts a reported model into the accumulated gradient the server uses:
// an honest client's report is x_sync - eta * sum_t g_t, so this returns
// exactly sum_t g_t and the server step x - eta * ghat reproduces averaging.
inline ParamVector accumulate_report(const ParamVector& x_sync, const ParamVector& x_reported,
                                     double eta) {
  if (!(eta > 0.0)) throw std::invalid_argument("accumulate_report: eta must be > 0");
  return (x_sync - x_reported) * (1.0 / eta);
}

// K distinct client ids for one round. uniform_random draws without
// replacement from the round's stream; round_robin walks blocks of K ids in
// order ({round*K + j mod R}); all requires K == R.
inline std::vector<std::size_t> sample_clients(std::size_t R, std::size_t K,
                                               SamplingPolicy policy, std::size_t round,
                                               Rng& rng) {
  if (K > R) throw std::invalid_argument("sample_clients: K must be <= R");
  std::vector<std::size_t> out;
  switch (policy) {
    case SamplingPolicy::all_clients:
      if (K != R) throw std::invalid_argument("sample_clients: policy=all requires K == R");
      for (std::size_t r = 0; r < R; ++r) out.push_back(r);
      return out;
    case SamplingPolicy::round_robin:
      for (std::size_t j = 0; j < K; ++j) out.push_back((round * K + j) % R);
      break;
    case SamplingPolicy::uniform_random: {
      std::vector<std::size_t> ids(R);
      for (std::size_t r = 0; r < R; ++r) ids[r] = r;
      for (std::size_t i = 0; i < K; ++i) std::swap(ids[i], ids[i + rng.below(R - i)]);
      out.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(K));
      break;
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

// Builds the configured objective family with exactly R clients.
inline ObjectiveSuite build_suite(const ObjectiveSpec& spec, std::size_t R,
                                  std::uint64_t run_seed) {
  const std::uint64_t seed = spec.suite_seed != 0 ? spec.suite_seed : run_seed;
  switch (spec.kind) {
    case ObjectiveKind::strongly_convex_quadratic:
      return make_quadratic_suite(R, spec.d, spec.heterogeneity, spec.mu, spec.L, seed, spec.n_r,
                                  spec.point_spread, spec.center_scale);
    case ObjectiveKind::smooth_nonconvex:
      return make_nonconvex_suite(R, spec.d, spec.heterogeneity, spec.mu, spec.L, spec.beta, seed,
                                  spec.n_r, spec.point_spread, spec.center_scale);
    case ObjectiveKind::logistic:
      // point_spread doubles as the logistic feature-cloud scale; 0 keeps the
      // family's default of 1.
      return make_logistic_suite(R, spec.d, spec.heterogeneity, spec.lambda_reg, seed, spec.n_r,
                                 spec.point_spread > 0.0 ? spec.point_spread : 1.0);
  }
  throw std::invalid_argument("build_suite: unknown objective kind");
}

namespace detail {

// sigma and kappa that feed the concentration threshold. The quadratic
// families carry them exactly by construction; logistic falls back to probing
// (exact per-point enumeration at each probe, max over probes).
inline void resolve_noise_bounds(const ObjectiveSuite& suite, const ExperimentConfig& cfg,
                                 double* sigma, double* kappa) {
  if (suite.kind == ObjectiveKind::logistic) {
    std::vector<ParamVector> probes;
    probes.emplace_back(suite.dim(), cfg.x0);
    Rng prng = Rng::derive(cfg.seed, {kTagProbe});
    for (int p = 0; p < 4; ++p) {
      ParamVector x(suite.dim());
      for (std::size_t j = 0; j < suite.dim(); ++j) x[j] = prng.normal();
      probes.push_back(std::move(x));
    }
    HeterogeneityReport rep = estimate_sigma_kappa(suite, probes, cfg.full_batch ? 1 : cfg.b);
    *sigma = rep.sigma_hat;
    *kappa = rep.kappa_hat;
    return;
  }
  *sigma = cfg.objective.point_spread;
  *kappa = suite.R() >= 2 ? cfg.objective.heterogeneity : 0.0;
}

inline MetricsRow make_row(const ObjectiveSuite& suite, std::size_t t, const ParamVector& x,
                           bool sync) {
  MetricsRow row;
  row.t = t;
  row.sync_flag = sync;
  if (suite.global_min) row.dist_sq = norm_sq(x - *suite.global_min);
  row.grad_norm_sq = norm_sq(global_gradient(suite, x));
  row.loss = global_loss(suite, x);
  return row;
}

}  // namespace detail

inline RunResult run(const ExperimentConfig& config, bool record_locals = false) {
  ExperimentConfig cfg = config;
  cfg.validate();
  cfg.attack.corrupt_fraction = cfg.eps;  // the config-level eps is canonical

  RunResult result;
  result.suite = build_suite(cfg.objective, cfg.R, cfg.seed);
  const std::size_t d = result.suite.dim();
  detail::resolve_noise_bounds(result.suite, cfg, &result.sigma, &result.kappa);

  const double L = result.suite.L;
  result.eta = cfg.eta > 0.0
                   ? cfg.eta
                   : (cfg.full_batch ? 1.0 / (5.0 * static_cast<double>(cfg.H) * L)
                                     : 1.0 / (8.0 * static_cast<double>(cfg.H) * L));
  result.sigma0_sq =
      cfg.full_batch
          ? sigma0_gd(cfg.H, result.kappa)
          : sigma0_sgd(cfg.H, result.sigma, cfg.b, cfg.eps_prime, d, cfg.K, result.kappa);
  // The filter is told to tolerate the corrupt fraction plus the
  // concentration-failure budget, capped at its design limit of 1/4.
  result.alpha = 1.0 - std::min(0.25, cfg.eps + cfg.eps_prime);
  result.corrupt = select_corrupt(cfg.R, cfg.eps, cfg.seed);

  RageConfig rcfg;
  rcfg.sigma0_sq = result.sigma0_sq;
  rcfg.alpha = result.alpha;
  rcfg.score_multiplier = cfg.score_multiplier;

  ParamVector x(d, cfg.x0);
  result.rows.push_back(detail::make_row(result.suite, 0, x, true));
  result.x_trace.push_back(x);

  const std::size_t n_rounds = cfg.T / cfg.H;
  for (std::size_t k = 0; k < n_rounds; ++k) {
    Rng sample_rng = Rng::derive(cfg.seed, {kTagSample, k});
    const std::vector<std::size_t> sampled =
        sample_clients(cfg.R, cfg.K, cfg.sampling, k, sample_rng);

    std::size_t corrupt_in_sample = 0;
    for (std::size_t r : sampled) corrupt_in_sample += result.corrupt.count(r);
    const bool overloaded = 4 * corrupt_in_sample > cfg.K;
    if (overloaded) ++result.overloaded_rounds;

    // Local phase: every sampled client starts from the broadcast model and
    // runs H steps on its own stream (corrupt clients simulate honestly).
    std::vector<ParamVector> local(sampled.size(), x);
    std::vector<Rng> streams;
    streams.reserve(sampled.size());
    for (std::size_t r : sampled) streams.push_back(Rng::derive(cfg.seed, {kTagClient, k, r}));

    LocalWindow window;
    if (record_locals) {
      window.round = k;
      window.sampled = sampled;
      window.traj.assign(sampled.size(), {x});
    }

    for (std::size_t h = 1; h <= cfg.H; ++h) {
      for (std::size_t i = 0; i < sampled.size(); ++i) {
        const ClientDataset& client = result.suite.clients[sampled[i]];
        ParamVector g = cfg.full_batch ? full_gradient(client, local[i])
                                       : minibatch_gradient(client, local[i], cfg.b, streams[i]);
        axpy(-result.eta, g, local[i]);
        if (record_locals) window.traj[i].push_back(local[i]);
      }
      if (h < cfg.H) {
        const std::size_t t = k * cfg.H + h;
        ParamVector xbar = mean(local);
        MetricsRow row = detail::make_row(result.suite, t, xbar, false);
        row.sample_overloaded = overloaded;
        result.rows.push_back(std::move(row));
        result.x_trace.push_back(std::move(xbar));
      }
    }

    // Report phase: corruption applies to what is transmitted, never to the
    // local state above.
    std::map<std::size_t, ParamVector> reports;
    for (std::size_t i = 0; i < sampled.size(); ++i) reports.emplace(sampled[i], local[i]);
    std::set<std::size_t> corrupt_now;
    for (std::size_t r : sampled)
      if (result.corrupt.count(r)) corrupt_now.insert(r);
    Rng attack_rng = Rng::derive(cfg.seed, {kTagAttack, k});
    reports = corrupt_reports(reports, corrupt_now, cfg.attack, x, attack_rng);

    std::vector<ParamVector> accu;
    accu.reserve(sampled.size());
    for (std::size_t r : sampled) accu.push_back(accumulate_report(x, reports.at(r), result.eta));

    ParamVector ghat(d, 0.0);
    std::size_t removed = 0, filter_rounds = 0;
    if (cfg.K == 1) {
      ghat = accu[0];  // nothing to filter against
    } else {
      RageReport rep = rage_filter(accu, rcfg);
      ghat = rep.estimate;
      removed = cfg.K - rep.active_set.size();
      filter_rounds = rep.rounds;
    }
    axpy(-result.eta, ghat, x);

    if (record_locals) {
      for (std::size_t r : sampled) window.reports.push_back(reports.at(r));
      window.accu = accu;
      result.windows.push_back(std::move(window));
    }

    const std::size_t t_sync = (k + 1) * cfg.H;
    if (!all_finite(x) || norm(x) > 1e12) {
      result.diverged = true;
      result.diverged_at = t_sync;
      break;
    }
    MetricsRow row = detail::make_row(result.suite, t_sync, x, true);
    row.rage_removed = removed;
    row.rage_rounds = filter_rounds;
    row.sample_overloaded = overloaded;
    result.rows.push_back(std::move(row));
    result.x_trace.push_back(x);
  }
  return result;
}

}  // namespace byzsim
