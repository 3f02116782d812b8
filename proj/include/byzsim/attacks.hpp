#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <vector>

#include "byzsim/linalg.hpp"
#include "byzsim/rng.hpp"

namespace byzsim {

enum class AttackKind {
  none,
  erasure_zero,
  sign_flip,
  gaussian_blowup,
  colluding_shift,
  top_eigen_drift,
};

// Byzantine client strategy applied to reported models at synchronization
// time. Corrupt clients first simulate honestly; only their *reports* are
// replaced, so the attack surface is exactly what travels over the wire.
struct AttackSpec {
  AttackKind kind = AttackKind::none;
  double scale = 1.0;            // sign_flip, gaussian_blowup
  double magnitude = 0.0;        // colluding_shift, top_eigen_drift
  double corrupt_fraction = 0.0; // fraction of ALL clients that are corrupt

  void validate() const {
    if (!(corrupt_fraction >= 0.0) || corrupt_fraction >= 1.0)
      throw std::invalid_argument("AttackSpec: corrupt_fraction must lie in [0, 1)");
    if (!std::isfinite(scale) || !std::isfinite(magnitude))
      throw std::invalid_argument("AttackSpec: scale/magnitude must be finite");
  }
};

// Chooses the static corrupt set: floor(fraction * n_clients) distinct client
// ids, fixed for the whole run. The tiny relative nudge repairs products like
// 0.05 * 40 that land one ulp below an integer.
inline std::set<std::size_t> select_corrupt(std::size_t n_clients, double corrupt_fraction,
                                            std::uint64_t rng_seed) {
  if (!(corrupt_fraction >= 0.0) || corrupt_fraction >= 1.0)
    throw std::invalid_argument("select_corrupt: fraction must lie in [0, 1)");
  const double raw = corrupt_fraction * static_cast<double>(n_clients);
  const auto n_corrupt =
      static_cast<std::size_t>(std::floor(raw * (1.0 + 4.0 * std::numeric_limits<double>::epsilon())));
  std::vector<std::size_t> ids(n_clients);
  std::iota(ids.begin(), ids.end(), std::size_t{0});
  Rng rng = Rng::derive(rng_seed, {kTagCorrupt});
  for (std::size_t i = 0; i < n_corrupt; ++i) {
    const std::size_t j = i + rng.below(n_clients - i);
    std::swap(ids[i], ids[j]);
  }
  return std::set<std::size_t>(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_corrupt));
}

namespace detail {

// Normalizes v and flips its sign so the first nonzero coordinate is
// positive; gives collusion directions a stable orientation (+1 in 1-d).
inline ParamVector canonical_unit(ParamVector v) {
  const double n = norm(v);
  if (!(n > 0.0)) throw std::runtime_error("canonical_unit: zero direction");
  v *= 1.0 / n;
  for (std::size_t j = 0; j < v.dim(); ++j) {
    if (v[j] != 0.0) {
      if (v[j] < 0.0) v *= -1.0;
      break;
    }
  }
  return v;
}

inline ParamVector random_unit(std::size_t dim, Rng& rng) {
  ParamVector u(dim, 0.0);
  double n = 0.0;
  while (!(n > 0.0)) {
    for (std::size_t j = 0; j < dim; ++j) u[j] = rng.normal();
    n = norm(u);
  }
  return canonical_unit(std::move(u));
}

}  // namespace detail

// Applies the configured attack to a round's reports. Honest entries pass
// through without modification; corrupt entries are rewritten per `kind`.
// `x_sync` is the model the server broadcast at this synchronization index
// and anchors the reflection / blowup attacks. When a statistic of the
// honest sample is required but the sample contains no honest client, the
// broadcast model (and a random direction) stand in.
inline std::map<std::size_t, ParamVector> corrupt_reports(
    const std::map<std::size_t, ParamVector>& honest_models, const std::set<std::size_t>& corrupt,
    const AttackSpec& spec, const ParamVector& x_sync, Rng& round_rng) {
  spec.validate();
  for (std::size_t id : corrupt)
    if (!honest_models.count(id))
      throw std::invalid_argument("corrupt_reports: corrupt id outside the sampled set");

  std::map<std::size_t, ParamVector> out = honest_models;
  if (spec.kind == AttackKind::none || corrupt.empty()) return out;
  const std::size_t d = x_sync.dim();

  std::vector<ParamVector> honest_pts;
  for (const auto& [id, x] : honest_models)
    if (!corrupt.count(id)) honest_pts.push_back(x);

  switch (spec.kind) {
    case AttackKind::none:
      break;
    case AttackKind::erasure_zero:
      for (std::size_t id : corrupt) out.at(id) = ParamVector(d, 0.0);
      break;
    case AttackKind::sign_flip:
      // Reflect the honestly computed model through the broadcast anchor,
      // reversing (and rescaling) the update the client would have reported.
      for (std::size_t id : corrupt) {
        ParamVector delta = honest_models.at(id) - x_sync;
        out.at(id) = x_sync - spec.scale * delta;
      }
      break;
    case AttackKind::gaussian_blowup:
      // Independent per-client noise around the anchor, drawn in ascending
      // client order so runs are reproducible.
      for (std::size_t id : corrupt) {
        ParamVector g(d, 0.0);
        for (std::size_t j = 0; j < d; ++j) g[j] = round_rng.normal();
        out.at(id) = x_sync + spec.scale * g;
      }
      break;
    case AttackKind::colluding_shift: {
      const ParamVector u = detail::random_unit(d, round_rng);
      const ParamVector base = honest_pts.empty() ? x_sync : mean(honest_pts);
      ParamVector report = base + spec.magnitude * u;
      for (std::size_t id : corrupt) out.at(id) = report;
      break;
    }
    case AttackKind::top_eigen_drift: {
      // All colluders shift off the honest mean along the direction in which
      // the honest reports already vary the most, hiding inside the data's
      // own principal axis. Degenerate honest samples fall back to a random
      // direction (drawn first so RNG consumption does not depend on data).
      ParamVector dir = detail::random_unit(d, round_rng);
      if (honest_pts.size() >= 2) {
        const std::vector<double> w(honest_pts.size(), 1.0);
        EigenResult e = cov_lambda_max(honest_pts, w, mean(honest_pts));
        if (e.value > 0.0 && e.converged) dir = detail::canonical_unit(e.vector);
      }
      const ParamVector base = honest_pts.empty() ? x_sync : mean(honest_pts);
      ParamVector report = base + spec.magnitude * dir;
      for (std::size_t id : corrupt) out.at(id) = report;
      break;
    }
  }
  return out;
}

}  // namespace byzsim
