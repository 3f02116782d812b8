#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>
#include <vector>

#include "byzsim/objectives.hpp"
#include "oracles.hpp"

using byzsim::ClientDataset;
using byzsim::ObjectiveKind;
using byzsim::ObjectiveSuite;
using byzsim::ParamVector;
using byzsim::Rng;
using Catch::Approx;

namespace {

ParamVector pv(std::vector<double> v) { return ParamVector(std::move(v)); }

// 1-d quadratic client with unit curvature and the given anchors.
ClientDataset quad_client_1d(std::vector<double> anchors) {
  ClientDataset c;
  c.kind = ObjectiveKind::strongly_convex_quadratic;
  c.q = {1.0};
  for (double a : anchors) c.anchors.push_back(pv({a}));
  return c;
}

// Central-difference gradient of the per-point loss; oracle for closed forms.
ParamVector fd_point_gradient(const ClientDataset& c, std::size_t i, const ParamVector& x) {
  const double h = 1e-6;
  ParamVector g(x.dim());
  for (std::size_t j = 0; j < x.dim(); ++j) {
    ParamVector lo = x, hi = x;
    hi[j] += h;
    lo[j] -= h;
    g[j] = (c.point_loss(i, hi) - c.point_loss(i, lo)) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("full_gradient of a 1-d quadratic client") {
  ClientDataset c = quad_client_1d({0.0, 2.0});
  CHECK(byzsim::full_gradient(c, pv({1.0}))[0] == Approx(0.0).margin(1e-15));
  CHECK(byzsim::full_gradient(c, pv({3.0}))[0] == Approx(2.0));  // ((3-0)+(3-2))/2

  ClientDataset single = quad_client_1d({5.0});
  CHECK(byzsim::full_gradient(single, pv({2.0}))[0] ==
        single.point_gradient(0, pv({2.0}))[0]);
}

TEST_CASE("minibatch with b = n is exactly the full gradient") {
  ClientDataset c = quad_client_1d({0.0, 2.0, 4.0});
  Rng rng = Rng::derive(1, {1});
  ParamVector x = pv({1.0});
  ParamVector g = byzsim::minibatch_gradient(c, x, 3, rng);
  CHECK(g[0] == Approx(byzsim::full_gradient(c, x)[0]).margin(1e-15));
}

TEST_CASE("minibatch values enumerate the possible batches and average to the full gradient") {
  // Anchors {0,2,4} at x = 1: per-point gradients {1,-1,-3}. The three
  // 2-subsets give means {0, -1, -2}; the batch {0,4} gives
  // mean(1-0, 1-4) = -1. Their uniform average is the full gradient -1.
  ClientDataset c = quad_client_1d({0.0, 2.0, 4.0});
  ParamVector x = pv({1.0});
  std::map<double, int> counts;
  Rng rng = Rng::derive(7, {2});
  const int draws = 3000;
  for (int k = 0; k < draws; ++k) counts[byzsim::minibatch_gradient(c, x, 2, rng)[0]]++;
  REQUIRE(counts.size() == 3);
  double value_mean = 0.0;
  for (auto& [v, n] : counts) {
    CHECK((v == Approx(0.0) || v == Approx(-1.0) || v == Approx(-2.0)));
    CHECK(n > draws / 3 - 250);  // roughly uniform over batches
    CHECK(n < draws / 3 + 250);
    value_mean += v;
  }
  CHECK(value_mean / 3.0 == Approx(byzsim::full_gradient(c, x)[0]));
}

TEST_CASE("minibatch gradient is unbiased") {
  ObjectiveSuite suite = byzsim::make_quadratic_suite(1, 3, 0.0, 1.0, 2.0, 99, 6, 1.5);
  const ClientDataset& c = suite.clients[0];
  ParamVector x = pv({0.3, -1.0, 2.0});
  ParamVector full = byzsim::full_gradient(c, x);
  Rng rng = Rng::derive(13, {4});
  const int draws = 20000;
  ParamVector sum(3, 0.0);
  double dev_sq = 0.0;
  for (int k = 0; k < draws; ++k) {
    ParamVector g = byzsim::minibatch_gradient(c, x, 2, rng);
    sum += g;
    dev_sq += byzsim::norm_sq(g - full);
  }
  sum *= 1.0 / draws;
  // 5 standard errors of the mean, per coordinate, using the empirical spread.
  const double se = std::sqrt(dev_sq / draws / draws);
  for (int j = 0; j < 3; ++j) CHECK(std::abs(sum[j] - full[j]) <= 5.0 * se + 1e-12);
}

TEST_CASE("minibatch variance matches exact enumeration and the sigma^2/b bound") {
  ClientDataset c = quad_client_1d({0.0, 1.0, 3.0, 6.0, 7.0, 10.0});
  ParamVector x = pv({2.0});
  const std::size_t n = 6, b = 2;
  ParamVector full = byzsim::full_gradient(c, x);

  // Oracle: enumerate all C(6,2) batches exactly.
  double exact_var = 0.0;
  auto subsets = oracle::combinations(n, b);
  for (const auto& s : subsets) {
    ParamVector g(1, 0.0);
    for (std::size_t i : s) g += c.point_gradient(i, x);
    g *= 1.0 / static_cast<double>(b);
    exact_var += byzsim::norm_sq(g - full);
  }
  exact_var /= static_cast<double>(subsets.size());

  // Per-point variance (sigma^2 for this client) and the weak bound sigma^2/b.
  double per_point = 0.0;
  for (std::size_t i = 0; i < n; ++i) per_point += byzsim::norm_sq(c.point_gradient(i, x) - full);
  per_point /= static_cast<double>(n);
  CHECK(exact_var <= per_point / b + 1e-12);
  // Exact finite-population identity: var_batch = (n-b)/(b(n-1)) * sigma^2.
  CHECK(exact_var == Approx(per_point * (n - b) / (b * (n - 1.0))).epsilon(1e-12));

  // Monte-Carlo agrees with the enumeration within 5 standard errors.
  Rng rng = Rng::derive(17, {5});
  const int draws = 20000;
  double mc = 0.0, mc_sq = 0.0;
  for (int k = 0; k < draws; ++k) {
    const double v = byzsim::norm_sq(byzsim::minibatch_gradient(c, x, b, rng) - full);
    mc += v;
    mc_sq += v * v;
  }
  mc /= draws;
  const double se = std::sqrt((mc_sq / draws - mc * mc) / draws);
  CHECK(std::abs(mc - exact_var) <= 5.0 * se);
}

TEST_CASE("global gradient averages clients") {
  ObjectiveSuite one = byzsim::make_quadratic_suite(1, 2, 0.0, 1.0, 3.0, 5);
  ParamVector x = pv({0.5, 0.5});
  ParamVector g1 = byzsim::global_gradient(one, x);
  ParamVector g2 = byzsim::full_gradient(one.clients[0], x);
  CHECK(byzsim::norm(g1 - g2) == Approx(0.0).margin(1e-15));

  // Two 1-d clients with minima at -1 and +1: global gradient 0 at x=0, 1 at x=1.
  ObjectiveSuite two;
  two.clients = {quad_client_1d({-1.0}), quad_client_1d({1.0})};
  two.mu = two.L = 1.0;
  CHECK(byzsim::global_gradient(two, pv({0.0}))[0] == Approx(0.0).margin(1e-15));
  CHECK(byzsim::global_gradient(two, pv({1.0}))[0] == Approx(1.0));
}

TEST_CASE("quadratic suite: exact kappa, sigma, and minimizer") {
  const double het = 0.8, spread = 1.3;
  ObjectiveSuite suite = byzsim::make_quadratic_suite(5, 3, het, 0.5, 2.0, 42, 6, spread);
  std::vector<ParamVector> probes{pv({0, 0, 0}), pv({1.0, -2.0, 0.5})};
  auto rep = byzsim::estimate_sigma_kappa(suite, probes, 2);
  CHECK(rep.kappa_hat == Approx(het).epsilon(1e-9));
  CHECK(rep.sigma_hat == Approx(spread).epsilon(1e-9));
  CHECK(rep.probe_count == 2);

  REQUIRE(suite.global_min.has_value());
  CHECK(byzsim::norm(byzsim::global_gradient(suite, *suite.global_min)) <= 1e-10);

  // Client-vs-global gradient gap is constant in x for shared-Hessian quadratics.
  for (const auto& c : suite.clients) {
    const double at0 = byzsim::norm(byzsim::full_gradient(c, probes[0]) -
                                    byzsim::global_gradient(suite, probes[0]));
    const double at1 = byzsim::norm(byzsim::full_gradient(c, probes[1]) -
                                    byzsim::global_gradient(suite, probes[1]));
    CHECK(at0 == Approx(at1).margin(1e-9));
  }
}

TEST_CASE("homogeneous quadratic suite has kappa = 0 and zero-spread has sigma = 0") {
  ObjectiveSuite flat = byzsim::make_quadratic_suite(4, 2, 0.0, 1.0, 2.0, 7, 4, 1.0);
  auto rep = byzsim::estimate_sigma_kappa(flat, {pv({0.1, 0.2})}, 1);
  CHECK(rep.kappa_hat == Approx(0.0).margin(1e-12));

  ObjectiveSuite tight = byzsim::make_quadratic_suite(4, 2, 1.0, 1.0, 2.0, 7, 4, 0.0);
  rep = byzsim::estimate_sigma_kappa(tight, {pv({0.1, 0.2})}, 1);
  CHECK(rep.sigma_hat == Approx(0.0).margin(1e-12));
}

TEST_CASE("hand-built two-client suite has kappa equal to the anchor separation") {
  // Clients with unit curvature and anchor means +-c: each client gradient is
  // x -+ c while the global gradient is x, so the gap is exactly c everywhere.
  const double c = 0.7;
  ObjectiveSuite suite;
  suite.clients = {quad_client_1d({c}), quad_client_1d({-c})};
  suite.mu = suite.L = 1.0;
  suite.global_min = pv({0.0});
  auto rep = byzsim::estimate_sigma_kappa(suite, {pv({0.0}), pv({9.0})}, 1);
  CHECK(rep.kappa_hat == Approx(c).margin(1e-12));
  CHECK(rep.sigma_hat == Approx(0.0).margin(1e-12));
}

TEST_CASE("smooth-gradient bound: ||grad F||^2 <= 2L (F - F*) at random points") {
  ObjectiveSuite suite = byzsim::make_quadratic_suite(3, 4, 1.0, 0.5, 3.0, 21, 5, 1.0);
  REQUIRE(suite.global_min.has_value());
  const double fstar = byzsim::global_loss(suite, *suite.global_min);
  Rng rng = Rng::derive(23, {6});
  for (int k = 0; k < 100; ++k) {
    ParamVector x(4);
    for (int j = 0; j < 4; ++j) x[j] = rng.uniform(-5.0, 5.0);
    const double lhs = byzsim::norm_sq(byzsim::global_gradient(suite, x));
    const double rhs = 2.0 * suite.L * (byzsim::global_loss(suite, x) - fstar);
    CHECK(lhs <= rhs * (1.0 + 1e-12) + 1e-12);
  }
}

TEST_CASE("nonconvex kind: gradients match finite differences, smoothness holds") {
  ObjectiveSuite suite = byzsim::make_nonconvex_suite(2, 3, 0.5, 1.0, 2.0, 0.4, 31, 3, 0.7);
  CHECK(suite.L == Approx(2.0 + 0.8));
  CHECK(suite.mu == 0.0);
  CHECK(!suite.global_min.has_value());
  Rng rng = Rng::derive(37, {7});
  const ClientDataset& c = suite.clients[1];
  for (int k = 0; k < 10; ++k) {
    ParamVector x(3);
    for (int j = 0; j < 3; ++j) x[j] = rng.uniform(-3.0, 3.0);
    ParamVector g = c.point_gradient(k % c.n(), x);
    ParamVector fd = fd_point_gradient(c, k % c.n(), x);
    CHECK(byzsim::norm(g - fd) <= 1e-6 * (1.0 + byzsim::norm(g)));
  }
  // Gradient Lipschitz bound with constant L over sampled pairs.
  for (int k = 0; k < 50; ++k) {
    ParamVector x(3), y(3);
    for (int j = 0; j < 3; ++j) {
      x[j] = rng.uniform(-3.0, 3.0);
      y[j] = rng.uniform(-3.0, 3.0);
    }
    const double num = byzsim::norm(byzsim::global_gradient(suite, x) -
                                    byzsim::global_gradient(suite, y));
    CHECK(num <= suite.L * byzsim::norm(x - y) * (1.0 + 1e-9));
  }
}

TEST_CASE("logistic kind: gradients match finite differences and mu = lambda_reg") {
  ObjectiveSuite suite = byzsim::make_logistic_suite(3, 4, 0.5, 0.2, 41, 6);
  CHECK(suite.mu == Approx(0.2));
  CHECK(suite.L > suite.mu);
  Rng rng = Rng::derive(43, {8});
  const ClientDataset& c = suite.clients[0];
  for (int k = 0; k < 10; ++k) {
    ParamVector x(4);
    for (int j = 0; j < 4; ++j) x[j] = rng.uniform(-2.0, 2.0);
    ParamVector g = c.point_gradient(k % c.n(), x);
    ParamVector fd = fd_point_gradient(c, k % c.n(), x);
    CHECK(byzsim::norm(g - fd) <= 1e-5 * (1.0 + byzsim::norm(g)));
  }
}

TEST_CASE("input validation") {
  ClientDataset c = quad_client_1d({0.0, 2.0});
  Rng rng = Rng::derive(1, {1});
  ParamVector x = pv({0.0});
  CHECK_THROWS_AS(byzsim::minibatch_gradient(c, x, 0, rng), std::invalid_argument);
  CHECK_THROWS_AS(byzsim::minibatch_gradient(c, x, 3, rng), std::invalid_argument);
  CHECK_THROWS_AS(byzsim::make_quadratic_suite(2, 2, 1.0, -1.0, 2.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(byzsim::make_quadratic_suite(2, 2, 1.0, 3.0, 2.0, 1), std::invalid_argument);
  ObjectiveSuite suite = byzsim::make_quadratic_suite(2, 2, 1.0, 1.0, 2.0, 1, 4);
  CHECK_THROWS_AS(byzsim::estimate_sigma_kappa(suite, {}, 1), std::invalid_argument);
  CHECK_THROWS_AS(byzsim::estimate_sigma_kappa(suite, {pv({0, 0})}, 9), std::invalid_argument);
}
