#include <doctest.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <random>

#include "rater/error.hpp"
#include "rater/optimize.hpp"
#include "support.hpp"

using namespace rater;

namespace {

ModelSpec flat_spec(int k, int raters) {
  PriorOverrides flat;
  flat.alpha = std::vector<double>(k, 1.0);
  flat.beta = std::vector<double>(static_cast<std::size_t>(k) * k, 1.0);
  return resolve_spec(Variant::dawid_skene, k, raters, flat);
}

// (pi_1, theta_j11, theta_j22 for two raters) -> log likelihood by enumeration.
double grid_loglik(const std::array<double, 5>& x, const LongRatings& l) {
  std::vector<double> pi{x[0], 1 - x[0]};
  std::vector<double> theta{x[1], 1 - x[1], 1 - x[2], x[2], x[3], 1 - x[3], 1 - x[4], x[4]};
  return std::log(support::enumerate_likelihood(pi, theta, l));
}

// Exhaustive search on a 0.05 lattice, then a 0.01 lattice within 0.05 of
// the best coarse point.
std::pair<double, std::array<double, 5>> grid_search(const LongRatings& l) {
  double best = -INFINITY;
  std::array<double, 5> arg{};
  auto scan = [&](std::array<double, 5> lo, double step, int n) {
    std::array<int, 5> idx{};
    for (;;) {
      std::array<double, 5> x;
      for (int d = 0; d < 5; ++d) x[d] = std::clamp(lo[d] + step * idx[d], 0.0, 1.0);
      double v = grid_loglik(x, l);
      if (v > best) {
        best = v;
        arg = x;
      }
      int pos = 0;
      while (pos < 5 && ++idx[pos] == n) idx[pos++] = 0;
      if (pos == 5) break;
    }
  };
  scan({0, 0, 0, 0, 0}, 0.05, 21);
  auto centre = arg;
  std::array<double, 5> lo;
  for (int d = 0; d < 5; ++d) lo[d] = centre[d] - 0.05;
  scan(lo, 0.01, 11);
  return {best, arg};
}

}  // namespace

TEST_CASE("EM reaches the grid-search maximum on a tiny problem") {
  auto d = parse_long("item,rater,rating\n1,1,1\n1,2,1\n2,1,2\n2,2,2\n3,1,1\n3,2,2\n");
  auto spec = flat_spec(2, 2);
  auto [grid_best, grid_arg] = grid_search(*d.as_long());
  for (auto s : {InitStrategy::uniform_diagonal, InitStrategy::majority_vote}) {
    auto fit = em_fit(spec, d, init_params(spec, d, s), 1e-12, 5000);
    // Flat prior: the log posterior is the log likelihood.
    CHECK(fit.log_posterior == doctest::Approx(log_likelihood_long(fit.params, d)).epsilon(1e-12));
    CHECK(fit.log_posterior >= grid_best - 1e-6);
    CHECK(fit.log_posterior - grid_best <= 0.02);
  }
}

TEST_CASE("EM monotone on anesthesia") {
  auto d = parse_long(read_file(support::data_path("anesthesia.csv")));
  auto spec = resolve_spec(Variant::dawid_skene, 4, 5);
  auto init = init_params(spec, d, InitStrategy::uniform_diagonal);
  auto fit = em_fit(spec, d, init, 1e-300, 500);
  for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1] - 1e-8);

  auto short_run = em_fit(spec, d, init, 1e-300, 3);
  CHECK(short_run.trace.size() == 4u);
  CHECK_FALSE(short_run.converged);
  CHECK_FALSE(short_run.warnings.empty());
}

TEST_CASE("EM monotone on random data, both EM variants") {
  std::mt19937_64 rng(123);
  for (int rep = 0; rep < 20; ++rep) {
    int k = 2 + rep % 3, raters = 1 + rep % 4;
    auto d = support::random_long(rng, 15 + rep, raters, k, 0.8, 1 + rep % 2);
    for (auto v : {Variant::dawid_skene, Variant::class_conditional}) {
      auto spec = resolve_spec(v, k, raters);
      auto fit = em_fit(spec, d, init_params(spec, d, InitStrategy::jittered, rep), 1e-10, 500);
      for (std::size_t i = 1; i < fit.trace.size(); ++i) CHECK(fit.trace[i] >= fit.trace[i - 1] - 1e-8);
      if (fit.converged) CHECK(std::abs(fit.trace.back() - fit.trace[fit.trace.size() - 2]) < 1e-10);
    }
  }
}

TEST_CASE("responsibilities are normalised") {
  std::mt19937_64 rng(5);
  auto d = support::random_long(rng, 30, 3, 4, 0.6);
  auto table = make_rating_table(d);
  auto r = responsibilities(support::random_ds(rng, 3, 4), table);
  for (int u = 0; u < table.units(); ++u) {
    double s = 0;
    for (int k = 0; k < 4; ++k) s += r[u * 4 + k];
    CHECK(std::abs(s - 1) < 1e-12);
  }
}

TEST_CASE("unanimous class-1 data") {
  ParseOptions o;
  o.categories = 2;
  std::string csv = "item,rater,rating\n";
  for (int i = 1; i <= 20; ++i)
    for (int j = 1; j <= 3; ++j) csv += std::to_string(i) + "," + std::to_string(j) + ",1\n";
  auto d = parse_long(csv, o);
  auto spec = resolve_spec(Variant::dawid_skene, 2, 3);
  auto fit = em_fit(spec, d, init_params(spec, d, InitStrategy::uniform_diagonal));
  REQUIRE(fit.converged);
  const auto& p = std::get<DsParams>(fit.params);
  CHECK(p.pi[0] > 0.5);
  for (int j = 0; j < 3; ++j) CHECK(p.theta[j * 4 + 0] > p.theta[j * 4 + 1]);
  // At the fixed point pi is the Dirichlet(3, 3) mode after adding the
  // expected class counts.
  auto r = responsibilities(fit.params, make_rating_table(d));
  double mass = 0;
  for (int i = 0; i < 20; ++i) mass += r[i * 2];
  CHECK(p.pi[0] == doctest::Approx((2 + mass) / 24.0).epsilon(1e-6));
}

TEST_CASE("initial values") {
  auto d = parse_long(support::kTable1Long);
  auto spec2 = resolve_spec(Variant::dawid_skene, 2, 1);
  auto d2 = parse_long("item,rater,rating\n1,1,1\n2,1,2\n");
  auto u = std::get<DsParams>(init_params(spec2, d2, InitStrategy::uniform_diagonal));
  CHECK(u.pi == std::vector<double>{0.5, 0.5});
  for (int i = 0; i < 4; ++i) CHECK(u.theta[i] == doctest::Approx(i == 0 || i == 3 ? 0.7 : 0.3));

  auto table = make_rating_table(d);
  auto mv = majority_vote_responsibilities(table);
  CHECK(mv[1 * 4 + 1] == 1.0);
  CHECK(mv[2 * 4 + 1] == 1.0);
  CHECK(mv[0 * 4 + 2] == 0.5);
  CHECK(mv[0 * 4 + 3] == 0.5);

  auto spec = resolve_spec(Variant::dawid_skene, 4, 2);
  auto a = flatten(init_params(spec, d, InitStrategy::jittered, 42));
  auto b = flatten(init_params(spec, d, InitStrategy::jittered, 42));
  auto c = flatten(init_params(spec, d, InitStrategy::jittered, 43));
  CHECK(a == b);
  CHECK(a != c);
  CHECK_NOTHROW(validate(init_params(spec, d, InitStrategy::majority_vote)));
  CHECK(parse_init_strategy("from-majority-vote") == InitStrategy::majority_vote);
  CHECK_THROWS_AS(parse_init_strategy("random"), ArgumentError);
}

// Tolerance scales with the binomial standard error of each estimate, so the
// check holds for any seed rather than a lucky one.
TEST_CASE("EM recovers simulated parameters within four standard errors") {
  const std::vector<double> pi{0.5, 0.3, 0.2};
  const int items = 500, raters = 5;
  for (std::uint64_t seed : {2020u, 7u, 99u}) {
    std::mt19937_64 rng(seed);
    auto d = support::simulate_long(rng, items, raters, pi, support::diagonal_theta(raters, 3, 0.8));
    auto spec = resolve_spec(Variant::dawid_skene, 3, raters);
    auto fit = em_fit(spec, d, init_params(spec, d, InitStrategy::majority_vote));
    CHECK(fit.converged);
    const auto& p = std::get<DsParams>(fit.params);
    double total_error = 0;
    for (int k = 0; k < 3; ++k) {
      CHECK(std::abs(p.pi[k] - pi[k]) < 4 * std::sqrt(pi[k] * (1 - pi[k]) / items));
      const double se = std::sqrt(0.8 * 0.2 / (items * pi[k]));
      for (int j = 0; j < raters; ++j) {
        const double diag = p.theta[(j * 3 + k) * 3 + k];
        CHECK(std::abs(diag - 0.8) < 4 * se);
        total_error += std::abs(diag - 0.8);
      }
    }
    CHECK(total_error / (3 * raters) < 0.05);
  }
}

TEST_CASE("quasi-Newton agrees with EM on an interior mode") {
  std::mt19937_64 rng(8);
  auto d = support::simulate_long(rng, 200, 3, {0.6, 0.4}, support::diagonal_theta(3, 2, 0.8));
  auto spec = flat_spec(2, 3);
  auto init = init_params(spec, d, InitStrategy::majority_vote);
  auto em = em_fit(spec, d, init, 1e-13, 10000);
  auto qn = gradient_map_fit(spec, d, init, 1e-9, 2000);
  CHECK(std::abs(qn.log_posterior - em.log_posterior) < 1e-8);
  CHECK(qn.converged);
  auto a = flatten(em.params), b = flatten(qn.params);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) < 1e-3);
}

TEST_CASE("quasi-Newton on a concave quadratic") {
  const std::vector<double> target{1.5, -2.0, 0.25, 4.0};
  Objective f = [&](std::span<const double> x, std::span<double> g) {
    double v = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double w = 1.0 + i;
      v -= 0.5 * w * (x[i] - target[i]) * (x[i] - target[i]);
      g[i] = -w * (x[i] - target[i]);
    }
    return v;
  };
  auto r = maximize_lbfgs(f, std::vector<double>(4, 0.0), 1e-12, 200);
  CHECK(r.converged);
  for (std::size_t i = 0; i < 4; ++i) CHECK(std::abs(r.x[i] - target[i]) < 1e-8);
}

TEST_CASE("hierarchical MAP on anesthesia stays finite") {
  auto d = parse_long(read_file(support::data_path("anesthesia.csv")));
  auto spec = resolve_spec(Variant::hierarchical, 4, 5);
  auto fit = gradient_map_fit(spec, d, init_params(spec, d, InitStrategy::majority_vote), 1e-6, 1000);
  CHECK(std::isfinite(fit.log_posterior));
  const auto& h = std::get<HdsParams>(fit.params);
  for (double s : h.sigma) CHECK(s > 0);
  for (double v : flatten(fit.params)) CHECK(std::isfinite(v));
}

TEST_CASE("EM argument checks") {
  auto d = parse_long(support::kTable1Long);
  auto spec = resolve_spec(Variant::dawid_skene, 4, 2);
  auto init = init_params(spec, d, InitStrategy::uniform_diagonal);
  CHECK_THROWS_AS(em_fit(spec, d, init, 0.0), ArgumentError);
  CHECK_THROWS_AS(em_fit(spec, d, init, 1e-8, 0), ArgumentError);
  auto hs = resolve_spec(Variant::hierarchical, 4, 2);
  CHECK_THROWS_AS(em_fit(hs, d, init_params(hs, d, InitStrategy::uniform_diagonal)), UnsupportedError);
}

TEST_CASE("K=5 default prior warns for optimisation") {
  std::mt19937_64 rng(3);
  auto d = support::simulate_long(rng, 60, 3, std::vector<double>(5, 0.2), support::diagonal_theta(3, 5, 0.7));
  auto spec = resolve_spec(Variant::dawid_skene, 5, 3);
  auto fit = em_fit(spec, d, init_params(spec, d, InitStrategy::majority_vote));
  CHECK(std::isfinite(fit.log_posterior));
  CHECK(check_offdiagonal_beta(spec, Method::optim).size() == 1);
}
