#include <doctest.h>

#include <cmath>
#include <random>

#include "rater/error.hpp"
#include "rater/mcmc.hpp"
#include "support.hpp"

using namespace rater;

namespace {

std::vector<std::vector<double>> normal_chains(std::mt19937_64& rng, int chains, int n, double offset_step = 0) {
  std::normal_distribution<double> z(0, 1);
  std::vector<std::vector<double>> out(chains);
  for (int c = 0; c < chains; ++c)
    for (int i = 0; i < n; ++i) out[c].push_back(z(rng) + offset_step * c);
  return out;
}

SamplerConfig quick(std::uint64_t seed = 1) {
  SamplerConfig c;
  c.seed = seed;
  c.parallel = false;
  return c;
}

}  // namespace

TEST_CASE("split R-hat") {
  std::mt19937_64 rng(1);
  auto same = normal_chains(rng, 1, 20000);
  std::vector<std::vector<double>> two{{same[0].begin(), same[0].begin() + 10000},
                                       {same[0].begin() + 10000, same[0].end()}};
  auto r = split_rhat(two);
  CHECK_FALSE(r.degenerate);
  CHECK(r.value < 1.01);
  CHECK(r.value >= 1.0);

  CHECK(split_rhat(normal_chains(rng, 2, 1000, 10.0)).value > 2.0);

  auto flat = split_rhat({{0.3, 0.3, 0.3, 0.3}, {0.3, 0.3, 0.3, 0.3}});
  CHECK(flat.degenerate);
  CHECK(std::isinf(flat.value));

  CHECK_THROWS_AS(split_rhat({{1, 2, 3}}), ArgumentError);
  CHECK_THROWS_AS(split_rhat({{1, 2, 3, 4}, {1, 2, 3, 4, 5}}), ShapeError);
}

TEST_CASE("effective sample size") {
  std::mt19937_64 rng(2);
  auto independent = normal_chains(rng, 4, 4000);
  auto e = effective_sample_size(independent);
  CHECK(e.value >= 8000);
  CHECK(e.value <= 16000);

  // AR(1) with coefficient 0.999: roughly 2 effective draws per 4000.
  std::normal_distribution<double> z(0, 1);
  std::vector<std::vector<double>> sticky(4);
  for (auto& c : sticky) {
    double x = z(rng);
    for (int i = 0; i < 1000; ++i) c.push_back(x = 0.999 * x + std::sqrt(1 - 0.999 * 0.999) * z(rng));
  }
  CHECK(effective_sample_size(sticky).value <= 10);

  // Alternating draws are anticorrelated; the estimate is capped at the total.
  std::vector<std::vector<double>> alt(2);
  for (auto& c : alt)
    for (int i = 0; i < 100; ++i) c.push_back(i % 2 ? 1.0 + 0.01 * z(rng) : -1.0 + 0.01 * z(rng));
  CHECK(effective_sample_size(alt).value <= 200);

  CHECK(effective_sample_size({{2, 2, 2, 2}}).degenerate);
}

TEST_CASE("chain streams are distinct and reproducible") {
  auto a = chain_rng(1, 0), b = chain_rng(1, 0), c = chain_rng(1, 1), d = chain_rng(2, 0);
  const auto first = a();
  CHECK(first == b());
  CHECK(first != c());
  CHECK(first != d());
}

TEST_CASE("sampler reproduces a standard normal target") {
  const std::size_t dim = 5;
  LogDensity target = [](std::span<const double> x, std::span<double> g) {
    double v = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      v -= 0.5 * x[i] * x[i];
      g[i] = -x[i];
    }
    return v;
  };
  auto cfg = quick(3);
  auto out = sample_density(target, dim, cfg);
  REQUIRE(out.size() == 4u);
  for (std::size_t d = 0; d < dim; ++d) {
    std::vector<std::vector<double>> chains;
    for (const auto& o : out) {
      std::vector<double> col;
      for (int s = 0; s < cfg.draws; ++s) col.push_back(o.draws[s * dim + d]);
      chains.push_back(col);
    }
    auto [mean, mean_se] = support::batch_mean_and_se(chains, [](double x) { return x; });
    auto [var, var_se] = support::batch_mean_and_se(chains, [](double x) { return x * x; });
    CHECK(std::abs(mean) < 3 * mean_se);
    CHECK(std::abs(var - 1) < 3 * var_se);
  }
  for (const auto& o : out) {
    CHECK(o.stats.divergences == 0);
    CHECK(std::abs(o.stats.mean_accept - cfg.target_accept) < 0.1);
  }
}

TEST_CASE("sampler config validation") {
  SamplerConfig c;
  CHECK_NOTHROW(c.validate());
  c.chains = 0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.target_accept = 1.0;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
  c = {};
  c.draws = -1;
  CHECK_THROWS_AS(c.validate(), ArgumentError);
}

TEST_CASE("anesthesia sampling: determinism, validity, acceptance, ESS") {
  auto d = parse_long(read_file(support::data_path("anesthesia.csv")));
  auto spec = resolve_spec(Variant::dawid_skene, 4, 5);
  auto cfg = quick(1);
  auto a = sample(spec, d, cfg);
  cfg.parallel = true;
  auto b = sample(spec, d, cfg);
  CHECK(a.draws.chains == b.draws.chains);
  CHECK(a.draws.total_draws() == 4000u);

  for (std::size_t c = 0; c < a.draws.chains.size(); ++c)
    for (int s = 0; s < a.draws.draws_per_chain; ++s)
      CHECK_NOTHROW(validate(unflatten(a.draws.row(c, s), Parameterization::dawid_skene, 5, 4)));

  CHECK(std::abs(a.diagnostics.mean_accept - 0.8) < 0.1);
  for (int k = 0; k < 4; ++k) {
    const auto& p = a.diagnostics.parameters[k];
    CHECK(p.name == "pi[" + std::to_string(k + 1) + "]");
    CHECK(p.ess.value > 1000);
    CHECK(p.rhat.value < 1.01);
  }
  CHECK(a.diagnostics.warnings.empty());
}

TEST_CASE("class-conditional and hierarchical draws stay valid") {
  std::mt19937_64 rng(4);
  auto d = support::simulate_long(rng, 60, 3, {0.5, 0.3, 0.2}, support::diagonal_theta(3, 3, 0.8));
  auto cfg = quick(5);
  cfg.warmup = 300;
  cfg.draws = 200;
  cfg.chains = 2;
  for (auto v : {Variant::class_conditional, Variant::hierarchical}) {
    auto spec = resolve_spec(v, 3, 3);
    auto r = sample(spec, d, cfg);
    for (std::size_t c = 0; c < r.draws.chains.size(); ++c)
      for (int s = 0; s < r.draws.draws_per_chain; ++s)
        CHECK_NOTHROW(validate(unflatten(r.draws.row(c, s), parameterization_of(v), 3, 3)));
    for (const auto& p : r.diagnostics.parameters) CHECK(std::isfinite(p.rhat.value));
  }
}

TEST_CASE("pinned classes give conjugate Dirichlet posteriors") {
  const std::vector<int> counts{20, 12, 8};
  const int raters = 6;
  auto d = support::unanimous_long(counts, raters);
  auto spec = resolve_spec(Variant::dawid_skene, 3, raters);
  auto r = sample(spec, d, quick(1));
  const double alpha_total = 9 + 40;
  for (int k = 0; k < 3; ++k) {
    auto [mean_z, var_z] = support::dirichlet_moment_errors(r.draws.columns(k), 3.0 + counts[k], alpha_total);
    CHECK(mean_z < 3);
    CHECK(var_z < 3);
  }
  // Rater 1's diagonal: Beta(beta_kk + n_k, N + n_k - beta_kk - n_k).
  const auto beta = default_beta(3, 8, 0.6);
  for (int k = 0; k < 3; ++k) {
    const auto idx = r.draws.index_of("theta[1," + std::to_string(k + 1) + "," + std::to_string(k + 1) + "]");
    auto [mean_z, var_z] = support::dirichlet_moment_errors(r.draws.columns(idx), beta[k * 3 + k] + counts[k], 8.0 + counts[k]);
    CHECK(mean_z < 3);
    CHECK(var_z < 3);
  }
}
