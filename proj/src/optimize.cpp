#include "rater/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <random>

#include "rater/error.hpp"

namespace rater {

namespace {

constexpr double kInitAccuracy = 0.7;

std::vector<double> diagonal_rows(int raters, int K) {
  std::vector<double> theta(static_cast<std::size_t>(raters) * K * K, (1.0 - kInitAccuracy) / (K - 1));
  for (int j = 0; j < raters; ++j)
    for (int k = 0; k < K; ++k) theta[(static_cast<std::size_t>(j) * K + k) * K + k] = kInitAccuracy;
  return theta;
}

Params from_theta(const ModelSpec& spec, std::vector<double> pi, const std::vector<double>& theta) {
  const int J = spec.raters;
  const int K = spec.categories;
  switch (parameterization_of(spec.variant)) {
    case Parameterization::dawid_skene: return DsParams{J, K, std::move(pi), theta};
    case Parameterization::class_conditional: {
      CcParams p{J, K, std::move(pi), {}};
      for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k) p.p.push_back(theta[(static_cast<std::size_t>(j) * K + k) * K + k]);
      return p;
    }
    case Parameterization::hierarchical: {
      const std::size_t kk2 = static_cast<std::size_t>(K) * K;
      HdsParams p{J, K, std::move(pi), std::vector<double>(kk2, 0.0), std::vector<double>(kk2, 1.0), {}};
      for (std::size_t r = 0; r < static_cast<std::size_t>(J) * K; ++r) {
        // Centre each gamma row so the softmax reproduces theta.
        double mean = 0.0;
        for (int k = 0; k < K; ++k) mean += std::log(theta[r * K + k]);
        mean /= K;
        for (int k = 0; k < K; ++k) p.gamma.push_back(std::log(theta[r * K + k]) - mean);
      }
      for (std::size_t c = 0; c < kk2; ++c) {
        double m = 0.0;
        for (int j = 0; j < J; ++j) m += p.gamma[j * kk2 + c];
        p.mu[c] = m / J;
      }
      return p;
    }
  }
  throw ShapeError("unknown parameterization");
}

// Closed-form M-step maximising the expected complete-data log posterior.
// Returns true when a numerator had to be clamped.
bool m_step(const ModelSpec& spec, const RatingTable& table, std::span<const double> resp, Params& params) {
  const int K = spec.categories;
  const int J = spec.raters;
  bool clamped = false;
  auto clamp = [&clamped](double x) {
    if (x < kEmClamp) {
      clamped = true;
      return kEmClamp;
    }
    return x;
  };
  auto normalise = [](std::span<double> x) {
    double s = std::accumulate(x.begin(), x.end(), 0.0);
    for (auto& v : x) v /= s;
  };

  std::vector<double> class_mass(K, 0.0);
  std::vector<double> counts(static_cast<std::size_t>(J) * K * K, 0.0);
  for (int u = 0; u < table.units(); ++u) {
    const double w = table.weight[u];
    const double* r = resp.data() + static_cast<std::size_t>(u) * K;
    for (int k = 0; k < K; ++k) class_mass[k] += w * r[k];
    for (std::size_t n = table.offsets[u]; n < table.offsets[u + 1]; ++n) {
      double* c = counts.data() + static_cast<std::size_t>(table.rater[n]) * K * K + table.rating[n];
      for (int k = 0; k < K; ++k) c[static_cast<std::size_t>(k) * K] += w * r[k];
    }
  }

  std::vector<double> pi(K);
  for (int k = 0; k < K; ++k) pi[k] = clamp(spec.alpha[k] - 1.0 + class_mass[k]);
  normalise(pi);

  if (auto* ds = std::get_if<DsParams>(&params)) {
    const auto& prior = std::get<DirichletPrior>(spec.error_prior);
    for (std::size_t i = 0; i < counts.size(); ++i) ds->theta[i] = clamp(prior.beta[i] - 1.0 + counts[i]);
    for (std::size_t r = 0; r < static_cast<std::size_t>(J) * K; ++r)
      normalise(std::span(ds->theta).subspan(r * K, K));
    ds->pi = std::move(pi);
  } else if (auto* cc = std::get_if<CcParams>(&params)) {
    const auto& prior = std::get<ClassConditionalPrior>(spec.error_prior);
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k) {
        const double* c = counts.data() + (static_cast<std::size_t>(j) * K + k) * K;
        double correct = c[k];
        double wrong = 0.0;
        for (int kk = 0; kk < K; ++kk)
          if (kk != k) wrong += c[kk];
        double a = clamp(prior.beta1[k] - 1.0 + correct);
        double b = clamp(prior.beta2[k] - 1.0 + wrong);
        cc->p[j * K + k] = a / (a + b);
      }
    cc->pi = std::move(pi);
  } else {
    throw UnsupportedError("EM is not available for the hierarchical model");
  }
  return clamped;
}

const char* kClampWarning =
    "M-step numerators fell below zero and were clamped to 1e-8; this happens when "
    "beta hyper-parameters are below 1";

}  // namespace

InitStrategy parse_init_strategy(std::string_view name) {
  if (name == "uniform-diagonal" || name == "uniform") return InitStrategy::uniform_diagonal;
  if (name == "jittered") return InitStrategy::jittered;
  if (name == "from-majority-vote" || name == "majority-vote") return InitStrategy::majority_vote;
  throw ArgumentError("unknown init strategy '" + std::string(name) + "'");
}

const char* init_strategy_name(InitStrategy s) {
  switch (s) {
    case InitStrategy::uniform_diagonal: return "uniform-diagonal";
    case InitStrategy::jittered: return "jittered";
    case InitStrategy::majority_vote: return "from-majority-vote";
  }
  return "?";
}

std::vector<double> majority_vote_responsibilities(const RatingTable& table) {
  const int K = table.categories;
  std::vector<double> out(static_cast<std::size_t>(table.units()) * K, 0.0);
  std::vector<int> votes(K);
  for (int u = 0; u < table.units(); ++u) {
    std::fill(votes.begin(), votes.end(), 0);
    for (std::size_t n = table.offsets[u]; n < table.offsets[u + 1]; ++n) ++votes[table.rating[n]];
    int best = *std::max_element(votes.begin(), votes.end());
    int ties = static_cast<int>(std::count(votes.begin(), votes.end(), best));
    for (int k = 0; k < K; ++k)
      if (votes[k] == best) out[static_cast<std::size_t>(u) * K + k] = 1.0 / ties;
  }
  return out;
}

std::vector<double> responsibilities(const Params& params, const RatingTable& table) {
  check_dims(params, table);
  const int K = table.categories;
  std::vector<double> log_pi(K);
  const auto& pi = params_pi(params);
  std::transform(pi.begin(), pi.end(), log_pi.begin(), [](double p) { return std::log(p); });
  auto out = unit_log_joint(table, log_pi, log_error_matrices(params));
  for (int u = 0; u < table.units(); ++u) {
    std::span<double> row(out.data() + static_cast<std::size_t>(u) * K, K);
    double lse = log_sum_exp(row);
    if (!std::isfinite(lse)) throw NumericalError("class probabilities are undefined for unit " + std::to_string(u + 1));
    for (auto& v : row) v = std::exp(v - lse);
  }
  return out;
}

Params init_params(const ModelSpec& spec, const RatingDataset& dataset, InitStrategy strategy, std::uint64_t seed) {
  const int K = spec.categories;
  const int J = spec.raters;
  std::vector<double> pi(K, 1.0 / K);
  auto theta = diagonal_rows(J, K);

  if (strategy == InitStrategy::majority_vote) {
    auto table = make_rating_table(dataset);
    if (table.raters != J || table.categories != K) throw ShapeError("dataset does not match the model");
    auto resp = majority_vote_responsibilities(table);
    // The M-step runs in the Dawid-Skene parameterization and is then mapped
    // onto the requested one.
    ModelSpec ds_spec = spec;
    ds_spec.variant = Variant::dawid_skene;
    if (const auto* cc = std::get_if<ClassConditionalPrior>(&spec.error_prior)) {
      DirichletPrior prior{J, K, {}};
      for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k)
          for (int kk = 0; kk < K; ++kk) prior.beta.push_back(k == kk ? cc->beta1[k] : cc->beta2[k] / (K - 1));
      ds_spec.error_prior = std::move(prior);
    } else if (std::holds_alternative<HierarchicalPrior>(spec.error_prior)) {
      ds_spec.error_prior = std::get<DirichletPrior>(resolve_spec(Variant::dawid_skene, K, J).error_prior);
    }
    Params ds = DsParams{J, K, pi, theta};
    m_step(ds_spec, table, resp, ds);
    const auto& fitted = std::get<DsParams>(ds);
    return from_theta(spec, fitted.pi, fitted.theta);
  }

  if (strategy == InitStrategy::jittered) {
    std::mt19937_64 rng(seed);
    auto dirichlet = [&rng](std::span<double> x, double concentration) {
      double s = 0.0;
      for (auto& v : x) {
        std::gamma_distribution<double> g(concentration * v);
        v = std::max(g(rng), 1e-12);
        s += v;
      }
      for (auto& v : x) v /= s;
    };
    dirichlet(pi, 50.0);
    for (std::size_t r = 0; r < static_cast<std::size_t>(J) * K; ++r) dirichlet(std::span(theta).subspan(r * K, K), 50.0);
  }
  return from_theta(spec, std::move(pi), theta);
}

MapResult em_fit(const ModelSpec& spec, const RatingDataset& dataset, const Params& init, double tol, int max_iter) {
  if (!(tol > 0)) throw ArgumentError("tolerance must be positive");
  if (max_iter < 1) throw ArgumentError("max_iter must be positive");
  if (parameterization_of(spec.variant) == Parameterization::hierarchical)
    throw UnsupportedError("EM is not available for the hierarchical model; use gradient_map_fit");
  if (parameterization_of(init) != parameterization_of(spec.variant))
    throw ShapeError("initial values do not match the model");
  const auto table = make_rating_table(dataset);
  if (table.raters != spec.raters || table.categories != spec.categories)
    throw ShapeError("dataset does not match the model");

  auto objective = [&](const Params& p) { return log_prior(p, spec) + log_likelihood(p, table); };

  MapResult result{init, objective(init), false, 0, {}, {}, {}};
  if (!std::isfinite(result.log_posterior)) throw NumericalError("log posterior is not finite at the initial values");
  result.trace.push_back(result.log_posterior);
  bool clamped = false;
  for (int it = 1; it <= max_iter; ++it) {
    auto resp = responsibilities(result.params, table);
    clamped |= m_step(spec, table, resp, result.params);
    double lp = objective(result.params);
    if (!std::isfinite(lp)) throw NumericalError("log posterior became non-finite in EM iteration " + std::to_string(it));
    result.trace.push_back(lp);
    result.iterations = it;
    double delta = lp - result.log_posterior;
    result.log_posterior = lp;
    if (std::abs(delta) < tol) {
      result.converged = true;
      break;
    }
  }
  result.responsibilities = responsibilities(result.params, table);
  if (clamped) result.warnings.emplace_back(kClampWarning);
  if (!result.converged)
    result.warnings.push_back("EM stopped after " + std::to_string(max_iter) + " iterations without converging");
  return result;
}

MapResult gradient_map_fit(const ModelSpec& spec, const RatingDataset& dataset, const Params& init, double tol,
                           int max_iter) {
  if (!(tol > 0)) throw ArgumentError("tolerance must be positive");
  if (parameterization_of(init) != parameterization_of(spec.variant))
    throw ShapeError("initial values do not match the model");
  LogPosterior target(spec, dataset);
  auto x0 = to_unconstrained(init).values;
  Objective f = [&target](std::span<const double> x, std::span<double> g) { return target.evaluate(x, g, false); };
  auto ascent = maximize_lbfgs(f, std::move(x0), tol, max_iter);
  MapResult result{target.constrain(ascent.x), ascent.value, ascent.converged, ascent.iterations, {}, ascent.trace, {}};
  if (!std::isfinite(result.log_posterior)) throw NumericalError("optimisation ended at a non-finite log posterior");
  result.responsibilities = responsibilities(result.params, target.table());
  if (!result.converged) {
    result.warnings.push_back("quasi-Newton ascent stopped without converging (gradient max-norm " +
                              std::to_string(ascent.gradient_norm) + ")");
    if (spec.variant == Variant::hierarchical)
      result.warnings.emplace_back(
          "the hierarchical posterior density is unbounded as sigma shrinks to 0, so its mode is degenerate; "
          "the reported values are the last finite iterate");
  }
  return result;
}

// A line search that can no longer improve the value in double precision
// counts as converged once the gradient is this small.
constexpr double kStallGradient = 1e-5;

AscentResult maximize_lbfgs(const Objective& f, std::vector<double> x0, double tol, int max_iter, int memory) {
  const std::size_t n = x0.size();
  AscentResult out;
  out.x = std::move(x0);
  std::vector<double> g(n), g_new(n), x_new(n), dir(n);
  auto max_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
  };
  out.value = f(out.x, g);
  if (!std::isfinite(out.value)) throw NumericalError("objective is not finite at the starting point");
  out.trace.push_back(out.value);
  out.gradient_norm = max_norm(g);

  // Work on the minimisation of -f.
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;
  for (int it = 1; it <= max_iter; ++it) {
    if (out.gradient_norm < tol) {
      out.converged = true;
      break;
    }
    // Two-loop recursion for the direction d = -H * (-g) = H g.
    for (std::size_t i = 0; i < n; ++i) dir[i] = g[i];
    std::vector<double> a(s_hist.size());
    for (std::size_t m = s_hist.size(); m-- > 0;) {
      a[m] = rho_hist[m] * std::inner_product(s_hist[m].begin(), s_hist[m].end(), dir.begin(), 0.0);
      for (std::size_t i = 0; i < n; ++i) dir[i] -= a[m] * y_hist[m][i];
    }
    double scale = 1.0;
    if (!s_hist.empty()) {
      const auto& s = s_hist.back();
      const auto& y = y_hist.back();
      scale = std::inner_product(s.begin(), s.end(), y.begin(), 0.0) /
              std::inner_product(y.begin(), y.end(), y.begin(), 0.0);
    } else {
      scale = 1.0 / std::max(1.0, max_norm(g));
    }
    for (auto& d : dir) d *= scale;
    for (std::size_t m = 0; m < s_hist.size(); ++m) {
      double b = rho_hist[m] * std::inner_product(y_hist[m].begin(), y_hist[m].end(), dir.begin(), 0.0);
      for (std::size_t i = 0; i < n; ++i) dir[i] += s_hist[m][i] * (a[m] - b);
    }
    double slope = std::inner_product(dir.begin(), dir.end(), g.begin(), 0.0);
    if (!(slope > 0)) {
      // Not an ascent direction: restart from steepest ascent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      double s0 = 1.0 / std::max(1.0, max_norm(g));
      for (std::size_t i = 0; i < n; ++i) dir[i] = s0 * g[i];
      slope = std::inner_product(dir.begin(), dir.end(), g.begin(), 0.0);
    }

    double step = 1.0;
    double value_new = 0.0;
    bool accepted = false;
    for (int bt = 0; bt < 60; ++bt) {
      for (std::size_t i = 0; i < n; ++i) x_new[i] = out.x[i] + step * dir[i];
      value_new = f(x_new, g_new);
      bool finite = std::isfinite(value_new);
      for (double v : g_new) finite = finite && std::isfinite(v);
      if (finite && value_new >= out.value + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    out.iterations = it;
    if (!accepted) {
      out.converged = out.gradient_norm < kStallGradient;
      break;
    }

    std::vector<double> s(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = x_new[i] - out.x[i];
      y[i] = g[i] - g_new[i];  // gradient difference of -f
    }
    double sy = std::inner_product(s.begin(), s.end(), y.begin(), 0.0);
    if (sy > 1e-12) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    double previous = out.value;
    out.x.swap(x_new);
    g.swap(g_new);
    out.value = value_new;
    out.trace.push_back(out.value);
    out.gradient_norm = max_norm(g);
    if (out.gradient_norm < tol) {
      out.converged = true;
      break;
    }
    // Progress stalled at machine precision.
    if (std::abs(out.value - previous) <= 1e-15 * std::max(1.0, std::abs(out.value)) && out.gradient_norm < 1e-3) {
      out.converged = out.gradient_norm < kStallGradient;
      break;
    }
  }
  return out;
}

}  // namespace rater
