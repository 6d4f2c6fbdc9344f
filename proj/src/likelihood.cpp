#include "rater/likelihood.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rater/error.hpp"

namespace rater {

namespace {

constexpr double kHalfLog2Pi = 0.91893853320467274178;
constexpr double kLog2 = 0.69314718055994530942;

std::size_t sq(int k) { return static_cast<std::size_t>(k) * k; }

// log of the inverse additive log-ratio: out_k = v_k - log(1 + sum exp v),
// with v_K = 0 for the reference category.
void alr_log_simplex(std::span<const double> v, std::span<double> out) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  double s = std::exp(-m);
  for (double x : v) s += std::exp(x - m);
  double lse = m + std::log(s);
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] - lse;
  out[v.size()] = -lse;
}

void log_softmax(std::span<const double> v, std::span<double> out) {
  double lse = log_sum_exp(v);
  for (std::size_t k = 0; k < v.size(); ++k) out[k] = v[k] - lse;
}

double log_dirichlet(std::span<const double> x, std::span<const double> a) {
  double sum_a = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sum_a += a[k];
    out -= std::lgamma(a[k]);
    if (a[k] != 1.0) out += (a[k] - 1.0) * std::log(x[k]);
  }
  return out + std::lgamma(sum_a);
}

double log_dirichlet_from_logs(std::span<const double> log_x, std::span<const double> a) {
  double sum_a = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    sum_a += a[k];
    out -= std::lgamma(a[k]);
    if (a[k] != 1.0) out += (a[k] - 1.0) * log_x[k];
  }
  return out + std::lgamma(sum_a);
}

double log_beta_density(double log_p, double log_q, double a, double b) {
  double out = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b);
  if (a != 1.0) out += (a - 1.0) * log_p;
  if (b != 1.0) out += (b - 1.0) * log_q;
  return out;
}

double log_normal(double x, double mu, double sd) {
  double z = (x - mu) / sd;
  return -0.5 * z * z - std::log(sd) - kHalfLog2Pi;
}

// log(logistic(x)) and log(1 - logistic(x)) without cancellation.
double log_logistic(double x) { return x >= 0 ? -std::log1p(std::exp(-x)) : x - std::log1p(std::exp(x)); }

void check_simplex(std::span<const double> x, const char* what) {
  double s = 0.0;
  for (double v : x) {
    if (!(v >= 0.0 && v <= 1.0)) throw DomainError(std::string(what) + " entries must lie in [0, 1]");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw DomainError(std::string(what) + " must sum to 1");
}

}  // namespace

double log_sum_exp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  for (double v : values) m = std::max(m, v);
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

Parameterization parameterization_of(Variant variant) {
  switch (variant) {
    case Variant::class_conditional: return Parameterization::class_conditional;
    case Variant::hierarchical: return Parameterization::hierarchical;
    default: return Parameterization::dawid_skene;
  }
}

Parameterization parameterization_of(const Params& params) {
  return static_cast<Parameterization>(params.index());
}

int params_raters(const Params& params) {
  return std::visit([](const auto& p) { return p.raters; }, params);
}

int params_categories(const Params& params) {
  return std::visit([](const auto& p) { return p.categories; }, params);
}

const std::vector<double>& params_pi(const Params& params) {
  return std::visit([](const auto& p) -> const std::vector<double>& { return p.pi; }, params);
}

std::vector<double> log_error_matrices(const Params& params) {
  const int J = params_raters(params);
  const int K = params_categories(params);
  std::vector<double> out(J * sq(K));
  if (const auto* ds = std::get_if<DsParams>(&params)) {
    std::transform(ds->theta.begin(), ds->theta.end(), out.begin(), [](double t) { return std::log(t); });
  } else if (const auto* cc = std::get_if<CcParams>(&params)) {
    const double log_spread = std::log(static_cast<double>(K - 1));
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k) {
        double p = cc->p[j * K + k];
        double lp = std::log(p);
        double lq = std::log1p(-p) - log_spread;
        for (int kk = 0; kk < K; ++kk) out[(j * K + k) * K + kk] = k == kk ? lp : lq;
      }
  } else {
    const auto& h = std::get<HdsParams>(params);
    for (std::size_t r = 0; r < static_cast<std::size_t>(J) * K; ++r)
      log_softmax(std::span(h.gamma).subspan(r * K, K), std::span(out).subspan(r * K, K));
  }
  return out;
}

std::vector<double> error_matrices(const Params& params) {
  if (const auto* ds = std::get_if<DsParams>(&params)) return ds->theta;
  auto out = log_error_matrices(params);
  for (auto& v : out) v = std::exp(v);
  return out;
}

void validate(const Params& params) {
  const int J = params_raters(params);
  const int K = params_categories(params);
  if (K < 1 || J < 1) throw DomainError("parameters need at least one rater and one category");
  const auto& pi = params_pi(params);
  if (pi.size() != static_cast<std::size_t>(K)) throw ShapeError("pi has the wrong length");
  check_simplex(pi, "pi");
  if (const auto* ds = std::get_if<DsParams>(&params)) {
    if (ds->theta.size() != J * sq(K)) throw ShapeError("theta has the wrong size");
    for (std::size_t r = 0; r < static_cast<std::size_t>(J) * K; ++r)
      check_simplex(std::span(ds->theta).subspan(r * K, K), "theta rows");
  } else if (const auto* cc = std::get_if<CcParams>(&params)) {
    if (cc->p.size() != static_cast<std::size_t>(J) * K) throw ShapeError("p has the wrong size");
    for (double p : cc->p)
      if (!(p >= 0.0 && p <= 1.0)) throw DomainError("p entries must lie in [0, 1]");
  } else {
    const auto& h = std::get<HdsParams>(params);
    if (h.mu.size() != sq(K) || h.sigma.size() != sq(K) || h.gamma.size() != J * sq(K))
      throw ShapeError("hierarchical parameters have the wrong size");
    for (double s : h.sigma)
      if (!(s > 0.0) || !std::isfinite(s)) throw DomainError("sigma entries must be positive");
    for (double g : h.gamma)
      if (!std::isfinite(g)) throw DomainError("gamma entries must be finite");
    for (double m : h.mu)
      if (!std::isfinite(m)) throw DomainError("mu entries must be finite");
  }
}

std::size_t constrained_size(Parameterization kind, int raters, int categories) {
  const std::size_t K = categories;
  switch (kind) {
    case Parameterization::dawid_skene: return K + raters * K * K;
    case Parameterization::class_conditional: return K + raters * K;
    case Parameterization::hierarchical: return K + 2 * K * K + raters * K * K;
  }
  return 0;
}

std::vector<double> flatten(const Params& params) {
  std::vector<double> out = params_pi(params);
  if (const auto* ds = std::get_if<DsParams>(&params)) {
    out.insert(out.end(), ds->theta.begin(), ds->theta.end());
  } else if (const auto* cc = std::get_if<CcParams>(&params)) {
    out.insert(out.end(), cc->p.begin(), cc->p.end());
  } else {
    const auto& h = std::get<HdsParams>(params);
    out.insert(out.end(), h.mu.begin(), h.mu.end());
    out.insert(out.end(), h.sigma.begin(), h.sigma.end());
    out.insert(out.end(), h.gamma.begin(), h.gamma.end());
  }
  return out;
}

Params unflatten(std::span<const double> values, Parameterization kind, int raters, int categories) {
  if (values.size() != constrained_size(kind, raters, categories))
    throw ShapeError("flat parameter vector has the wrong length");
  const std::size_t K = categories;
  auto take = [&values](std::size_t from, std::size_t n) {
    return std::vector<double>(values.begin() + static_cast<long>(from),
                               values.begin() + static_cast<long>(from + n));
  };
  switch (kind) {
    case Parameterization::dawid_skene:
      return DsParams{raters, categories, take(0, K), take(K, raters * K * K)};
    case Parameterization::class_conditional:
      return CcParams{raters, categories, take(0, K), take(K, raters * K)};
    case Parameterization::hierarchical:
      return HdsParams{raters, categories, take(0, K), take(K, K * K), take(K + K * K, K * K),
                       take(K + 2 * K * K, raters * K * K)};
  }
  throw ShapeError("unknown parameterization");
}

std::vector<std::string> parameter_names(Parameterization kind, int raters, int categories) {
  std::vector<std::string> names;
  const int K = categories;
  for (int k = 0; k < K; ++k) names.push_back("pi[" + std::to_string(k + 1) + "]");
  auto matrix = [&](const std::string& base, int blocks, bool per_rater) {
    for (int j = 0; j < blocks; ++j)
      for (int k = 0; k < K; ++k)
        for (int kk = 0; kk < K; ++kk)
          names.push_back(base + "[" + (per_rater ? std::to_string(j + 1) + "," : std::string()) +
                          std::to_string(k + 1) + "," + std::to_string(kk + 1) + "]");
  };
  switch (kind) {
    case Parameterization::dawid_skene: matrix("theta", raters, true); break;
    case Parameterization::class_conditional:
      for (int j = 0; j < raters; ++j)
        for (int k = 0; k < K; ++k) names.push_back("p[" + std::to_string(j + 1) + "," + std::to_string(k + 1) + "]");
      break;
    case Parameterization::hierarchical:
      matrix("mu", 1, false);
      matrix("sigma", 1, false);
      matrix("gamma", raters, true);
      break;
  }
  return names;
}

RatingTable make_rating_table(const RatingDataset& dataset) {
  RatingTable t;
  t.raters = dataset.raters();
  t.categories = dataset.categories();
  if (const auto* g = dataset.as_grouped()) {
    t.grouped = true;
    for (int l = 0; l < g->pattern_count(); ++l) {
      for (int j = 0; j < g->raters; ++j) {
        t.rater.push_back(j);
        t.rating.push_back(g->at(l, j));
      }
      t.offsets.push_back(t.rater.size());
      t.weight.push_back(static_cast<double>(g->tallies[l]));
    }
    return t;
  }
  auto long_form = to_long(dataset);
  const auto& l = *long_form.as_long();
  std::vector<std::size_t> counts(l.items + 1, 0);
  for (const auto& e : l.entries) ++counts[e.item + 1];
  std::partial_sum(counts.begin(), counts.end(), counts.begin());
  t.offsets = counts;
  t.rater.resize(l.entries.size());
  t.rating.resize(l.entries.size());
  std::vector<std::size_t> cursor(counts.begin(), counts.end() - 1);
  for (const auto& e : l.entries) {
    auto at = cursor[e.item]++;
    t.rater[at] = e.rater;
    t.rating[at] = e.rating;
  }
  t.weight.assign(l.items, 1.0);
  return t;
}

std::vector<double> unit_log_joint(const RatingTable& table, std::span<const double> log_pi,
                                   std::span<const double> log_theta) {
  const int K = table.categories;
  std::vector<double> out(static_cast<std::size_t>(table.units()) * K);
  for (int u = 0; u < table.units(); ++u) {
    double* row = out.data() + static_cast<std::size_t>(u) * K;
    for (int k = 0; k < K; ++k) row[k] = log_pi[k];
    for (std::size_t n = table.offsets[u]; n < table.offsets[u + 1]; ++n) {
      const double* lt = log_theta.data() + static_cast<std::size_t>(table.rater[n]) * K * K + table.rating[n];
      for (int k = 0; k < K; ++k) row[k] += lt[static_cast<std::size_t>(k) * K];
    }
  }
  return out;
}

void check_dims(const Params& params, int raters, int categories) {
  if (params_raters(params) != raters || params_categories(params) != categories)
    throw ShapeError("parameters are for " + std::to_string(params_raters(params)) + " raters and " +
                     std::to_string(params_categories(params)) + " categories, data has " +
                     std::to_string(raters) + " raters and " + std::to_string(categories) + " categories");
}

void check_dims(const Params& params, const RatingTable& table) { check_dims(params, table.raters, table.categories); }

std::vector<double> unit_log_likelihood(const Params& params, const RatingTable& table) {
  check_dims(params, table);
  const int K = table.categories;
  std::vector<double> log_pi(K);
  const auto& pi = params_pi(params);
  std::transform(pi.begin(), pi.end(), log_pi.begin(), [](double p) { return std::log(p); });
  auto joint = unit_log_joint(table, log_pi, log_error_matrices(params));
  std::vector<double> out(table.units());
  for (int u = 0; u < table.units(); ++u)
    out[u] = log_sum_exp(std::span(joint).subspan(static_cast<std::size_t>(u) * K, K));
  return out;
}

double log_likelihood(const Params& params, const RatingTable& table) {
  auto per_unit = unit_log_likelihood(params, table);
  double total = 0.0;
  for (int u = 0; u < table.units(); ++u) total += table.weight[u] * per_unit[u];
  return total;
}

double log_likelihood_long(const Params& params, const RatingDataset& dataset) {
  if (dataset.as_grouped()) throw ArgumentError("log_likelihood_long needs long or wide data");
  return log_likelihood(params, make_rating_table(dataset));
}

double log_likelihood_grouped(const Params& params, const RatingDataset& dataset) {
  if (!dataset.as_grouped()) throw ArgumentError("log_likelihood_grouped needs grouped data");
  return log_likelihood(params, make_rating_table(dataset));
}

double log_likelihood(const Params& params, const RatingDataset& dataset) {
  return log_likelihood(params, make_rating_table(dataset));
}

double log_prior(const Params& params, const ModelSpec& spec) {
  validate(params);
  if (parameterization_of(params) != parameterization_of(spec.variant))
    throw ShapeError(std::string("parameters do not match the ") + variant_name(spec.variant) + " model");
  check_dims(params, spec.raters, spec.categories);
  const int J = spec.raters;
  const int K = spec.categories;
  double lp = log_dirichlet(params_pi(params), spec.alpha);
  if (const auto* ds = std::get_if<DsParams>(&params)) {
    const auto& prior = std::get<DirichletPrior>(spec.error_prior);
    for (std::size_t r = 0; r < static_cast<std::size_t>(J) * K; ++r)
      lp += log_dirichlet(std::span(ds->theta).subspan(r * K, K), std::span(prior.beta).subspan(r * K, K));
  } else if (const auto* cc = std::get_if<CcParams>(&params)) {
    const auto& prior = std::get<ClassConditionalPrior>(spec.error_prior);
    for (int j = 0; j < J; ++j)
      for (int k = 0; k < K; ++k) {
        double p = cc->p[j * K + k];
        lp += log_beta_density(std::log(p), std::log1p(-p), prior.beta1[k], prior.beta2[k]);
      }
  } else {
    const auto& h = std::get<HdsParams>(params);
    for (std::size_t c = 0; c < sq(K); ++c) {
      lp += log_normal(h.mu[c], HierarchicalPrior::mu_location, HierarchicalPrior::mu_scale);
      lp += kLog2 + log_normal(h.sigma[c], 0.0, HierarchicalPrior::sigma_scale);
      for (int j = 0; j < J; ++j) lp += log_normal(h.gamma[j * sq(K) + c], h.mu[c], h.sigma[c]);
    }
  }
  return lp;
}

double log_posterior(const Params& params, const ModelSpec& spec, const RatingDataset& dataset) {
  return log_prior(params, spec) + log_likelihood(params, dataset);
}

std::size_t unconstrained_size(Parameterization kind, int raters, int categories) {
  const std::size_t K = categories;
  switch (kind) {
    case Parameterization::dawid_skene: return (K - 1) * (1 + raters * K);
    case Parameterization::class_conditional: return (K - 1) + raters * K;
    case Parameterization::hierarchical: return (K - 1) + 2 * K * K + raters * K * K;
  }
  return 0;
}

UnconstrainedVector to_unconstrained(const Params& params) {
  validate(params);
  UnconstrainedVector out{parameterization_of(params), params_raters(params), params_categories(params), {}};
  const int K = out.categories;
  auto push_alr = [&out](std::span<const double> x, const char* what) {
    const double ref = x.back();
    for (double v : x)
      if (!(v > 0.0 && v < 1.0))
        throw DomainError(std::string(what) + " on the simplex boundary has no unconstrained image");
    for (std::size_t k = 0; k + 1 < x.size(); ++k) out.values.push_back(std::log(x[k] / ref));
  };
  push_alr(params_pi(params), "pi");
  if (const auto* ds = std::get_if<DsParams>(&params)) {
    for (std::size_t r = 0; r < static_cast<std::size_t>(out.raters) * K; ++r)
      push_alr(std::span(ds->theta).subspan(r * K, K), "theta");
  } else if (const auto* cc = std::get_if<CcParams>(&params)) {
    for (double p : cc->p) {
      if (!(p > 0.0 && p < 1.0)) throw DomainError("p at 0 or 1 has no unconstrained image");
      out.values.push_back(std::log(p) - std::log1p(-p));
    }
  } else {
    const auto& h = std::get<HdsParams>(params);
    out.values.insert(out.values.end(), h.mu.begin(), h.mu.end());
    for (double s : h.sigma) out.values.push_back(std::log(s));
    out.values.insert(out.values.end(), h.gamma.begin(), h.gamma.end());
  }
  return out;
}

Params from_unconstrained(const UnconstrainedVector& v) {
  return from_unconstrained(v.values, v.kind, v.raters, v.categories);
}

Params from_unconstrained(std::span<const double> v, Parameterization kind, int raters, int categories) {
  if (v.size() != unconstrained_size(kind, raters, categories))
    throw ShapeError("unconstrained vector has the wrong length");
  const std::size_t K = categories;
  auto simplex = [&](std::size_t at) {
    std::vector<double> out(K);
    alr_log_simplex(v.subspan(at, K - 1), out);
    for (auto& x : out) x = std::exp(x);
    return out;
  };
  std::vector<double> pi = simplex(0);
  std::size_t at = K - 1;
  switch (kind) {
    case Parameterization::dawid_skene: {
      DsParams p{raters, categories, std::move(pi), {}};
      p.theta.reserve(raters * K * K);
      for (std::size_t r = 0; r < raters * K; ++r, at += K - 1) {
        auto row = simplex(at);
        p.theta.insert(p.theta.end(), row.begin(), row.end());
      }
      return p;
    }
    case Parameterization::class_conditional: {
      CcParams p{raters, categories, std::move(pi), {}};
      for (std::size_t c = 0; c < raters * K; ++c) p.p.push_back(std::exp(log_logistic(v[at + c])));
      return p;
    }
    case Parameterization::hierarchical: {
      HdsParams p{raters, categories, std::move(pi), {}, {}, {}};
      p.mu.assign(v.begin() + static_cast<long>(at), v.begin() + static_cast<long>(at + K * K));
      at += K * K;
      for (std::size_t c = 0; c < K * K; ++c) p.sigma.push_back(std::exp(v[at + c]));
      at += K * K;
      p.gamma.assign(v.begin() + static_cast<long>(at), v.begin() + static_cast<long>(at + raters * K * K));
      return p;
    }
  }
  throw ShapeError("unknown parameterization");
}

double log_jacobian(std::span<const double> v, Parameterization kind, int raters, int categories) {
  if (v.size() != unconstrained_size(kind, raters, categories))
    throw ShapeError("unconstrained vector has the wrong length");
  const std::size_t K = categories;
  std::vector<double> logs(K);
  auto simplex_term = [&](std::size_t at) {
    alr_log_simplex(v.subspan(at, K - 1), logs);
    return std::accumulate(logs.begin(), logs.end(), 0.0);
  };
  double out = simplex_term(0);
  std::size_t at = K - 1;
  switch (kind) {
    case Parameterization::dawid_skene:
      for (std::size_t r = 0; r < raters * K; ++r, at += K - 1) out += simplex_term(at);
      break;
    case Parameterization::class_conditional:
      for (std::size_t c = 0; c < raters * K; ++c) out += log_logistic(v[at + c]) + log_logistic(-v[at + c]);
      break;
    case Parameterization::hierarchical:
      for (std::size_t c = 0; c < K * K; ++c) out += v[at + K * K + c];
      break;
  }
  return out;
}

LogPosterior::LogPosterior(ModelSpec spec, const RatingDataset& dataset)
    : LogPosterior(std::move(spec), make_rating_table(dataset)) {}

LogPosterior::LogPosterior(ModelSpec spec, RatingTable table)
    : spec_(std::move(spec)),
      table_(std::move(table)),
      kind_(parameterization_of(spec_.variant)),
      dimension_(unconstrained_size(kind_, spec_.raters, spec_.categories)) {
  if (table_.raters != spec_.raters || table_.categories != spec_.categories)
    throw ShapeError("model is for " + std::to_string(spec_.raters) + " raters and " +
                     std::to_string(spec_.categories) + " categories, data has " +
                     std::to_string(table_.raters) + " raters and " + std::to_string(table_.categories) +
                     " categories");
}

Params LogPosterior::constrain(std::span<const double> v) const {
  return from_unconstrained(v, kind_, spec_.raters, spec_.categories);
}

double LogPosterior::evaluate(std::span<const double> v, std::span<double> grad, bool jac) const {
  const int K = spec_.categories;
  const int J = spec_.raters;
  const std::size_t rows = static_cast<std::size_t>(J) * K;
  std::fill(grad.begin(), grad.end(), 0.0);

  std::vector<double> log_pi(K);
  alr_log_simplex(v.subspan(0, K - 1), log_pi);
  std::size_t at = K - 1;

  std::vector<double> log_theta(rows * K);
  switch (kind_) {
    case Parameterization::dawid_skene:
      for (std::size_t r = 0; r < rows; ++r)
        alr_log_simplex(v.subspan(at + r * (K - 1), K - 1), std::span(log_theta).subspan(r * K, K));
      break;
    case Parameterization::class_conditional: {
      const double log_spread = std::log(static_cast<double>(K - 1));
      for (std::size_t r = 0; r < rows; ++r) {
        const int k = static_cast<int>(r % K);
        const double x = v[at + r];
        const double lp = log_logistic(x);
        const double lq = log_logistic(-x) - log_spread;
        for (int kk = 0; kk < K; ++kk) log_theta[r * K + kk] = kk == k ? lp : lq;
      }
      break;
    }
    case Parameterization::hierarchical: {
      const std::size_t gamma_at = at + 2 * sq(K);
      for (std::size_t r = 0; r < rows; ++r)
        log_softmax(v.subspan(gamma_at + r * K, K), std::span(log_theta).subspan(r * K, K));
      break;
    }
  }

  // Marginal likelihood and its gradient with respect to log pi / log theta.
  std::vector<double> g_pi(K, 0.0);
  std::vector<double> g_theta(rows * K, 0.0);
  double value = 0.0;
  auto joint = unit_log_joint(table_, log_pi, log_theta);
  std::vector<double> resp(K);
  for (int u = 0; u < table_.units(); ++u) {
    std::span<const double> row(joint.data() + static_cast<std::size_t>(u) * K, K);
    const double lse = log_sum_exp(row);
    const double w = table_.weight[u];
    value += w * lse;
    for (int k = 0; k < K; ++k) {
      resp[k] = w * std::exp(row[k] - lse);
      g_pi[k] += resp[k];
    }
    for (std::size_t n = table_.offsets[u]; n < table_.offsets[u + 1]; ++n) {
      double* g = g_theta.data() + static_cast<std::size_t>(table_.rater[n]) * K * K + table_.rating[n];
      for (int k = 0; k < K; ++k) g[static_cast<std::size_t>(k) * K] += resp[k];
    }
  }

  // Dirichlet prior on pi and the additive log-ratio chain rule; the
  // Jacobian of the inverse transform is prod_k pi_k.
  auto simplex_block = [&](std::span<const double> log_x, std::span<double> g_log, std::span<const double> a,
                           std::span<double> out_grad) {
    value += log_dirichlet_from_logs(log_x, a);
    for (int k = 0; k < K; ++k) g_log[k] += a[k] - 1.0;
    if (jac) {
      for (int k = 0; k < K; ++k) {
        value += log_x[k];
        g_log[k] += 1.0;
      }
    }
    const double total = std::accumulate(g_log.begin(), g_log.end(), 0.0);
    for (int m = 0; m + 1 < K; ++m) out_grad[m] = g_log[m] - std::exp(log_x[m]) * total;
  };
  simplex_block(log_pi, g_pi, spec_.alpha, grad.subspan(0, K - 1));

  switch (kind_) {
    case Parameterization::dawid_skene: {
      const auto& prior = std::get<DirichletPrior>(spec_.error_prior);
      for (std::size_t r = 0; r < rows; ++r)
        simplex_block(std::span(log_theta).subspan(r * K, K), std::span(g_theta).subspan(r * K, K),
                      std::span(prior.beta).subspan(r * K, K), grad.subspan(at + r * (K - 1), K - 1));
      break;
    }
    case Parameterization::class_conditional: {
      const auto& prior = std::get<ClassConditionalPrior>(spec_.error_prior);
      for (std::size_t r = 0; r < rows; ++r) {
        const int k = static_cast<int>(r % K);
        const double x = v[at + r];
        const double lp = log_logistic(x);
        const double lq = log_logistic(-x);
        const double p = std::exp(lp);
        const double q = std::exp(lq);
        double g_diag = g_theta[r * K + k];
        double g_off = 0.0;
        for (int kk = 0; kk < K; ++kk)
          if (kk != k) g_off += g_theta[r * K + kk];
        value += log_beta_density(lp, lq, prior.beta1[k], prior.beta2[k]);
        g_diag += prior.beta1[k] - 1.0;
        g_off += prior.beta2[k] - 1.0;
        if (jac) {
          value += lp + lq;
          g_diag += 1.0;
          g_off += 1.0;
        }
        grad[at + r] = g_diag * q - g_off * p;
      }
      break;
    }
    case Parameterization::hierarchical: {
      const std::size_t kk2 = sq(K);
      const std::size_t mu_at = at;
      const std::size_t s_at = at + kk2;
      const std::size_t gamma_at = at + 2 * kk2;
      for (std::size_t r = 0; r < rows; ++r) {
        double total = 0.0;
        for (int k = 0; k < K; ++k) total += g_theta[r * K + k];
        for (int k = 0; k < K; ++k)
          grad[gamma_at + r * K + k] = g_theta[r * K + k] - std::exp(log_theta[r * K + k]) * total;
      }
      for (std::size_t c = 0; c < kk2; ++c) {
        const double mu = v[mu_at + c];
        const double s = v[s_at + c];
        const double sigma = std::exp(s);
        value += -0.5 * mu * mu - kHalfLog2Pi;
        grad[mu_at + c] += -mu;
        value += kLog2 - 0.5 * sigma * sigma - kHalfLog2Pi;
        grad[s_at + c] += -sigma * sigma;
        if (jac) {
          value += s;
          grad[s_at + c] += 1.0;
        }
        for (int j = 0; j < J; ++j) {
          const std::size_t gi = gamma_at + static_cast<std::size_t>(j) * kk2 + c;
          const double z = (v[gi] - mu) / sigma;
          value += -0.5 * z * z - s - kHalfLog2Pi;
          grad[gi] += -z / sigma;
          grad[mu_at + c] += z / sigma;
          grad[s_at + c] += z * z - 1.0;
        }
      }
      break;
    }
  }
  return value;
}

std::pair<double, std::vector<double>> log_posterior_unconstrained(std::span<const double> v,
                                                                   const ModelSpec& spec,
                                                                   const RatingDataset& dataset) {
  LogPosterior target(spec, dataset);
  if (v.size() != target.dimension()) throw ShapeError("unconstrained vector does not match the model layout");
  std::vector<double> grad(v.size());
  double value = target.evaluate(v, grad);
  for (std::size_t i = 0; i < grad.size(); ++i)
    if (!std::isfinite(grad[i])) throw NumericalError("non-finite log-posterior gradient", static_cast<long>(i));
  if (!std::isfinite(value)) throw NumericalError("non-finite log-posterior value");
  return {value, std::move(grad)};
}

}  // namespace rater
