#include "rater/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <thread>

#include "rater/error.hpp"
#include "rater/optimize.hpp"

namespace rater {

namespace {

constexpr double kDivergenceThreshold = 1000.0;
constexpr int kInitAttempts = 5;

// Dual-averaging constants (Hoffman & Gelman 2014).
constexpr double kDaGamma = 0.05;
constexpr double kDaT0 = 10.0;
constexpr double kDaKappa = 0.75;

struct DualAveraging {
  double mu = 0.0;
  double h_bar = 0.0;
  double log_eps_bar = 0.0;
  int count = 0;

  void restart(double eps) {
    mu = std::log(10.0 * eps);
    h_bar = 0.0;
    log_eps_bar = 0.0;
    count = 0;
  }

  double update(double accept_stat, double target) {
    ++count;
    const double eta = 1.0 / (count + kDaT0);
    h_bar = (1.0 - eta) * h_bar + eta * (target - accept_stat);
    const double log_eps = mu - std::sqrt(static_cast<double>(count)) / kDaGamma * h_bar;
    const double w = std::pow(static_cast<double>(count), -kDaKappa);
    log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
    return std::exp(log_eps);
  }
};

struct Welford {
  std::vector<double> mean;
  std::vector<double> m2;
  int n = 0;

  explicit Welford(std::size_t dim) : mean(dim, 0.0), m2(dim, 0.0) {}
  void reset() {
    std::fill(mean.begin(), mean.end(), 0.0);
    std::fill(m2.begin(), m2.end(), 0.0);
    n = 0;
  }
  void add(std::span<const double> x) {
    ++n;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double d = x[i] - mean[i];
      mean[i] += d / n;
      m2[i] += d * (x[i] - mean[i]);
    }
  }
  // Variance shrunk toward 1e-3, as Stan does.
  std::vector<double> regularized() const {
    std::vector<double> out(mean.size());
    const double w = n / (n + 5.0);
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double var = n > 1 ? m2[i] / (n - 1) : 1.0;
      out[i] = w * var + 1e-3 * (5.0 / (n + 5.0));
    }
    return out;
  }
};

struct State {
  std::vector<double> x;
  std::vector<double> grad;
  double logp = 0.0;
};

class Integrator {
 public:
  explicit Integrator(const LogDensity& target) : target_(target) {}

  double kinetic(const std::vector<double>& p, const std::vector<double>& inv_metric) const {
    double k = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) k += inv_metric[i] * p[i] * p[i];
    return 0.5 * k;
  }

  // Runs `steps` leapfrog steps from `s` with momentum `p`; returns the
  // proposal. The proposal's logp is -inf when the trajectory went non-finite.
  State leapfrog(const State& s, std::vector<double>& p, const std::vector<double>& inv_metric,
                 double eps, int steps) {
    State q = s;
    for (int l = 0; l < steps; ++l) {
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += 0.5 * eps * q.grad[i];
      for (std::size_t i = 0; i < p.size(); ++i) q.x[i] += eps * inv_metric[i] * p[i];
      q.logp = target_(q.x, q.grad);
      if (!std::isfinite(q.logp) || !all_finite(q.grad)) {
        q.logp = -std::numeric_limits<double>::infinity();
        return q;
      }
      for (std::size_t i = 0; i < p.size(); ++i) p[i] += 0.5 * eps * q.grad[i];
    }
    return q;
  }

  static bool all_finite(const std::vector<double>& v) {
    return std::all_of(v.begin(), v.end(), [](double d) { return std::isfinite(d); });
  }

 private:
  const LogDensity& target_;
};

void draw_momentum(std::vector<double>& p, const std::vector<double>& inv_metric, std::mt19937_64& rng) {
  std::normal_distribution<double> normal;
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = normal(rng) / std::sqrt(inv_metric[i]);
}

// Doubles or halves eps until a single leapfrog step crosses an acceptance
// probability of 0.8.
double find_step_size(Integrator& integ, const State& s, const std::vector<double>& inv_metric, double eps,
                      std::mt19937_64& rng) {
  std::vector<double> p(s.x.size());
  int direction = 0;
  for (int iter = 0; iter < 50; ++iter) {
    draw_momentum(p, inv_metric, rng);
    const double h0 = -s.logp + integ.kinetic(p, inv_metric);
    const State q = integ.leapfrog(s, p, inv_metric, eps, 1);
    const double h1 = -q.logp + integ.kinetic(p, inv_metric);
    const double delta = std::isfinite(h1) ? h0 - h1 : -std::numeric_limits<double>::infinity();
    const int dir = delta > std::log(0.8) ? 1 : -1;
    if (direction == 0) direction = dir;
    if (dir != direction) break;
    eps = direction > 0 ? 2.0 * eps : 0.5 * eps;
    if (eps > 1e7 || eps < 1e-12) break;
  }
  return std::clamp(eps, 1e-12, 1e7);
}

struct Transition {
  double accept_stat = 0.0;
  bool divergent = false;
  int steps = 0;
};

Transition transition(Integrator& integ, State& s, const std::vector<double>& inv_metric, double eps,
                      const SamplerConfig& config, std::mt19937_64& rng) {
  // Step count uniform on [1, 2n - 1], mean n = length / eps. A fixed count
  // resonates with near-Gaussian targets and leaves some directions stuck.
  const int mean_steps =
      static_cast<int>(std::clamp(std::round(config.trajectory_length / eps), 1.0,
                                  static_cast<double>(config.max_leapfrog)));
  const int steps =
      std::min(std::uniform_int_distribution<int>(1, 2 * mean_steps - 1)(rng), config.max_leapfrog);
  std::vector<double> p(s.x.size());
  draw_momentum(p, inv_metric, rng);
  const double h0 = -s.logp + integ.kinetic(p, inv_metric);
  State q = integ.leapfrog(s, p, inv_metric, eps, steps);
  const double h1 = -q.logp + integ.kinetic(p, inv_metric);

  Transition t;
  t.steps = steps;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const double u = unif(rng);
  if (!std::isfinite(h1) || h1 - h0 > kDivergenceThreshold) {
    t.divergent = true;
    return t;
  }
  t.accept_stat = std::min(1.0, std::exp(h0 - h1));
  if (u < t.accept_stat) s = std::move(q);
  return t;
}

// Adaptation windows over warmup iterations [begin, end).
struct Windows {
  int init_end = 0;
  int slow_end = 0;
  std::vector<int> ends;  // iteration after which the metric is updated
};

Windows plan_windows(int warmup) {
  Windows w;
  w.init_end = static_cast<int>(0.15 * warmup);
  const int term = static_cast<int>(0.25 * warmup);
  w.slow_end = warmup - term;
  const int slow = w.slow_end - w.init_end;
  if (slow < 20) return w;
  int size = 25;
  while (size * 3 > slow && size > 5) size /= 2;
  int start = w.init_end;
  while (start < w.slow_end) {
    int end = start + size;
    // Merge a tail window that would be shorter than the next one.
    if (end + 2 * size > w.slow_end) end = w.slow_end;
    w.ends.push_back(end);
    start = end;
    size *= 2;
  }
  return w;
}

}  // namespace

void SamplerConfig::validate() const {
  if (chains < 1) throw ArgumentError("chains must be positive");
  if (warmup < 0) throw ArgumentError("warmup must be non-negative");
  if (draws < 1) throw ArgumentError("draws must be positive");
  if (!(target_accept > 0.0 && target_accept < 1.0)) throw ArgumentError("target acceptance must lie in (0, 1)");
  if (max_leapfrog < 1) throw ArgumentError("leapfrog cap must be positive");
  if (!(trajectory_length > 0.0)) throw ArgumentError("trajectory length must be positive");
}

std::vector<double> PosteriorDraws::column(std::size_t chain, std::size_t param) const {
  std::vector<double> out(static_cast<std::size_t>(draws_per_chain));
  for (std::size_t s = 0; s < out.size(); ++s) out[s] = at(chain, s, param);
  return out;
}

std::vector<std::vector<double>> PosteriorDraws::columns(std::size_t param) const {
  std::vector<std::vector<double>> out;
  out.reserve(chains.size());
  for (std::size_t c = 0; c < chains.size(); ++c) out.push_back(column(c, param));
  return out;
}

std::size_t PosteriorDraws::index_of(const std::string& name) const {
  const auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw ArgumentError("unknown parameter " + name);
  return static_cast<std::size_t>(it - names.begin());
}

namespace {

void check_chains(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw ArgumentError("no chains");
  const std::size_t n = chains.front().size();
  if (n < 4) throw ArgumentError("at least 4 draws per chain are required");
  for (const auto& c : chains)
    if (c.size() != n) throw ShapeError("chains differ in length");
}

double mean_of(std::span<const double> x) {
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

double var_of(std::span<const double> x, double m) {
  double s = 0.0;
  for (double v : x) s += (v - m) * (v - m);
  return s / static_cast<double>(x.size() - 1);
}

}  // namespace

DiagnosticValue split_rhat(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  const std::size_t half = chains.front().size() / 2;
  const std::size_t n = chains.front().size();
  std::vector<std::span<const double>> parts;
  for (const auto& c : chains) {
    parts.emplace_back(c.data(), half);
    parts.emplace_back(c.data() + (n - half), half);
  }
  const double m = static_cast<double>(parts.size());
  std::vector<double> means;
  double w = 0.0;
  for (const auto& part : parts) {
    const double mu = mean_of(part);
    means.push_back(mu);
    w += var_of(part, mu);
  }
  w /= m;
  if (!(w > 0.0)) return {std::numeric_limits<double>::infinity(), true};
  const double grand = mean_of(means);
  double b = 0.0;
  for (double mu : means) b += (mu - grand) * (mu - grand);
  b *= static_cast<double>(half) / (m - 1.0);
  const double hn = static_cast<double>(half);
  const double var_plus = (hn - 1.0) / hn * w + b / hn;
  return {std::max(1.0, std::sqrt(var_plus / w)), false};
}

DiagnosticValue effective_sample_size(const std::vector<std::vector<double>>& chains) {
  check_chains(chains);
  const std::size_t m = chains.size();
  const std::size_t n = chains.front().size();
  const double total = static_cast<double>(m * n);

  std::vector<double> means(m), vars(m);
  for (std::size_t c = 0; c < m; ++c) {
    means[c] = mean_of(chains[c]);
    vars[c] = var_of(chains[c], means[c]);
  }
  const double mean_var = mean_of(vars);
  if (!(mean_var > 0.0)) return {std::numeric_limits<double>::infinity(), true};
  double var_plus = mean_var * (n - 1.0) / n;
  if (m > 1) var_plus += var_of(means, mean_of(means));

  // Mean across chains of the biased lag-t autocovariance.
  auto acov = [&](std::size_t t) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m; ++c) {
      const auto& x = chains[c];
      double s = 0.0;
      for (std::size_t i = 0; i + t < n; ++i) s += (x[i] - means[c]) * (x[i + t] - means[c]);
      acc += s / static_cast<double>(n);
    }
    return acc / static_cast<double>(m);
  };
  auto rho = [&](std::size_t t) { return t == 0 ? 1.0 : 1.0 - (mean_var - acov(t)) / var_plus; };

  double sum = 0.0;
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t + 1 < n; t += 2) {
    double pair = rho(t) + rho(t + 1);
    if (!(pair > 0.0)) break;
    pair = std::min(pair, prev);
    sum += pair;
    prev = pair;
  }
  const double tau = -1.0 + 2.0 * sum;
  return {tau > 0.0 ? std::min(total / tau, total) : total, false};
}

Diagnostics compute_diagnostics(const PosteriorDraws& draws) {
  Diagnostics d;
  d.parameters.reserve(draws.parameters());
  for (std::size_t p = 0; p < draws.parameters(); ++p) {
    const auto cols = draws.columns(p);
    d.parameters.push_back({draws.names[p], split_rhat(cols), effective_sample_size(cols)});
  }
  return d;
}

std::mt19937_64 chain_rng(std::uint64_t seed, int chain) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(chain), 0x7261746eU};
  return std::mt19937_64(seq);
}

ChainOutput run_hmc_chain(const LogDensity& target, std::vector<double> init, const SamplerConfig& config,
                          std::mt19937_64& rng) {
  const std::size_t dim = init.size();
  Integrator integ(target);
  State s;
  s.x = std::move(init);
  s.grad.assign(dim, 0.0);
  s.logp = target(s.x, s.grad);
  if (!std::isfinite(s.logp) || !Integrator::all_finite(s.grad))
    throw InitError("log density is not finite at the initial point");

  std::vector<double> inv_metric(dim, 1.0);
  double eps = find_step_size(integ, s, inv_metric, 1.0, rng);
  DualAveraging da;
  da.restart(eps);
  const Windows windows = plan_windows(config.warmup);
  std::size_t next_window = 0;
  Welford welford(dim);

  for (int it = 0; it < config.warmup; ++it) {
    const Transition t = transition(integ, s, inv_metric, eps, config, rng);
    eps = da.update(t.accept_stat, config.target_accept);
    if (it >= windows.init_end && it < windows.slow_end) welford.add(s.x);
    if (next_window < windows.ends.size() && it + 1 == windows.ends[next_window]) {
      inv_metric = welford.regularized();
      welford.reset();
      eps = find_step_size(integ, s, inv_metric, eps, rng);
      da.restart(eps);
      ++next_window;
    }
  }
  if (config.warmup > 0) eps = std::exp(da.log_eps_bar);

  ChainOutput out;
  out.draws.reserve(dim * static_cast<std::size_t>(config.draws));
  out.stats.step_size = eps;
  std::uniform_real_distribution<double> jitter(0.9, 1.1);
  double accept_sum = 0.0;
  for (int it = 0; it < config.draws; ++it) {
    const Transition t = transition(integ, s, inv_metric, eps * jitter(rng), config, rng);
    accept_sum += t.accept_stat;
    out.stats.divergences += t.divergent ? 1 : 0;
    out.stats.leapfrog_steps += t.steps;
    out.draws.insert(out.draws.end(), s.x.begin(), s.x.end());
  }
  out.stats.mean_accept = accept_sum / config.draws;
  return out;
}

namespace {

std::vector<double> first_finite_start(const LogDensity& target, const StartGenerator& start, std::mt19937_64& rng) {
  for (int attempt = 0; attempt < kInitAttempts; ++attempt) {
    auto x = start(rng);
    std::vector<double> grad(x.size());
    const double lp = target(x, grad);
    if (std::isfinite(lp) && Integrator::all_finite(grad)) return x;
  }
  throw InitError("no finite starting point after " + std::to_string(kInitAttempts) + " attempts");
}

template <typename F>
void run_chains(int chains, bool parallel, F&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  auto guarded = [&](int c) {
    try {
      body(c);
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };
  if (parallel && chains > 1) {
    std::vector<std::thread> threads;
    for (int c = 0; c < chains; ++c) threads.emplace_back(guarded, c);
    for (auto& t : threads) t.join();
  } else {
    for (int c = 0; c < chains; ++c) guarded(c);
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

std::vector<ChainOutput> sample_density(const LogDensity& target, std::size_t dimension,
                                        const SamplerConfig& config) {
  return sample_density(target, config, [dimension](std::mt19937_64& rng) {
    std::uniform_real_distribution<double> unif(-2.0, 2.0);
    std::vector<double> x(dimension);
    for (auto& v : x) v = unif(rng);
    return x;
  });
}

std::vector<ChainOutput> sample_density(const LogDensity& target, const SamplerConfig& config,
                                        const StartGenerator& start) {
  config.validate();
  std::vector<ChainOutput> outputs(static_cast<std::size_t>(config.chains));
  run_chains(config.chains, config.parallel, [&](int c) {
    auto rng = chain_rng(config.seed, c);
    auto init = first_finite_start(target, start, rng);
    outputs[static_cast<std::size_t>(c)] = run_hmc_chain(target, std::move(init), config, rng);
  });
  return outputs;
}

SampleResult sample(const ModelSpec& spec, const RatingDataset& dataset, const SamplerConfig& config) {
  config.validate();
  const LogPosterior posterior(spec, dataset);
  const LogDensity target = [&posterior](std::span<const double> v, std::span<double> g) {
    return posterior.evaluate(v, g, true);
  };
  const auto outputs = sample_density(target, config, [&](std::mt19937_64& rng) {
    return to_unconstrained(init_params(spec, dataset, InitStrategy::jittered, rng())).values;
  });

  const Parameterization kind = posterior.kind();
  const int J = spec.raters;
  const int K = spec.categories;
  SampleResult result;
  result.draws.names = parameter_names(kind, J, K);
  result.draws.draws_per_chain = config.draws;
  const std::size_t dim = posterior.dimension();
  for (const auto& out : outputs) {
    std::vector<double> chain;
    chain.reserve(result.draws.names.size() * static_cast<std::size_t>(config.draws));
    for (int s = 0; s < config.draws; ++s) {
      const auto x = std::span(out.draws).subspan(static_cast<std::size_t>(s) * dim, dim);
      const auto flat = flatten(posterior.constrain(x));
      chain.insert(chain.end(), flat.begin(), flat.end());
    }
    result.draws.chains.push_back(std::move(chain));
  }

  Diagnostics& diag = result.diagnostics;
  diag = compute_diagnostics(result.draws);
  double accept = 0.0;
  for (const auto& out : outputs) {
    diag.chains.push_back(out.stats);
    diag.divergences += out.stats.divergences;
    accept += out.stats.mean_accept;
  }
  diag.mean_accept = accept / static_cast<double>(outputs.size());

  const double total = static_cast<double>(result.draws.total_draws());
  if (diag.divergences > 0.1 * total)
    diag.warnings.push_back(std::to_string(diag.divergences) + " of " + std::to_string(static_cast<long>(total)) +
                            " transitions diverged; results may be biased");

  // Mean error matrices across draws, to spot a switched labelling.
  std::vector<double> theta_mean(static_cast<std::size_t>(J) * K * K, 0.0);
  for (std::size_t c = 0; c < result.draws.chains.size(); ++c)
    for (int s = 0; s < config.draws; ++s) {
      const auto theta = error_matrices(unflatten(result.draws.row(c, s), kind, J, K));
      for (std::size_t i = 0; i < theta.size(); ++i) theta_mean[i] += theta[i] / total;
    }
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < K; ++k) {
      const double d = theta_mean[(static_cast<std::size_t>(j) * K + k) * K + k];
      if (d < 1.0 / K) {
        diag.warnings.push_back("posterior mean of theta[" + std::to_string(j + 1) + "," + std::to_string(k + 1) +
                                "," + std::to_string(k + 1) +
                                "] is below 1/K; the class labels may have switched");
      }
    }
  return result;
}

}  // namespace rater
