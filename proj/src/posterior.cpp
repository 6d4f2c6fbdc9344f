#include "rater/posterior.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rater/error.hpp"

namespace rater {

namespace {

std::string bracket(std::string_view name, std::initializer_list<int> idx) {
  std::string s(name);
  s += '[';
  bool first = true;
  for (int i : idx) {
    if (!first) s += ',';
    s += std::to_string(i + 1);
    first = false;
  }
  return s + ']';
}

std::vector<std::string> theta_names(int J, int K) {
  std::vector<std::string> out;
  for (int j = 0; j < J; ++j)
    for (int k = 0; k < K; ++k)
      for (int kk = 0; kk < K; ++kk) out.push_back(bracket("theta", {j, k, kk}));
  return out;
}

// Calls f(params) for every draw, chains in order.
template <typename F>
void for_each_draw(const FitResult& fit, F&& f) {
  const auto& d = fit.draws;
  for (std::size_t c = 0; c < d.chains.size(); ++c)
    for (int s = 0; s < d.draws_per_chain; ++s)
      f(unflatten(d.row(c, static_cast<std::size_t>(s)), fit.kind(), fit.raters(), fit.categories()));
}

void require_draws(const FitResult& fit) {
  if (fit.method == Method::mcmc && fit.draws.total_draws() == 0) throw StateError("fit holds no draws");
  if (fit.method == Method::optim && !fit.mode) throw StateError("fit holds no mode");
}

}  // namespace

std::vector<double> conditional_z(const Params& params, const RatingTable& table) {
  check_dims(params, table);
  const int K = table.categories;
  const auto& pi = params_pi(params);
  std::vector<double> log_pi(K);
  std::transform(pi.begin(), pi.end(), log_pi.begin(), [](double p) { return std::log(p); });
  auto rows = unit_log_joint(table, log_pi, log_error_matrices(params));
  for (int u = 0; u < table.units(); ++u) {
    auto row = std::span(rows).subspan(static_cast<std::size_t>(u) * K, K);
    const double lse = log_sum_exp(row);
    if (!std::isfinite(lse)) throw NumericalError("class probabilities vanish for unit " + std::to_string(u + 1));
    for (double& v : row) v = std::exp(v - lse);
  }
  return rows;
}

std::vector<double> expand_units(const RatingTable& table, const std::vector<double>& unit_rows) {
  if (!table.grouped) return unit_rows;
  const std::size_t K = static_cast<std::size_t>(table.categories);
  std::vector<double> out;
  for (int u = 0; u < table.units(); ++u) {
    const auto n = static_cast<long long>(table.weight[u]);
    for (long long r = 0; r < n; ++r)
      out.insert(out.end(), unit_rows.begin() + u * K, unit_rows.begin() + (u + 1) * K);
  }
  return out;
}

std::vector<double> conditional_z(const Params& params, const RatingDataset& dataset) {
  const auto table = make_rating_table(dataset);
  return expand_units(table, conditional_z(params, table));
}

std::vector<double> class_probabilities(const FitResult& fit) {
  require_draws(fit);
  const auto table = make_rating_table(fit.data);
  if (fit.method == Method::optim) return expand_units(table, conditional_z(fit.mode->params, table));
  std::vector<double> acc(static_cast<std::size_t>(table.units()) * table.categories, 0.0);
  const double n = static_cast<double>(fit.draws.total_draws());
  for_each_draw(fit, [&](const Params& p) {
    const auto z = conditional_z(p, table);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += z[i];
  });
  for (double& v : acc) v /= n;
  return expand_units(table, acc);
}

Quantity parse_quantity(std::string_view name) {
  if (name == "pi") return Quantity::pi;
  if (name == "theta") return Quantity::theta;
  if (name == "z") return Quantity::z;
  if (name == "p") return Quantity::p;
  throw ArgumentError("unknown quantity '" + std::string(name) + "'");
}

const char* quantity_name(Quantity q) {
  switch (q) {
    case Quantity::pi: return "pi";
    case Quantity::theta: return "theta";
    case Quantity::z: return "z";
    case Quantity::p: return "p";
  }
  return "?";
}

std::vector<int> argmax_rows(const std::vector<double>& rows, int categories) {
  std::vector<int> out(rows.size() / static_cast<std::size_t>(categories));
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto begin = rows.begin() + static_cast<std::ptrdiff_t>(i * categories);
    out[i] = static_cast<int>(std::max_element(begin, begin + categories) - begin);
  }
  return out;
}

namespace {

// Values of one quantity at a parameter point, in the order of its names.
std::vector<double> quantity_values(const Params& p, Quantity which) {
  switch (which) {
    case Quantity::pi: return params_pi(p);
    case Quantity::theta: return error_matrices(p);
    case Quantity::p: return std::get<CcParams>(p).p;
    case Quantity::z: break;
  }
  throw ArgumentError("z has no parameter values");
}

std::vector<std::string> quantity_names(const FitResult& fit, Quantity which) {
  const int J = fit.raters();
  const int K = fit.categories();
  std::vector<std::string> out;
  switch (which) {
    case Quantity::pi:
      for (int k = 0; k < K; ++k) out.push_back(bracket("pi", {k}));
      return out;
    case Quantity::theta: return theta_names(J, K);
    case Quantity::p:
      for (int j = 0; j < J; ++j)
        for (int k = 0; k < K; ++k) out.push_back(bracket("p", {j, k}));
      return out;
    case Quantity::z:
      for (long long i = 0; i < fit.items(); ++i) out.push_back("z[" + std::to_string(i + 1) + "]");
      return out;
  }
  return out;
}

void check_quantity(const FitResult& fit, Quantity which) {
  if (which == Quantity::p && fit.kind() != Parameterization::class_conditional)
    throw ArgumentError("p exists only in the class-conditional model");
}

}  // namespace

PointEstimate point_estimate(const FitResult& fit, Quantity which) {
  require_draws(fit);
  check_quantity(fit, which);
  PointEstimate est;
  est.names = quantity_names(fit, which);
  if (which == Quantity::z) {
    const auto probs =
        fit.class_probabilities.empty() ? class_probabilities(fit) : fit.class_probabilities;
    for (int k : argmax_rows(probs, fit.categories())) est.values.push_back(k + 1);
    return est;
  }
  if (which == Quantity::theta && fit.kind() != Parameterization::dawid_skene)
    est.notes.push_back(std::string("theta derived from the ") +
                        (fit.kind() == Parameterization::class_conditional ? "p" : "gamma") + " parameters");
  if (fit.method == Method::optim) {
    est.values = quantity_values(fit.mode->params, which);
    return est;
  }
  // Plain column means of stored draws where the quantity is stored directly.
  const bool stored = which != Quantity::theta || fit.kind() == Parameterization::dawid_skene;
  if (stored) {
    for (const auto& name : est.names) {
      const std::size_t idx = fit.draws.index_of(name);
      double sum = 0.0;
      for (std::size_t c = 0; c < fit.draws.chains.size(); ++c)
        for (int s = 0; s < fit.draws.draws_per_chain; ++s) sum += fit.draws.at(c, static_cast<std::size_t>(s), idx);
      est.values.push_back(sum / static_cast<double>(fit.draws.total_draws()));
    }
    return est;
  }
  est.values.assign(est.names.size(), 0.0);
  for_each_draw(fit, [&](const Params& p) {
    const auto v = quantity_values(p, which);
    for (std::size_t i = 0; i < v.size(); ++i) est.values[i] += v[i];
  });
  for (double& v : est.values) v /= static_cast<double>(fit.draws.total_draws());
  return est;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw ArgumentError("quantile of no values");
  if (!(q >= 0.0 && q <= 1.0)) throw ArgumentError("quantile level must lie in [0, 1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (h - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

std::vector<Interval> posterior_interval(const FitResult& fit, double level, Quantity which) {
  if (fit.method == Method::optim) throw UnsupportedError("intervals are not available for optimisation fits");
  if (!(level > 0.0 && level < 1.0)) throw ArgumentError("interval level must lie in (0, 1)");
  if (which == Quantity::z) throw ArgumentError("intervals are defined for pi, theta and p");
  require_draws(fit);
  check_quantity(fit, which);
  const auto names = quantity_names(fit, which);
  std::vector<std::vector<double>> columns(names.size());
  for (auto& c : columns) c.reserve(fit.draws.total_draws());
  for_each_draw(fit, [&](const Params& p) {
    const auto v = quantity_values(p, which);
    for (std::size_t i = 0; i < v.size(); ++i) columns[i].push_back(v[i]);
  });
  const double tail = (1.0 - level) / 2.0;
  std::vector<Interval> out;
  for (std::size_t i = 0; i < names.size(); ++i)
    out.push_back({names[i], quantile(columns[i], tail), quantile(columns[i], 1.0 - tail)});
  return out;
}

namespace {

int draw_category(std::span<const double> probs, std::mt19937_64& rng) {
  std::discrete_distribution<int> dist(probs.begin(), probs.end());
  return dist(rng);
}

std::vector<int> simulate_from(const Params& params, const std::vector<double>* known_z, long long known_items,
                               const std::vector<DesignCell>& design, std::mt19937_64& rng) {
  const int J = params_raters(params);
  const int K = params_categories(params);
  const auto theta = error_matrices(params);
  const auto& pi = params_pi(params);
  std::vector<std::pair<long long, int>> z;  // item -> class, in first-seen order
  std::vector<int> out;
  out.reserve(design.size());
  for (const auto& cell : design) {
    if (cell.item < 0) throw ArgumentError("design item indices must be positive");
    if (cell.rater < 0 || cell.rater >= J)
      throw ArgumentError("design rater " + std::to_string(cell.rater + 1) + " is outside 1.." + std::to_string(J));
    auto it = std::find_if(z.begin(), z.end(), [&](const auto& e) { return e.first == cell.item; });
    if (it == z.end()) {
      int cls = 0;
      if (known_z && cell.item < known_items)
        cls = draw_category(std::span(*known_z).subspan(static_cast<std::size_t>(cell.item) * K, K), rng);
      else
        cls = draw_category(pi, rng);
      z.emplace_back(cell.item, cls);
      it = z.end() - 1;
    }
    const auto row = std::span(theta).subspan((static_cast<std::size_t>(cell.rater) * K + it->second) * K, K);
    out.push_back(draw_category(row, rng));
  }
  return out;
}

}  // namespace

std::vector<int> simulate_ratings(const Params& params, const std::vector<DesignCell>& design, std::uint64_t seed) {
  validate(params);
  std::mt19937_64 rng(seed);
  return simulate_from(params, nullptr, 0, design, rng);
}

std::vector<int> posterior_predict(const FitResult& fit, const std::vector<DesignCell>& design, std::uint64_t seed) {
  if (fit.kind() == Parameterization::hierarchical)
    throw UnsupportedError("posterior prediction is not available for the hierarchical model");
  require_draws(fit);
  std::mt19937_64 rng(seed);
  Params params = fit.method == Method::optim ? fit.mode->params : Params{};
  if (fit.method == Method::mcmc) {
    std::uniform_int_distribution<std::size_t> pick(0, fit.draws.total_draws() - 1);
    const std::size_t s = pick(rng);
    const auto per = static_cast<std::size_t>(fit.draws.draws_per_chain);
    params = unflatten(fit.draws.row(s / per, s % per), fit.kind(), fit.raters(), fit.categories());
  }
  std::vector<DesignCell> cells = design;
  if (fit.spec.variant == Variant::homogeneous)
    for (auto& c : cells) c.rater = 0;
  const auto z = conditional_z(params, fit.data);
  return simulate_from(params, &z, fit.items(), cells, rng);
}

WaicResult waic_from_log_likelihood(const std::vector<double>& loglik, std::size_t draws,
                                    const std::vector<double>& weight) {
  if (draws < 2) throw StateError("WAIC needs at least two draws");
  const std::size_t units = weight.size();
  if (loglik.size() != draws * units) throw ShapeError("log-likelihood matrix does not match draws x units");
  WaicResult r;
  r.weight = weight;
  std::vector<double> col(draws);
  for (std::size_t u = 0; u < units; ++u) {
    double mean = 0.0;
    for (std::size_t s = 0; s < draws; ++s) {
      col[s] = loglik[s * units + u];
      mean += col[s];
    }
    mean /= static_cast<double>(draws);
    // Shifted by the first draw so identical draws give exactly zero.
    double shift_sum = 0.0, shift_sq = 0.0;
    for (double v : col) {
      shift_sum += v - col[0];
      shift_sq += (v - col[0]) * (v - col[0]);
    }
    const double var = (shift_sq - shift_sum * shift_sum / static_cast<double>(draws)) / static_cast<double>(draws - 1);
    const double lppd = log_sum_exp(col) - std::log(static_cast<double>(draws));
    r.lppd_unit.push_back(lppd);
    r.p_waic_unit.push_back(var);
    r.lppd += weight[u] * lppd;
    r.p_waic += weight[u] * var;
  }
  r.waic = -2.0 * (r.lppd - r.p_waic);
  return r;
}

WaicResult waic(const FitResult& fit) {
  if (fit.method == Method::optim) throw UnsupportedError("WAIC is not available for optimisation fits");
  require_draws(fit);
  const auto table = make_rating_table(fit.data);
  std::vector<double> loglik;
  loglik.reserve(fit.draws.total_draws() * static_cast<std::size_t>(table.units()));
  for_each_draw(fit, [&](const Params& p) {
    const auto l = unit_log_likelihood(p, table);
    loglik.insert(loglik.end(), l.begin(), l.end());
  });
  return waic_from_log_likelihood(loglik, fit.draws.total_draws(), table.weight);
}

}  // namespace rater
