#include "rater/fit.hpp"

#include <cstdio>

#include "rater/error.hpp"
#include "rater/posterior.hpp"

namespace rater {

namespace {

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace

FitResult fit(const RatingDataset& dataset, const FitOptions& options, const ProgressSink& progress) {
  if (options.method == Method::mcmc) options.sampler.validate();
  if (options.tol && !(*options.tol > 0.0)) throw ArgumentError("tolerance must be positive");
  if (options.max_iter < 1) throw ArgumentError("iteration limit must be positive");

  RatingDataset data = options.variant == Variant::homogeneous ? homogenize(dataset) : dataset;
  ModelSpec spec = resolve_spec(options.variant, data.categories(), data.raters(), options.priors);
  FitResult r{.method = options.method,
              .spec = spec,
              .options = options,
              .data = data,
              .fingerprint = fingerprint(dataset),
              .mode = std::nullopt,
              .draws = {},
              .diagnostics = {},
              .warnings = {},
              .class_probabilities = {}};
  for (const auto& w : dataset.provenance().warnings) r.warnings.push_back(w);
  for (const auto& w : check_offdiagonal_beta(spec, options.method)) r.warnings.push_back(w);
  auto say = [&](const std::string& line) {
    if (progress) progress(line);
  };

  if (options.method == Method::optim) {
    const Params init = init_params(spec, data, options.init, options.sampler.seed);
    const bool hierarchical = parameterization_of(spec.variant) == Parameterization::hierarchical;
    MapResult m = hierarchical ? gradient_map_fit(spec, data, init, options.tol.value_or(1e-6), options.max_iter)
                               : em_fit(spec, data, init, options.tol.value_or(1e-8), options.max_iter);
    const char* algorithm = hierarchical ? "lbfgs" : "em";
    for (std::size_t i = 100; i < m.trace.size(); i += 100)
      say(std::string(algorithm) + " iteration " + std::to_string(i) + ": log posterior " + fixed(m.trace[i], 6));
    say(std::string(algorithm) + (m.converged ? " converged" : " stopped") + " after " +
        std::to_string(m.iterations) + " iterations: log posterior " + fixed(m.log_posterior, 6));
    for (auto& w : m.warnings) r.warnings.push_back(std::move(w));
    r.mode = ModeEstimate{std::move(m.params), m.log_posterior, m.converged, m.iterations, algorithm};
  } else {
    SampleResult s = sample(spec, data, options.sampler);
    for (std::size_t c = 0; c < s.diagnostics.chains.size(); ++c) {
      const auto& st = s.diagnostics.chains[c];
      say("chain " + std::to_string(c + 1) + ": step size " + fixed(st.step_size, 4) + ", acceptance " +
          fixed(st.mean_accept, 2) + ", divergences " + std::to_string(st.divergences));
    }
    r.draws = std::move(s.draws);
    r.diagnostics = std::move(s.diagnostics);
    for (const auto& w : r.diagnostics.warnings) r.warnings.push_back(w);
  }
  r.class_probabilities = class_probabilities(r);
  return r;
}

}  // namespace rater
