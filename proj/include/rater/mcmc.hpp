#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "rater/likelihood.hpp"

namespace rater {

struct SamplerConfig {
  int chains = 4;
  int warmup = 1000;
  int draws = 1000;
  std::uint64_t seed = 1;
  double target_accept = 0.8;
  int max_leapfrog = 1024;
  // Integration time L * step size, in units of the adapted metric.
  double trajectory_length = 2.0;
  bool parallel = true;

  void validate() const;
};

// Constrained-space draws. Each chain is a draws x names.size() row-major
// matrix.
struct PosteriorDraws {
  std::vector<std::string> names;
  int draws_per_chain = 0;
  std::vector<std::vector<double>> chains;

  std::size_t parameters() const { return names.size(); }
  std::size_t total_draws() const { return chains.size() * static_cast<std::size_t>(draws_per_chain); }
  double at(std::size_t chain, std::size_t draw, std::size_t param) const {
    return chains[chain][draw * names.size() + param];
  }
  std::span<const double> row(std::size_t chain, std::size_t draw) const {
    return std::span(chains[chain]).subspan(draw * names.size(), names.size());
  }
  std::vector<double> column(std::size_t chain, std::size_t param) const;
  std::vector<std::vector<double>> columns(std::size_t param) const;
  std::size_t index_of(const std::string& name) const;
};

struct DiagnosticValue {
  double value = 0.0;
  bool degenerate = false;
};

// Split R-hat (each chain halved). Zero within-chain variance gives +inf
// flagged as degenerate. Values are floored at 1.
DiagnosticValue split_rhat(const std::vector<std::vector<double>>& chains);

// Multi-chain effective sample size from autocorrelations truncated by
// Geyer's initial monotone sequence; capped at the total draw count.
DiagnosticValue effective_sample_size(const std::vector<std::vector<double>>& chains);

struct ParameterDiagnostics {
  std::string name;
  DiagnosticValue rhat;
  DiagnosticValue ess;
};

struct ChainStats {
  double mean_accept = 0.0;
  int divergences = 0;
  double step_size = 0.0;
  int leapfrog_steps = 0;
};

struct Diagnostics {
  std::vector<ParameterDiagnostics> parameters;
  std::vector<ChainStats> chains;
  int divergences = 0;
  double mean_accept = 0.0;
  std::vector<std::string> warnings;
};

Diagnostics compute_diagnostics(const PosteriorDraws& draws);

// Differentiable log density over R^n: returns the value, writes the
// gradient. Non-finite values are treated as divergent.
using LogDensity = std::function<double(std::span<const double>, std::span<double>)>;

struct ChainOutput {
  std::vector<double> draws;  // draws x dimension, unconstrained
  ChainStats stats;
};

// One adaptive HMC chain: step size by dual averaging, diagonal metric
// estimated over doubling windows (15% / 60% / 25% warmup split), fixed
// integration time, randomised per transition.
ChainOutput run_hmc_chain(const LogDensity& target, std::vector<double> init, const SamplerConfig& config,
                          std::mt19937_64& rng);

std::mt19937_64 chain_rng(std::uint64_t seed, int chain);

struct SampleResult {
  PosteriorDraws draws;
  Diagnostics diagnostics;
};

// Runs config.chains independent chains on the marginal posterior. Each
// chain starts from its own jittered init (Dirichlet noise around a
// diagonal-heavy error matrix) and redraws it up to five times when the
// density or gradient there is not finite.
SampleResult sample(const ModelSpec& spec, const RatingDataset& dataset, const SamplerConfig& config);

// Draws one unconstrained starting point from the chain's stream.
using StartGenerator = std::function<std::vector<double>(std::mt19937_64&)>;

// Runs the sampler on an arbitrary target and returns raw draws. Without a
// generator chains start from uniform(-2, 2) coordinates.
std::vector<ChainOutput> sample_density(const LogDensity& target, std::size_t dimension, const SamplerConfig& config);
std::vector<ChainOutput> sample_density(const LogDensity& target, const SamplerConfig& config,
                                        const StartGenerator& start);

}  // namespace rater
