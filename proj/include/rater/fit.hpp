#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "rater/mcmc.hpp"
#include "rater/optimize.hpp"

namespace rater {

struct FitOptions {
  Variant variant = Variant::dawid_skene;
  Method method = Method::mcmc;
  PriorOverrides priors;
  SamplerConfig sampler;
  InitStrategy init = InitStrategy::majority_vote;
  std::optional<double> tol;  // method default when unset
  int max_iter = 1000;
};

struct ModeEstimate {
  Params params;
  double log_posterior = 0.0;
  bool converged = false;
  int iterations = 0;
  std::string algorithm;  // "em" or "lbfgs"
};

// Everything a fit produces. `data` is the dataset the model saw (already
// homogenized for the homogeneous variant).
struct FitResult {
  Method method = Method::mcmc;
  ModelSpec spec;
  FitOptions options;
  RatingDataset data;
  std::string fingerprint;
  std::optional<ModeEstimate> mode;
  PosteriorDraws draws;
  Diagnostics diagnostics;
  std::vector<std::string> warnings;
  // items x K, Rao-Blackwellized for MCMC, conditional on the mode for MAP.
  std::vector<double> class_probabilities;

  Parameterization kind() const { return parameterization_of(spec.variant); }
  int categories() const { return spec.categories; }
  int raters() const { return spec.raters; }
  long long items() const { return data.items(); }
};

using ProgressSink = std::function<void(const std::string&)>;

// Resolves the prior, prepares the data for the variant and runs the chosen
// method. `fingerprint` is computed on the dataset as given.
FitResult fit(const RatingDataset& dataset, const FitOptions& options, const ProgressSink& progress = {});

}  // namespace rater
