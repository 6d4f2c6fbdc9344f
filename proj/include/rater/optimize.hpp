#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rater/likelihood.hpp"

namespace rater {

enum class InitStrategy { uniform_diagonal, jittered, majority_vote };

InitStrategy parse_init_strategy(std::string_view name);
const char* init_strategy_name(InitStrategy s);

struct MapResult {
  Params params;
  double log_posterior = 0.0;
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
  // Log posterior after each iteration; the first entry is the start point.
  std::vector<double> trace;
  // units x K soft class assignments at the returned parameters.
  std::vector<double> responsibilities;
};

inline constexpr double kEmClamp = 1e-8;

// Starting values. uniform_diagonal: pi uniform and 0.7 on every error-matrix
// diagonal. majority_vote: one M-step from plurality-vote class assignments
// (ties split evenly). jittered: uniform_diagonal plus seeded Dirichlet noise.
Params init_params(const ModelSpec& spec, const RatingDataset& dataset, InitStrategy strategy,
                   std::uint64_t seed = 0);

// units x K plurality-vote assignments used by the majority_vote start.
std::vector<double> majority_vote_responsibilities(const RatingTable& table);

// Normalised Pr(z_u = k | params, y) for every unit.
std::vector<double> responsibilities(const Params& params, const RatingTable& table);

// Expectation-maximisation of the log posterior for the Dawid-Skene and
// class-conditional parameterizations (homogeneous data is plain
// Dawid-Skene). Stops once the log posterior changes by less than tol.
MapResult em_fit(const ModelSpec& spec, const RatingDataset& dataset, const Params& init,
                 double tol = 1e-8, int max_iter = 1000);

// Quasi-Newton ascent on unconstrained coordinates, without the transform
// Jacobian, so the result is the constrained-space posterior mode. Works for
// every variant; stops once the gradient max-norm drops below tol.
MapResult gradient_map_fit(const ModelSpec& spec, const RatingDataset& dataset, const Params& init,
                           double tol = 1e-6, int max_iter = 1000);

// Objective writes its gradient into the span and returns its value.
using Objective = std::function<double(std::span<const double>, std::span<double>)>;

struct AscentResult {
  std::vector<double> x;
  double value = 0.0;
  double gradient_norm = 0.0;  // max-norm
  bool converged = false;
  int iterations = 0;
  std::vector<double> trace;
};

// Limited-memory BFGS with backtracking (Armijo) line search, maximising f.
AscentResult maximize_lbfgs(const Objective& f, std::vector<double> x0, double tol, int max_iter,
                            int memory = 10);

}  // namespace rater
