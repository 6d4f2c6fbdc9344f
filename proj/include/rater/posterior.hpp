#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "rater/fit.hpp"

namespace rater {

// Pr(z_i = k | params, y) for every item (items x K). Grouped patterns are
// expanded to one row per item.
std::vector<double> conditional_z(const Params& params, const RatingDataset& dataset);
// Same, one row per likelihood unit.
std::vector<double> conditional_z(const Params& params, const RatingTable& table);

// Repeats each grouped pattern's row once per tallied item.
std::vector<double> expand_units(const RatingTable& table, const std::vector<double>& unit_rows);

// Mean over draws of conditional_z, or conditional_z at the mode.
std::vector<double> class_probabilities(const FitResult& fit);

enum class Quantity { pi, theta, z, p };
Quantity parse_quantity(std::string_view name);
const char* quantity_name(Quantity q);

struct PointEstimate {
  std::vector<std::string> names;
  std::vector<double> values;
  std::vector<std::string> notes;
};

// MCMC: posterior means (theta derived per draw for the class-conditional
// and hierarchical variants) and the most probable class per item, ties to
// the smaller index. MAP: values at the mode.
PointEstimate point_estimate(const FitResult& fit, Quantity which);

// Row-wise argmax, ties to the smaller index.
std::vector<int> argmax_rows(const std::vector<double>& rows, int categories);

struct Interval {
  std::string name;
  double lower = 0.0;
  double upper = 0.0;
};

// Type-7 (linear interpolation) quantile of unsorted values.
double quantile(std::vector<double> values, double q);

// Central intervals at `level` from the pooled draws. Throws
// UnsupportedError for MAP fits.
std::vector<Interval> posterior_interval(const FitResult& fit, double level, Quantity which);

// One (item, rater) cell to simulate. Items at or beyond the fitted item
// count are new and take their class from pi.
struct DesignCell {
  long long item = 0;
  int rater = 0;
};

// Ratings (0-based categories) simulated from the posterior predictive. One
// parameter draw is picked per call; each item's class is drawn once.
std::vector<int> posterior_predict(const FitResult& fit, const std::vector<DesignCell>& design,
                                   std::uint64_t seed);

// Ratings generated from fixed parameters, each item's class drawn from pi.
std::vector<int> simulate_ratings(const Params& params, const std::vector<DesignCell>& design, std::uint64_t seed);

struct WaicResult {
  double waic = 0.0;
  double lppd = 0.0;
  double p_waic = 0.0;
  // Per likelihood unit (item, or pattern for grouped data).
  std::vector<double> lppd_unit;
  std::vector<double> p_waic_unit;
  std::vector<double> weight;
};

// From a draws x units log-likelihood matrix (row-major) and unit weights.
WaicResult waic_from_log_likelihood(const std::vector<double>& loglik, std::size_t draws,
                                    const std::vector<double>& weight);
WaicResult waic(const FitResult& fit);

}  // namespace rater
