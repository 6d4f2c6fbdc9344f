#pragma once

#include <span>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "rater/dataset.hpp"
#include "rater/model.hpp"

namespace rater {

// Constrained parameter sets. Error matrices are stored raters x K x K,
// row-major, row (j, k) being rater j's response distribution for true class k.
struct DsParams {
  int raters = 0;
  int categories = 0;
  std::vector<double> pi;
  std::vector<double> theta;
};

struct CcParams {
  int raters = 0;
  int categories = 0;
  std::vector<double> pi;
  std::vector<double> p;  // raters x K probability of a correct rating
};

struct HdsParams {
  int raters = 0;
  int categories = 0;
  std::vector<double> pi;
  std::vector<double> mu;     // K x K
  std::vector<double> sigma;  // K x K, positive
  std::vector<double> gamma;  // raters x K x K; theta rows are softmax(gamma rows)
};

using Params = std::variant<DsParams, CcParams, HdsParams>;

enum class Parameterization { dawid_skene, class_conditional, hierarchical };

Parameterization parameterization_of(Variant variant);
Parameterization parameterization_of(const Params& params);
int params_raters(const Params& params);
int params_categories(const Params& params);
const std::vector<double>& params_pi(const Params& params);

// theta materialised from any parameterization.
std::vector<double> error_matrices(const Params& params);
// log theta, computed without going through theta where possible.
std::vector<double> log_error_matrices(const Params& params);

// Throws DomainError when a simplex, probability or scale is invalid.
void validate(const Params& params);

// Flat constrained layout used for stored draws and archives.
std::vector<double> flatten(const Params& params);
Params unflatten(std::span<const double> values, Parameterization kind, int raters, int categories);
std::vector<std::string> parameter_names(Parameterization kind, int raters, int categories);
std::size_t constrained_size(Parameterization kind, int raters, int categories);

// Ratings grouped into likelihood units: one unit per item (long or wide
// data) or per distinct pattern (grouped data, weighted by its tally).
struct RatingTable {
  int raters = 0;
  int categories = 0;
  bool grouped = false;
  std::vector<std::size_t> offsets{0};
  std::vector<int> rater;
  std::vector<int> rating;
  std::vector<double> weight;

  int units() const { return static_cast<int>(weight.size()); }
};

RatingTable make_rating_table(const RatingDataset& dataset);

// Unnormalised log Pr(y_u, z_u = k) for every unit u and class k (units x K).
std::vector<double> unit_log_joint(const RatingTable& table, std::span<const double> log_pi,
                                   std::span<const double> log_theta);
// log Pr(y_u) per unit, unweighted.
std::vector<double> unit_log_likelihood(const Params& params, const RatingTable& table);
// Throws ShapeError unless the parameters have the table's rater and
// category counts.
void check_dims(const Params& params, const RatingTable& table);

double log_likelihood(const Params& params, const RatingTable& table);
// Marginal log-likelihood of long (or wide) data: one term per item.
double log_likelihood_long(const Params& params, const RatingDataset& dataset);
// Marginal log-likelihood of grouped data: one tally-weighted term per pattern.
double log_likelihood_grouped(const Params& params, const RatingDataset& dataset);
// Picks the grouped form automatically for grouped data.
double log_likelihood(const Params& params, const RatingDataset& dataset);

// Normalised log prior density, constants included.
double log_prior(const Params& params, const ModelSpec& spec);
double log_posterior(const Params& params, const ModelSpec& spec, const RatingDataset& dataset);

struct UnconstrainedVector {
  Parameterization kind = Parameterization::dawid_skene;
  int raters = 0;
  int categories = 0;
  std::vector<double> values;
};

std::size_t unconstrained_size(Parameterization kind, int raters, int categories);
// Simplexes use the additive log-ratio with the last category as reference,
// (0,1) scalars use the logit and positive scalars the log.
UnconstrainedVector to_unconstrained(const Params& params);
Params from_unconstrained(const UnconstrainedVector& v);
Params from_unconstrained(std::span<const double> v, Parameterization kind, int raters, int categories);
// log |d constrained / d unconstrained| of the transform at v.
double log_jacobian(std::span<const double> v, Parameterization kind, int raters, int categories);

// Log posterior density over unconstrained coordinates with analytic
// gradient. Holds the rating table so repeated evaluation is cheap; safe to
// share between threads.
class LogPosterior {
 public:
  LogPosterior(ModelSpec spec, const RatingDataset& dataset);
  LogPosterior(ModelSpec spec, RatingTable table);

  std::size_t dimension() const { return dimension_; }
  const ModelSpec& spec() const { return spec_; }
  const RatingTable& table() const { return table_; }
  Parameterization kind() const { return kind_; }

  // Returns the log density (possibly non-finite) and writes the gradient.
  // Without the Jacobian this is the constrained-space density expressed in
  // unconstrained coordinates, whose maximiser is the MAP estimate.
  double evaluate(std::span<const double> v, std::span<double> gradient,
                  bool include_jacobian = true) const;

  Params constrain(std::span<const double> v) const;

 private:
  ModelSpec spec_;
  RatingTable table_;
  Parameterization kind_;
  std::size_t dimension_;
};

// Checked entry point: throws NumericalError naming the first non-finite
// coordinate.
std::pair<double, std::vector<double>> log_posterior_unconstrained(std::span<const double> v,
                                                                   const ModelSpec& spec,
                                                                   const RatingDataset& dataset);

double log_sum_exp(std::span<const double> values);

}  // namespace rater
