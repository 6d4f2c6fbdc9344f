#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "rater/dataset.hpp"

namespace rater {

enum class Variant { dawid_skene, class_conditional, hierarchical, homogeneous };
enum class Method { mcmc, optim };

Variant parse_variant(std::string_view name);
const char* variant_name(Variant v);
const char* variant_title(Variant v);
Method parse_method(std::string_view name);
const char* method_name(Method m);

// Pseudo-sample size and assumed accuracy used to build default error-matrix
// priors.
struct PseudocountSpec {
  double n = 8.0;
  double p = 0.6;
};

// Dirichlet prior rows for every rater's error matrix, stored densely as
// raters x K x K even when one matrix was broadcast.
struct DirichletPrior {
  int raters = 0;
  int categories = 0;
  std::vector<double> beta;

  double at(int j, int k, int kk) const {
    return beta[(static_cast<std::size_t>(j) * categories + k) * categories + kk];
  }
};

// Beta(beta1[k], beta2[k]) on the probability of a correct rating of class k.
struct ClassConditionalPrior {
  std::vector<double> beta1;
  std::vector<double> beta2;
};

// mu ~ Normal(0, 1), sigma ~ Half-Normal(0, 1), gamma ~ Normal(mu, sigma).
// Fixed; not user configurable.
struct HierarchicalPrior {
  static constexpr double mu_location = 0.0;
  static constexpr double mu_scale = 1.0;
  static constexpr double sigma_scale = 1.0;
};

using ErrorPrior = std::variant<DirichletPrior, ClassConditionalPrior, HierarchicalPrior>;

struct ModelSpec {
  Variant variant = Variant::dawid_skene;
  int categories = 0;
  int raters = 0;
  std::vector<double> alpha;
  ErrorPrior error_prior;
  bool alpha_default = true;
  bool beta_default = true;
};

struct PriorOverrides {
  std::optional<std::vector<double>> alpha;
  // Either K*K (broadcast to all raters) or raters*K*K values, row-major.
  std::optional<std::vector<double>> beta;
  std::optional<double> n;
  std::optional<double> p;
};

// K x K matrix (row-major) with N*p on the diagonal and N*(1-p)/(K-1)
// elsewhere; every row sums to N.
std::vector<double> default_beta(int categories, double n, double p);

// Equivalent (N, p) for the Stan user's guide prior (2.5K diagonal, 1 off).
PseudocountSpec stan_guide_pseudocounts(int categories);

ModelSpec resolve_spec(Variant variant, int categories, int raters,
                       const PriorOverrides& overrides = {});

// Warnings for MAP fits whose off-diagonal Dirichlet hyper-parameters are
// below 1 (the M-step can then hit the simplex boundary). Empty for MCMC.
std::vector<std::string> check_offdiagonal_beta(const ModelSpec& spec, Method method);

// Relabels every rating as coming from a single rater.
RatingDataset homogenize(const RatingDataset& dataset);

// Number of raters the model sees once the variant's data transformation is
// applied.
int effective_raters(Variant variant, const RatingDataset& dataset);

// Parses a K x K or stacked (raters blocks of K rows) CSV matrix of numbers.
std::vector<double> parse_beta_csv(std::string_view csv);

}  // namespace rater
