#include "rater/model.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "rater/error.hpp"

namespace rater {

Variant parse_variant(std::string_view name) {
  std::string s(name);
  for (auto& c : s)
    if (c == '_') c = '-';
  if (s == "dawid-skene") return Variant::dawid_skene;
  if (s == "class-conditional") return Variant::class_conditional;
  if (s == "hierarchical") return Variant::hierarchical;
  if (s == "homogeneous") return Variant::homogeneous;
  throw ArgumentError("unknown model '" + std::string(name) + "'");
}

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::dawid_skene: return "dawid-skene";
    case Variant::class_conditional: return "class-conditional";
    case Variant::hierarchical: return "hierarchical";
    case Variant::homogeneous: return "homogeneous";
  }
  return "?";
}

const char* variant_title(Variant v) {
  switch (v) {
    case Variant::dawid_skene: return "Bayesian Dawid and Skene Model";
    case Variant::class_conditional: return "Bayesian Class Conditional Dawid and Skene Model";
    case Variant::hierarchical: return "Bayesian Hierarchical Dawid and Skene Model";
    case Variant::homogeneous: return "Bayesian Homogeneous Dawid and Skene Model";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  if (name == "mcmc") return Method::mcmc;
  if (name == "optim") return Method::optim;
  throw ArgumentError("unknown method '" + std::string(name) + "'");
}

const char* method_name(Method m) { return m == Method::mcmc ? "mcmc" : "optim"; }

std::vector<double> default_beta(int categories, double n, double p) {
  if (categories < 2) throw DomainError("default error-matrix prior needs at least 2 categories");
  if (!(n > 0)) throw DomainError("prior pseudo-count N must be positive");
  if (!(p > 0 && p < 1)) throw DomainError("prior accuracy p must lie in (0, 1)");
  const auto k = static_cast<std::size_t>(categories);
  std::vector<double> beta(k * k, n * (1.0 - p) / (categories - 1));
  for (std::size_t i = 0; i < k; ++i) beta[i * k + i] = n * p;
  return beta;
}

PseudocountSpec stan_guide_pseudocounts(int categories) {
  if (categories < 2) throw DomainError("need at least 2 categories");
  double n = 3.5 * categories - 1.0;
  return {n, 2.5 * categories / n};
}

namespace {

void require_positive(const std::vector<double>& v, const char* what) {
  for (double x : v)
    if (!(x > 0) || !std::isfinite(x))
      throw DomainError(std::string(what) + " hyper-parameters must be positive and finite");
}

}  // namespace

ModelSpec resolve_spec(Variant variant, int categories, int raters, const PriorOverrides& o) {
  if (categories < 2) throw DomainError("models need at least 2 categories");
  if (variant == Variant::homogeneous) raters = 1;
  if (raters < 1) throw DomainError("models need at least one rater");
  ModelSpec spec;
  spec.variant = variant;
  spec.categories = categories;
  spec.raters = raters;
  const auto k = static_cast<std::size_t>(categories);

  if (o.alpha) {
    if (o.alpha->size() != k)
      throw ShapeError("alpha has " + std::to_string(o.alpha->size()) + " entries, expected " +
                       std::to_string(k));
    require_positive(*o.alpha, "alpha");
    spec.alpha = *o.alpha;
    spec.alpha_default = false;
  } else {
    spec.alpha.assign(k, 3.0);
  }

  PseudocountSpec pc;
  if (o.n) pc.n = *o.n;
  if (o.p) pc.p = *o.p;
  bool pc_custom = o.n.has_value() || o.p.has_value();
  if (!(pc.n > 0)) throw DomainError("prior pseudo-count N must be positive");
  if (!(pc.p > 0 && pc.p < 1)) throw DomainError("prior accuracy p must lie in (0, 1)");

  switch (variant) {
    case Variant::dawid_skene:
    case Variant::homogeneous: {
      DirichletPrior prior{raters, categories, {}};
      if (o.beta) {
        if (o.n || o.p) throw ArgumentError("give either an explicit beta or N/p, not both");
        require_positive(*o.beta, "beta");
        if (o.beta->size() == k * k) {
          prior.beta.reserve(static_cast<std::size_t>(raters) * k * k);
          for (int j = 0; j < raters; ++j) prior.beta.insert(prior.beta.end(), o.beta->begin(), o.beta->end());
        } else if (o.beta->size() == static_cast<std::size_t>(raters) * k * k) {
          prior.beta = *o.beta;
        } else {
          throw ShapeError("beta has " + std::to_string(o.beta->size()) + " entries; expected " +
                           std::to_string(k * k) + " (one matrix) or " +
                           std::to_string(static_cast<std::size_t>(raters) * k * k) + " (one per rater)");
        }
        spec.beta_default = false;
      } else {
        auto row = default_beta(categories, pc.n, pc.p);
        for (int j = 0; j < raters; ++j) prior.beta.insert(prior.beta.end(), row.begin(), row.end());
        spec.beta_default = !pc_custom;
      }
      spec.error_prior = std::move(prior);
      break;
    }
    case Variant::class_conditional: {
      if (o.beta) throw ArgumentError("the class-conditional model takes N/p, not a beta matrix");
      spec.error_prior = ClassConditionalPrior{std::vector<double>(k, pc.n * pc.p),
                                               std::vector<double>(k, pc.n * (1.0 - pc.p))};
      spec.beta_default = !pc_custom;
      break;
    }
    case Variant::hierarchical:
      if (o.beta || o.n || o.p)
        throw ArgumentError("the hierarchical model has a fixed prior on the error matrices");
      spec.error_prior = HierarchicalPrior{};
      break;
  }
  return spec;
}

std::vector<std::string> check_offdiagonal_beta(const ModelSpec& spec, Method method) {
  std::vector<std::string> warnings;
  if (method != Method::optim) return warnings;
  const auto* prior = std::get_if<DirichletPrior>(&spec.error_prior);
  if (!prior) return warnings;
  double smallest = INFINITY;
  for (int j = 0; j < prior->raters; ++j)
    for (int k = 0; k < prior->categories; ++k)
      for (int kk = 0; kk < prior->categories; ++kk)
        if (k != kk) smallest = std::min(smallest, prior->at(j, k, kk));
  if (smallest < 1.0) {
    std::ostringstream s;
    s << "off-diagonal beta hyper-parameters below 1 (smallest " << smallest
      << ") can make optimisation unstable; pass a beta matrix with off-diagonal entries >= 1 "
         "or use --method mcmc";
    warnings.push_back(s.str());
  }
  return warnings;
}

RatingDataset homogenize(const RatingDataset& dataset) {
  auto l = to_long(dataset);
  if (l.raters() == 1) return l;
  LongRatings out = *l.as_long();
  for (auto& e : out.entries) e.rater = 0;
  out.raters = 1;
  return RatingDataset(std::move(out), l.item_labels(), {"1"}, l.provenance());
}

int effective_raters(Variant variant, const RatingDataset& dataset) {
  return variant == Variant::homogeneous ? 1 : dataset.raters();
}

std::vector<double> parse_beta_csv(std::string_view csv) {
  std::vector<double> values;
  std::size_t width = 0;
  std::size_t line_no = 0;
  std::istringstream in{std::string(csv)};
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    bool header = false;
    while (std::getline(cells, cell, ',')) {
      auto b = cell.find_first_not_of(" \t\r");
      auto e = cell.find_last_not_of(" \t\r");
      std::string t = b == std::string::npos ? "" : cell.substr(b, e - b + 1);
      double v = 0;
      auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
      if (ec != std::errc() || ptr != t.data() + t.size()) {
        header = true;
        break;
      }
      row.push_back(v);
    }
    if (header) {
      if (values.empty() && width == 0) continue;  // header line
      throw ParseError("non-numeric beta entry", line_no);
    }
    if (width == 0) width = row.size();
    if (row.size() != width) throw ParseError("ragged beta matrix", line_no);
    values.insert(values.end(), row.begin(), row.end());
  }
  if (values.empty()) throw EmptyDataError("beta file is empty");
  std::size_t rows = values.size() / width;
  if (rows % width != 0) throw ShapeError("beta file must hold K x K blocks");
  return values;
}

}  // namespace rater
