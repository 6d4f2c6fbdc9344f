#include "rater/archive.hpp"

#include <sodium.h>

#include <bit>
#include <cstring>
#include <json.hpp>

#include "rater/error.hpp"

namespace rater {

namespace {

using nlohmann::json;

constexpr const char* kFormatTag = "rater-fit";
constexpr int kVersion = 1;

std::string encode(const std::vector<double>& values) {
  std::vector<unsigned char> bytes(values.size() * 8);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint64_t>(values[i]);
    for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  const int variant = sodium_base64_VARIANT_ORIGINAL;
  std::string out(sodium_base64_ENCODED_LEN(bytes.size(), variant), '\0');
  sodium_bin2base64(out.data(), out.size(), bytes.data(), bytes.size(), variant);
  out.resize(std::strlen(out.c_str()));
  return out;
}

std::vector<double> decode(const std::string& text) {
  std::vector<unsigned char> bytes(text.size() * 3 / 4 + 3);
  std::size_t len = 0;
  if (sodium_base642bin(bytes.data(), bytes.size(), text.data(), text.size(), nullptr, &len, nullptr,
                        sodium_base64_VARIANT_ORIGINAL) != 0 ||
      len % 8 != 0)
    throw ArchiveError("corrupt numeric block");
  std::vector<double> out(len / 8);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
    out[i] = std::bit_cast<double>(bits);
  }
  return out;
}

std::vector<double> decode_sized(const json& j, std::size_t expected, const char* what) {
  auto v = decode(j.get<std::string>());
  if (v.size() != expected) throw ArchiveError(std::string("block '") + what + "' has the wrong length");
  return v;
}

json spec_json(const ModelSpec& spec) {
  json j{{"variant", variant_name(spec.variant)},
         {"categories", spec.categories},
         {"raters", spec.raters},
         {"alpha", encode(spec.alpha)},
         {"alpha_default", spec.alpha_default},
         {"beta_default", spec.beta_default}};
  if (const auto* d = std::get_if<DirichletPrior>(&spec.error_prior))
    j["error_prior"] = {{"kind", "dirichlet"}, {"beta", encode(d->beta)}};
  else if (const auto* c = std::get_if<ClassConditionalPrior>(&spec.error_prior))
    j["error_prior"] = {{"kind", "beta"}, {"beta1", encode(c->beta1)}, {"beta2", encode(c->beta2)}};
  else
    j["error_prior"] = {{"kind", "hierarchical"}};
  return j;
}

ModelSpec spec_from(const json& j) {
  ModelSpec s;
  s.variant = parse_variant(j.at("variant").get<std::string>());
  s.categories = j.at("categories").get<int>();
  s.raters = j.at("raters").get<int>();
  if (s.categories < 2 || s.raters < 1) throw ArchiveError("invalid model dimensions");
  const auto K = static_cast<std::size_t>(s.categories);
  s.alpha = decode_sized(j.at("alpha"), K, "alpha");
  s.alpha_default = j.at("alpha_default").get<bool>();
  s.beta_default = j.at("beta_default").get<bool>();
  const auto& p = j.at("error_prior");
  const auto kind = p.at("kind").get<std::string>();
  if (kind == "dirichlet")
    s.error_prior = DirichletPrior{s.raters, s.categories, decode_sized(p.at("beta"), s.raters * K * K, "beta")};
  else if (kind == "beta")
    s.error_prior = ClassConditionalPrior{decode_sized(p.at("beta1"), K, "beta1"), decode_sized(p.at("beta2"), K, "beta2")};
  else if (kind == "hierarchical")
    s.error_prior = HierarchicalPrior{};
  else
    throw ArchiveError("unknown prior kind " + kind);
  if (parameterization_of(s.variant) == Parameterization::dawid_skene && kind != "dirichlet")
    throw ArchiveError("prior does not match the model");
  return s;
}

json data_json(const RatingDataset& d) {
  json j{{"format", format_name(d.format())},
         {"item_labels", d.item_labels()},
         {"rater_labels", d.rater_labels()},
         {"source", d.provenance().source},
         {"options", d.provenance().options},
         {"warnings", d.provenance().warnings}};
  if (const auto* l = d.as_long()) {
    std::vector<int> flat;
    for (const auto& e : l->entries) flat.insert(flat.end(), {e.item, e.rater, e.rating});
    j["items"] = l->items;
    j["categories"] = l->categories;
    j["entries"] = flat;
  } else if (const auto* w = d.as_wide()) {
    j["items"] = w->items;
    j["categories"] = w->categories;
    j["cells"] = w->cells;
  } else {
    const auto& g = *d.as_grouped();
    j["categories"] = g.categories;
    j["patterns"] = g.patterns;
    j["tallies"] = g.tallies;
  }
  return j;
}

RatingDataset data_from(const json& j) {
  const auto format = parse_format_name(j.at("format").get<std::string>());
  auto items = j.at("item_labels").get<std::vector<std::string>>();
  auto raters = j.at("rater_labels").get<std::vector<std::string>>();
  Provenance prov{j.at("source").get<std::string>(), j.at("options").get<std::string>(),
                  j.at("warnings").get<std::vector<std::string>>()};
  const int J = static_cast<int>(raters.size());
  const int K = j.at("categories").get<int>();
  RatingDataset::Payload payload;
  if (format == DataFormat::long_format) {
    const auto flat = j.at("entries").get<std::vector<int>>();
    if (flat.size() % 3 != 0) throw ArchiveError("long entries are not triples");
    LongRatings l{{}, j.at("items").get<int>(), J, K};
    for (std::size_t i = 0; i < flat.size(); i += 3) l.entries.push_back({flat[i], flat[i + 1], flat[i + 2]});
    payload = std::move(l);
  } else if (format == DataFormat::wide) {
    payload = WideRatings{j.at("items").get<int>(), J, K, j.at("cells").get<std::vector<int>>()};
  } else {
    payload = GroupedRatings{J, K, j.at("patterns").get<std::vector<int>>(),
                             j.at("tallies").get<std::vector<long long>>()};
  }
  return RatingDataset(std::move(payload), std::move(items), std::move(raters), std::move(prov));
}

json options_json(const FitOptions& o) {
  json j{{"init", init_strategy_name(o.init)},
         {"max_iter", o.max_iter},
         {"chains", o.sampler.chains},
         {"warmup", o.sampler.warmup},
         {"draws", o.sampler.draws},
         {"seed", o.sampler.seed},
         {"target_accept", encode({o.sampler.target_accept})},
         {"max_leapfrog", o.sampler.max_leapfrog},
         {"trajectory_length", encode({o.sampler.trajectory_length})}};
  j["tol"] = o.tol ? json(encode({*o.tol})) : json(nullptr);
  return j;
}

FitOptions options_from(const json& j, const ModelSpec& spec, Method method) {
  FitOptions o;
  o.variant = spec.variant;
  o.method = method;
  o.init = parse_init_strategy(j.at("init").get<std::string>());
  o.max_iter = j.at("max_iter").get<int>();
  o.sampler.chains = j.at("chains").get<int>();
  o.sampler.warmup = j.at("warmup").get<int>();
  o.sampler.draws = j.at("draws").get<int>();
  o.sampler.seed = j.at("seed").get<std::uint64_t>();
  o.sampler.target_accept = decode_sized(j.at("target_accept"), 1, "target_accept")[0];
  o.sampler.max_leapfrog = j.at("max_leapfrog").get<int>();
  o.sampler.trajectory_length = decode_sized(j.at("trajectory_length"), 1, "trajectory_length")[0];
  if (!j.at("tol").is_null()) o.tol = decode_sized(j.at("tol"), 1, "tol")[0];
  return o;
}

json diagnostics_json(const Diagnostics& d) {
  std::vector<double> rhat, ess;
  std::vector<bool> rhat_flag, ess_flag;
  for (const auto& p : d.parameters) {
    rhat.push_back(p.rhat.value);
    ess.push_back(p.ess.value);
    rhat_flag.push_back(p.rhat.degenerate);
    ess_flag.push_back(p.ess.degenerate);
  }
  json chains = json::array();
  for (const auto& c : d.chains)
    chains.push_back({{"mean_accept", encode({c.mean_accept})},
                      {"divergences", c.divergences},
                      {"step_size", encode({c.step_size})},
                      {"leapfrog_steps", c.leapfrog_steps}});
  return {{"rhat", encode(rhat)},         {"rhat_degenerate", rhat_flag},
          {"ess", encode(ess)},           {"ess_degenerate", ess_flag},
          {"chains", chains},             {"divergences", d.divergences},
          {"mean_accept", encode({d.mean_accept})}, {"warnings", d.warnings}};
}

Diagnostics diagnostics_from(const json& j, const std::vector<std::string>& names) {
  Diagnostics d;
  const auto n = names.size();
  const auto rhat = decode_sized(j.at("rhat"), n, "rhat");
  const auto ess = decode_sized(j.at("ess"), n, "ess");
  const auto rf = j.at("rhat_degenerate").get<std::vector<bool>>();
  const auto ef = j.at("ess_degenerate").get<std::vector<bool>>();
  if (rf.size() != n || ef.size() != n) throw ArchiveError("diagnostic flags have the wrong length");
  for (std::size_t i = 0; i < n; ++i) d.parameters.push_back({names[i], {rhat[i], rf[i]}, {ess[i], ef[i]}});
  for (const auto& c : j.at("chains"))
    d.chains.push_back({decode_sized(c.at("mean_accept"), 1, "mean_accept")[0], c.at("divergences").get<int>(),
                        decode_sized(c.at("step_size"), 1, "step_size")[0], c.at("leapfrog_steps").get<int>()});
  d.divergences = j.at("divergences").get<int>();
  d.mean_accept = decode_sized(j.at("mean_accept"), 1, "mean_accept")[0];
  d.warnings = j.at("warnings").get<std::vector<std::string>>();
  return d;
}

}  // namespace

std::string save_archive(const FitResult& fit) {
  if (sodium_init() < 0) throw ArchiveError("base64 codec unavailable");
  json j;
  j["format"] = kFormatTag;
  j["version"] = kVersion;
  j["method"] = method_name(fit.method);
  j["spec"] = spec_json(fit.spec);
  j["options"] = options_json(fit.options);
  j["fingerprint"] = fit.fingerprint;
  j["data_fingerprint"] = fingerprint(fit.data);
  j["data"] = data_json(fit.data);
  j["warnings"] = fit.warnings;
  j["class_probabilities"] = encode(fit.class_probabilities);
  if (fit.mode) {
    j["mode"] = {{"algorithm", fit.mode->algorithm},
                 {"log_posterior", encode({fit.mode->log_posterior})},
                 {"converged", fit.mode->converged},
                 {"iterations", fit.mode->iterations},
                 {"values", encode(flatten(fit.mode->params))}};
  } else {
    j["mode"] = nullptr;
  }
  if (fit.method == Method::mcmc) {
    json chains = json::array();
    for (const auto& c : fit.draws.chains) chains.push_back(encode(c));
    j["draws"] = {{"names", fit.draws.names}, {"draws_per_chain", fit.draws.draws_per_chain}, {"chains", chains}};
    j["diagnostics"] = diagnostics_json(fit.diagnostics);
  } else {
    j["draws"] = nullptr;
    j["diagnostics"] = nullptr;
  }
  return j.dump(1) + "\n";
}

FitResult load_archive(std::string_view text) {
  if (sodium_init() < 0) throw ArchiveError("base64 codec unavailable");
  try {
    const json j = json::parse(text);
    if (j.at("format").get<std::string>() != kFormatTag) throw ArchiveError("not a fit archive");
    if (j.at("version").get<int>() != kVersion) throw ArchiveError("unsupported archive version");
    const Method method = parse_method(j.at("method").get<std::string>());
    const ModelSpec spec = spec_from(j.at("spec"));
    RatingDataset data = data_from(j.at("data"));
    if (fingerprint(data) != j.at("data_fingerprint").get<std::string>())
      throw ArchiveError("embedded data does not match its fingerprint");
    if (data.categories() != spec.categories || effective_raters(spec.variant, data) != spec.raters)
      throw ArchiveError("embedded data does not match the model dimensions");
    FitResult r{.method = method,
                .spec = spec,
                .options = options_from(j.at("options"), spec, method),
                .data = std::move(data),
                .fingerprint = j.at("fingerprint").get<std::string>(),
                .mode = std::nullopt,
                .draws = {},
                .diagnostics = {},
                .warnings = {},
                .class_probabilities = {}};
    r.warnings = j.at("warnings").get<std::vector<std::string>>();
    const auto kind = r.kind();
    const std::size_t P = constrained_size(kind, spec.raters, spec.categories);
    if (!j.at("mode").is_null()) {
      const auto& m = j.at("mode");
      const auto values = decode_sized(m.at("values"), P, "mode");
      r.mode = ModeEstimate{unflatten(values, kind, spec.raters, spec.categories),
                            decode_sized(m.at("log_posterior"), 1, "log_posterior")[0], m.at("converged").get<bool>(),
                            m.at("iterations").get<int>(), m.at("algorithm").get<std::string>()};
      validate(r.mode->params);
    }
    if (method == Method::optim && !r.mode) throw ArchiveError("optimisation archive without a mode");
    if (method == Method::mcmc) {
      const auto& d = j.at("draws");
      r.draws.names = d.at("names").get<std::vector<std::string>>();
      if (r.draws.names != parameter_names(kind, spec.raters, spec.categories))
        throw ArchiveError("draw names do not match the model");
      r.draws.draws_per_chain = d.at("draws_per_chain").get<int>();
      if (r.draws.draws_per_chain < 1) throw ArchiveError("no draws");
      for (const auto& c : d.at("chains"))
        r.draws.chains.push_back(decode_sized(c, P * static_cast<std::size_t>(r.draws.draws_per_chain), "draws"));
      if (r.draws.chains.empty()) throw ArchiveError("no chains");
      r.diagnostics = diagnostics_from(j.at("diagnostics"), r.draws.names);
    }
    r.class_probabilities = decode_sized(j.at("class_probabilities"),
                                         static_cast<std::size_t>(r.items()) * spec.categories, "class_probabilities");
    return r;
  } catch (const ArchiveError&) {
    throw;
  } catch (const std::exception& e) {
    throw ArchiveError(std::string("corrupt archive: ") + e.what());
  }
}

}  // namespace rater
