#include "rater/rater.h"

#include <cmath>
#include <cstring>
#include <new>
#include <string>

#include "rater/archive.hpp"
#include "rater/error.hpp"
#include "rater/report.hpp"

struct rater_dataset {
  rater::RatingDataset data;
};

struct rater_fit {
  rater::FitResult result;
};

namespace {

thread_local std::string g_last_error;

// What a failure means depends on what the caller was doing: a domain error
// while reading data is bad input data, while fitting it is a bad flag.
enum class Stage { data, fit, report };

rater_status status_for(rater::ErrorKind kind, Stage stage) {
  using rater::ErrorKind;
  switch (kind) {
    case ErrorKind::io: return RATER_ERR_IO;
    case ErrorKind::parse:
    case ErrorKind::empty_data: return RATER_ERR_PARSE;
    case ErrorKind::domain:
    case ErrorKind::shape: return stage == Stage::data ? RATER_ERR_PARSE : RATER_ERR_ARGUMENT;
    case ErrorKind::unsupported: return stage == Stage::report ? RATER_ERR_NOT_AVAILABLE : RATER_ERR_UNSUPPORTED;
    case ErrorKind::numerical:
    case ErrorKind::init: return RATER_ERR_NUMERICAL;
    case ErrorKind::state: return RATER_ERR_NOT_AVAILABLE;
    case ErrorKind::archive: return RATER_ERR_ARCHIVE;
    case ErrorKind::argument: return RATER_ERR_ARGUMENT;
  }
  return RATER_ERR_INTERNAL;
}

template <typename F>
rater_status guarded(Stage stage, F&& body) {
  try {
    g_last_error.clear();
    body();
    return RATER_OK;
  } catch (const rater::Error& e) {
    g_last_error = e.what();
    return status_for(e.kind(), stage);
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return RATER_ERR_INTERNAL;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return RATER_ERR_INTERNAL;
  }
}

rater_status null_argument(const char* name) {
  g_last_error = std::string(name) + " is NULL";
  return RATER_ERR_ARGUMENT;
}

char* dup_string(const std::string& s) {
  char* out = new char[s.size() + 1];
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string joined(const std::vector<std::string>& lines) {
  std::string out;
  for (const auto& l : lines) out += l + "\n";
  return out;
}

rater::ParseOptions to_parse_options(const rater_parse_options* o) {
  rater::ParseOptions p;
  if (!o) return p;
  p.has_header = o->has_header != 0;
  if (o->missing_token) p.missing_token = o->missing_token;
  if (o->categories > 0) p.categories = o->categories;
  if (o->item_column >= 0) p.item_column = o->item_column != 0;
  return p;
}

rater::FitOptions to_fit_options(const rater_fit_options& o) {
  rater::FitOptions f;
  if (o.model) f.variant = rater::parse_variant(o.model);
  if (o.method) f.method = rater::parse_method(o.method);
  if (o.init) f.init = rater::parse_init_strategy(o.init);
  if (o.tol > 0.0) f.tol = o.tol;
  f.max_iter = o.max_iter;
  f.sampler.chains = o.chains;
  f.sampler.warmup = o.warmup;
  f.sampler.draws = o.draws;
  f.sampler.seed = o.seed;
  f.sampler.target_accept = o.target_accept;
  f.sampler.max_leapfrog = o.max_leapfrog;
  f.sampler.parallel = o.parallel != 0;
  if (o.alpha) f.priors.alpha = std::vector<double>(o.alpha, o.alpha + o.alpha_length);
  if (o.beta)
    f.priors.beta = std::vector<double>(o.beta, o.beta + o.beta_length);
  else if (o.beta_csv)
    f.priors.beta = rater::parse_beta_csv(o.beta_csv);
  if (o.has_prior_n) f.priors.n = o.prior_n;
  if (o.has_prior_p) f.priors.p = o.prior_p;
  return f;
}

}  // namespace

extern "C" {

const char* rater_version(void) { return "1.0.0"; }

const char* rater_last_error(void) { return g_last_error.c_str(); }

const char* rater_status_name(rater_status status) {
  switch (status) {
    case RATER_OK: return "ok";
    case RATER_ERR_IO: return "io error";
    case RATER_ERR_PARSE: return "parse error";
    case RATER_ERR_UNSUPPORTED: return "unsupported";
    case RATER_ERR_NUMERICAL: return "numerical failure";
    case RATER_ERR_ARGUMENT: return "bad argument";
    case RATER_ERR_ARCHIVE: return "archive error";
    case RATER_ERR_NOT_AVAILABLE: return "not available";
    case RATER_ERR_INTERNAL: return "internal error";
  }
  return "unknown";
}

void rater_string_free(char* s) { delete[] s; }

void rater_parse_options_init(rater_parse_options* options) {
  if (!options) return;
  options->has_header = 1;
  options->missing_token = "NA";
  options->categories = 0;
  options->item_column = -1;
}

rater_status rater_dataset_parse(const char* csv, size_t length, const char* format,
                                 const rater_parse_options* options, rater_dataset** out) {
  if (!csv || !format || !out) return null_argument("csv, format or out");
  return guarded(Stage::data, [&] {
    const auto fmt = rater::parse_format_name(format);
    *out = new rater_dataset{rater::parse(std::string_view(csv, length), fmt, to_parse_options(options))};
  });
}

rater_status rater_dataset_read(const char* path, const char* format, const rater_parse_options* options,
                                rater_dataset** out) {
  if (!path || !format || !out) return null_argument("path, format or out");
  return guarded(Stage::data, [&] {
    const auto fmt = rater::parse_format_name(format);
    const std::string text = rater::read_file(path);
    *out = new rater_dataset{rater::parse(text, fmt, to_parse_options(options), path)};
  });
}

void rater_dataset_free(rater_dataset* dataset) { delete dataset; }

rater_status rater_dataset_info_get(const rater_dataset* dataset, rater_dataset_info* out) {
  if (!dataset || !out) return null_argument("dataset or out");
  return guarded(Stage::data, [&] {
    const auto& d = dataset->data;
    out->format = rater::format_name(d.format());
    out->items = d.items();
    out->raters = d.raters();
    out->categories = d.categories();
    out->ratings = d.rating_count();
  });
}

rater_status rater_dataset_convert(const rater_dataset* dataset, const char* format, rater_dataset** out) {
  if (!dataset || !format || !out) return null_argument("dataset, format or out");
  return guarded(Stage::data, [&] {
    *out = new rater_dataset{rater::convert(dataset->data, rater::parse_format_name(format))};
  });
}

rater_status rater_dataset_to_csv(const rater_dataset* dataset, char** out) {
  if (!dataset || !out) return null_argument("dataset or out");
  return guarded(Stage::data, [&] { *out = dup_string(rater::to_csv(dataset->data)); });
}

rater_status rater_dataset_warnings(const rater_dataset* dataset, char** out) {
  if (!dataset || !out) return null_argument("dataset or out");
  return guarded(Stage::data, [&] { *out = dup_string(joined(dataset->data.provenance().warnings)); });
}

void rater_fit_options_init(rater_fit_options* options) {
  if (!options) return;
  const rater::FitOptions d;
  *options = rater_fit_options{};
  options->model = "dawid-skene";
  options->method = "mcmc";
  options->init = "from-majority-vote";
  options->tol = 0.0;
  options->max_iter = d.max_iter;
  options->chains = d.sampler.chains;
  options->warmup = d.sampler.warmup;
  options->draws = d.sampler.draws;
  options->seed = d.sampler.seed;
  options->target_accept = d.sampler.target_accept;
  options->max_leapfrog = d.sampler.max_leapfrog;
  options->parallel = d.sampler.parallel ? 1 : 0;
}

rater_status rater_fit_run(const rater_dataset* dataset, const rater_fit_options* options, rater_progress_fn progress,
                           void* user, rater_fit** out) {
  if (!dataset || !options || !out) return null_argument("dataset, options or out");
  return guarded(Stage::fit, [&] {
    const auto opts = to_fit_options(*options);
    rater::ProgressSink sink;
    if (progress) sink = [progress, user](const std::string& line) { progress(line.c_str(), user); };
    *out = new rater_fit{rater::fit(dataset->data, opts, sink)};
  });
}

void rater_fit_free(rater_fit* fit) { delete fit; }

rater_status rater_fit_save(const rater_fit* fit, char** out) {
  if (!fit || !out) return null_argument("fit or out");
  return guarded(Stage::report, [&] { *out = dup_string(rater::save_archive(fit->result)); });
}

rater_status rater_fit_load(const char* text, size_t length, rater_fit** out) {
  if (!text || !out) return null_argument("text or out");
  return guarded(Stage::report, [&] {
    try {
      *out = new rater_fit{rater::load_archive(std::string_view(text, length))};
    } catch (const rater::ArchiveError&) {
      throw;
    } catch (const rater::Error& e) {
      throw rater::ArchiveError(std::string("corrupt archive: ") + e.what());
    }
  });
}

rater_status rater_fit_check_data(const rater_fit* fit, const rater_dataset* dataset) {
  if (!fit || !dataset) return null_argument("fit or dataset");
  return guarded(Stage::report, [&] {
    if (rater::fingerprint(dataset->data) != fit->result.fingerprint)
      throw rater::ArchiveError("the dataset does not match the one this fit was made from");
  });
}

rater_status rater_fit_warnings(const rater_fit* fit, char** out) {
  if (!fit || !out) return null_argument("fit or out");
  return guarded(Stage::report, [&] { *out = dup_string(joined(fit->result.warnings)); });
}

int rater_fit_is_mcmc(const rater_fit* fit) { return fit && fit->result.method == rater::Method::mcmc ? 1 : 0; }

rater_status rater_fit_summary(const rater_fit* fit, char** out) {
  if (!fit || !out) return null_argument("fit or out");
  return guarded(Stage::report, [&] { *out = dup_string(rater::summary_text(fit->result)); });
}

rater_status rater_fit_extract(const rater_fit* fit, const char* what, double level, char** out) {
  if (!fit || !what || !out) return null_argument("fit, what or out");
  return guarded(Stage::report, [&] {
    const std::string w = what;
    const auto& r = fit->result;
    std::string text;
    if (w == "draws")
      text = rater::draws_csv(r);
    else if (w == "intervals")
      text = rater::intervals_csv(r, level);
    else if (w == "waic")
      text = rater::waic_json(r);
    else if (w == "class-probs" || w == "class_probs")
      text = rater::class_probabilities_csv(r);
    else
      text = rater::estimates_csv(r, rater::parse_quantity(w));
    *out = dup_string(text);
  });
}

rater_status rater_fit_plotdata(const rater_fit* fit, const char* kind, const long long* items, size_t item_count,
                                char** out) {
  if (!fit || !kind || !out) return null_argument("fit, kind or out");
  return guarded(Stage::report, [&] {
    std::vector<long long> filter;
    if (items) filter.assign(items, items + item_count);
    *out = dup_string(rater::plot_data_csv(fit->result, rater::parse_plot_kind(kind), filter));
  });
}

rater_status rater_simulate(const char* params_json, size_t params_length, const char* design_csv,
                            size_t design_length, uint64_t seed, char** out) {
  if (!params_json || !design_csv || !out) return null_argument("params, design or out");
  return guarded(Stage::data, [&] {
    const auto params = rater::parse_params_json(std::string_view(params_json, params_length));
    const auto design = rater::parse_design_csv(std::string_view(design_csv, design_length));
    *out = dup_string(rater::simulated_csv(design, rater::simulate_ratings(params, design, seed)));
  });
}

rater_status rater_fit_predict(const rater_fit* fit, const char* design_csv, size_t design_length, uint64_t seed,
                               char** out) {
  if (!fit || !design_csv || !out) return null_argument("fit, design or out");
  return guarded(Stage::report, [&] {
    const auto design = rater::parse_design_csv(std::string_view(design_csv, design_length));
    *out = dup_string(rater::simulated_csv(design, rater::posterior_predict(fit->result, design, seed)));
  });
}

rater_status rater_write_file(const char* path, const char* contents, size_t length) {
  if (!path || !contents) return null_argument("path or contents");
  return guarded(Stage::data, [&] { rater::write_file_atomic(path, std::string_view(contents, length)); });
}

rater_status rater_read_file(const char* path, char** out, size_t* length) {
  if (!path || !out) return null_argument("path or out");
  return guarded(Stage::data, [&] {
    const std::string text = rater::read_file(path);
    *out = dup_string(text);
    if (length) *length = text.size();
  });
}

}  // extern "C"
