#ifndef RATER_RATER_H
#define RATER_RATER_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define RATER_API __declspec(dllexport)
#else
#define RATER_API __attribute__((visibility("default")))
#endif

/* Status codes double as CLI exit codes. */
typedef enum rater_status {
  RATER_OK = 0,
  RATER_ERR_IO = 1,
  RATER_ERR_PARSE = 2,
  RATER_ERR_UNSUPPORTED = 3,
  RATER_ERR_NUMERICAL = 4,
  RATER_ERR_ARGUMENT = 5,
  RATER_ERR_ARCHIVE = 6,
  RATER_ERR_NOT_AVAILABLE = 7,
  RATER_ERR_INTERNAL = 8
} rater_status;

typedef struct rater_dataset rater_dataset;
typedef struct rater_fit rater_fit;

RATER_API const char* rater_version(void);
/* Message of the last failure on the calling thread. */
RATER_API const char* rater_last_error(void);
RATER_API const char* rater_status_name(rater_status status);
/* Frees strings returned through char** out-parameters. */
RATER_API void rater_string_free(char* s);

/* Data ------------------------------------------------------------------ */

typedef struct rater_parse_options {
  int has_header;            /* default 1 */
  const char* missing_token; /* default "NA" */
  int categories;            /* 0: largest observed rating */
  int item_column;           /* wide files: -1 detect, 0 absent, 1 present */
} rater_parse_options;

typedef struct rater_dataset_info {
  const char* format; /* "long", "wide" or "grouped" */
  long long items;
  int raters;
  int categories;
  long long ratings;
} rater_dataset_info;

RATER_API void rater_parse_options_init(rater_parse_options* options);
/* format: "long", "wide" or "grouped". options may be NULL. */
RATER_API rater_status rater_dataset_parse(const char* csv, size_t length, const char* format,
                                           const rater_parse_options* options, rater_dataset** out);
RATER_API rater_status rater_dataset_read(const char* path, const char* format, const rater_parse_options* options,
                                          rater_dataset** out);
RATER_API void rater_dataset_free(rater_dataset* dataset);
RATER_API rater_status rater_dataset_info_get(const rater_dataset* dataset, rater_dataset_info* out);
RATER_API rater_status rater_dataset_convert(const rater_dataset* dataset, const char* format, rater_dataset** out);
RATER_API rater_status rater_dataset_to_csv(const rater_dataset* dataset, char** out);
/* Parse warnings, one per line. */
RATER_API rater_status rater_dataset_warnings(const rater_dataset* dataset, char** out);

/* Fitting --------------------------------------------------------------- */

typedef struct rater_fit_options {
  const char* model;  /* dawid-skene, class-conditional, hierarchical, homogeneous */
  const char* method; /* mcmc or optim */
  const char* init;   /* uniform-diagonal, jittered, from-majority-vote */
  double tol;         /* <= 0: method default */
  int max_iter;
  int chains;
  int warmup;
  int draws;
  uint64_t seed;
  double target_accept;
  int max_leapfrog;
  int parallel;
  const double* alpha; /* K values, or NULL */
  size_t alpha_length;
  const double* beta; /* K*K or J*K*K values, or NULL */
  size_t beta_length;
  const char* beta_csv; /* K x K or stacked per-rater blocks, used when beta is NULL */
  int has_prior_n;
  double prior_n;
  int has_prior_p;
  double prior_p;
} rater_fit_options;

typedef void (*rater_progress_fn)(const char* line, void* user);

RATER_API void rater_fit_options_init(rater_fit_options* options);
RATER_API rater_status rater_fit_run(const rater_dataset* dataset, const rater_fit_options* options,
                                     rater_progress_fn progress, void* user, rater_fit** out);
RATER_API void rater_fit_free(rater_fit* fit);
RATER_API rater_status rater_fit_save(const rater_fit* fit, char** out);
RATER_API rater_status rater_fit_load(const char* text, size_t length, rater_fit** out);
/* RATER_ERR_ARCHIVE when the dataset is not the one the fit was made from. */
RATER_API rater_status rater_fit_check_data(const rater_fit* fit, const rater_dataset* dataset);
RATER_API rater_status rater_fit_warnings(const rater_fit* fit, char** out);
RATER_API int rater_fit_is_mcmc(const rater_fit* fit);

/* Reports --------------------------------------------------------------- */

RATER_API rater_status rater_fit_summary(const rater_fit* fit, char** out);
/* what: pi, theta, p, z, class-probs, draws, intervals, waic. level is used
   by intervals. */
RATER_API rater_status rater_fit_extract(const rater_fit* fit, const char* what, double level, char** out);
/* kind: raters, prevalence, latent-class. items are 1-based; NULL for all. */
RATER_API rater_status rater_fit_plotdata(const rater_fit* fit, const char* kind, const long long* items,
                                          size_t item_count, char** out);

/* Simulation ------------------------------------------------------------ */

/* Ratings for an item,rater design CSV from a JSON parameter file. Output is
   an item,rater,rating CSV. */
RATER_API rater_status rater_simulate(const char* params_json, size_t params_length, const char* design_csv,
                                      size_t design_length, uint64_t seed, char** out);
/* Posterior predictive ratings for the design, using the fitted model. */
RATER_API rater_status rater_fit_predict(const rater_fit* fit, const char* design_csv, size_t design_length,
                                         uint64_t seed, char** out);

/* Atomic file write (temporary file then rename). */
RATER_API rater_status rater_write_file(const char* path, const char* contents, size_t length);
/* Reads a whole file into a new string. */
RATER_API rater_status rater_read_file(const char* path, char** out, size_t* length);

#ifdef __cplusplus
}
#endif

#endif
