/*
 * C interface to the zipcwm library.
 *
 * Objects are opaque handles created by the library and released with the
 * matching *_free function. Every fallible call returns a zipcwm_status; on
 * failure zipcwm_last_error() describes the problem for the calling thread
 * until the next failing call on that thread.
 */
#ifndef ZIPCWM_ZIPCWM_H
#define ZIPCWM_ZIPCWM_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(ZIPCWM_BUILDING_LIBRARY)
#    define ZIPCWM_API __declspec(dllexport)
#  else
#    define ZIPCWM_API __declspec(dllimport)
#  endif
#else
#  define ZIPCWM_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Status values double as the CLI exit codes where they overlap. */
typedef enum zipcwm_status {
  ZIPCWM_OK = 0,
  ZIPCWM_ERR_USAGE = 2,     /* invalid argument or option */
  ZIPCWM_ERR_DATA = 3,      /* malformed or inconsistent input data */
  ZIPCWM_ERR_NUMERICAL = 4, /* fitting or density evaluation failed */
  ZIPCWM_ERR_IO = 5,        /* file system failure */
  ZIPCWM_ERR_INTERNAL = 6
} zipcwm_status;

typedef enum zipcwm_family {
  ZIPCWM_FAMILY_ZIPCWM = 0,
  ZIPCWM_FAMILY_PCWM = 1,
  ZIPCWM_FAMILY_FZIP = 2,
  ZIPCWM_FAMILY_ZIP = 3,
  ZIPCWM_FAMILY_POISSON_MIXTURE = 4
} zipcwm_family;

typedef enum zipcwm_covariance {
  ZIPCWM_COV_SPHERICAL = 0,
  ZIPCWM_COV_DIAGONAL = 1,
  ZIPCWM_COV_FULL = 2
} zipcwm_covariance;

/* AUTO takes the "coding" key of the schema file when present, else DUMMY. */
typedef enum zipcwm_coding {
  ZIPCWM_CODING_AUTO = -1,
  ZIPCWM_CODING_DUMMY = 0,
  ZIPCWM_CODING_NUMERIC = 1
} zipcwm_coding;

typedef enum zipcwm_criterion {
  ZIPCWM_CRIT_AIC = 0,
  ZIPCWM_CRIT_BIC = 1,
  ZIPCWM_CRIT_ICL = 2,
  ZIPCWM_CRIT_AWE = 3,
  ZIPCWM_CRIT_AIC3 = 4,
  ZIPCWM_CRIT_AICC = 5,
  ZIPCWM_CRIT_AICU = 6,
  ZIPCWM_CRIT_CAIC = 7
} zipcwm_criterion;

typedef struct zipcwm_model_options {
  int family;     /* zipcwm_family */
  int components; /* G, including the degenerate component */
  int covariance; /* zipcwm_covariance */
  int regression_on_covariates;
  int covariate_densities;
} zipcwm_model_options;

typedef struct zipcwm_em_options {
  int max_iterations;
  double loglik_rel_tolerance;
  int irls_max_steps;
  double irls_grad_tolerance;
  int restarts;
  uint64_t seed;
  double ridge;
  int threads; /* 0 = hardware concurrency */
} zipcwm_em_options;

typedef struct zipcwm_confusion_summary {
  double overall_misclassification;
  double accuracy;
  double ari;
} zipcwm_confusion_summary;

typedef struct zipcwm_dataset zipcwm_dataset;
typedef struct zipcwm_fit zipcwm_fit;
typedef struct zipcwm_selection zipcwm_selection;

ZIPCWM_API const char* zipcwm_version(void);
ZIPCWM_API const char* zipcwm_last_error(void);

ZIPCWM_API void zipcwm_model_options_default(zipcwm_model_options* options);
ZIPCWM_API void zipcwm_em_options_default(zipcwm_em_options* options);

/* Datasets ---------------------------------------------------------------- */

/* Loads a CSV described by a JSON schema file (coding: zipcwm_coding). The
 * number of rows dropped for missing cells or invalid responses is stored in
 * *rows_dropped when non-NULL. */
ZIPCWM_API zipcwm_status zipcwm_dataset_load_csv(const char* csv_path, const char* schema_path,
                                                 int coding, zipcwm_dataset** out,
                                                 long* rows_dropped);

/* Draws the three-component benchmark design with n rows. */
ZIPCWM_API zipcwm_status zipcwm_dataset_simulate(long n, uint64_t seed, zipcwm_dataset** out);

/* Writes the dataset CSV and, when sidecar_path is non-NULL, a JSON sidecar
 * holding the generating design (simulated data) and the load schema. */
ZIPCWM_API zipcwm_status zipcwm_dataset_write_csv(const zipcwm_dataset* data,
                                                  const char* csv_path,
                                                  const char* sidecar_path);

ZIPCWM_API size_t zipcwm_dataset_rows(const zipcwm_dataset* data);
ZIPCWM_API int zipcwm_dataset_has_labels(const zipcwm_dataset* data);
ZIPCWM_API void zipcwm_dataset_free(zipcwm_dataset* data);

/* Fitting ----------------------------------------------------------------- */

ZIPCWM_API zipcwm_status zipcwm_fit_run(const zipcwm_dataset* data,
                                        const zipcwm_model_options* model,
                                        const zipcwm_em_options* em, zipcwm_fit** out);
ZIPCWM_API double zipcwm_fit_loglik(const zipcwm_fit* fit);
ZIPCWM_API int zipcwm_fit_converged(const zipcwm_fit* fit);
ZIPCWM_API int zipcwm_fit_iterations(const zipcwm_fit* fit);
/* Copies up to `capacity` 1-based MAP labels into `labels`; returns the row count. */
ZIPCWM_API size_t zipcwm_fit_labels(const zipcwm_fit* fit, int32_t* labels, size_t capacity);
/* Writes <stem>.json, <stem>_trace.csv and <stem>_assignments.csv into out_dir;
 * when the dataset carries true labels also <stem>_confusion.json/.csv. */
ZIPCWM_API zipcwm_status zipcwm_fit_write_reports(const zipcwm_fit* fit, const char* out_dir,
                                                  const char* stem);
/* Pearson dispersion of a single-component Poisson regression on the data. */
ZIPCWM_API zipcwm_status zipcwm_dataset_dispersion(const zipcwm_dataset* data, double* out);
ZIPCWM_API void zipcwm_fit_free(zipcwm_fit* fit);

/* Model selection over G = g_min..g_max -------------------------------------- */

ZIPCWM_API zipcwm_status zipcwm_select_run(const zipcwm_dataset* data,
                                           const zipcwm_model_options* model,
                                           const zipcwm_em_options* em, int g_min, int g_max,
                                           zipcwm_selection** out);
/* *g = 0 when the criterion was unavailable for every fitted G. */
ZIPCWM_API zipcwm_status zipcwm_selection_chosen(const zipcwm_selection* selection,
                                                 int criterion, int* g);
/* Writes <stem>.json and <stem>.csv into out_dir. */
ZIPCWM_API zipcwm_status zipcwm_selection_write_reports(const zipcwm_selection* selection,
                                                        const char* out_dir, const char* stem);
ZIPCWM_API void zipcwm_selection_free(zipcwm_selection* selection);

/* Evaluation -------------------------------------------------------------- */

ZIPCWM_API zipcwm_status zipcwm_confusion(const int32_t* truth, const int32_t* predicted,
                                          size_t n, int G, int pin_degenerate,
                                          zipcwm_confusion_summary* out);

/* Reads a (true, predicted) labels CSV, writes confusion.json and
 * confusion.csv into out_dir and returns a printable table in *table, to be
 * released with zipcwm_string_free. */
ZIPCWM_API zipcwm_status zipcwm_evaluate_labels_csv(const char* labels_csv, int G,
                                                    int pin_degenerate, const char* out_dir,
                                                    char** table);
ZIPCWM_API void zipcwm_string_free(char* text);

/* Simulation study ---------------------------------------------------------- */

/* Runs the benchmark study (n in {200, 500, 1000}, G = 2..5) and writes the
 * report directory. `replicates` <= 0 selects the default of 10. */
ZIPCWM_API zipcwm_status zipcwm_reproduce_sim_study(uint64_t seed, int replicates,
                                                    const zipcwm_em_options* em,
                                                    const char* out_dir);

#ifdef __cplusplus
}
#endif

#endif /* ZIPCWM_ZIPCWM_H */
