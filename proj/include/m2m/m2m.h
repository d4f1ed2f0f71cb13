#ifndef M2M_M2M_H
#define M2M_M2M_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#  if defined(M2M_BUILDING_LIBRARY)
#    define M2M_API __declspec(dllexport)
#  else
#    define M2M_API __declspec(dllimport)
#  endif
#else
#  define M2M_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

/* Every fallible call returns a status; details are in m2m_last_error(). */
typedef enum m2m_status {
  M2M_OK = 0,
  M2M_ERR_IO = 1,
  M2M_ERR_VALIDATION = 2,
  M2M_ERR_NUMERIC = 3,
  M2M_ERR_INTERNAL = 4
} m2m_status;

typedef struct m2m_dataset m2m_dataset;
typedef struct m2m_sketch m2m_sketch;
typedef struct m2m_estimator m2m_estimator;
typedef struct m2m_result m2m_result;
typedef struct m2m_logreg m2m_logreg;

/* Message of the last failed call on this thread ("" if none). */
M2M_API const char* m2m_last_error(void);
M2M_API const char* m2m_version(void);
/* 0 = hardware concurrency. */
M2M_API void m2m_set_threads(unsigned n);
M2M_API void m2m_string_free(char* s);

/* ---- datasets ---- */
M2M_API m2m_status m2m_dataset_read_csv(const char* path, m2m_dataset** out);
M2M_API m2m_status m2m_dataset_write_csv(const m2m_dataset* data, const char* path);
M2M_API m2m_status m2m_dataset_gen_random10(size_t n, size_t d, uint64_t seed, m2m_dataset** out);
/* margin may be INFINITY for deterministic labels. */
M2M_API m2m_status m2m_dataset_gen_separable(size_t n, size_t d, double margin, uint64_t seed, m2m_dataset** out);
M2M_API size_t m2m_dataset_rows(const m2m_dataset* data);
M2M_API size_t m2m_dataset_cols(const m2m_dataset* data);
M2M_API double m2m_dataset_get(const m2m_dataset* data, size_t row, size_t col);
M2M_API void m2m_dataset_free(m2m_dataset* data);

/* ---- sketches ---- */
typedef struct m2m_sketch_options {
  /* key = value lines: map, m, sigma, n_bins, repetitions, buckets, width,
     epsilon, split, n_synth, extra_reg, seed. NULL for defaults. */
  const char* config;
  /* key = value lines: lower, upper, kinds (comma lists). NULL = unit box. */
  const char* schema;
  /* Min-max normalize the data first and store the constants in the sketch. */
  int normalize;
  /* Treat the last column as a binary label (ignored when schema is given). */
  int binary_last;
} m2m_sketch_options;

M2M_API m2m_status m2m_sketch_create(const m2m_dataset* data, const m2m_sketch_options* options, m2m_sketch** out);
M2M_API m2m_status m2m_sketch_load(const char* path, m2m_sketch** out);
/* created_at may be NULL (written as null). */
M2M_API m2m_status m2m_sketch_save(const m2m_sketch* sketch, const char* path, const char* created_at);
M2M_API m2m_status m2m_sketch_to_json(const m2m_sketch* sketch, const char* created_at, char** out);
M2M_API m2m_status m2m_sketch_merge(const m2m_sketch* a, const m2m_sketch* b, m2m_sketch** out);
/* Applies the normalization stored in the sketch (a copy if there is none). */
M2M_API m2m_status m2m_sketch_normalize_dataset(const m2m_sketch* sketch, const m2m_dataset* data,
                                                m2m_dataset** out);
M2M_API void m2m_sketch_free(m2m_sketch* sketch);

typedef struct m2m_sketch_info {
  const char* variant; /* "hist", "rff" or "race"; static storage */
  size_t d;
  size_t m;
  double sensitivity_l1;
  double epsilon_num;
  double epsilon_den;
  double sum_noise_scale;
  double count_noise_scale;
  double noisy_count;
  unsigned parents;
  int normalized;
  char spec_id[17];
} m2m_sketch_info;

M2M_API m2m_status m2m_sketch_info_get(const m2m_sketch* sketch, m2m_sketch_info* out);
/* JSON schema that every sketch file satisfies. Static storage. */
M2M_API const char* m2m_sketch_schema(void);

/* ---- estimation ---- */
/* config: n_synth, extra_reg, seed (other run keys accepted and ignored). */
M2M_API m2m_status m2m_estimator_create(const m2m_sketch* sketch, const char* config, m2m_estimator** out);
M2M_API double m2m_estimator_lambda(const m2m_estimator* est);
M2M_API void m2m_estimator_free(m2m_estimator* est);

typedef enum m2m_result_kind { M2M_RESULT_SINGLE = 0, M2M_RESULT_CDF = 1, M2M_RESULT_MATRIX = 2 } m2m_result_kind;

/* Query grammar (attributes are 1-based):
     moment j k                       mean of x_j^k
     count "x1<=0.5 and x3>=0.2"      fraction of records in the box
     cdf j                            CDF of x_j at 10 equi-spaced thresholds
     cov                              d x d covariance matrix */
M2M_API m2m_status m2m_estimate(const m2m_estimator* est, const char* query, m2m_result** out);
/* Same query evaluated exactly on raw data, after the sketch's normalization
   (if any); the result has the same shape as m2m_estimate's. */
M2M_API m2m_status m2m_truth(const m2m_estimator* est, const m2m_dataset* data, const char* query,
                             m2m_result** out);

M2M_API m2m_result_kind m2m_result_kind_get(const m2m_result* r);
M2M_API size_t m2m_result_rows(const m2m_result* r);
M2M_API size_t m2m_result_cols(const m2m_result* r);
M2M_API const char* m2m_result_label(const m2m_result* r, size_t row);
M2M_API double m2m_result_value(const m2m_result* r, size_t row, size_t col);
M2M_API void m2m_result_free(m2m_result* r);

/* ---- logistic regression ---- */
/* config: n_synth, extra_reg, seed, gd.step, gd.iterations, gd.restarts. */
M2M_API m2m_status m2m_logreg_fit(const m2m_sketch* sketch, const char* config, m2m_logreg** out);
M2M_API size_t m2m_logreg_warning_count(const m2m_logreg* model);
M2M_API const char* m2m_logreg_warning(const m2m_logreg* model, size_t i);
M2M_API m2m_status m2m_logreg_auc(const m2m_logreg* model, const m2m_dataset* test, double* out);
M2M_API m2m_status m2m_logreg_to_json(const m2m_logreg* model, char** out);
M2M_API void m2m_logreg_free(m2m_logreg* model);

/* ---- metrics ---- */
M2M_API m2m_status m2m_metric_mre(double estimate, double truth, double* out);
M2M_API m2m_status m2m_metric_mae(const double* estimates, const double* truths, size_t n, double* out);

/* ---- experiments ---- */
typedef void (*m2m_progress_fn)(const char* message, void* user);

typedef struct m2m_eval_summary {
  size_t jobs_total;
  size_t jobs_run;
  size_t jobs_resumed;
} m2m_eval_summary;

/* plan: key = value lines (see README). quick != 0 applies the CI-sized
   defaults before the plan's own keys. */
M2M_API m2m_status m2m_eval_run(const char* plan, const char* out_dir, int quick, m2m_progress_fn progress,
                                void* user, m2m_eval_summary* out);

#ifdef __cplusplus
}
#endif

#endif
