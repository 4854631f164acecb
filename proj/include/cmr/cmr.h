/* C interface to the common-mechanism regression library.
 *
 * Objects are opaque handles created by cmr_*_create / generate / load and
 * released by the matching cmr_*_free (which accept NULL). Every fallible call
 * returns a cmr_status; on failure cmr_last_error() describes the problem on
 * the calling thread. Matrices cross the boundary as row-major double arrays.
 */
#ifndef CMR_CMR_H
#define CMR_CMR_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define CMR_API __declspec(dllexport)
#else
#define CMR_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum cmr_status {
  CMR_OK = 0,
  CMR_ERR_INVALID_ARGUMENT = 1,
  CMR_ERR_SHAPE_MISMATCH = 2,
  CMR_ERR_NON_FINITE = 3,
  CMR_ERR_NOT_INVERTIBLE = 4,
  CMR_ERR_NOT_PSD = 5,
  CMR_ERR_RANK_DEFICIENT = 6,
  CMR_ERR_RANK_REQUEST = 7,
  CMR_ERR_OUT_OF_DOMAIN = 8,
  CMR_ERR_DEGENERATE = 9,
  CMR_ERR_EMPTY_DATASET = 10,
  CMR_ERR_DIVERGED = 11,
  CMR_ERR_BAD_MAGIC = 12,
  CMR_ERR_TRUNCATED_FILE = 13,
  CMR_ERR_DIMENSION_MISMATCH = 14,
  CMR_ERR_NOT_DIVISIBLE = 15,
  CMR_ERR_INSUFFICIENT_SAMPLES = 16,
  CMR_ERR_CONFIG = 17,
  CMR_ERR_IO = 18,
  CMR_ERR_INTERNAL = 99
} cmr_status;

typedef struct cmr_problem cmr_problem;
typedef struct cmr_dataset cmr_dataset;
typedef struct cmr_estimate cmr_estimate;
typedef struct cmr_run cmr_run;

typedef struct cmr_diagnostics {
  double eta, alpha, mu, nu, psi, chi, kappa_gamma;
  double lambda_min_signal;
} cmr_diagnostics;

CMR_API const char* cmr_version(void);
CMR_API const char* cmr_status_string(cmr_status status);
/* Message of the last failure on this thread; "" if none. */
CMR_API const char* cmr_last_error(void);

/* Ground-truth problems. Condition numbers of 1 give identity covariances. */
CMR_API cmr_status cmr_problem_generate(size_t b, size_t p, size_t r, size_t tasks, double gamma_condition,
                                        double delta_condition, uint64_t seed, cmr_problem** out);
CMR_API cmr_status cmr_problem_load(const char* path, cmr_problem** out);
CMR_API cmr_status cmr_problem_save(const cmr_problem* problem, const char* path);
CMR_API cmr_status cmr_problem_dims(const cmr_problem* problem, size_t* b, size_t* p, size_t* r, size_t* tasks);
/* out must hold b * r values. */
CMR_API cmr_status cmr_problem_w(const cmr_problem* problem, double* out, size_t len);
CMR_API cmr_status cmr_problem_diagnostics(const cmr_problem* problem, cmr_diagnostics* out);
CMR_API void cmr_problem_free(cmr_problem* problem);

/* Noiseless synthetic samples of a problem. */
CMR_API cmr_status cmr_dataset_sample(const cmr_problem* problem, size_t samples, uint64_t seed, cmr_dataset** out);
/* x holds tasks * samples matrices of b x p (task-major), y the matching responses. */
CMR_API cmr_status cmr_dataset_create(size_t tasks, size_t samples, size_t b, size_t p, const double* x,
                                      const double* y, cmr_dataset** out);
CMR_API cmr_status cmr_dataset_dims(const cmr_dataset* data, size_t* tasks, size_t* samples, size_t* b, size_t* p);
CMR_API void cmr_dataset_free(cmr_dataset* data);

/* Spectral estimate of W. whiten = 0 skips the Gamma_hat whitening. */
CMR_API cmr_status cmr_spectral_fit(const cmr_dataset* data, size_t r, int whiten, cmr_estimate** out);
CMR_API cmr_status cmr_estimate_dims(const cmr_estimate* est, size_t* b, size_t* r);
/* out must hold b * r values. */
CMR_API cmr_status cmr_estimate_w(const cmr_estimate* est, double* out, size_t len);
/* Descending eigenvalues of the whitened moment matrix; out must hold b values. */
CMR_API cmr_status cmr_estimate_eigenvalues(const cmr_estimate* est, double* out, size_t len);
CMR_API void cmr_estimate_free(cmr_estimate* est);

/* sin of the largest principal angle between the column spans of u and v. */
CMR_API cmr_status cmr_subspace_distance(const double* u, size_t rows, size_t u_cols, const double* v,
                                         size_t v_cols, double* out);

/* Experiment runs by harness name ("phase", "sweep-b", "verify-lemma1",
 * "verify-lemma2", "verify-lemma3", "gradcheck", "classify", "diagnostics").
 * config_json may be NULL or "" for all defaults. */
CMR_API size_t cmr_harness_count(void);
CMR_API const char* cmr_harness_name(size_t index);
CMR_API cmr_status cmr_run_create(const char* harness, const char* config_json, cmr_run** out);
/* Fully resolved config as JSON; valid until the run is freed. */
CMR_API const char* cmr_run_resolved_config(const cmr_run* run);
/* threads = 0 uses every available core; results do not depend on it. */
CMR_API cmr_status cmr_run_execute(cmr_run* run, unsigned threads);
CMR_API const char* cmr_run_summary(const cmr_run* run);
CMR_API size_t cmr_run_file_count(const cmr_run* run);
CMR_API const char* cmr_run_file_name(const cmr_run* run, size_t index);
CMR_API const char* cmr_run_file_data(const cmr_run* run, size_t index, size_t* size);
/* Writes every result file into an existing directory. */
CMR_API cmr_status cmr_run_write(const cmr_run* run, const char* directory);
CMR_API void cmr_run_free(cmr_run* run);

#ifdef __cplusplus
}
#endif

#endif
