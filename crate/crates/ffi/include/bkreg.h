#ifndef BKREG_H
#define BKREG_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  BKREG_STATUS_OK = 0,
  BKREG_STATUS_NULL_POINTER = 1,
  BKREG_STATUS_INVALID_INPUT = 2,
  BKREG_STATUS_DIMENSION_MISMATCH = 3,
  BKREG_STATUS_K_OUT_OF_RANGE = 4,
  BKREG_STATUS_NOT_POSITIVE_DEFINITE = 5,
  BKREG_STATUS_IO = 6,
  BKREG_STATUS_PARSE = 7,
  BKREG_STATUS_SERIALIZATION = 8,
  /**
   * The model kind does not support the requested operation.
   */
  BKREG_STATUS_UNSUPPORTED = 9,
  BKREG_STATUS_PANIC = 10,
} BkregStatus;

/**
 * Opaque dataset handle.
 */
typedef struct BkregDataset BkregDataset;

/**
 * Opaque fitted-model handle.
 */
typedef struct BkregModel BkregModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *bkreg_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *bkreg_version(void);

/**
 * Creates a dataset from `n` row-major input vectors of length `dim` and
 * `n` targets.
 */
BkregStatus bkreg_dataset_new(const double *inputs,
                              size_t n,
                              size_t dim,
                              const double *targets,
                              BkregDataset **out);

/**
 * Reads a CSV file with header `x1,...,xd,y`.
 */
BkregStatus bkreg_dataset_read_csv(const char *path, BkregDataset **out);

/**
 * Reads the 7-column yacht hydrodynamics data file.
 */
BkregStatus bkreg_dataset_read_yacht(const char *path, BkregDataset **out);

/**
 * Number of rows, or 0 for NULL.
 */
size_t bkreg_dataset_len(const BkregDataset *ds);

/**
 * Input dimension, or 0 for NULL.
 */
size_t bkreg_dataset_dim(const BkregDataset *ds);

void bkreg_dataset_free(BkregDataset *ds);

/**
 * Classical kernel regression. `bandwidths` holds one shared value or one
 * per input dimension.
 */
BkregStatus bkreg_fit_kr(const BkregDataset *ds,
                         const double *bandwidths,
                         size_t n_bandwidths,
                         BkregModel **out);

/**
 * Classical k-NN (`mutual == 0`) or mutual k-NN regression.
 */
BkregStatus bkreg_fit_knn(const BkregDataset *ds, size_t k, int mutual, BkregModel **out);

/**
 * Bayesian kernel regression at fixed hyperparameters.
 */
BkregStatus bkreg_fit_bkr_fixed(const BkregDataset *ds,
                                const double *bandwidths,
                                size_t n_bandwidths,
                                double sigma0,
                                double sigma,
                                BkregModel **out);

/**
 * Bayesian kernel regression with hyperparameters chosen by evidence
 * maximization from the given start. `multi_bandwidth` selects one
 * bandwidth per dimension; `bandwidth_only` holds `sigma0` and `sigma`
 * fixed.
 */
BkregStatus bkreg_fit_bkr_evidence(const BkregDataset *ds,
                                   double init_bandwidth,
                                   double sigma0,
                                   double sigma,
                                   int multi_bandwidth,
                                   int bandwidth_only,
                                   BkregModel **out);

/**
 * Bayesian mutual k-NN regression at fixed hyperparameters.
 */
BkregStatus bkreg_fit_bmknn_fixed(const BkregDataset *ds,
                                  size_t k,
                                  double sigma0,
                                  double sigma,
                                  BkregModel **out);

/**
 * Bayesian mutual k-NN regression with `k` in `1..=kmax` (0 means
 * `min(n - 1, 50)`) chosen by evidence. With `refine != 0`, `sigma0` and
 * `sigma` are only the start of an alternating ascent; otherwise they stay
 * fixed.
 */
BkregStatus bkreg_fit_bmknn_evidence(const BkregDataset *ds,
                                     size_t kmax,
                                     double sigma0,
                                     double sigma,
                                     int refine,
                                     BkregModel **out);

/**
 * Gaussian-process regression with squared-exponential covariance.
 * `inv_lengthscales` holds one value per dimension, or a single value
 * shared by all.
 */
BkregStatus bkreg_fit_gpr(const BkregDataset *ds,
                          double v0,
                          double v1,
                          const double *inv_lengthscales,
                          size_t n_lengthscales,
                          BkregModel **out);

/**
 * Input dimension the model expects, or 0 for NULL.
 */
size_t bkreg_model_dim(const BkregModel *m);

/**
 * 1 if predictions carry a variance (Bayesian and GP models), else 0.
 */
int bkreg_model_has_variance(const BkregModel *m);

/**
 * Predicts `n` row-major queries of length `dim`. `means` must hold `n`
 * values; `variances` may be NULL, otherwise it receives `n` values (NaN
 * for models without a variance).
 */
BkregStatus bkreg_model_predict(const BkregModel *m,
                                const double *queries,
                                size_t n,
                                size_t dim,
                                double *means,
                                double *variances);

/**
 * Log evidence of a Bayesian or GP model on its training data.
 */
BkregStatus bkreg_model_log_evidence(const BkregModel *m, double *out);

/**
 * Log evidence of the Bayesian kernel model and its gradient with respect
 * to the log hyperparameters `[ln h_1..ln h_b, ln sigma0, ln sigma]`.
 * `gradient` may be NULL; otherwise it must hold `n_bandwidths + 2` values.
 */
BkregStatus bkreg_kernel_log_evidence(const BkregDataset *ds,
                                      const double *bandwidths,
                                      size_t n_bandwidths,
                                      double sigma0,
                                      double sigma,
                                      double *log_evidence,
                                      double *gradient);

/**
 * Serializes a model to JSON. Release the string with
 * [`bkreg_string_free`].
 */
BkregStatus bkreg_model_to_json(const BkregModel *m, char **out);

BkregStatus bkreg_model_from_json(const char *json, BkregModel **out);

void bkreg_model_free(BkregModel *m);

void bkreg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BKREG_H */
