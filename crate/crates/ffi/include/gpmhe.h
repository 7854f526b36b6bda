#ifndef GPMHE_H
#define GPMHE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Non-zero codes leave a message for
 * `gpmhe_last_error_message`.
 */
typedef enum {
  GPMHE_STATUS_OK = 0,
  GPMHE_STATUS_NULL_POINTER = 1,
  /**
   * Bad dimensions, values or configuration.
   */
  GPMHE_STATUS_INVALID_ARGUMENT = 2,
  GPMHE_STATUS_NUMERICAL = 3,
  GPMHE_STATUS_IO = 4,
  /**
   * Malformed file contents.
   */
  GPMHE_STATUS_FORMAT = 5,
  /**
   * A Rust panic was caught at the boundary.
   */
  GPMHE_STATUS_INTERNAL = 6,
} GpmheStatus;

/**
 * A running moving horizon estimator over a learned model.
 */
typedef struct GpmheEstimator GpmheEstimator;

/**
 * A conditioned Gaussian process.
 */
typedef struct GpmheGp GpmheGp;

/**
 * A learned state-space model, shared by the estimators built from it.
 */
typedef struct GpmheModel GpmheModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Decay rate `mu` and minimal horizon for detectability constants `p1`,
 * `p2` (row-major `n × n`) and discount `eta`.
 *
 * # Safety
 * `p1` and `p2` hold `n * n` doubles; outputs must be writable.
 */
GpmheStatus gpmhe_minimal_horizon(const double *p1,
                                  const double *p2,
                                  size_t n,
                                  double eta,
                                  double *mu,
                                  size_t *m_bar);

/**
 * Number of grid points covering `[lower, upper]` at radius `tau`.
 *
 * # Safety
 * `lower` and `upper` hold `n` doubles.
 */
GpmheStatus gpmhe_covering_number(const double *lower,
                                  const double *upper,
                                  size_t n,
                                  double tau,
                                  uint64_t *covering);

/**
 * `2 ln(covering / delta)`.
 *
 * # Safety
 * `beta` must be writable.
 */
GpmheStatus gpmhe_beta(uint64_t covering, double delta, double *beta);

/**
 * Confidence level `(1 − delta)^(n + p)` of the probabilistic bound.
 *
 * # Safety
 * `probability` must be writable.
 */
GpmheStatus gpmhe_probability(size_t n, size_t p, double delta, double *probability);

/**
 * Creates an estimator with horizon `horizon`, discount `eta`, prior
 * weight `p2` (row-major `n × n`), state box `[lower, upper]` and initial
 * estimate `x0`, all of state dimension `n`.
 *
 * # Safety
 * `model` must be a live handle; arrays must have the stated sizes.
 */
GpmheStatus gpmhe_estimator_new(const GpmheModel *model,
                                size_t horizon,
                                double eta,
                                const double *p2,
                                const double *lower,
                                const double *upper,
                                const double *x0,
                                size_t n,
                                GpmheEstimator **out_estimator);

/**
 * Feeds `(u(t), y(t))` and writes `x̂(t+1)` to `estimate` (`n` values).
 * `converged` may be null. On error the estimator is unchanged.
 *
 * # Safety
 * `estimator` must be a live handle; arrays must have the stated sizes.
 */
GpmheStatus gpmhe_estimator_step(GpmheEstimator *estimator,
                                 const double *u,
                                 size_t m,
                                 const double *y,
                                 size_t p,
                                 double *estimate,
                                 size_t n,
                                 bool *converged);

/**
 * Current time index `t`, or 0 for a null handle.
 *
 * # Safety
 * `estimator` must be null or a live handle.
 */
size_t gpmhe_estimator_time(const GpmheEstimator *estimator);

/**
 * Releases an estimator. Null is ignored.
 *
 * # Safety
 * `estimator` must be null or a handle not yet freed.
 */
void gpmhe_estimator_free(GpmheEstimator *estimator);

/**
 * Conditions a GP on `n` row-major inputs of length `dim` with fixed
 * hyperparameters.
 *
 * # Safety
 * Pointers must reference arrays of the stated sizes; `lengthscales` holds
 * `dim` values.
 */
GpmheStatus gpmhe_gp_fit(const double *inputs,
                         const double *outputs,
                         size_t n,
                         size_t dim,
                         double sigma_f,
                         const double *lengthscales,
                         double sigma_eps,
                         GpmheGp **out_gp);

/**
 * Like `gpmhe_gp_fit` but picks hyperparameters by maximizing the log
 * marginal likelihood from `restarts` seeded starts.
 *
 * # Safety
 * As for `gpmhe_gp_fit`.
 */
GpmheStatus gpmhe_gp_train(const double *inputs,
                           const double *outputs,
                           size_t n,
                           size_t dim,
                           size_t restarts,
                           uint64_t seed,
                           GpmheGp **out_gp);

/**
 * Input dimension, or 0 for a null handle.
 *
 * # Safety
 * `gp` must be null or a live handle.
 */
size_t gpmhe_gp_dim(const GpmheGp *gp);

/**
 * Writes `σ_f`, the `dim` lengthscales and `σ_ε`.
 *
 * # Safety
 * `gp` must be a live handle and `lengthscales` hold `dim` doubles.
 */
GpmheStatus gpmhe_gp_hyperparameters(const GpmheGp *gp,
                                     double *sigma_f,
                                     double *lengthscales,
                                     size_t dim,
                                     double *sigma_eps);

/**
 * Posterior mean and variance at `x`.
 *
 * # Safety
 * `gp` must be a live handle and `x` hold `dim` doubles.
 */
GpmheStatus gpmhe_gp_predict(const GpmheGp *gp,
                             const double *x,
                             size_t dim,
                             double *mean,
                             double *var);

/**
 * Gradient of the posterior mean at `x`, written to `grad` (`dim` values).
 *
 * # Safety
 * `gp` must be a live handle; `x` and `grad` hold `dim` doubles.
 */
GpmheStatus gpmhe_gp_mean_grad(const GpmheGp *gp, const double *x, size_t dim, double *grad);

/**
 * Releases a GP. Null is ignored.
 *
 * # Safety
 * `gp` must be null or a handle not yet freed.
 */
void gpmhe_gp_free(GpmheGp *gp);

/**
 * Loads a model bundle written by `gpmhe train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string.
 */
GpmheStatus gpmhe_model_load(const char *path, GpmheModel **out_model);

/**
 * State, input and output dimensions.
 *
 * # Safety
 * `model` must be a live handle; outputs must be writable.
 */
GpmheStatus gpmhe_model_dims(const GpmheModel *model, size_t *n, size_t *m, size_t *p);

/**
 * Mean and variance of `x(t+1)` at `d = (x, u)` of length `n + m`;
 * `mean` and `var` receive `n` values.
 *
 * # Safety
 * Arrays must have the stated sizes.
 */
GpmheStatus gpmhe_model_predict_state(const GpmheModel *model,
                                      const double *d,
                                      size_t len,
                                      double *mean,
                                      double *var);

/**
 * Mean and variance of `y(t)` at `d = (x, u)`; `p` values each.
 *
 * # Safety
 * Arrays must have the stated sizes.
 */
GpmheStatus gpmhe_model_predict_output(const GpmheModel *model,
                                       const double *d,
                                       size_t len,
                                       double *mean,
                                       double *var);

/**
 * Process-noise weight at `d`, row-major `n × n`.
 *
 * # Safety
 * `d` holds `len` doubles, `weight` has room for `n * n`.
 */
GpmheStatus gpmhe_model_weight_q(const GpmheModel *model,
                                 const double *d,
                                 size_t len,
                                 double *weight);

/**
 * Measurement-noise weight at `d`, row-major `p × p`.
 *
 * # Safety
 * `d` holds `len` doubles, `weight` has room for `p * p`.
 */
GpmheStatus gpmhe_model_weight_r(const GpmheModel *model,
                                 const double *d,
                                 size_t len,
                                 double *weight);

/**
 * Releases a model. Estimators built from it stay valid.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void gpmhe_model_free(GpmheModel *model);

/**
 * Copies the last error of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL,
 * or 0 when the last call succeeded.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t gpmhe_last_error_message(char *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GPMHE_H */
