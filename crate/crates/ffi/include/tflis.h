#ifndef TFLIS_H
#define TFLIS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TflisStatus {
  TFLIS_STATUS_OK = 0,
  TFLIS_STATUS_NULL_POINTER = 1,
  TFLIS_STATUS_INVALID_ARGUMENT = 2,
  TFLIS_STATUS_DIMENSION_MISMATCH = 3,
  TFLIS_STATUS_NOT_YET_AVAILABLE = 4,
  TFLIS_STATUS_BUFFER_TOO_SMALL = 5,
  TFLIS_STATUS_PANIC = 6,
} TflisStatus;

/**
 * Transfer smoother state plus the output of its most recent step.
 */
typedef struct TflisFilter TflisFilter;

/**
 * Validated linear-Gaussian state-space model.
 */
typedef struct TflisModel TflisModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the last failure on this thread; empty after a success.
 * The pointer stays valid until the next call on the same thread.
 */
const char *tflis_last_error(void);

/**
 * Builds a model from row-major `A` (n×n), `B` (n×p), `C` (m×n), `Q` (n×n)
 * and the diagonal of `R` (m).
 *
 * # Safety
 * Every array must hold the number of values implied by the dimensions, and
 * `out` must be a valid pointer.
 */
enum TflisStatus tflis_model_new(size_t n_state,
                                 size_t n_input,
                                 size_t n_output,
                                 const double *a,
                                 const double *b,
                                 const double *c,
                                 const double *q,
                                 const double *r_diag,
                                 struct TflisModel **out);

/**
 * # Safety
 * `model` must come from [`tflis_model_new`] and not be used afterwards.
 */
void tflis_model_free(struct TflisModel *model);

/**
 * The benchmark position/velocity system.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TflisStatus tflis_model_position_velocity(struct TflisModel **out);

/**
 * Creates a transfer smoother with lag `lag` and `iterations` variational
 * passes per step. `prior_cov` is row-major n×n, `sigma0` has m entries.
 * The model is copied; the handle may be freed afterwards.
 *
 * # Safety
 * Arrays must be sized per the model's dimensions and `out` must be valid.
 */
enum TflisStatus tflis_filter_new(const struct TflisModel *model,
                                  const double *prior_mean,
                                  const double *prior_cov,
                                  const double *sigma0,
                                  double nu0,
                                  size_t lag,
                                  size_t iterations,
                                  struct TflisFilter **out);

/**
 * # Safety
 * `filter` must come from [`tflis_filter_new`] and not be used afterwards.
 */
void tflis_filter_free(struct TflisFilter *filter);

/**
 * Processes one step: input `u` (p values, the input applied after this
 * step's observations), target observation `y_target` and external
 * observation `y_external` (m values each). On failure the filter is left
 * unchanged.
 *
 * # Safety
 * Arrays must be sized per the model's dimensions.
 */
enum TflisStatus tflis_filter_step(struct TflisFilter *filter,
                                   const double *u,
                                   const double *y_target,
                                   const double *y_external);

/**
 * Number of steps processed so far.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TflisStatus tflis_filter_steps(const struct TflisFilter *filter, size_t *out);

/**
 * Number of states in the most recent reported window.
 *
 * # Safety
 * `out` must be a valid pointer.
 */
enum TflisStatus tflis_filter_window_size(const struct TflisFilter *filter, size_t *out);

/**
 * State estimate `delay` steps behind the newest one, from the most recent
 * reported window. `delay = 0` is the filtered estimate, `delay = lag` the
 * smoothed one.
 *
 * # Safety
 * `out` must hold `capacity` values and `written` must be valid.
 */
enum TflisStatus tflis_filter_estimate(const struct TflisFilter *filter,
                                       size_t delay,
                                       double *out,
                                       size_t capacity,
                                       size_t *written);

/**
 * Mean of the most recent reported window, newest block first.
 *
 * # Safety
 * `out` must hold `capacity` values and `written` must be valid.
 */
enum TflisStatus tflis_filter_window_mean(const struct TflisFilter *filter,
                                          double *out,
                                          size_t capacity,
                                          size_t *written);

/**
 * Row-major covariance of the most recent reported window.
 *
 * # Safety
 * `out` must hold `capacity` values and `written` must be valid.
 */
enum TflisStatus tflis_filter_window_cov(const struct TflisFilter *filter,
                                         double *out,
                                         size_t capacity,
                                         size_t *written);

/**
 * Diagonal of the noise scale estimate from the most recent step.
 *
 * # Safety
 * `out` must hold `capacity` values and `written` must be valid.
 */
enum TflisStatus tflis_filter_xi_bar(const struct TflisFilter *filter,
                                     double *out,
                                     size_t capacity,
                                     size_t *written);

/**
 * Sequential scalar-measurement update of `N(mean, cov)` with `m` rows of
 * `h` (row-major m×n), noise variances `gamma` and data `z`. Results go to
 * `mean_out` (n) and `cov_out` (n×n, row-major), which may alias the inputs.
 *
 * # Safety
 * Arrays must be sized per `n` and `m`.
 */
enum TflisStatus tflis_sdu(size_t n,
                           size_t m,
                           const double *mean,
                           const double *cov,
                           const double *h,
                           const double *gamma,
                           const double *z,
                           double *mean_out,
                           double *cov_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TFLIS_H */
