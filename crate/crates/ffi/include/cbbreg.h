#ifndef CBBREG_H
#define CBBREG_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define CBB_FAMILY_BINOMIAL 0

#define CBB_FAMILY_BETA_BINOMIAL 1

#define CBB_FAMILY_CONTAMINATED_BETA_BINOMIAL 2

typedef enum CbbStatus {
  CBB_STATUS_OK = 0,
  CBB_STATUS_NULL_POINTER = 1,
  CBB_STATUS_INVALID_ARGUMENT = 2,
  CBB_STATUS_DOMAIN = 3,
  CBB_STATUS_SCHEMA = 4,
  CBB_STATUS_EMPTY_DATA = 5,
  CBB_STATUS_EVALUATION = 6,
  CBB_STATUS_IO = 7,
  CBB_STATUS_PARSE = 8,
  CBB_STATUS_BUFFER_TOO_SMALL = 9,
  CBB_STATUS_PANIC = 99,
} CbbStatus;

// Opaque dataset handle.
typedef struct CbbDataset CbbDataset;

// Opaque handle to a fitted model with its standard errors.
typedef struct CbbFit CbbFit;

typedef struct CbbMoments {
  double mean;
  double variance;
  double skewness;
  double excess_kurtosis;
} CbbMoments;

typedef struct CbbCriteria {
  double aic;
  double bic;
  double hqic;
} CbbCriteria;

typedef struct CbbFitOptions {
  double epsilon;
  size_t max_iterations;
  size_t restarts;
  uint64_t seed;
} CbbFitOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread; empty after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *cbb_last_error_message(void);

// Log-probability of `y` out of `m`. Parameters a family does not use are
// ignored.
//
// # Safety
// `out` must be a valid pointer to a double.
enum CbbStatus cbb_log_pmf(uint32_t family_code,
                           uint64_t y,
                           uint64_t m,
                           double pi,
                           double sigma,
                           double delta,
                           double eta,
                           double *out);

// Closed-form mean, variance, skewness and excess kurtosis.
//
// # Safety
// `out` must be a valid pointer to a `CbbMoments`.
enum CbbStatus cbb_moments(uint32_t family_code,
                           uint64_t m,
                           double pi,
                           double sigma,
                           double delta,
                           double eta,
                           struct CbbMoments *out);

// # Safety
// `out` must be a valid pointer to a `CbbCriteria`.
enum CbbStatus cbb_information_criteria(double log_likelihood,
                                        size_t k,
                                        size_t n,
                                        struct CbbCriteria *out);

// # Safety
// `statistic` and `p_value` must be valid pointers to doubles.
enum CbbStatus cbb_lr_test(double loglik_null,
                           double loglik_alt,
                           uint32_t df,
                           double *statistic,
                           double *p_value);

// Builds a dataset from column arrays. `x` holds `n * p` covariates in
// row-major order and `names` the `p` covariate names; both may be null
// when `p` is 0.
//
// # Safety
// `y` and `m` must point to `n` values, `x` to `n * p` values, `names` to
// `p` NUL-terminated strings, and `out` must be a valid pointer.
enum CbbStatus cbb_dataset_new(size_t n,
                               const uint64_t *y,
                               const uint64_t *m,
                               size_t p,
                               const double *x,
                               const char *const *names,
                               struct CbbDataset **out);

// Reads a CSV file with a header row. `trials_column` may be null, in
// which case every row uses `constant_m`. `covariates` and `factors` name
// numeric and categorical columns.
//
// # Safety
// String arguments must be NUL-terminated; `covariates` must point to
// `n_covariates` strings and `factors` to `n_factors` strings (either may be
// null when its count is 0); `out` must be a valid pointer.
enum CbbStatus cbb_dataset_read_csv(const char *path,
                                    const char *response,
                                    const char *trials_column,
                                    uint64_t constant_m,
                                    const char *const *covariates,
                                    size_t n_covariates,
                                    const char *const *factors,
                                    size_t n_factors,
                                    struct CbbDataset **out);

// Number of rows, or 0 for a null handle.
//
// # Safety
// `data` must be null or a handle from this library.
size_t cbb_dataset_len(const struct CbbDataset *data);

// # Safety
// `data` must be null or a handle from this library, not yet freed.
void cbb_dataset_free(struct CbbDataset *data);

struct CbbFitOptions cbb_fit_options_default(void);

// Fits a model. Each formula is a right-hand side such as "~ x + z"; a
// null formula means intercept-only. Formulas for parameters the family
// does not have must be null or "~ 1". `options` may be null for defaults.
// Standard errors are computed as part of the fit.
//
// # Safety
// `data` must be a live dataset handle, strings NUL-terminated, and `out`
// a valid pointer.
enum CbbStatus cbb_fit(const struct CbbDataset *data,
                       uint32_t family_code,
                       const char *pi,
                       const char *sigma,
                       const char *delta,
                       const char *eta,
                       const struct CbbFitOptions *options,
                       struct CbbFit **out);

// # Safety
// `fit` must be null or a handle from this library, not yet freed.
void cbb_fit_free(struct CbbFit *fit);

// Maximized log-likelihood, or NaN for a null handle.
//
// # Safety
// `fit` must be null or a live handle.
double cbb_fit_log_likelihood(const struct CbbFit *fit);

// 1 if converged, 0 if not, -1 for a null handle.
//
// # Safety
// `fit` must be null or a live handle.
int cbb_fit_converged(const struct CbbFit *fit);

// # Safety
// `fit` must be null or a live handle.
size_t cbb_fit_iterations(const struct CbbFit *fit);

// Number of coefficients (β, α, γ, λ concatenated).
//
// # Safety
// `fit` must be null or a live handle.
size_t cbb_fit_n_coefficients(const struct CbbFit *fit);

// Copies the coefficients into `buf`, which must hold at least
// `cbb_fit_n_coefficients` values.
//
// # Safety
// `fit` must be a live handle and `buf` must point to `len` doubles.
enum CbbStatus cbb_fit_coefficients(const struct CbbFit *fit, double *buf, size_t len);

// Copies standard errors into `buf` and sets `*hessian_ok`. When the
// negative Hessian is not positive definite, `*hessian_ok` is 0 and `buf`
// is filled with NaN.
//
// # Safety
// `fit` must be a live handle, `buf` must point to `len` doubles and
// `hessian_ok` to an int.
enum CbbStatus cbb_fit_standard_errors(const struct CbbFit *fit,
                                       double *buf,
                                       size_t len,
                                       int *hessian_ok);

// Copies the posterior contaminant probabilities, one per row. For B and
// BB fits nothing is written and `*written` is 0.
//
// # Safety
// `fit` must be a live handle, `buf` must point to `len` doubles and
// `written` to a size_t.
enum CbbStatus cbb_fit_posterior_weights(const struct CbbFit *fit,
                                         double *buf,
                                         size_t len,
                                         size_t *written);

// AIC, BIC and HQIC of a fit.
//
// # Safety
// `fit` must be a live handle and `out` a valid pointer.
enum CbbStatus cbb_fit_criteria(const struct CbbFit *fit, struct CbbCriteria *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CBBREG_H */
