#ifndef SMC_H
#define SMC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SmcStatus {
  SMC_STATUS_OK = 0,
  SMC_STATUS_INVALID_PARAMETER = 1,
  SMC_STATUS_DIMENSION_MISMATCH = 2,
  SMC_STATUS_NON_FINITE = 3,
  SMC_STATUS_NUMERICAL = 4,
  SMC_STATUS_PARSE = 5,
  SMC_STATUS_IO = 6,
  SMC_STATUS_NULL_POINTER = 7,
  SMC_STATUS_PANIC = 8,
} SmcStatus;

typedef enum SmcSolver {
  SMC_SOLVER_SIRLS = 0,
  SMC_SOLVER_STRUCTURED_SIRLS = 1,
  SMC_SOLVER_STRUCTURED_NNM = 2,
  SMC_SOLVER_IRLS_EXACT = 3,
} SmcSolver;

typedef struct SmcMask SmcMask;

typedef struct SmcMatrix SmcMatrix;

typedef struct SmcSolveResult SmcSolveResult;

// Solver parameters. Start from [`smc_solver_options_default`] and change
// the fields of interest.
typedef struct SmcSolverOptions {
  double p;
  double q;
  // Sparsity weight of the exact solvers.
  double alpha;
  double tol;
  // 0 keeps each solver's own default.
  size_t max_iter;
  // Known rank; 0 estimates it every iteration.
  size_t rank;
  size_t sparsity_steps;
  size_t lowrank_steps;
  uint64_t seed;
} SmcSolverOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the last failure on this thread; empty after a
// successful call. Valid until the next call into this library.
const char *smc_last_error_message(void);

// Creates a `rows × cols` matrix from row-major `data`, or a zero matrix when
// `data` is null.
//
// # Safety
// `data` must be null or point to `rows * cols` readable doubles; `out` must
// be a valid pointer.
enum SmcStatus smc_matrix_new(size_t rows, size_t cols, const double *data, struct SmcMatrix **out);

// # Safety
// `m` must be null or a handle from this library not yet freed.
void smc_matrix_free(struct SmcMatrix *m);

// # Safety
// `m` must be a live matrix handle.
size_t smc_matrix_rows(const struct SmcMatrix *m);

// # Safety
// `m` must be a live matrix handle.
size_t smc_matrix_cols(const struct SmcMatrix *m);

// Copies the entries in row-major order into `out`, which holds `len` doubles.
//
// # Safety
// `m` must be a live handle and `out` must point to `len` writable doubles.
enum SmcStatus smc_matrix_copy_data(const struct SmcMatrix *m, double *out, size_t len);

// Creates a mask from row-major flags (nonzero = observed).
//
// # Safety
// `flags` must point to `rows * cols` readable bytes; `out` must be valid.
enum SmcStatus smc_mask_new(size_t rows, size_t cols, const uint8_t *flags, struct SmcMask **out);

// # Safety
// `mask` must be null or a handle from this library not yet freed.
void smc_mask_free(struct SmcMask *mask);

// # Safety
// `mask` must be a live mask handle.
size_t smc_mask_observed_count(const struct SmcMask *mask);

// Writes 1 for observed and 0 for missing entries, row-major.
//
// # Safety
// `mask` must be a live handle and `out` must point to `len` writable bytes.
enum SmcStatus smc_mask_copy_flags(const struct SmcMask *mask, uint8_t *out, size_t len);

// Product of an `m × r` and an `r × n` factor whose entries are zero with
// the given probabilities and uniform on `[0, 1)` otherwise.
//
// # Safety
// `out` must be a valid pointer.
enum SmcStatus smc_generate(size_t m,
                            size_t n,
                            size_t r,
                            double zero_frac_left,
                            double zero_frac_right,
                            uint64_t seed,
                            struct SmcMatrix **out);

// Divides by the spectral norm.
//
// # Safety
// `m` must be a live handle and `out` a valid pointer.
enum SmcStatus smc_normalize_spectral(const struct SmcMatrix *m, struct SmcMatrix **out);

// Observes exact zeros of `m` at `rate_zero` and the other entries at
// `rate_nonzero`, independently per entry.
//
// # Safety
// `m` must be a live handle and `out` a valid pointer.
enum SmcStatus smc_structured_sample(const struct SmcMatrix *m,
                                     double rate_zero,
                                     double rate_nonzero,
                                     uint64_t seed,
                                     struct SmcMask **out);

// Adds Gaussian noise of relative size `epsilon` on the observed entries.
//
// # Safety
// `m` and `mask` must be live handles and `out` a valid pointer.
enum SmcStatus smc_add_noise(const struct SmcMatrix *m,
                             const struct SmcMask *mask,
                             double epsilon,
                             uint64_t seed,
                             struct SmcMatrix **out);

struct SmcSolverOptions smc_solver_options_default(void);

// Completes `m_obs` from the entries marked in `mask`. A null `options`
// uses the defaults.
//
// # Safety
// `m_obs` and `mask` must be live handles, `options` null or valid, and
// `out` a valid pointer.
enum SmcStatus smc_solve(enum SmcSolver solver,
                         const struct SmcMatrix *m_obs,
                         const struct SmcMask *mask,
                         const struct SmcSolverOptions *options,
                         struct SmcSolveResult **out);

// Completed matrix, owned by the result.
//
// # Safety
// `r` must be a live result handle; the returned pointer dies with it.
const struct SmcMatrix *smc_result_matrix(const struct SmcSolveResult *r);

// # Safety
// `r` must be a live result handle.
size_t smc_result_iterations(const struct SmcSolveResult *r);

// # Safety
// `r` must be a live result handle.
bool smc_result_converged(const struct SmcSolveResult *r);

// # Safety
// `r` must be null or a handle from this library not yet freed.
void smc_result_free(struct SmcSolveResult *r);

// `‖reference − x‖_F / ‖reference‖_F`.
//
// # Safety
// Both matrices must be live handles and `out` a valid pointer.
enum SmcStatus smc_relative_error(const struct SmcMatrix *reference,
                                  const struct SmcMatrix *x,
                                  double *out);

// `r(m + n − r) / observed`.
//
// # Safety
// `out` must be a valid pointer.
enum SmcStatus smc_degrees_of_freedom_ratio(size_t m,
                                            size_t n,
                                            size_t r,
                                            size_t observed,
                                            double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SMC_H */
