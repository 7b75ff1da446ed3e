#ifndef ASCONTROL_H
#define ASCONTROL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define ASC_METHOD_GMRES_IPF 0

#define ASC_METHOD_MINRES_BDF 1

#define ASC_METHOD_BPCG_BT 2

#define ASC_FORCING_EXACT 0

#define ASC_FORCING_INEXACT 1

#define ASC_OUTCOME_CONVERGED 0

#define ASC_OUTCOME_MAX_ITERATIONS 1

#define ASC_OUTCOME_LINEAR_FAILURE 2

typedef enum AscStatus {
  ASC_OK = 0,
  ASC_NULL_POINTER = 1,
  ASC_INVALID_ARGUMENT = 2,
  ASC_UNSUPPORTED = 3,
  ASC_SOLVER_ERROR = 4,
  ASC_BUFFER_TOO_SMALL = 5,
  ASC_PANIC = 6,
} AscStatus;

/**
 * Discretized problem instance.
 */
typedef struct AscProblem AscProblem;

/**
 * Solution and iteration statistics of one Newton run.
 */
typedef struct AscResult AscResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t asc_last_error_message(char *buf, size_t len);

/**
 * Builds a preset problem (`"CC-Pb1"`, `"CC-Pb2"`, `"MC-Pb1"`, `"SC-Pb1"`)
 * with convection `(beta1, 0, 0)`. `eps` is used by `MC-Pb1` only.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AscStatus asc_problem_new_preset(const char *name,
                                      uint32_t level,
                                      double nu,
                                      double beta1,
                                      double eps,
                                      struct AscProblem **out);

/**
 * # Safety
 * `problem` must be null or come from `asc_problem_new_preset`, freed once.
 */
void asc_problem_free(struct AscProblem *problem);

/**
 * Number of grid nodes, or 0 for a null handle.
 *
 * # Safety
 * `problem` must be null or a live handle.
 */
size_t asc_problem_size(const struct AscProblem *problem);

/**
 * Runs the semismooth Newton method. `method` is one of `ASC_METHOD_*`,
 * `forcing` one of `ASC_FORCING_*`. A run that stops without converging still
 * returns `ASC_OK`; query `asc_result_outcome`.
 *
 * # Safety
 * `problem` must be a live handle and `out` a valid pointer.
 */
enum AscStatus asc_solve(const struct AscProblem *problem,
                         int32_t method,
                         int32_t forcing,
                         struct AscResult **out);

/**
 * # Safety
 * `result` must be null or come from `asc_solve`, freed once.
 */
void asc_result_free(struct AscResult *result);

/**
 * One of `ASC_OUTCOME_*`, or -1 for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
int32_t asc_result_outcome(const struct AscResult *result);

/**
 * Number of Newton iterations (linear solves).
 *
 * # Safety
 * `result` must be null or a live handle.
 */
size_t asc_result_newton_iterations(const struct AscResult *result);

/**
 * Mean Krylov iterations per Newton iteration; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double asc_result_mean_linear_iterations(const struct AscResult *result);

/**
 * Final nonlinear residual norm; NaN for a null handle.
 *
 * # Safety
 * `result` must be null or a live handle.
 */
double asc_result_kkt_norm(const struct AscResult *result);

/**
 * Copies the state y (one value per grid node) into `buf`.
 *
 * # Safety
 * `result` must be a live handle and `buf` valid for `len` doubles.
 */
enum AscStatus asc_result_copy_state(const struct AscResult *result, double *buf, size_t len);

/**
 * Copies the control u into `buf`.
 *
 * # Safety
 * `result` must be a live handle and `buf` valid for `len` doubles.
 */
enum AscStatus asc_result_copy_control(const struct AscResult *result, double *buf, size_t len);

/**
 * Copies the adjoint p into `buf`.
 *
 * # Safety
 * `result` must be a live handle and `buf` valid for `len` doubles.
 */
enum AscStatus asc_result_copy_adjoint(const struct AscResult *result, double *buf, size_t len);

/**
 * Copies the multiplier μ into `buf`.
 *
 * # Safety
 * `result` must be a live handle and `buf` valid for `len` doubles.
 */
enum AscStatus asc_result_copy_multiplier(const struct AscResult *result, double *buf, size_t len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASCONTROL_H */
