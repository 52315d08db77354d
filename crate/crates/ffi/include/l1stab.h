#ifndef L1STAB_H
#define L1STAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes shared by all functions.
typedef enum {
  L1_STAB_STATUS_OK = 0,
  L1_STAB_STATUS_NULL_POINTER = 1,
  // Bad argument: out of domain, wrong shape, malformed config.
  L1_STAB_STATUS_INVALID_ARGUMENT = 2,
  L1_STAB_STATUS_NON_FINITE = 3,
  L1_STAB_STATUS_RANK_DEFICIENT = 4,
  L1_STAB_STATUS_INFEASIBLE = 5,
  L1_STAB_STATUS_TOO_LARGE = 6,
  // Numerical failure inside the library.
  L1_STAB_STATUS_NUMERICAL = 7,
  L1_STAB_STATUS_IO = 8,
  // A Rust panic was caught at the boundary.
  L1_STAB_STATUS_PANIC = 9,
} L1StabStatus;

// Solver exit state reported by [`l1stab_solution_info`].
typedef enum {
  L1_STAB_SOLVE_STATUS_CONVERGED = 0,
  L1_STAB_SOLVE_STATUS_MAX_ITERS = 1,
  L1_STAB_SOLVE_STATUS_INFEASIBLE = 2,
} L1StabSolveStatus;

// Output encoding for [`l1stab_run_experiment`].
typedef enum {
  L1_STAB_FORMAT_CSV = 0,
  L1_STAB_FORMAT_JSON = 1,
} L1StabFormat;

// Weighted l1 instance `min sum w_i |z_i|  s.t.  A z = y`.
typedef struct L1StabProblem L1StabProblem;

// Solver output.
typedef struct L1StabSolution L1StabSolution;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null when the last call
// succeeded. The pointer stays valid until the next call on this thread.
const char *l1stab_last_error(void);

// Library version as a static NUL-terminated string.
const char *l1stab_version(void);

// Builds a problem from a row-major `m x n` matrix, `m` measurements and
// optional `n` weights (null means all ones).
//
// # Safety
// `a` must point to `m * n` doubles, `y` to `m`, `weights` to `n` or be
// null, and `out` must be writable.
L1StabStatus l1stab_problem_new(size_t m,
                                size_t n,
                                const double *a,
                                const double *y,
                                const double *weights,
                                L1StabProblem **out);

// Releases a problem. Null is ignored.
//
// # Safety
// `p` must come from [`l1stab_problem_new`] and not be freed twice.
void l1stab_problem_free(L1StabProblem *p);

// Solves `problem`. `tol <= 0` and `max_iters == 0` select the defaults.
//
// # Safety
// `problem` must be a live handle and `out` writable.
L1StabStatus l1stab_solve(const L1StabProblem *problem,
                          double tol,
                          size_t max_iters,
                          L1StabSolution **out);

// Releases a solution. Null is ignored.
//
// # Safety
// `s` must come from [`l1stab_solve`] and not be freed twice.
void l1stab_solution_free(L1StabSolution *s);

// Number of entries of the minimizer (0 for a null handle).
//
// # Safety
// `s` must be null or a live handle.
size_t l1stab_solution_len(const L1StabSolution *s);

// Copies the minimizer into `buf`, which must hold `len` doubles and
// `len` must equal [`l1stab_solution_len`].
//
// # Safety
// `s` must be a live handle and `buf` writable for `len` doubles.
L1StabStatus l1stab_solution_copy(const L1StabSolution *s, double *buf, size_t len);

// Scalar diagnostics of a solution; any out pointer may be null.
//
// # Safety
// `s` must be a live handle; non-null out pointers must be writable.
L1StabStatus l1stab_solution_info(const L1StabSolution *s,
                                  double *objective,
                                  double *lower_bound,
                                  double *residual,
                                  size_t *iterations,
                                  L1StabSolveStatus *status);

// Two-step reweighted recovery on the matrix and measurements of
// `problem` (its weights are ignored). Writes `n` doubles to `x_out`.
//
// # Safety
// `problem` must be a live handle and `x_out` writable for `n` doubles.
L1StabStatus l1stab_reweighted_recover(const L1StabProblem *problem,
                                       size_t k,
                                       double omega,
                                       double *x_out);

// `C = 1 / sqrt(1 - varpi)`.
//
// # Safety
// `out` must be writable.
L1StabStatus l1stab_scaling_constant(double varpi, double *out);

// Tail-error factor `2C / (C - 1)`.
//
// # Safety
// `out` must be writable.
L1StabStatus l1stab_stability_factor(double c, double *out);

// Internal angle `B(alpha', m')` of the regular simplex.
//
// # Safety
// `out` must be writable.
L1StabStatus l1stab_internal_angle(double alpha_prime, size_t m_prime, double *out);

// Runs the experiment described by the JSON config and returns the
// rendered table as a NUL-terminated string owned by the caller, to be
// released with [`l1stab_string_free`].
//
// # Safety
// `config_json` must be a valid NUL-terminated string and `out` writable.
L1StabStatus l1stab_run_experiment(const char *config_json, L1StabFormat format, char **out);

// Releases a string from [`l1stab_run_experiment`]. Null is ignored.
//
// # Safety
// `s` must come from this library and not be freed twice.
void l1stab_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* L1STAB_H */
