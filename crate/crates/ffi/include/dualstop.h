#ifndef DUALSTOP_H
#define DUALSTOP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DsStatus {
  DS_STATUS_OK = 0,
  DS_STATUS_NULL_POINTER = 1,
  DS_STATUS_INVALID_ARGUMENT = 2,
  DS_STATUS_UNKNOWN_PROBLEM = 3,
  DS_STATUS_INVALID_TREE = 4,
  DS_STATUS_INVARIANT = 5,
  DS_STATUS_BUDGET_CEILING = 6,
  DS_STATUS_INTERNAL = 7,
} DsStatus;

typedef enum DsFramework {
  DS_FRAMEWORK_MINIMIZE = 0,
  DS_FRAMEWORK_MAXIMIZE = 1,
} DsFramework;

typedef enum DsScheme {
  DS_SCHEME_TREE = 0,
  DS_SCHEME_NESTED = 1,
} DsScheme;

/**
 * Opaque problem handle.
 */
typedef struct DsProblem DsProblem;

typedef struct DsEstimate {
  double value;
  /**
   * Negative when no standard error is available.
   */
  double std_error;
  uint64_t calls;
  uint64_t seed;
} DsEstimate;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread; never null.
 */
const char *ds_last_error_message(void);

/**
 * Library version, a static string.
 */
const char *ds_version(void);

/**
 * Builds a builtin problem such as `"two_point(2)"` or `"iid_uniform(4)"`.
 *
 * # Safety
 * `spec` must be a valid C string and `out` a valid pointer.
 */
enum DsStatus ds_problem_builtin(const char *spec, struct DsProblem **out);

/**
 * Builds a problem from a JSON tree document.
 *
 * # Safety
 * `json` must be a valid C string and `out` a valid pointer.
 */
enum DsStatus ds_problem_from_tree_json(const char *json,
                                        enum DsFramework framework,
                                        struct DsProblem **out);

/**
 * Releases a handle; null is ignored.
 *
 * # Safety
 * `p` must come from one of the constructors and not be used afterwards.
 */
void ds_problem_free(struct DsProblem *p);

/**
 * Horizon `T`, or 0 for a null handle.
 *
 * # Safety
 * `p` must be null or a live handle.
 */
size_t ds_problem_horizon(const struct DsProblem *p);

/**
 * Exact optimal value by backward induction; tree instances only.
 *
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum DsStatus ds_exact_opt(const struct DsProblem *p, double *out);

/**
 * Exact terms `H_1..H_levels` written to `h_out`, which holds `levels` doubles.
 *
 * # Safety
 * `p` must be a live handle and `h_out` valid for `levels` writes.
 */
enum DsStatus ds_exact_levels(const struct DsProblem *p, size_t levels, double *h_out);

/**
 * Practical-mode estimate of the minimization value with one level per outer count.
 *
 * # Safety
 * `p` must be a live handle, `outer`/`inner` valid for `n_outer`/`n_inner`
 * reads and `out` a valid pointer.
 */
enum DsStatus ds_estimate_opt_min_practical(const struct DsProblem *p,
                                            const size_t *outer,
                                            size_t n_outer,
                                            const size_t *inner,
                                            size_t n_inner,
                                            enum DsScheme scheme,
                                            uint64_t seed,
                                            struct DsEstimate *out);

/**
 * Strict-mode estimate of `H_k` at accuracy `(eps, delta)`; refused with
 * `BudgetCeiling` when more than `max_calls` simulator calls are predicted
 * (0 means no ceiling).
 *
 * # Safety
 * `p` must be a live handle and `out` a valid pointer.
 */
enum DsStatus ds_estimate_hk_strict(const struct DsProblem *p,
                                    size_t k,
                                    double eps,
                                    double delta,
                                    uint64_t max_calls,
                                    uint64_t seed,
                                    struct DsEstimate *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DUALSTOP_H */
