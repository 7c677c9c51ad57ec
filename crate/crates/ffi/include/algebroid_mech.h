#ifndef ALGEBROID_MECH_H
#define ALGEBROID_MECH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  AM_STATUS_OK = 0,
  AM_STATUS_NULL_POINTER = 1,
  AM_STATUS_INVALID_ARGUMENT = 2,
  AM_STATUS_PARSE = 3,
  AM_STATUS_DIMENSION = 4,
  AM_STATUS_SINGULAR_HESSIAN = 5,
  AM_STATUS_NUMERICAL = 6,
  AM_STATUS_PANIC = 7,
} AmStatus;

/**
 * A Lie algebroid chart.
 */
typedef struct AmChart AmChart;

/**
 * A Lagrangian parsed over the state variables of one chart.
 */
typedef struct AmLagrangian AmLagrangian;

/**
 * An integrated trajectory with per-node energies.
 */
typedef struct AmTrajectory AmTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread. Valid until the next
 * failing call on the same thread; never null.
 */
const char *am_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *am_version(void);

/**
 * Creates a built-in chart by name (`trivial_r<n>`, `so3`, `se2`, ...).
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` a valid pointer.
 */
AmStatus am_chart_builtin(const char *name, AmChart **out);

/**
 * # Safety
 * `chart` must come from [`am_chart_builtin`] and not be used afterwards.
 */
void am_chart_free(AmChart *chart);

/**
 * Base dimension `m`; 0 for a null handle.
 *
 * # Safety
 * `chart` must be null or a live handle.
 */
size_t am_chart_base_dim(const AmChart *chart);

/**
 * Bundle rank `n`; 0 for a null handle.
 *
 * # Safety
 * `chart` must be null or a live handle.
 */
size_t am_chart_rank(const AmChart *chart);

/**
 * Samples the anchor-compatibility and Jacobi residuals.
 *
 * # Safety
 * `chart` must be live; output pointers must be valid.
 */
AmStatus am_chart_check_structure(const AmChart *chart,
                                  size_t samples,
                                  uint64_t seed,
                                  double tol,
                                  double *anchor_residual,
                                  double *jacobi_residual,
                                  bool *pass);

/**
 * Parses a Lagrangian over `x1..xm, y1..yn, v1..vn` of `chart`.
 *
 * # Safety
 * `chart` must be live, `text` NUL-terminated and `out` valid.
 */
AmStatus am_lagrangian_parse(const AmChart *chart, const char *text, AmLagrangian **out);

/**
 * # Safety
 * `l` must come from [`am_lagrangian_parse`] and not be used afterwards.
 */
void am_lagrangian_free(AmLagrangian *l);

/**
 * Time derivative of a flat state `x, y, v, p` (length `m + 3n`).
 *
 * # Safety
 * Handles must be live; `state` has `len` entries, `out` room for `len`.
 */
AmStatus am_rhs(const AmChart *chart,
                const AmLagrangian *lagrangian,
                const double *state,
                size_t len,
                double *out);

/**
 * Energy of a flat state.
 *
 * # Safety
 * Handles must be live; `state` has `len` entries; `out` is valid.
 */
AmStatus am_energy(const AmChart *chart,
                   const AmLagrangian *lagrangian,
                   const double *state,
                   size_t len,
                   double *out);

/**
 * Applies the Tulczyjew map to a flat dual point (length `m + 7n`).
 *
 * # Safety
 * `chart` must be live; `point` has `len` entries, `out` room for `len`.
 */
AmStatus am_alpha_map(const AmChart *chart, const double *point, size_t len, double *out);

/**
 * Inverse of [`am_alpha_map`].
 *
 * # Safety
 * As for [`am_alpha_map`].
 */
AmStatus am_alpha_inverse(const AmChart *chart, const double *point, size_t len, double *out);

/**
 * Integrates from `state` over `[t0, t1]` with fixed-step RK4 when
 * `adaptive_tol <= 0`, otherwise with the step-doubling controller.
 *
 * # Safety
 * Handles must be live; `state` has `len` entries; `out` is valid.
 */
AmStatus am_integrate(const AmChart *chart,
                      const AmLagrangian *lagrangian,
                      const double *state,
                      size_t len,
                      double t0,
                      double t1,
                      double dt,
                      double adaptive_tol,
                      AmTrajectory **out);

/**
 * # Safety
 * `tr` must come from [`am_integrate`] and not be used afterwards.
 */
void am_trajectory_free(AmTrajectory *tr);

/**
 * Number of stored nodes; 0 for a null handle.
 *
 * # Safety
 * `tr` must be null or live.
 */
size_t am_trajectory_len(const AmTrajectory *tr);

/**
 * Length of one flat state; 0 for a null or empty handle.
 *
 * # Safety
 * `tr` must be null or live.
 */
size_t am_trajectory_state_dim(const AmTrajectory *tr);

/**
 * Copies all node times into `out` (capacity `cap`).
 *
 * # Safety
 * `tr` must be live; `out` has room for `cap` values.
 */
AmStatus am_trajectory_times(const AmTrajectory *tr, double *out, size_t cap);

/**
 * Copies the flat state at node `k` into `out` (capacity `cap`).
 *
 * # Safety
 * `tr` must be live; `out` has room for `cap` values.
 */
AmStatus am_trajectory_state(const AmTrajectory *tr, size_t k, double *out, size_t cap);

/**
 * Energy stored at node `k`.
 *
 * # Safety
 * `tr` must be live and `out` valid.
 */
AmStatus am_trajectory_energy(const AmTrajectory *tr, size_t k, double *out);

/**
 * `max_k |E_k − E_0|`; NaN for a null handle.
 *
 * # Safety
 * `tr` must be null or live.
 */
double am_trajectory_energy_drift(const AmTrajectory *tr);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ALGEBROID_MECH_H */
