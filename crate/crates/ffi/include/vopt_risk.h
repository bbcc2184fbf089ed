/* C interface for the vector-optimization risk solver. */

#ifndef VOPT_RISK_H
#define VOPT_RISK_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Approximation loop selector for [`vopt_solve`].
 */
typedef enum VoptAlgorithm {
  VOPT_ALGORITHM_PRIMAL = 0,
  VOPT_ALGORITHM_DUAL = 1,
} VoptAlgorithm;

/**
 * Scalarization backend selector for [`vopt_solve`].
 */
typedef enum VoptBackend {
  VOPT_BACKEND_DIRECT = 0,
  VOPT_BACKEND_BUNDLE = 1,
  VOPT_BACKEND_AUTO = 2,
} VoptBackend;

/**
 * Status code of every FFI call.
 */
typedef enum VoptStatus {
  /**
   * Success.
   */
  VOPT_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  VOPT_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  VOPT_STATUS_INVALID_UTF8 = 2,
  /**
   * A JSON document failed to parse or validate.
   */
  VOPT_STATUS_PARSE = 3,
  /**
   * Invalid numeric configuration (dimensions, tolerance, enum tag).
   */
  VOPT_STATUS_INVALID_ARGUMENT = 4,
  /**
   * The solve itself failed.
   */
  VOPT_STATUS_SOLVE = 5,
} VoptStatus;

/**
 * Opaque two-stage problem handle.
 */
typedef struct vopt_problem vopt_problem;

/**
 * Opaque solve-result handle.
 */
typedef struct vopt_result vopt_result;

/**
 * Opaque risk-measure handle.
 */
typedef struct vopt_risk_measure vopt_risk_measure;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Description of the most recent failure on this thread. The pointer stays
 * valid until the next failing FFI call on the same thread.
 *
 * # Safety
 * The returned pointer must not be freed or written through.
 */
const char *vopt_last_error_message(void);

/**
 * Parse a problem from an instance-file JSON document.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum VoptStatus vopt_problem_from_json(const char *json, struct vopt_problem **out);

/**
 * Release a problem handle. A null pointer is a no-op.
 *
 * # Safety
 * `p` must be a pointer previously returned by this library and not yet
 * freed.
 */
void vopt_problem_free(struct vopt_problem *p);

/**
 * Componentwise CVaR risk measure at levels `nu` (length `num_objectives`)
 * with ordering cone spanned by `cone_generators` (row-major
 * `num_generators x num_objectives`; pass NULL/0 for the standard orthant).
 *
 * # Safety
 * Array arguments must point to buffers of the stated lengths; `out` must
 * be valid.
 */
enum VoptStatus vopt_risk_cvar(const double *nu,
                               uintptr_t num_objectives,
                               const double *cone_generators,
                               uintptr_t num_generators,
                               struct vopt_risk_measure **out);

/**
 * Componentwise entropic risk measure with risk-aversion vector `delta`.
 * Same conventions as [`vopt_risk_cvar`].
 *
 * # Safety
 * Array arguments must point to buffers of the stated lengths; `out` must
 * be valid.
 */
enum VoptStatus vopt_risk_entropic(const double *delta,
                                   uintptr_t num_objectives,
                                   const double *cone_generators,
                                   uintptr_t num_generators,
                                   struct vopt_risk_measure **out);

/**
 * Release a risk-measure handle. A null pointer is a no-op.
 *
 * # Safety
 * `r` must be a pointer previously returned by this library and not yet
 * freed.
 */
void vopt_risk_free(struct vopt_risk_measure *r);

/**
 * Compute the ε-sandwich of the upper image.
 *
 * # Safety
 * `problem`, `risk`, and `out` must be valid pointers from this library.
 */
enum VoptStatus vopt_solve(const struct vopt_problem *problem,
                           const struct vopt_risk_measure *risk,
                           double epsilon,
                           enum VoptAlgorithm algorithm,
                           enum VoptBackend backend,
                           struct vopt_result **out);

/**
 * 1 when all four sandwich containment checks passed at the solve's ε,
 * else 0.
 *
 * # Safety
 * `result` must be a valid result handle.
 */
int32_t vopt_result_sandwich_passed(const struct vopt_result *result);

/**
 * Number of collected weak solution points.
 *
 * # Safety
 * `result` must be a valid result handle.
 */
uintptr_t vopt_result_num_solution_points(const struct vopt_result *result);

/**
 * Serialize the full result (solution sets, four approximations, stats,
 * sandwich report) as a JSON document; the caller owns the returned string.
 *
 * # Safety
 * `result` must be a valid result handle and `out_json` a valid pointer.
 */
enum VoptStatus vopt_result_to_json(const struct vopt_result *result, char **out_json);

/**
 * Release a result handle. A null pointer is a no-op.
 *
 * # Safety
 * `r` must be a pointer previously returned by this library and not yet
 * freed.
 */
void vopt_result_free(struct vopt_result *r);

/**
 * Release a string returned by [`vopt_result_to_json`]. A null pointer is
 * a no-op.
 *
 * # Safety
 * `s` must be a string previously returned by this library and not yet
 * freed.
 */
void vopt_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOPT_RISK_H */
