#ifndef CLIPGRAD_H
#define CLIPGRAD_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum CgStatus {
  CgOk = 0,
  CgNullPointer = 1,
  CgInvalidArgument = 2,
  CgRuntimeError = 3,
} CgStatus;

/**
 * Opaque objective handle.
 */
typedef struct CgObjective CgObjective;

/**
 * Opaque trajectory handle.
 */
typedef struct CgTrajectory CgTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *cg_last_error_message(void);

/**
 * Builds an objective from a catalog id such as `quartic`,
 * `exp_worstcase:L1=2.0`, `slow_growth:eps=0.1` or `poly:0,0,0,0,1`.
 * Returns null on error; see [`cg_last_error_message`].
 *
 * # Safety
 * `id` must be a valid NUL-terminated string.
 */
struct CgObjective *cg_objective_new_from_id(const char *id);

/**
 * Releases an objective handle. Null is ignored.
 *
 * # Safety
 * `obj` must be a pointer previously returned by
 * [`cg_objective_new_from_id`] and not freed since.
 */
void cg_objective_free(struct CgObjective *obj);

/**
 * Dimension of the objective's domain; 0 for a null handle.
 *
 * # Safety
 * `obj` must be a live handle or null.
 */
size_t cg_objective_dim(const struct CgObjective *obj);

/**
 * Evaluates the objective. `x` must have `len == cg_objective_dim`.
 *
 * # Safety
 * `obj` must be a live handle; `x` must point to `len` doubles and
 * `out` to one.
 */
enum CgStatus cg_objective_eval(const struct CgObjective *obj,
                                const double *x,
                                size_t len,
                                double *out);

/**
 * Writes the gradient into `out` (`len` doubles).
 *
 * # Safety
 * `obj` must be a live handle; `x` and `out` must point to `len`
 * doubles each.
 */
enum CgStatus cg_objective_grad(const struct CgObjective *obj,
                                const double *x,
                                size_t len,
                                double *out);

/**
 * Runs a step rule given in text form (e.g.
 * `clipped_gd{eta_c=1,gamma=0.01}`). A positive `tau` configures a
 * uniform-ball noise oracle with the given seed; stochastic rules
 * require it. Returns null on error.
 *
 * # Safety
 * `obj` must be a live handle, `rule` a valid NUL-terminated string and
 * `x0` a pointer to `len` doubles.
 */
struct CgTrajectory *cg_run(const struct CgObjective *obj,
                            const char *rule,
                            const double *x0,
                            size_t len,
                            uint64_t budget,
                            double eps,
                            double tau,
                            uint64_t noise_seed,
                            uint64_t run_index);

/**
 * Releases a trajectory handle. Null is ignored.
 *
 * # Safety
 * `traj` must be a pointer previously returned by [`cg_run`] and not
 * freed since.
 */
void cg_trajectory_free(struct CgTrajectory *traj);

/**
 * Number of steps taken; 0 for a null handle.
 *
 * # Safety
 * `traj` must be a live handle or null.
 */
uint64_t cg_trajectory_total_steps(const struct CgTrajectory *traj);

/**
 * Termination reason: 0 budget, 1 eps reached, 2 diverged; -1 for a
 * null handle.
 *
 * # Safety
 * `traj` must be a live handle or null.
 */
int32_t cg_trajectory_terminated_by(const struct CgTrajectory *traj);

/**
 * Final objective value; NaN for a null handle.
 *
 * # Safety
 * `traj` must be a live handle or null.
 */
double cg_trajectory_final_f(const struct CgTrajectory *traj);

/**
 * Final gradient norm; NaN for a null handle.
 *
 * # Safety
 * `traj` must be a live handle or null.
 */
double cg_trajectory_final_grad_norm(const struct CgTrajectory *traj);

/**
 * First step index with gradient norm at most `eps`. Returns true and
 * fills `out` when such a step exists, false otherwise.
 *
 * # Safety
 * `traj` must be a live handle; `out` must point to a u64.
 */
bool cg_trajectory_first_hit(const struct CgTrajectory *traj, double eps, uint64_t *out);

/**
 * Local smoothness estimate along the displacement between `x_k` and
 * `x_k1` over the gamma grid with spacing `delta`.
 *
 * # Safety
 * `obj` must be a live handle; `x_k` and `x_k1` must point to `len`
 * doubles, `out` to one.
 */
enum CgStatus cg_estimate_local_smoothness(const struct CgObjective *obj,
                                           const double *x_k,
                                           const double *x_k1,
                                           size_t len,
                                           double delta,
                                           double *out);

/**
 * Closed-form complexity bound. `theorem_id` is one of `thm3`,
 * `thm4_lower`, `thm5`, `thm6`, `thm7`; pass NaN for `m` or `tau` when
 * absent.
 *
 * # Safety
 * `theorem_id` must be a valid NUL-terminated string; `out` must point
 * to a double.
 */
enum CgStatus cg_theorem_bound(const char *theorem_id,
                               double l0,
                               double l1,
                               double m,
                               double tau,
                               double delta_f,
                               double eps,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CLIPGRAD_H */
