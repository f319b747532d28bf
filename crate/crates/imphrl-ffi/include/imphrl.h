#ifndef IMPHRL_H
#define IMPHRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every API call.
 */
typedef enum ImphrlStatus {
  /**
   * Success.
   */
  IMPHRL_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  IMPHRL_STATUS_NULL_POINTER = 1,
  /**
   * An argument was out of range (task id, primitive id, buffer size).
   */
  IMPHRL_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A path argument was not valid UTF-8.
   */
  IMPHRL_STATUS_BAD_UTF8 = 3,
  /**
   * Filesystem or parse failure; see `imphrl_last_error`.
   */
  IMPHRL_STATUS_IO = 4,
  /**
   * Parameter fitting failed (degenerate regressors, no demos).
   */
  IMPHRL_STATUS_FIT_FAILED = 5,
  /**
   * The episode has ended; reset before stepping again.
   */
  IMPHRL_STATUS_EPISODE_DONE = 6,
  /**
   * Internal panic; see `imphrl_last_error`.
   */
  IMPHRL_STATUS_INTERNAL = 7,
} ImphrlStatus;

/**
 * Task selector for `imphrl_env_new`.
 */
typedef enum ImphrlTask {
  IMPHRL_TASK_LIFT = 0,
  IMPHRL_TASK_DOOR = 1,
  IMPHRL_TASK_WIPE = 2,
  IMPHRL_TASK_CLEANUP = 3,
} ImphrlTask;

/**
 * Ablation arm selector: which controller/affordance switches are active.
 */
typedef enum ImphrlAblation {
  IMPHRL_ABLATION_FULL = 0,
  IMPHRL_ABLATION_CASE1 = 1,
  IMPHRL_ABLATION_CASE2 = 2,
  IMPHRL_ABLATION_CASE3 = 3,
} ImphrlAblation;

/**
 * Opaque environment handle.
 */
typedef struct ImphrlEnv ImphrlEnv;

/**
 * Result of one primitive decision.
 */
typedef struct ImphrlStepInfo {
  double env_reward;
  double shaped_reward;
  /**
   * Affordance coupling of the executed call, in [0, 1].
   */
  double affordance;
  /**
   * Peak contact force over the execution, N.
   */
  double max_force;
  /**
   * Actuation energy over the execution, J.
   */
  double energy;
  /**
   * Atomic-action budget consumed by this decision.
   */
  size_t atomic_cost;
  /**
   * 1 when the task's success predicate holds after the decision.
   */
  uint8_t success;
  /**
   * 1 when the episode ended (budget exhausted or divergence).
   */
  uint8_t done;
} ImphrlStepInfo;

/**
 * Result of a calibration fit.
 */
typedef struct ImphrlFitResult {
  double beta;
  double gamma_e;
  /**
   * Mean per-demonstration residual MSE.
   */
  double mean_mse;
  size_t n_demos;
} ImphrlFitResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread. The pointer stays
 * valid until the next failing call on the same thread.
 */
const char *imphrl_last_error(void);

/**
 * Creates an environment for `task` under the given ablation arm, already
 * reset with `seed`. On success writes the handle to `out`.
 */
enum ImphrlStatus imphrl_env_new(enum ImphrlTask task,
                                 enum ImphrlAblation ablation,
                                 uint64_t seed,
                                 struct ImphrlEnv **out);

/**
 * Releases an environment handle. Null is a no-op.
 */
void imphrl_env_free(struct ImphrlEnv *env);

/**
 * Observation length of the environment's task.
 */
size_t imphrl_env_obs_dim(const struct ImphrlEnv *env);

/**
 * Number of continuous parameters expected per primitive call.
 */
size_t imphrl_theta_dim(void);

/**
 * Resets the episode from `seed` and writes the initial observation.
 */
enum ImphrlStatus imphrl_env_reset(struct ImphrlEnv *env,
                                   uint64_t seed,
                                   double *obs_out,
                                   size_t obs_cap,
                                   size_t *obs_len);

/**
 * Executes one primitive decision. `theta` must hold `imphrl_theta_dim()`
 * values laid out as position xyz, yaw, delta xyz, gripper, stiffness xyzpsi.
 */
enum ImphrlStatus imphrl_env_step(struct ImphrlEnv *env,
                                  uint32_t primitive,
                                  const double *theta,
                                  struct ImphrlStepInfo *info_out,
                                  double *obs_out,
                                  size_t obs_cap,
                                  size_t *obs_len);

/**
 * Scores the affordance coupling a candidate call would receive in the
 * current state, without executing it.
 */
enum ImphrlStatus imphrl_affordance_eval(const struct ImphrlEnv *env,
                                         uint32_t primitive,
                                         const double *theta,
                                         double *coupling_out);

/**
 * Fits adaptive-controller parameters from a directory of demonstration
 * CSVs (`time,fx,fy,fz,dx,dy,dz,kdot_x,kdot_y,kdot_z`).
 */
enum ImphrlStatus imphrl_fit_params(const char *demo_dir, struct ImphrlFitResult *result_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IMPHRL_H */
