#ifndef FLUXSWARM_H
#define FLUXSWARM_H

/* Generated by cbindgen from fluxswarm-ffi; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status code returned by every fallible call.
 */
typedef enum {
  FS_OK = 0,
  FS_ERR_NULL_POINTER = 1,
  FS_ERR_INVALID_ARGUMENT = 2,
  FS_ERR_CONFIG = 3,
  FS_ERR_UTF8 = 4,
  FS_ERR_RUNTIME = 5,
} FsStatus;

/**
 * Episode state after a step.
 */
typedef enum {
  FS_RUNNING = 0,
  FS_SUCCESS = 1,
  FS_FAILURE = 2,
  FS_TRUNCATED_TIMEOUT = 3,
  FS_TRUNCATED_CFD = 4,
} FsEpisodeState;

/**
 * Opaque simulation environment handle.
 */
typedef struct FsEnv FsEnv;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent error on this thread. The pointer stays valid
 * until the next failing call on the same thread.
 */
const char *fs_last_error_message(void);

/**
 * Library version as a static C string.
 */
const char *fs_version(void);

/**
 * Observation features per agent.
 */
uintptr_t fs_observation_dim(void);

/**
 * Reward objectives per agent per step.
 */
uintptr_t fs_objective_count(void);

/**
 * Creates an environment from TOML text (pass an empty string for the
 * built-in defaults). On success writes the handle to `out`.
 *
 * # Safety
 * `toml_text` must be a valid NUL-terminated string and `out` a valid
 * pointer; the returned handle must be released with [`fs_env_destroy`].
 */
FsStatus fs_env_create_from_toml(const char *toml_text, FsEnv **out);

/**
 * Creates an environment by loading a TOML config file.
 *
 * # Safety
 * `path` must be a valid NUL-terminated string and `out` a valid pointer.
 */
FsStatus fs_env_create(const char *path, FsEnv **out);

/**
 * Releases an environment handle. Null is a no-op.
 *
 * # Safety
 * `env` must be a handle from a create call, not yet destroyed.
 */
void fs_env_destroy(FsEnv *env);

/**
 * Number of agents in the swarm.
 *
 * # Safety
 * `env` must be a live handle.
 */
uintptr_t fs_env_agent_count(const FsEnv *env);

/**
 * Simulation time (s) inside the current episode.
 *
 * # Safety
 * `env` must be a live handle.
 */
double fs_env_time(const FsEnv *env);

/**
 * Steps taken in the current episode.
 *
 * # Safety
 * `env` must be a live handle.
 */
uint64_t fs_env_step_count(const FsEnv *env);

/**
 * Resets the episode and writes the `agents * 8` initial observations.
 *
 * # Safety
 * `env` must be a live handle and `obs_out` must point to at least
 * `obs_len` doubles.
 */
FsStatus fs_env_reset(FsEnv *env, double *obs_out, uintptr_t obs_len);

/**
 * Advances one control step.
 *
 * `actions` holds `agents * 2` normalized components in agent-id order.
 * On success writes `agents * 8` observations, `agents * 3` rewards
 * (progress, energy, smoothness per agent) and the episode state. Stepping
 * a finished episode is an error; call [`fs_env_reset`] first.
 *
 * # Safety
 * All pointers must be valid for their stated lengths; `env` must be a
 * live handle.
 */
FsStatus fs_env_step(FsEnv *env,
                     const double *actions,
                     uintptr_t actions_len,
                     double *obs_out,
                     uintptr_t obs_len,
                     double *rewards_out,
                     uintptr_t rewards_len,
                     FsEpisodeState *state_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLUXSWARM_H */
