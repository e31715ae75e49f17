/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef CRAFTRL_H
#define CRAFTRL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of action heads.
#define CR_HEAD_COUNT 7

// Number of milestones in the reward chain.
#define CR_MILESTONE_COUNT 9

// Result code of every exported function.
typedef enum CrStatus {
  CR_STATUS_OK = 0,
  CR_STATUS_NULL_POINTER = 1,
  CR_STATUS_INVALID_ARGUMENT = 2,
  CR_STATUS_CONFIG = 3,
  CR_STATUS_USAGE = 4,
  CR_STATUS_FORMAT = 5,
  CR_STATUS_IO = 6,
  CR_STATUS_NUMERIC = 7,
  CR_STATUS_UNAVAILABLE = 8,
  CR_STATUS_GENERATION = 9,
  // The episode is over; reset the environment first.
  CR_STATUS_EPISODE_DONE = 10,
  CR_STATUS_PANIC = 99,
} CrStatus;

// An environment together with its current episode.
typedef struct CrEnv CrEnv;

// A policy network with its recurrent state and sampling RNG.
typedef struct CrPolicy CrPolicy;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null after a success.
// The pointer stays valid until the next call on the same thread.
const char *cr_last_error(void);

// Writes the size of each action head into `sizes[0..CR_HEAD_COUNT]`.
enum CrStatus cr_head_sizes(size_t *sizes);

// Creates an environment from a TOML config (null for defaults). Only the `[env]` section is used.
enum CrStatus cr_env_new(const char *config_toml, struct CrEnv **out);

// Releases an environment. Null is ignored.
void cr_env_free(struct CrEnv *env);

// Starts a new episode on the map generated from `seed`.
enum CrStatus cr_env_reset(struct CrEnv *env, uint64_t seed);

// Applies the action given as one index per head (`CR_HEAD_COUNT` entries).
// `reward` and `done` may be null.
enum CrStatus cr_env_step(struct CrEnv *env, const size_t *action, double *reward, bool *done);

// Frames elapsed, return so far and the obtained flag of every milestone
// (`CR_MILESTONE_COUNT` entries). Any output may be null.
enum CrStatus cr_env_progress(struct CrEnv *env,
                              uint32_t *frame,
                              double *episode_return,
                              bool *milestones);

// Widths of the spatial and non-spatial feature vectors.
enum CrStatus cr_env_feature_sizes(const struct CrEnv *env, size_t *spatial, size_t *nonspatial);

// Copies the current observation's features, the same ones the networks consume.
// Buffer lengths must equal the sizes from `cr_env_feature_sizes`.
enum CrStatus cr_env_features(struct CrEnv *env,
                              double *spatial,
                              size_t spatial_len,
                              double *nonspatial,
                              size_t nonspatial_len);

// Loads a policy checkpoint. `config_toml` (null for defaults) must describe the architecture
// it was trained with. `seed` drives action sampling.
enum CrStatus cr_policy_load(const char *path,
                             const char *config_toml,
                             uint64_t seed,
                             struct CrPolicy **out);

// Releases a policy. Null is ignored.
void cr_policy_free(struct CrPolicy *policy);

// Clears the recurrent state; call at the start of every episode.
enum CrStatus cr_policy_reset(struct CrPolicy *policy);

// Picks an action for the environment's current observation and writes one index per head
// into `action[0..CR_HEAD_COUNT]`. With `sampled` false every head takes its most likely value.
enum CrStatus cr_policy_act(struct CrPolicy *policy,
                            struct CrEnv *env,
                            bool sampled,
                            size_t *action);

// Evaluates the policy on seeds `seed_base..seed_base + episodes` with the environment of its
// config. `frequency` (may be null) receives the per-milestone success rates.
enum CrStatus cr_evaluate(const struct CrPolicy *policy,
                          size_t episodes,
                          uint64_t seed_base,
                          bool sampled,
                          double *mean,
                          double *frequency);

// V-trace targets and advantages for one sequence of length `len`.
// `advantages` may be null.
enum CrStatus cr_vtrace(size_t len,
                        const double *rewards,
                        const double *discounts,
                        const double *behavior_log_probs,
                        const double *target_log_probs,
                        const double *values,
                        double bootstrap,
                        double rho_bar,
                        double c_bar,
                        double *targets,
                        double *advantages);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CRAFTRL_H */
