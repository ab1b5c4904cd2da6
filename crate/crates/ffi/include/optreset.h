#ifndef OPTRESET_H
#define OPTRESET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum OptresetStatus {
  OPTRESET_STATUS_OK = 0,
  OPTRESET_STATUS_NULL_POINTER = 1,
  OPTRESET_STATUS_INVALID_ARGUMENT = 2,
  OPTRESET_STATUS_DIMENSION_MISMATCH = 3,
  OPTRESET_STATUS_NON_FINITE = 4,
  OPTRESET_STATUS_DEGENERATE = 5,
  OPTRESET_STATUS_CONFIG = 6,
  OPTRESET_STATUS_IO = 7,
  OPTRESET_STATUS_PANIC = 8,
  OPTRESET_STATUS_INTERNAL = 9,
} OptresetStatus;

/**
 * Values accepted by the `kind` argument of [`optreset_optimizer_new`].
 */
typedef enum OptresetOptimizerKind {
  OPTRESET_OPTIMIZER_KIND_SGD = 0,
  OPTRESET_OPTIMIZER_KIND_ADAM = 1,
  OPTRESET_OPTIMIZER_KIND_RMSPROP = 2,
  OPTRESET_OPTIMIZER_KIND_RADAM = 3,
} OptresetOptimizerKind;

/**
 * Opaque finite MDP.
 */
typedef struct OptresetMdp OptresetMdp;

/**
 * Opaque optimizer over a flat parameter vector of fixed length.
 */
typedef struct OptresetOptimizer OptresetOptimizer;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the most recent failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *optreset_last_error_message(void);

/**
 * Releases a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed already.
 */
void optreset_string_free(char *s);

/**
 * Creates an optimizer with fresh state for `n_params` parameters.
 * `kind` is an [`OptresetOptimizerKind`] value.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum OptresetStatus optreset_optimizer_new(uint32_t kind,
                                           double alpha,
                                           double beta1,
                                           double beta2,
                                           double epsilon,
                                           size_t n_params,
                                           struct OptresetOptimizer **out);

/**
 * Applies one update to `params` in place.
 *
 * # Safety
 * `params` and `grad` must point to `n` valid doubles.
 */
enum OptresetStatus optreset_optimizer_step(struct OptresetOptimizer *opt,
                                            double *params,
                                            const double *grad,
                                            size_t n);

/**
 * Zeroes both moments and the step counter.
 *
 * # Safety
 * `opt` must be a live handle or NULL.
 */
enum OptresetStatus optreset_optimizer_reset(struct OptresetOptimizer *opt);

/**
 * Copies the raw moments and step counter out. Either of `m` and `v` may
 * be NULL to skip it.
 *
 * # Safety
 * Non-null `m` and `v` must point to `n` writable doubles.
 */
enum OptresetStatus optreset_optimizer_moments(const struct OptresetOptimizer *opt,
                                               double *m,
                                               double *v,
                                               size_t n,
                                               uint64_t *step_count);

/**
 * # Safety
 * `opt` must come from [`optreset_optimizer_new`] and not be used again.
 */
void optreset_optimizer_free(struct OptresetOptimizer *opt);

/**
 * Deterministic gridworld; see the README for the layout.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum OptresetStatus optreset_mdp_gridworld(size_t width,
                                           size_t height,
                                           size_t goal_x,
                                           size_t goal_y,
                                           double step_penalty,
                                           double gamma,
                                           struct OptresetMdp **out);

/**
 * Random garnet MDP.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage.
 */
enum OptresetStatus optreset_mdp_garnet(size_t n_states,
                                        size_t n_actions,
                                        size_t branching,
                                        double gamma,
                                        uint64_t seed,
                                        struct OptresetMdp **out);

/**
 * Builds an MDP from its JSON description (the serialized `MdpSpec`).
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum OptresetStatus optreset_mdp_from_json(const char *json, struct OptresetMdp **out);

/**
 * # Safety
 * `mdp` must be a live handle; the out pointers may be NULL.
 */
enum OptresetStatus optreset_mdp_dims(const struct OptresetMdp *mdp,
                                      size_t *n_states,
                                      size_t *n_actions);

/**
 * Solves for Q* and writes it row-major (`state * n_actions + action`).
 *
 * # Safety
 * `q_out` must point to `len` writable doubles, `len = n_states * n_actions`.
 */
enum OptresetStatus optreset_mdp_value_iteration(const struct OptresetMdp *mdp,
                                                 double tol,
                                                 double *q_out,
                                                 size_t len);

/**
 * # Safety
 * `mdp` must come from one of the MDP constructors and not be used again.
 */
void optreset_mdp_free(struct OptresetMdp *mdp);

/**
 * Runs one training job described by a TOML config (same format as the
 * CLI, `[env]` required) and returns the run record as JSON in
 * `*json_out`. Nothing is written to disk.
 *
 * # Safety
 * `toml` must be a NUL-terminated string; `json_out` must be writable.
 */
enum OptresetStatus optreset_train_toml(const char *toml, char **json_out);

/**
 * `(agent - random) / (reference - random)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum OptresetStatus optreset_normalize_score(double agent,
                                             double random_score,
                                             double reference_score,
                                             double *out);

/**
 * Trapezoidal area under `curve`; divided by `n - 1` when `normalized`.
 *
 * # Safety
 * `curve` must point to `n` doubles; `out` must be writable.
 */
enum OptresetStatus optreset_auc(const double *curve, size_t n, bool normalized, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* OPTRESET_H */
