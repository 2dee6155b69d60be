#ifndef MOPO_H
#define MOPO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MopoBtForm {
  MOPO_BT_FORM_LOGISTIC = 0,
  MOPO_BT_FORM_RATIO = 1,
} MopoBtForm;

/**
 * Which of the synthetic datasets built from one draw of triples.
 */
typedef enum MopoMotivatingVariant {
  MOPO_MOTIVATING_VARIANT_D1 = 0,
  MOPO_MOTIVATING_VARIANT_D2 = 1,
  MOPO_MOTIVATING_VARIANT_JOINT = 2,
  MOPO_MOTIVATING_VARIANT_DJ = 3,
  MOPO_MOTIVATING_VARIANT_DC = 4,
} MopoMotivatingVariant;

typedef enum MopoRewardSet {
  MOPO_REWARD_SET_A = 0,
  MOPO_REWARD_SET_B = 1,
} MopoRewardSet;

/**
 * Result code of every fallible call.
 */
typedef enum MopoStatus {
  MOPO_STATUS_OK = 0,
  MOPO_STATUS_NULL_POINTER = 1,
  MOPO_STATUS_INVALID_ARGUMENT = 2,
  MOPO_STATUS_CONFIG = 3,
  MOPO_STATUS_NUMERICAL_DIVERGENCE = 4,
  MOPO_STATUS_INFEASIBLE = 5,
  MOPO_STATUS_DOMAIN = 6,
  MOPO_STATUS_IO = 7,
  MOPO_STATUS_BUFFER_TOO_SMALL = 8,
  MOPO_STATUS_PANIC = 9,
  MOPO_STATUS_OTHER = 10,
} MopoStatus;

/**
 * Opaque preference dataset.
 */
typedef struct MopoDataset MopoDataset;

/**
 * Opaque Pareto front.
 */
typedef struct MopoFront MopoFront;

/**
 * Opaque solver configuration.
 */
typedef struct MopoSolverConfig MopoSolverConfig;

/**
 * Opaque training result.
 */
typedef struct MopoTrainResult MopoTrainResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t mopo_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mopo_version(void);

/**
 * One of the five three-action canonical datasets (`id` in 1..=5).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum MopoStatus mopo_dataset_canonical(uint32_t id, struct MopoDataset **out);

/**
 * Random three-action, two-objective bandit data.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum MopoStatus mopo_dataset_random(uint64_t seed, size_t reps, struct MopoDataset **out);

/**
 * Synthetic contextual data for a reward set under the logistic form.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum MopoStatus mopo_dataset_motivating(size_t n,
                                        uint64_t seed,
                                        enum MopoRewardSet set,
                                        double w,
                                        enum MopoMotivatingVariant variant,
                                        struct MopoDataset **out);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t mopo_dataset_len(const struct MopoDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void mopo_dataset_free(struct MopoDataset *ds);

/**
 * Default configuration (adaptive thresholds, three-action bandit).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum MopoStatus mopo_config_new_default(struct MopoSolverConfig **out);

/**
 * Fixed-threshold configuration with no KL slack and no lagged reference.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum MopoStatus mopo_config_new_constrained(struct MopoSolverConfig **out);

/**
 * Entropy/KL temperature τ.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_tau(struct MopoSolverConfig *cfg, double value);

/**
 * KL slack ε of the lower bound.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_epsilon(struct MopoSolverConfig *cfg, double value);

/**
 * Step size η shared by all updates.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_eta(struct MopoSolverConfig *cfg, double value);

/**
 * RNG seed.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_seed(struct MopoSolverConfig *cfg, uint64_t value);

/**
 * Number of training steps.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_epochs(struct MopoSolverConfig *cfg, size_t value);

/**
 * Lag between reference swaps and threshold refreshes.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_t0(struct MopoSolverConfig *cfg, size_t value);

/**
 * Records per mini-batch.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_batch_size(struct MopoSolverConfig *cfg, size_t value);

/**
 * Mini-batches drawn per step.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_batches_per_step(struct MopoSolverConfig *cfg, size_t value);

/**
 * Initial χ.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_chi_init(struct MopoSolverConfig *cfg, double value);

/**
 * Cap on each λ.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_lambda_max(struct MopoSolverConfig *cfg, double value);

/**
 * Enables or disables symmetric augmentation.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_augment(struct MopoSolverConfig *cfg, bool value);

/**
 * Sets a single β broadcast to all constraints.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_beta(struct MopoSolverConfig *cfg, double beta);

/**
 * Tabular policy over `n` actions.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_bandit(struct MopoSolverConfig *cfg, size_t n);

/**
 * Context×action grid policy.
 *
 * # Safety
 * `cfg` must be null or a live handle.
 */
enum MopoStatus mopo_config_set_grid(struct MopoSolverConfig *cfg, size_t bx, size_t by);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void mopo_config_free(struct MopoSolverConfig *cfg);

/**
 * Trains on `ds` and stores the result handle in `out`.
 *
 * # Safety
 * Handles must be live; `out` must point to writable storage.
 */
enum MopoStatus mopo_train(const struct MopoSolverConfig *cfg,
                           const struct MopoDataset *ds,
                           struct MopoTrainResult **out);

/**
 * Length of the flattened probability table, or 0 for null.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t mopo_result_num_probs(const struct MopoTrainResult *res);

/**
 * Row-major final policy probabilities.
 *
 * # Safety
 * `res` must be live; `buf` must hold `len` doubles.
 */
enum MopoStatus mopo_result_probabilities(const struct MopoTrainResult *res,
                                          double *buf,
                                          size_t len);

/**
 * Number of constraints (K − 1), or 0 for null.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t mopo_result_num_constraints(const struct MopoTrainResult *res);

/**
 * Final multipliers λ.
 *
 * # Safety
 * `res` must be live; `buf` must hold `len` doubles.
 */
enum MopoStatus mopo_result_lambda(const struct MopoTrainResult *res, double *buf, size_t len);

/**
 * Number of recorded steps, or 0 for null.
 *
 * # Safety
 * `res` must be null or a live handle.
 */
size_t mopo_result_history_len(const struct MopoTrainResult *res);

/**
 * # Safety
 * `res` must be null or a handle not yet freed.
 */
void mopo_result_free(struct MopoTrainResult *res);

/**
 * Bradley-Terry win probability of reward `r` over `r_prime`.
 *
 * # Safety
 * `out` must point to a writable double.
 */
enum MopoStatus mopo_bt_prob(double r, double r_prime, enum MopoBtForm form, double *out);

/**
 * Non-dominated subset of `n_points` points with `k` objectives each,
 * given row-major in `values`.
 *
 * # Safety
 * `values` must hold `n_points * k` doubles; `out` must be writable.
 */
enum MopoStatus mopo_front_from_points(const double *values,
                                       size_t n_points,
                                       size_t k,
                                       struct MopoFront **out);

/**
 * Scalarization-sweep front of a synthetic reward set.
 *
 * # Safety
 * `out` must be writable.
 */
enum MopoStatus mopo_ground_truth_front(enum MopoRewardSet set,
                                        size_t grid_x,
                                        size_t grid_y,
                                        size_t w_steps,
                                        struct MopoFront **out);

/**
 * Number of front points, or 0 for null.
 *
 * # Safety
 * `front` must be null or a live handle.
 */
size_t mopo_front_len(const struct MopoFront *front);

/**
 * Normalized dominated distance of a `k`-objective point to the front.
 *
 * # Safety
 * `front` must be live; `point` must hold `k` doubles; `out` writable.
 */
enum MopoStatus mopo_dominated_distance(const struct MopoFront *front,
                                        const double *point,
                                        size_t k,
                                        double *out);

/**
 * # Safety
 * `front` must be null or a handle not yet freed.
 */
void mopo_front_free(struct MopoFront *front);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MOPO_H */
