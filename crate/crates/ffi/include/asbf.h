/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef ASBF_H
#define ASBF_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AsbfDirectionRule {
  ASBF_DIRECTION_RULE_BALANCED = 0,
  ASBF_DIRECTION_RULE_RANDOM = 1,
} AsbfDirectionRule;

typedef enum AsbfOverlapPolicy {
  ASBF_OVERLAP_POLICY_WARN = 0,
  ASBF_OVERLAP_POLICY_ABORT = 1,
  ASBF_OVERLAP_POLICY_CLIP = 2,
} AsbfOverlapPolicy;

typedef enum AsbfStatus {
  ASBF_STATUS_OK = 0,
  /**
   * A panic inside the library; should not happen.
   */
  ASBF_STATUS_INTERNAL = 1,
  /**
   * Bad arguments, data or configuration.
   */
  ASBF_STATUS_VALIDATION = 2,
  /**
   * The configuration cannot be honoured for this sample size.
   */
  ASBF_STATUS_INFEASIBLE = 3,
} AsbfStatus;

/**
 * Validated training data.
 */
typedef struct AsbfDataset AsbfDataset;

/**
 * A fitted forest.
 */
typedef struct AsbfForest AsbfForest;

typedef struct AsbfForestConfig {
  size_t b_trees;
  double alpha;
  double w;
  size_t k;
  size_t mtry;
  size_t q;
  uint64_t seed;
  enum AsbfDirectionRule direction_rule;
} AsbfForestConfig;

typedef struct AsbfAteConfig {
  size_t folds;
  double level;
  double overlap_eps;
  enum AsbfOverlapPolicy overlap_policy;
  /**
   * Clipping bound, used with `ASBF_OVERLAP_POLICY_CLIP`.
   */
  double clip_eps;
  uint64_t seed;
} AsbfAteConfig;

typedef struct AsbfAteResult {
  double theta_hat;
  double sigma_hat;
  double ci_low;
  double ci_high;
  size_t n;
  double pi_min;
  double pi_max;
  size_t overlap_flagged;
  size_t clipped;
} AsbfAteResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *asbf_last_error(void);

/**
 * Library defaults.
 */
struct AsbfForestConfig asbf_forest_config_default(void);

struct AsbfAteConfig asbf_ate_config_default(void);

/**
 * Copies `n` rows into a new dataset. `a` may be NULL; otherwise it holds
 * 0/1 treatment indicators.
 *
 * # Safety
 * `x` must point to `n * d` doubles, `y` to `n` doubles, `a` (if non-NULL)
 * to `n` bytes, and `out` must be writable.
 */
enum AsbfStatus asbf_dataset_new(const double *x,
                                 size_t n,
                                 size_t d,
                                 const double *y,
                                 const uint8_t *a,
                                 struct AsbfDataset **out);

/**
 * # Safety
 * `data` must be NULL or a handle from `asbf_dataset_new` not yet freed.
 */
void asbf_dataset_free(struct AsbfDataset *data);

/**
 * # Safety
 * `data` must be a live dataset handle.
 */
size_t asbf_dataset_rows(const struct AsbfDataset *data);

/**
 * # Safety
 * `data` must be a live dataset handle, `cfg` a valid pointer and `out`
 * writable.
 */
enum AsbfStatus asbf_forest_fit(const struct AsbfDataset *data,
                                const struct AsbfForestConfig *cfg,
                                struct AsbfForest **out);

/**
 * # Safety
 * `forest` must be NULL or a live forest handle.
 */
void asbf_forest_free(struct AsbfForest *forest);

/**
 * Covariate dimension of a fitted forest, 0 for NULL.
 *
 * # Safety
 * `forest` must be NULL or a live forest handle.
 */
size_t asbf_forest_dim(const struct AsbfForest *forest);

/**
 * # Safety
 * `forest` must be NULL or a live forest handle.
 */
size_t asbf_forest_num_trees(const struct AsbfForest *forest);

/**
 * Configuration the forest was fitted with.
 *
 * # Safety
 * `forest` must be a live handle and `out` writable.
 */
enum AsbfStatus asbf_forest_config(const struct AsbfForest *forest, struct AsbfForestConfig *out);

/**
 * Predicts `m` query rows of width `d` into `out`.
 *
 * # Safety
 * `xs` must point to `m * d` doubles and `out` to room for `m` doubles.
 */
enum AsbfStatus asbf_forest_predict(const struct AsbfForest *forest,
                                    const double *xs,
                                    size_t m,
                                    size_t d,
                                    double *out);

/**
 * Serializes a forest. Release the string with `asbf_string_free`.
 *
 * # Safety
 * `forest` must be a live handle and `out` writable.
 */
enum AsbfStatus asbf_forest_to_json(const struct AsbfForest *forest, char **out);

/**
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum AsbfStatus asbf_forest_from_json(const char *json, struct AsbfForest **out);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library, not yet freed.
 */
void asbf_string_free(char *s);

/**
 * Cross-fitted AIPW estimate of the average treatment effect. All three
 * nuisance forests use `nuisance`; the dataset must carry treatments.
 *
 * # Safety
 * All pointers must be valid; `data` must be a live dataset handle.
 */
enum AsbfStatus asbf_ate_estimate(const struct AsbfDataset *data,
                                  const struct AsbfForestConfig *nuisance,
                                  const struct AsbfAteConfig *cfg,
                                  struct AsbfAteResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ASBF_H */
