#ifndef KSELECT_H
#define KSELECT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Per-bin kernel selector for the `kernel` arguments.
 */
typedef enum KsKernel {
  KS_KERNEL_LINEAR = 0,
  KS_KERNEL_CHI_SQUARE = 1,
  KS_KERNEL_INTERSECTION = 2,
} KsKernel;

typedef enum KsStatus {
  KS_STATUS_OK = 0,
  KS_STATUS_NULL_POINTER = 1,
  KS_STATUS_DIMENSION = 2,
  KS_STATUS_DOMAIN = 3,
  KS_STATUS_INPUT = 4,
  KS_STATUS_SOLVER = 5,
  KS_STATUS_PARSE = 6,
  KS_STATUS_MODEL = 7,
  KS_STATUS_IO = 8,
  KS_STATUS_PANIC = 9,
} KsStatus;

/**
 * Opaque feature-selection model.
 */
typedef struct KsFeatureModel KsFeatureModel;

/**
 * Opaque region-selection model.
 */
typedef struct KsRegionModel KsRegionModel;

/**
 * Training options; obtain defaults from [`ks_options_default`].
 */
typedef struct KsOptions {
  double c;
  double tol;
  double step_tol;
  size_t max_outer;
} KsOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *ks_last_error(void);

struct KsOptions ks_options_default(void);

/**
 * Trains feature selection on `n` row-major samples of dimension `d` with
 * labels in {-1, +1}. `opts` may be null for defaults.
 *
 * # Safety
 * `x` must hold `n * d` values, `y` must hold `n`, and `out` must be writable.
 */
enum KsStatus ks_fs_train(const double *x,
                          size_t n,
                          size_t d,
                          const double *y,
                          uint32_t kernel,
                          const struct KsOptions *opts,
                          struct KsFeatureModel **out);

/**
 * Decision values for `n` row-major samples of dimension `d`.
 *
 * # Safety
 * `model` must come from this library; `z` must hold `n * d` values and
 * `scores` must have room for `n`.
 */
enum KsStatus ks_fs_predict(const struct KsFeatureModel *model,
                            const double *z,
                            size_t n,
                            size_t d,
                            double *scores);

/**
 * Feature dimension of the model, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t ks_fs_dim(const struct KsFeatureModel *model);

/**
 * Copies the learned bin weights into `weights` (length `ks_fs_dim`).
 *
 * # Safety
 * `model` must come from this library and `weights` must have room for `len`.
 */
enum KsStatus ks_fs_weights(const struct KsFeatureModel *model, double *weights, size_t len);

/**
 * Number of bins above the relative selection threshold.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
size_t ks_fs_selected_count(const struct KsFeatureModel *model);

/**
 * Final dual objective, or NaN for a null handle.
 *
 * # Safety
 * `model` must be null or come from this library.
 */
double ks_fs_objective(const struct KsFeatureModel *model);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum KsStatus ks_fs_save(const struct KsFeatureModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum KsStatus ks_fs_load(const char *path, struct KsFeatureModel **out);

/**
 * # Safety
 * `model` must be null or come from this library and not be used afterwards.
 */
void ks_fs_free(struct KsFeatureModel *model);

/**
 * Trains region selection. Instances are `n_instances` row-major histograms
 * of dimension `d`; bag `b` owns instances `offsets[b]..offsets[b + 1]`
 * (`offsets` has `n_bags + 1` entries, starting at 0 and ending at
 * `n_instances`). Bags are identified by their index.
 *
 * # Safety
 * Every pointer must hold the number of values described above and `out`
 * must be writable.
 */
enum KsStatus ks_rs_train(const double *instances,
                          size_t n_instances,
                          size_t d,
                          const size_t *offsets,
                          const double *labels,
                          size_t n_bags,
                          uint32_t kernel,
                          const struct KsOptions *opts,
                          struct KsRegionModel **out);

/**
 * Decision values for `n` row-major instances of dimension `d`.
 *
 * # Safety
 * `model` must come from this library; `h` must hold `n * d` values and
 * `scores` must have room for `n`.
 */
enum KsStatus ks_rs_score_instances(const struct KsRegionModel *model,
                                    const double *h,
                                    size_t n,
                                    size_t d,
                                    double *scores);

/**
 * Copies the learned instance weights of positive training bag `bag` into
 * `weights`, whose length must equal the bag size.
 *
 * # Safety
 * `model` must come from this library and `weights` must have room for `len`.
 */
enum KsStatus ks_rs_bag_weights(const struct KsRegionModel *model,
                                size_t bag,
                                double *weights,
                                size_t len);

/**
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum KsStatus ks_rs_save(const struct KsRegionModel *model, const char *path);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` writable.
 */
enum KsStatus ks_rs_load(const char *path, struct KsRegionModel **out);

/**
 * # Safety
 * `model` must be null or come from this library and not be used afterwards.
 */
void ks_rs_free(struct KsRegionModel *model);

/**
 * Non-interpolated average precision; `labels[i] > 0` marks a positive.
 *
 * # Safety
 * `scores` and `labels` must hold `n` values; `out` must be writable.
 */
enum KsStatus ks_average_precision(const double *scores,
                                   const double *labels,
                                   size_t n,
                                   double *out);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* KSELECT_H */
