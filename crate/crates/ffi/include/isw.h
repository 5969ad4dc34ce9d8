#ifndef ISW_H
#define ISW_H

#include <stddef.h>
#include <stdint.h>
#include <stdbool.h>

typedef enum IswStatus {
  ISW_STATUS_OK = 0,
  ISW_STATUS_NULL_POINTER = 1,
  ISW_STATUS_INVALID_INPUT = 2,
  ISW_STATUS_DIMENSION_MISMATCH = 3,
  ISW_STATUS_NON_FINITE = 4,
  ISW_STATUS_NO_CONVERGENCE = 5,
  ISW_STATUS_RANK_DEFICIENT = 6,
  ISW_STATUS_DIVERGED = 7,
  ISW_STATUS_CONFIG = 8,
  ISW_STATUS_FORMAT = 9,
  ISW_STATUS_VERIFICATION = 10,
  ISW_STATUS_IO = 11,
  ISW_STATUS_PANIC = 12,
} IswStatus;

typedef enum IswLossKind {
  ISW_LOSS_KIND_DWT = 0,
  ISW_LOSS_KIND_IW = 1,
  ISW_LOSS_KIND_IRW = 2,
  ISW_LOSS_KIND_ISW = 3,
} IswLossKind;

// Channel-major `C×H×W` feature map.
typedef struct IswFeatureMap IswFeatureMap;

// Strict-upper-triangular selection mask.
typedef struct IswMask IswMask;

// Symmetric square matrix.
typedef struct IswMatrix IswMatrix;

// Running variance accumulator for sensitivity analysis.
typedef struct IswStats IswStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL after a success.
// The pointer stays valid until the next call into this library on the
// same thread.
const char *isw_last_error_message(void);

// Copies `channels*height*width` values from `data`.
//
// # Safety
// `data` must point to that many readable doubles; `out` must be writable.
enum IswStatus isw_feature_map_new(uintptr_t channels,
                                   uintptr_t height,
                                   uintptr_t width,
                                   const double *data,
                                   struct IswFeatureMap **out);

// # Safety
// `fm` must be NULL or a handle from this library not yet freed.
void isw_feature_map_free(struct IswFeatureMap *fm);

// # Safety
// `fm` must be a live handle; the dimension pointers must be writable.
enum IswStatus isw_feature_map_dims(const struct IswFeatureMap *fm,
                                    uintptr_t *channels,
                                    uintptr_t *height,
                                    uintptr_t *width);

// Copies the values into `out`, which must hold at least `C*H*W` doubles.
//
// # Safety
// `fm` must be a live handle; `out` must point to `len` writable doubles.
enum IswStatus isw_feature_map_copy_data(const struct IswFeatureMap *fm,
                                         double *out,
                                         uintptr_t len);

// Validates symmetry of the row-major `dim*dim` buffer.
//
// # Safety
// `data` must point to `dim*dim` readable doubles; `out` must be writable.
enum IswStatus isw_matrix_new(uintptr_t dim, const double *data, struct IswMatrix **out);

// # Safety
// `m` must be NULL or a handle from this library not yet freed.
void isw_matrix_free(struct IswMatrix *m);

// # Safety
// `m` must be a live handle and `dim` writable.
enum IswStatus isw_matrix_dim(const struct IswMatrix *m, uintptr_t *dim);

// Copies the row-major entries into `out` (at least `dim*dim` doubles).
//
// # Safety
// `m` must be a live handle; `out` must point to `len` writable doubles.
enum IswStatus isw_matrix_copy_data(const struct IswMatrix *m, double *out, uintptr_t len);

// Population covariance `(X - μ)(X - μ)ᵀ / HW`.
//
// # Safety
// `x` must be a live handle; `out` must be writable.
enum IswStatus isw_covariance(const struct IswFeatureMap *x, struct IswMatrix **out);

// Covariance of the instance-standardized map.
//
// # Safety
// `x` must be a live handle; `out` must be writable.
enum IswStatus isw_standardized_covariance(const struct IswFeatureMap *x, struct IswMatrix **out);

// `Σ^{-1/2}(X - μ)`. With `lenient` a rank-deficient covariance is
// pseudo-inverted instead of rejected.
//
// # Safety
// `x` must be a live handle; `out` must be writable.
enum IswStatus isw_whiten(const struct IswFeatureMap *x, bool lenient, struct IswFeatureMap **out);

// Evaluates one loss and its gradient with respect to `x`.
//
// `mask` is ignored for `Dwt`; for `Iw`/`Irw` NULL means the full strict
// upper triangle. `margin` is used by `Irw` only. `grad` may be NULL when
// only the value is wanted.
//
// # Safety
// `x` must be a live handle, `mask` NULL or a live handle, `value` writable,
// `grad` NULL or writable.
enum IswStatus isw_loss(const struct IswFeatureMap *x,
                        enum IswLossKind kind,
                        const struct IswMask *mask,
                        double margin,
                        double *value,
                        struct IswFeatureMap **grad);

// Reads a `dim*dim` 0/1 matrix; only the strict upper triangle may be set.
//
// # Safety
// `values` must point to `dim*dim` readable doubles; `out` must be writable.
enum IswStatus isw_mask_from_values(uintptr_t dim, const double *values, struct IswMask **out);

// All strict-upper entries selected.
//
// # Safety
// `out` must be writable.
enum IswStatus isw_mask_full(uintptr_t dim, struct IswMask **out);

// # Safety
// `m` must be NULL or a handle from this library not yet freed.
void isw_mask_free(struct IswMask *m);

// # Safety
// `m` must be a live handle; `dim` and `count` writable.
enum IswStatus isw_mask_info(const struct IswMask *m, uintptr_t *dim, uintptr_t *count);

// Writes the mask as a row-major `dim*dim` 0/1 matrix.
//
// # Safety
// `m` must be a live handle; `out` must point to `len` writable doubles.
enum IswStatus isw_mask_copy_values(const struct IswMask *m, double *out, uintptr_t len);

// # Safety
// `out` must be writable.
enum IswStatus isw_stats_new(uintptr_t dim, struct IswStats **out);

// # Safety
// `s` must be NULL or a handle from this library not yet freed.
void isw_stats_free(struct IswStats *s);

// Adds one (original, transformed) pair of standardized covariances.
//
// # Safety
// All handles must be live.
enum IswStatus isw_stats_accumulate(struct IswStats *s,
                                    const struct IswMatrix *original,
                                    const struct IswMatrix *transformed);

// Folds `other` into `s`.
//
// # Safety
// Both handles must be live and distinct.
enum IswStatus isw_stats_merge(struct IswStats *s, const struct IswStats *other);

// # Safety
// `s` must be a live handle; `count` writable.
enum IswStatus isw_stats_sample_count(const struct IswStats *s, uintptr_t *count);

// The mean variance matrix `V` accumulated so far.
//
// # Safety
// `s` must be a live handle; `out` writable.
enum IswStatus isw_stats_variance(const struct IswStats *s, struct IswMatrix **out);

// Optimal 1-D k-means. `labels` receives `n` cluster indices (0 = lowest
// centroid), `centroids` up to `k` ascending centroids, `effective_k` the
// number of clusters formed.
//
// # Safety
// `values` and `labels` must hold `n` elements, `centroids` `k` elements,
// `effective_k` must be writable.
enum IswStatus isw_kmeans_1d(const double *values,
                             uintptr_t n,
                             uintptr_t k,
                             uintptr_t *labels,
                             double *centroids,
                             uintptr_t *effective_k);

// Clusters the strict upper triangle of `V` and selects the entries in the
// `k - m` highest clusters. `degenerate` is set when fewer than `m + 1`
// clusters could be formed, in which case the mask is empty.
//
// # Safety
// `s` must be a live handle; `out` and `degenerate` writable.
enum IswStatus isw_derive_mask(const struct IswStats *s,
                               uintptr_t k,
                               uintptr_t m,
                               bool log_scale,
                               struct IswMask **out,
                               bool *degenerate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ISW_H */
