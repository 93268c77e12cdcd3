#ifndef LAYERPROBE_H
#define LAYERPROBE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum LpStatus {
  LP_STATUS_OK = 0,
  LP_STATUS_NULL_POINTER = 1,
  LP_STATUS_INVALID_ARGUMENT = 2,
  LP_STATUS_IO = 3,
  LP_STATUS_FORMAT = 4,
  LP_STATUS_DIMENSION_MISMATCH = 5,
  LP_STATUS_NUMERICAL = 6,
  LP_STATUS_BUFFER_TOO_SMALL = 7,
  LP_STATUS_PANIC = 8,
} LpStatus;

typedef enum LpVariant {
  LP_VARIANT_MEAN = 0,
  LP_VARIANT_SECOND_MOMENT = 1,
  LP_VARIANT_WITHIN_CLASS_PC1 = 2,
} LpVariant;

/**
 * One layer's N×M activations.
 */
typedef struct LpActivations LpActivations;

/**
 * Sign-fixed class vectors.
 */
typedef struct LpClassVectors LpClassVectors;

/**
 * Class index per sample.
 */
typedef struct LpLabels LpLabels;

/**
 * Reduced tour coordinates and their basis.
 */
typedef struct LpTourBasis LpTourBasis;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lp_version(void);

/**
 * Message of the last failed call on this thread, or NULL. Valid until the
 * next failing call on the same thread.
 */
const char *lp_last_error_message(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpStatus lp_activations_read(const char *path, struct LpActivations **out);

/**
 * Copies an N×M row-major buffer into a new activation handle.
 *
 * # Safety
 * `data` must point to `n * m` readable doubles and `out` must be valid.
 */
enum LpStatus lp_activations_from_buffer(const double *data,
                                         size_t n,
                                         size_t m,
                                         struct LpActivations **out);

/**
 * # Safety
 * `x` must be a live handle; `n` and `m` valid pointers.
 */
enum LpStatus lp_activations_shape(const struct LpActivations *x, size_t *n, size_t *m);

/**
 * # Safety
 * `x` must be a live handle and `out` must hold `len` doubles.
 */
enum LpStatus lp_activations_copy(const struct LpActivations *x, double *out, size_t len);

/**
 * # Safety
 * `x` must be NULL or a handle not yet freed.
 */
void lp_activations_free(struct LpActivations *x);

/**
 * Reads an LPRB label file. `k = 0` infers the class count from the largest label.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum LpStatus lp_labels_read(const char *path, size_t k, struct LpLabels **out);

/**
 * # Safety
 * `data` must point to `n` readable values and `out` must be valid.
 */
enum LpStatus lp_labels_from_buffer(const uint32_t *data,
                                    size_t n,
                                    size_t k,
                                    struct LpLabels **out);

/**
 * # Safety
 * `y` must be NULL or a handle not yet freed.
 */
void lp_labels_free(struct LpLabels *y);

/**
 * Computes sign-fixed class vectors for every class.
 *
 * # Safety
 * `x`, `y` must be live handles and `out` a valid pointer.
 */
enum LpStatus lp_class_vectors_compute(const struct LpActivations *x,
                                       const struct LpLabels *y,
                                       enum LpVariant variant,
                                       struct LpClassVectors **out);

/**
 * # Safety
 * `c` must be a live handle; `m` and `k` valid pointers.
 */
enum LpStatus lp_class_vectors_shape(const struct LpClassVectors *c, size_t *m, size_t *k);

/**
 * Copies the M×K matrix of unit class vectors (one per column).
 *
 * # Safety
 * `c` must be a live handle and `out` must hold `len` doubles.
 */
enum LpStatus lp_class_vectors_copy(const struct LpClassVectors *c, double *out, size_t len);

/**
 * # Safety
 * `c` must be NULL or a handle not yet freed.
 */
void lp_class_vectors_free(struct LpClassVectors *c);

/**
 * Writes the N×2 class-pair coordinates of every sample.
 *
 * # Safety
 * Handles must be live and `out` must hold `len` doubles.
 */
enum LpStatus lp_pairplot(const struct LpActivations *x,
                          const struct LpClassVectors *c,
                          size_t j,
                          size_t k,
                          double *out,
                          size_t len);

/**
 * Writes N standardised typicality scores along class `k`'s vector.
 *
 * # Safety
 * Handles must be live and `out` must hold `len` doubles.
 */
enum LpStatus lp_typicality(const struct LpActivations *x,
                            const struct LpLabels *y,
                            const struct LpClassVectors *c,
                            size_t k,
                            double *out,
                            size_t len);

/**
 * # Safety
 * Handles must be live and `out` a valid pointer.
 */
enum LpStatus lp_tour_basis_build(const struct LpActivations *x,
                                  const struct LpClassVectors *c,
                                  double tol,
                                  struct LpTourBasis **out);

/**
 * # Safety
 * `b` must be a live handle and `rank` a valid pointer.
 */
enum LpStatus lp_tour_basis_rank(const struct LpTourBasis *b, size_t *rank);

/**
 * Projects the reduced data through an r×2 row-major frame into N×2 coordinates.
 *
 * # Safety
 * `frame` must hold `rank * 2` doubles and `out` must hold `len` doubles.
 */
enum LpStatus lp_tour_basis_project(const struct LpTourBasis *b,
                                    const double *frame,
                                    double *out,
                                    size_t len);

/**
 * # Safety
 * `b` must be NULL or a handle not yet freed.
 */
void lp_tour_basis_free(struct LpTourBasis *b);

/**
 * Interpolates from frame `a` to frame `b` (both dim×2, row-major). Writes
 * `steps + 1` frames back to back, `(steps + 1) * dim * 2` doubles.
 *
 * # Safety
 * `a` and `b` must hold `dim * 2` doubles; `out` must hold `len` doubles.
 */
enum LpStatus lp_geodesic_path(const double *a,
                               const double *b,
                               size_t dim,
                               size_t steps,
                               double *out,
                               size_t len);

/**
 * Runs t-SNE with default schedule and writes N×2 coordinates.
 *
 * # Safety
 * `x` must be a live handle and `out` must hold `len` doubles.
 */
enum LpStatus lp_tsne_embed(const struct LpActivations *x,
                            double perplexity,
                            size_t iterations,
                            uint64_t seed,
                            double *out,
                            size_t len);

/**
 * Tallies a K×K confusion matrix (rows true, columns predicted) into
 * `counts` and its accuracy into `accuracy` (may be NULL).
 *
 * # Safety
 * `predicted` and `truth` must hold `n` values; `counts` must hold `k * k`.
 */
enum LpStatus lp_confusion_matrix(const uint32_t *predicted,
                                  const uint32_t *truth,
                                  size_t n,
                                  size_t k,
                                  uint64_t *counts,
                                  double *accuracy);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LAYERPROBE_H */
